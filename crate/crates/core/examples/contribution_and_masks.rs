//! Contribution, reputation and mask arithmetic on hand-made gradients.
//! Participant 2 sends noise and loses reputation round by round.

use fairfed::fairness::{
    aggregate, build_mask, contribution, normalize_gradient, relative_reputation, reward_gradient,
    round_permutation, update_reputations, FairnessParams, MaskSource, ReputationState,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn main() -> fairfed::Result<()> {
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let l = 20;
    let signal: Vec<f64> = (0..l).map(|_| rng.random_range(-1.0..1.0)).collect();
    let noisy = |rng: &mut ChaCha20Rng, amount: f64| -> Vec<f64> {
        signal
            .iter()
            .map(|s| s + amount * rng.random_range(-1.0..1.0))
            .collect()
    };

    for params in [
        FairnessParams::default(),
        FairnessParams::tanh(1.0),
        FairnessParams::gamma(0.2),
    ] {
        let mut state = ReputationState::uniform(3)?;
        for _ in 0..10 {
            let grads = [
                noisy(&mut rng, 0.1),
                noisy(&mut rng, 0.5),
                noisy(&mut rng, 5.0),
            ]
            .iter()
            .map(|g| normalize_gradient(g, params.delta))
            .collect::<fairfed::Result<Vec<_>>>()?;
            let agg = aggregate(&grads, &state.r)?;
            let phi = grads
                .iter()
                .map(|g| contribution(g, &agg).map(|p| params.admitted_contribution(p)))
                .collect::<fairfed::Result<Vec<_>>>()?;
            state = update_reputations(&state, &phi, params.alpha)?;
            state.q = relative_reputation(&state.r, &params)?;
        }
        println!(
            "{:?}: r {:.3?} q {:.3?}",
            params.q_variant, state.r, state.q
        );

        let order = round_permutation(l, &mut rng);
        let mask = build_mask(state.q[2], l, MaskSource::Randomized(&order))?;
        let own = vec![0.0; l];
        let reward = reward_gradient(&mask, &signal, &own)?;
        let kept = reward.iter().filter(|v| **v != 0.0).count();
        println!("  participant 2 sees {kept} of {l} aggregate coordinates");
    }
    Ok(())
}
