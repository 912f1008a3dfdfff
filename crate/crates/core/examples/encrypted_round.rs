//! Three participants run encrypted rounds under CKKS. Prints the round
//! transcript as JSON lines and compares against the plaintext replay.

use fairfed::data::{Regime, SplitSpec};
use fairfed::experiment::{prepare, DataConfig, ExperimentConfig};
use fairfed::fairness::MaskStrategy;
use fairfed::fairness::ReputationState;
use fairfed::he::{CkksBackend, HeBackend, HeParams};
use fairfed::protocol::{
    distribute_keys, run_round_fflx, run_round_gbppffl, RoundContext, ServerState,
};

fn main() -> fairfed::Result<()> {
    let config = ExperimentConfig {
        hidden: vec![20],
        data: DataConfig {
            classes: 4,
            features: 16,
            ..DataConfig::default()
        },
        split: SplitSpec {
            regime: Regime::IidPowerlaw,
            participants: 3,
            local_samples: 900,
            test_samples: 400,
            ..SplitSpec::default()
        },
        ..ExperimentConfig::default()
    };
    let setup = prepare(&config)?;
    let backend = CkksBackend::new(HeParams::test())?;
    let (server_keys, keys) = distribute_keys(&backend, 1);

    let mut encrypted = setup.participants.clone();
    let mut plain = setup.participants;
    let mut server = ServerState::new(ReputationState::uniform(3)?, config.fairness.clone())?
        .with_keys(server_keys);
    let mut replay = ServerState::new(ReputationState::uniform(3)?, config.fairness.clone())?;
    for round in 1..=3 {
        let ctx = RoundContext {
            round,
            seed: 0,
            learning_rate: 0.5,
            batch_size: None,
            phi_tolerance: 1e-4,
        };
        let t = run_round_gbppffl(&backend, &mut encrypted, &keys, &mut server, &ctx, None)?;
        let p = run_round_fflx(&mut plain, &mut replay, MaskStrategy::Randomized, &ctx)?;
        println!("{}", t.to_json_line());

        let agg = backend.decrypt(&keys.secret, &t.aggregate);
        let err = agg
            .iter()
            .zip(&p.aggregate)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        println!(
            "# aggregate error {err:.2e}, phi {:.6?} vs {:.6?}",
            t.reputation.phi, p.reputation.phi
        );
    }
    for (e, p) in encrypted.iter().zip(&plain) {
        println!(
            "participant {}: accuracy {:.4} encrypted, {:.4} plaintext",
            e.id,
            e.model.evaluate_accuracy(&setup.test)?,
            p.model.evaluate_accuracy(&setup.test)?
        );
    }
    Ok(())
}
