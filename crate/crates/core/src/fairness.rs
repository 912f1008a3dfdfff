//! Contribution, reputation and reward-mask arithmetic. Everything here
//! runs in plaintext; the encrypted round only moves the vector algebra
//! into ciphertexts.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nudge added before flooring `q * l` so that products like 0.9999999999
/// of an integer still count it.
pub const FLOOR_NUDGE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QVariant {
    /// `tanh(beta r) / tanh(beta r_max)`
    TanhBeta,
    /// `r / r_max`
    ParameterFree,
    /// `(r / r_max)^(1/gamma)`
    GammaPower,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialReputation {
    #[default]
    Uniform,
    DatasetSize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FairnessParams {
    /// Weight of the previous reputation in the smoothing step.
    pub alpha: f64,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    /// Norm of every normalized local gradient.
    pub delta: f64,
    pub q_variant: QVariant,
    /// Clamp contributions to `[0, 1]` before the reputation update.
    pub clamp_contributions: bool,
    pub initial_reputation: InitialReputation,
}

impl Default for FairnessParams {
    fn default() -> Self {
        Self {
            alpha: 0.95,
            beta: None,
            gamma: None,
            delta: 0.5,
            q_variant: QVariant::ParameterFree,
            clamp_contributions: true,
            initial_reputation: InitialReputation::Uniform,
        }
    }
}

impl FairnessParams {
    pub fn tanh(beta: f64) -> Self {
        Self {
            beta: Some(beta),
            q_variant: QVariant::TanhBeta,
            ..Self::default()
        }
    }

    pub fn gamma(gamma: f64) -> Self {
        Self {
            gamma: Some(gamma),
            q_variant: QVariant::GammaPower,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha {} outside (0, 1)",
                self.alpha
            )));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "delta {} must be positive",
                self.delta
            )));
        }
        let check = |name: &'static str, value: Option<f64>, needed: bool| match (value, needed) {
            (None, true) => Err(Error::MissingParameter(name)),
            (Some(v), true) if !(v > 0.0) => {
                Err(Error::InvalidConfig(format!("{name} {v} must be positive")))
            }
            (Some(_), false) => Err(Error::InvalidConfig(format!(
                "{name} is set but q_variant is {:?}",
                self.q_variant
            ))),
            _ => Ok(()),
        };
        check("beta", self.beta, self.q_variant == QVariant::TanhBeta)?;
        check("gamma", self.gamma, self.q_variant == QVariant::GammaPower)
    }

    pub fn initial_reputations(&self, sizes: &[usize]) -> Result<ReputationState> {
        match self.initial_reputation {
            InitialReputation::Uniform => ReputationState::uniform(sizes.len()),
            InitialReputation::DatasetSize => ReputationState::proportional(sizes),
        }
    }

    /// Contribution as fed into the reputation update.
    pub fn admitted_contribution(&self, phi: f64) -> f64 {
        if self.clamp_contributions {
            phi.clamp(0.0, 1.0)
        } else {
            phi
        }
    }
}

pub fn norm(g: &[f64]) -> f64 {
    dot(g, g).sqrt()
}

/// Left-to-right scalar product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

/// Rescales `g` to norm `delta`.
pub fn normalize_gradient(g: &[f64], delta: f64) -> Result<Vec<f64>> {
    let n = norm(g);
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::ZeroGradient);
    }
    Ok(g.iter().map(|x| delta * x / n).collect())
}

/// `sum_i weights[i] * gradients[i]`, accumulated in participant order.
pub fn aggregate<G: AsRef<[f64]>>(gradients: &[G], weights: &[f64]) -> Result<Vec<f64>> {
    if gradients.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: weights.len(),
            found: gradients.len(),
        });
    }
    let (first, rest) = gradients.split_first().ok_or(Error::NoParticipants)?;
    let mut out: Vec<f64> = first.as_ref().iter().map(|x| weights[0] * x).collect();
    for (g, &w) in rest.iter().zip(&weights[1..]) {
        let g = g.as_ref();
        if g.len() != out.len() {
            return Err(Error::DimensionMismatch {
                expected: out.len(),
                found: g.len(),
            });
        }
        for (o, x) in out.iter_mut().zip(g) {
            *o += w * x;
        }
    }
    Ok(out)
}

/// Cosine similarity of a local gradient with the aggregate.
pub fn contribution(local: &[f64], aggregate: &[f64]) -> Result<f64> {
    if local.len() != aggregate.len() {
        return Err(Error::DimensionMismatch {
            expected: aggregate.len(),
            found: local.len(),
        });
    }
    let (s_ii, s_00) = (dot(local, local), dot(aggregate, aggregate));
    if s_ii == 0.0 || s_00 == 0.0 {
        return Err(Error::ZeroGradient);
    }
    contribution_from_scalars(dot(local, aggregate), s_ii, s_00)
}

/// Cosine similarity from the three scalar products
/// `<local, aggregate>`, `<local, local>` and `<aggregate, aggregate>`.
pub fn contribution_from_scalars(s_i0: f64, s_ii: f64, s_00: f64) -> Result<f64> {
    if !(s_ii > 0.0 && s_00 > 0.0) {
        return Err(Error::NonPositiveScalars { s_ii, s_00 });
    }
    Ok((s_i0 / (s_ii * s_00).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReputationState {
    pub round: usize,
    pub r: Vec<f64>,
    pub phi: Vec<f64>,
    pub q: Vec<f64>,
}

impl ReputationState {
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::NoParticipants);
        }
        Ok(Self {
            round: 0,
            r: vec![1.0 / n as f64; n],
            phi: vec![0.0; n],
            q: vec![1.0; n],
        })
    }

    pub fn proportional(sizes: &[usize]) -> Result<Self> {
        let total: usize = sizes.iter().sum();
        if total == 0 {
            return Err(Error::NoParticipants);
        }
        let mut s = Self::uniform(sizes.len())?;
        s.r = sizes.iter().map(|&n| n as f64 / total as f64).collect();
        Ok(s)
    }

    pub fn participants(&self) -> usize {
        self.r.len()
    }
}

/// Smooths the reputations with the new contributions and renormalizes
/// them onto the simplex. `q` is carried over unchanged.
pub fn update_reputations(
    state: &ReputationState,
    phi: &[f64],
    alpha: f64,
) -> Result<ReputationState> {
    if phi.len() != state.r.len() {
        return Err(Error::DimensionMismatch {
            expected: state.r.len(),
            found: phi.len(),
        });
    }
    let smoothed: Vec<f64> = state
        .r
        .iter()
        .zip(phi)
        .map(|(r, p)| alpha * r + (1.0 - alpha) * p)
        .collect();
    let sum = smoothed.iter().fold(0.0, |a, b| a + b);
    if !(sum > 0.0) {
        return Err(Error::ReputationCollapse(sum));
    }
    Ok(ReputationState {
        round: state.round + 1,
        r: smoothed.iter().map(|v| v / sum).collect(),
        phi: phi.to_vec(),
        q: state.q.clone(),
    })
}

pub fn relative_reputation(r: &[f64], params: &FairnessParams) -> Result<Vec<f64>> {
    let r_max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if r.is_empty() || r.iter().any(|v| !(*v >= 0.0)) || !(r_max > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "reputations {r:?} must be non-negative and not all zero"
        )));
    }
    let q: Vec<f64> = match params.q_variant {
        QVariant::TanhBeta => {
            let beta = params.beta.ok_or(Error::MissingParameter("beta"))?;
            let top = (beta * r_max).tanh();
            r.iter().map(|v| (beta * v).tanh() / top).collect()
        }
        QVariant::ParameterFree => r.iter().map(|v| v / r_max).collect(),
        QVariant::GammaPower => {
            let gamma = params.gamma.ok_or(Error::MissingParameter("gamma"))?;
            r.iter().map(|v| (v / r_max).powf(1.0 / gamma)).collect()
        }
    };
    Ok(q.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
}

/// `floor(q * l)` with [`FLOOR_NUDGE`].
pub fn retained_count(q: f64, l: usize) -> usize {
    ((q * l as f64 + FLOOR_NUDGE).floor() as usize).min(l)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    bits: Vec<bool>,
    retained: usize,
}

impl Mask {
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn retained_count(&self) -> usize {
        self.retained
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// 1.0 where retained, 0.0 elsewhere.
    pub fn indicator(&self) -> Vec<f64> {
        self.bits
            .iter()
            .map(|&b| if b { 1.0 } else { 0.0 })
            .collect()
    }

    pub fn complement_indicator(&self) -> Vec<f64> {
        self.bits
            .iter()
            .map(|&b| if b { 0.0 } else { 1.0 })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskStrategy {
    TopK,
    Randomized,
}

/// What a mask is built from.
#[derive(Clone, Copy, Debug)]
pub enum MaskSource<'a> {
    /// Largest-magnitude entries of the aggregate; ties go to lower indices.
    TopK(&'a [f64]),
    /// Leading entries of a permutation of `0..l`.
    Randomized(&'a [usize]),
}

impl MaskSource<'_> {
    pub fn strategy(&self) -> MaskStrategy {
        match self {
            MaskSource::TopK(_) => MaskStrategy::TopK,
            MaskSource::Randomized(_) => MaskStrategy::Randomized,
        }
    }
}

pub fn build_mask(q: f64, l: usize, source: MaskSource<'_>) -> Result<Mask> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidConfig(format!(
            "relative reputation {q} outside [0, 1]"
        )));
    }
    let k = retained_count(q, l);
    let mut bits = vec![false; l];
    match source {
        MaskSource::TopK(g) => {
            if g.len() != l {
                return Err(Error::DimensionMismatch {
                    expected: l,
                    found: g.len(),
                });
            }
            let mut order: Vec<usize> = (0..l).collect();
            order.sort_by(|&a, &b| g[b].abs().total_cmp(&g[a].abs()).then(a.cmp(&b)));
            order[..k].iter().for_each(|&i| bits[i] = true);
        }
        MaskSource::Randomized(order) => {
            if order.len() != l {
                return Err(Error::DimensionMismatch {
                    expected: l,
                    found: order.len(),
                });
            }
            for &i in &order[..k] {
                if i >= l || bits[i] {
                    return Err(Error::InvalidConfig(
                        "mask order is not a permutation".into(),
                    ));
                }
                bits[i] = true;
            }
        }
    }
    Ok(Mask { bits, retained: k })
}

/// Uniform permutation of `0..l` shared by all masks of one round.
pub fn round_permutation<R: Rng + ?Sized>(l: usize, rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..l).collect();
    order.shuffle(rng);
    order
}

/// Aggregate entries where the mask is set, own entries elsewhere.
pub fn reward_gradient(mask: &Mask, aggregate: &[f64], local: &[f64]) -> Result<Vec<f64>> {
    if aggregate.len() != mask.len() || local.len() != mask.len() {
        return Err(Error::DimensionMismatch {
            expected: mask.len(),
            found: if aggregate.len() != mask.len() {
                aggregate.len()
            } else {
                local.len()
            },
        });
    }
    Ok(mask
        .bits
        .iter()
        .zip(aggregate.iter().zip(local))
        .map(|(&m, (&a, &w))| if m { a } else { w })
        .collect())
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::DimensionMismatch {
            expected: x.len().max(2),
            found: y.len(),
        });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ConstantVector);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn normalization() {
        assert_eq!(
            normalize_gradient(&[3.0, 4.0], 0.5).unwrap(),
            vec![0.3, 0.4]
        );
        let u = normalize_gradient(&[1.0, -2.0, 2.0], 1.0).unwrap();
        assert!((norm(&u) - 1.0).abs() < 1e-15);
        assert!(matches!(
            normalize_gradient(&[0.0, 0.0], 0.5),
            Err(Error::ZeroGradient)
        ));
    }

    #[test]
    fn aggregation() {
        let g = vec![0.1, -0.4, 2.0];
        assert_eq!(aggregate(&[g.clone()], &[1.0]).unwrap(), g);
        let opposite = [g.clone(), g.iter().map(|x| -x).collect()];
        assert!(aggregate(&opposite, &[0.5, 0.5])
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));

        let gs = [vec![1.0, 2.0], vec![-3.0, 0.5], vec![0.25, 4.0]];
        let w = [0.2, 0.3, 0.5];
        let brute: Vec<f64> = (0..2)
            .map(|k| (0..3).map(|i| w[i] * gs[i][k]).sum())
            .collect();
        let got = aggregate(&gs, &w).unwrap();
        for (a, b) in got.iter().zip(&brute) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(aggregate(&[vec![1.0], vec![1.0, 2.0]], &[0.5, 0.5]).is_err());
        assert!(aggregate::<Vec<f64>>(&[], &[]).is_err());
    }

    #[test]
    fn cosine_cases() {
        let g = [0.3, -1.2, 0.7];
        assert_eq!(contribution(&g, &g).unwrap(), 1.0);
        assert_eq!(contribution(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
        assert!((contribution(&[1.0, 0.0], &[1.0, 1.0]).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(matches!(
            contribution(&[0.0, 0.0], &[1.0, 1.0]),
            Err(Error::ZeroGradient)
        ));
    }

    #[test]
    fn scalar_contribution_cases() {
        assert_eq!(contribution_from_scalars(2.5, 2.5, 2.5).unwrap(), 1.0);
        assert_eq!(contribution_from_scalars(0.0, 1.0, 4.0).unwrap(), 0.0);
        assert!(contribution_from_scalars(1.0, 0.0, 1.0).is_err());
        assert!(contribution_from_scalars(1.0, 1.0, -1e-9).is_err());
    }

    #[test]
    fn reputation_arithmetic() {
        let s = ReputationState::uniform(2).unwrap();
        let next = update_reputations(&s, &[0.8, 0.2], 0.95).unwrap();
        // smoothed: 0.515 and 0.485, already summing to 1
        assert!((next.r[0] - 0.515).abs() < 1e-15);
        assert!((next.r[1] - 0.485).abs() < 1e-15);
        assert_eq!(next.round, 1);

        let s = ReputationState {
            round: 3,
            r: vec![0.1, 0.6, 0.3],
            phi: vec![0.0; 3],
            q: vec![1.0; 3],
        };
        let same = update_reputations(&s, &s.r, 0.9).unwrap();
        for (a, b) in same.r.iter().zip(&s.r) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(matches!(
            update_reputations(&ReputationState::uniform(2).unwrap(), &[-20.0, -20.0], 0.5),
            Err(Error::ReputationCollapse(_))
        ));
    }

    #[test]
    fn relative_reputation_cases() {
        let pf = FairnessParams::default();
        assert_eq!(
            relative_reputation(&[0.2, 0.8], &pf).unwrap(),
            vec![0.25, 1.0]
        );
        for p in [
            pf.clone(),
            FairnessParams::tanh(1.5),
            FairnessParams::gamma(0.2),
        ] {
            assert_eq!(relative_reputation(&[0.25; 4], &p).unwrap(), vec![1.0; 4]);
        }
        let q = relative_reputation(&[0.81, 1.0], &FairnessParams::gamma(0.5)).unwrap();
        assert!((q[0] - 0.6561).abs() < 1e-15);
        let missing = FairnessParams {
            q_variant: QVariant::TanhBeta,
            ..pf.clone()
        };
        assert!(matches!(
            relative_reputation(&[0.5, 0.5], &missing),
            Err(Error::MissingParameter("beta"))
        ));
        assert!(relative_reputation(&[0.0, 0.0], &pf).is_err());
    }

    #[test]
    fn degenerate_limits_give_full_masks() {
        let r = [0.05, 0.15, 0.3, 0.5];
        assert_eq!(
            relative_reputation(&r, &FairnessParams::tanh(1e6)).unwrap(),
            vec![1.0; 4]
        );
        assert_eq!(
            relative_reputation(&r, &FairnessParams::gamma(f64::INFINITY)).unwrap(),
            vec![1.0; 4]
        );
    }

    #[test]
    fn params_validation() {
        FairnessParams::default().validate().unwrap();
        FairnessParams::tanh(2.0).validate().unwrap();
        assert!(matches!(
            FairnessParams {
                q_variant: QVariant::GammaPower,
                ..FairnessParams::default()
            }
            .validate(),
            Err(Error::MissingParameter("gamma"))
        ));
        assert!(FairnessParams {
            beta: Some(1.0),
            ..FairnessParams::default()
        }
        .validate()
        .is_err());
        assert!(FairnessParams {
            alpha: 1.0,
            ..FairnessParams::default()
        }
        .validate()
        .is_err());
        assert!(FairnessParams::tanh(-1.0).validate().is_err());
    }

    #[test]
    fn mask_cases() {
        let g: Vec<f64> = (0..10).map(|i| i as f64 - 4.5).collect();
        let order: Vec<usize> = (0..10).rev().collect();
        for source in [MaskSource::TopK(&g), MaskSource::Randomized(&order)] {
            assert!(build_mask(1.0, 10, source)
                .unwrap()
                .bits()
                .iter()
                .all(|&b| b));
            assert!(build_mask(0.0, 10, source)
                .unwrap()
                .bits()
                .iter()
                .all(|&b| !b));
            let m = build_mask(0.55, 10, source).unwrap();
            assert_eq!(m.retained_count(), 5);
            assert_eq!(m.bits().iter().filter(|&&b| b).count(), 5);
        }
        // |g| = 4.5 4.5 3.5 3.5 ... ties resolved towards index 0
        let top = build_mask(0.3, 10, MaskSource::TopK(&g)).unwrap();
        assert_eq!(top.bits().iter().positions(), vec![0, 1, 9]);
        let rnd = build_mask(0.3, 10, MaskSource::Randomized(&order)).unwrap();
        assert_eq!(rnd.bits().iter().positions(), vec![7, 8, 9]);
        assert_eq!(retained_count(0.7, 10), 7);
        assert!(build_mask(1.5, 10, MaskSource::TopK(&g)).is_err());
        assert!(build_mask(
            0.5,
            10,
            MaskSource::Randomized(&[0, 0, 1, 2, 3, 4, 5, 6, 7, 8])
        )
        .is_err());
    }

    trait Positions {
        fn positions(self) -> Vec<usize>;
    }

    impl<'a, I: Iterator<Item = &'a bool>> Positions for I {
        fn positions(self) -> Vec<usize> {
            self.enumerate()
                .filter(|(_, &b)| b)
                .map(|(i, _)| i)
                .collect()
        }
    }

    #[test]
    fn reward_selects() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let w = [-1.0, -2.0, -3.0, -4.0];
        let order = [2, 0, 3, 1];
        let full = build_mask(1.0, 4, MaskSource::Randomized(&order)).unwrap();
        assert_eq!(reward_gradient(&full, &a, &w).unwrap(), a.to_vec());
        let none = build_mask(0.0, 4, MaskSource::Randomized(&order)).unwrap();
        assert_eq!(reward_gradient(&none, &a, &w).unwrap(), w.to_vec());
        let half = build_mask(0.5, 4, MaskSource::Randomized(&order)).unwrap();
        assert_eq!(
            reward_gradient(&half, &a, &w).unwrap(),
            vec![1.0, -2.0, 3.0, -4.0]
        );
        assert!(reward_gradient(&half, &a[..3], &w).is_err());
    }

    #[test]
    fn pearson_cases() {
        let x = [0.3, 0.9, 0.1, 0.5];
        assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-15);
        // direct evaluation: 5 / sqrt(2 * 114 / 9)
        assert!(
            (pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 7.0]).unwrap() - 0.993_399_267_798_782_8).abs()
                < 1e-12
        );
        assert!(matches!(
            pearson(&[1.0, 1.0], &[1.0, 2.0]),
            Err(Error::ConstantVector)
        ));
        assert!(pearson(&[1.0], &[1.0]).is_err());
    }

    fn vector(len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-1.0f64..1.0, len)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn contribution_is_scale_invariant(a in vector(16), b in vector(16), c in 1e-3f64..1e3) {
            prop_assume!(norm(&a) > 1e-6 && norm(&b) > 1e-6);
            let scaled: Vec<f64> = a.iter().map(|x| c * x).collect();
            let (p, q) = (contribution(&a, &b).unwrap(), contribution(&scaled, &b).unwrap());
            prop_assert!((p - q).abs() < 1e-12);
        }

        #[test]
        fn scalar_route_matches_cosine(a in vector(24), b in vector(24)) {
            prop_assume!(norm(&a) > 1e-6 && norm(&b) > 1e-6);
            let direct = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>()
                / (a.iter().map(|x| x * x).sum::<f64>().sqrt() * b.iter().map(|x| x * x).sum::<f64>().sqrt());
            let via = contribution_from_scalars(dot(&a, &b), dot(&a, &a), dot(&b, &b)).unwrap();
            prop_assert!((direct - via).abs() < 1e-9);
            prop_assert_eq!(via, contribution(&a, &b).unwrap());
        }

        #[test]
        fn reputations_stay_on_simplex(
            raw in prop::collection::vec(0.01f64..1.0, 1..12),
            phi_seed in any::<u64>(),
            alpha in 0.05f64..0.99,
        ) {
            let total: f64 = raw.iter().sum();
            let state = ReputationState { round: 0, r: raw.iter().map(|v| v / total).collect(), phi: vec![0.0; raw.len()], q: vec![1.0; raw.len()] };
            let mut rng = ChaCha8Rng::seed_from_u64(phi_seed);
            let phi: Vec<f64> = (0..raw.len()).map(|_| rng.random_range(0.0..1.0)).collect();
            let next = update_reputations(&state, &phi, alpha).unwrap();
            prop_assert!((next.r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let smoothed: Vec<f64> = state.r.iter().zip(&phi).map(|(r, p)| alpha * r + (1.0 - alpha) * p).collect();
            for i in 0..raw.len() {
                for j in 0..raw.len() {
                    if smoothed[i] > smoothed[j] {
                        prop_assert!(next.r[i] >= next.r[j]);
                    }
                }
            }
        }

        #[test]
        fn relative_reputation_is_monotone(r in prop::collection::vec(1e-4f64..1.0, 2..10), gamma in 0.05f64..5.0) {
            let base = relative_reputation(&r, &FairnessParams::default()).unwrap();
            let powered = relative_reputation(&r, &FairnessParams::gamma(gamma)).unwrap();
            prop_assert!(base.iter().chain(&powered).all(|q| (0.0..=1.0).contains(q)));
            prop_assert_eq!(base.iter().copied().fold(0.0, f64::max), 1.0);
            for i in 0..r.len() {
                for j in 0..r.len() {
                    if r[i] > r[j] {
                        prop_assert!(base[i] > base[j]);
                        prop_assert!(powered[i] >= powered[j]);
                    }
                }
            }
        }

        #[test]
        fn mask_strategies_agree_on_count(q in 0.0f64..=1.0, g in vector(50), seed in any::<u64>()) {
            let order = round_permutation(50, &mut ChaCha8Rng::seed_from_u64(seed));
            let top = build_mask(q, 50, MaskSource::TopK(&g)).unwrap();
            let rnd = build_mask(q, 50, MaskSource::Randomized(&order)).unwrap();
            prop_assert_eq!(top.retained_count(), rnd.retained_count());
            prop_assert_eq!(top.retained_count(), (q * 50.0 + FLOOR_NUDGE).floor() as usize);
            prop_assert_eq!(top.bits().iter().filter(|&&b| b).count(), top.retained_count());
            prop_assert_eq!(rnd.bits().iter().filter(|&&b| b).count(), rnd.retained_count());
        }
    }
}
