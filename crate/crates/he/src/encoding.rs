//! Canonical-embedding encoder: real slot vectors <-> real polynomials.
//!
//! Slot `j` is the evaluation at zeta^(5^j) with zeta = exp(i·pi/n); the
//! conjugate slots at zeta^(-5^j) make the polynomial real.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub struct SlotEncoder {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// zeta^k for k in [0, n).
    twist: Vec<Complex64>,
    /// FFT bin of slot j and of its conjugate.
    slot_bins: Vec<(usize, usize)>,
}

impl std::fmt::Debug for SlotEncoder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SlotEncoder").field("n", &self.n).finish()
    }
}

impl SlotEncoder {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let twist = (0..n)
            .map(|k| Complex64::from_polar(1.0, PI * k as f64 / n as f64))
            .collect();
        let two_n = 2 * n;
        let mut slot_bins = Vec::with_capacity(n / 2);
        let mut e = 1usize;
        for _ in 0..n / 2 {
            let conj = two_n - e;
            slot_bins.push(((e - 1) / 2, (conj - 1) / 2));
            e = (e * 5) % two_n;
        }
        Self {
            n,
            forward,
            inverse,
            twist,
            slot_bins,
        }
    }

    pub fn slot_count(&self) -> usize {
        self.n / 2
    }

    /// Real coefficients m with m(zeta^(5^j)) = values[j]; missing slots are 0.
    pub fn encode(&self, values: &[f64]) -> Vec<f64> {
        assert!(values.len() <= self.slot_count());
        let mut bins = vec![Complex64::new(0.0, 0.0); self.n];
        for (j, &v) in values.iter().enumerate() {
            let (b, c) = self.slot_bins[j];
            bins[b] = Complex64::new(v, 0.0);
            bins[c] = Complex64::new(v, 0.0);
        }
        self.forward.process(&mut bins);
        let scale = 1.0 / self.n as f64;
        bins.iter()
            .zip(&self.twist)
            .map(|(b, t)| (b * t.conj()).re * scale)
            .collect()
    }

    /// Real parts of the slot values of a real polynomial.
    pub fn decode(&self, coeffs: &[f64]) -> Vec<f64> {
        assert_eq!(coeffs.len(), self.n);
        let mut bins: Vec<Complex64> = coeffs
            .iter()
            .zip(&self.twist)
            .map(|(&c, t)| t * c)
            .collect();
        self.inverse.process(&mut bins);
        self.slot_bins.iter().map(|&(b, _)| bins[b].re).collect()
    }
}
