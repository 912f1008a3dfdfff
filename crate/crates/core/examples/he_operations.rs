//! Encrypts two vectors with CKKS and checks every homomorphic operation
//! against plaintext arithmetic.
//!
//! cargo run --release --example he_operations [-- standard]

use fairfed::he::{CiphertextVector, CkksBackend, HeBackend, HeParams, Plaintext};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn max_err(got: &[f64], want: &[f64]) -> f64 {
    got.iter()
        .zip(want)
        .map(|(g, w)| (g - w).abs())
        .fold(0.0, f64::max)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = match std::env::args().nth(1).as_deref() {
        Some("standard") => HeParams::standard(),
        _ => HeParams::test(),
    };
    let backend = CkksBackend::new(params)?;
    let keys = backend.keygen(1);
    let mut rng = ChaCha20Rng::seed_from_u64(2);

    // spans two ciphertexts at the test preset
    let len = 3000;
    let a: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
    let ca = backend.encrypt(&keys.public, &a, &mut rng)?;
    let cb = backend.encrypt(&keys.public, &b, &mut rng)?;
    println!(
        "ring 2^{}, {} slots, {} chunks, level {}",
        params.ring_dimension.trailing_zeros(),
        backend.slot_count(),
        ca.chunk_count(),
        ca.level()
    );

    let dec = |c: &CiphertextVector<_>| backend.decrypt(&keys.secret, c);
    let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
    let prod: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
    let half: Vec<f64> = a.iter().map(|x| 0.5 * x).collect();
    println!("roundtrip  {:.2e}", max_err(&dec(&ca), &a));
    println!(
        "add        {:.2e}",
        max_err(&dec(&backend.add(&ca, &cb)?), &sum)
    );
    println!(
        "pmult      {:.2e}",
        max_err(&dec(&backend.pmult(Plaintext::Scalar(0.5), &ca)?), &half)
    );

    let cp = backend.cmult(&keys.evaluation, &ca, &cb)?;
    println!(
        "cmult      {:.2e}  (level {})",
        max_err(&dec(&cp), &prod),
        cp.level()
    );

    let dot = backend.dot(&keys.evaluation, &ca, &cb)?;
    let exact: f64 = prod.iter().sum();
    println!(
        "dot        {:.2e}  ({exact:.6} exact)",
        (dec(&dot)[0] - exact).abs()
    );
    Ok(())
}
