//! CKKS results checked against plaintext oracles and the mock backend.

use fairfed_he::{CkksBackend, HeBackend, HeError, HeParams, KeyMaterial, MockBackend, Plaintext};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use std::sync::OnceLock;

const EPS_ROUNDTRIP: f64 = 1e-6;
const EPS_MULT: f64 = 1e-6;
const EPS_DOT: f64 = 1e-5;

struct Fixture<B: HeBackend> {
    backend: B,
    keys: KeyMaterial<B>,
}

fn ckks() -> &'static Fixture<CkksBackend> {
    static F: OnceLock<Fixture<CkksBackend>> = OnceLock::new();
    F.get_or_init(|| {
        let backend = CkksBackend::new(HeParams::test()).unwrap();
        let keys = backend.keygen(42);
        Fixture { backend, keys }
    })
}

fn mock() -> &'static Fixture<MockBackend> {
    static F: OnceLock<Fixture<MockBackend>> = OnceLock::new();
    F.get_or_init(|| {
        let backend = MockBackend::new(HeParams::test()).unwrap();
        let keys = backend.keygen(42);
        Fixture { backend, keys }
    })
}

fn random(n: usize, rng: &mut ChaCha20Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn max_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn zero_vector_roundtrip() {
    let f = ckks();
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let c = f
        .backend
        .encrypt(&f.keys.public, &vec![0.0; 100], &mut rng)
        .unwrap();
    let d = f.backend.decrypt(&f.keys.secret, &c);
    assert!(d.iter().all(|x| x.abs() < EPS_ROUNDTRIP));
}

#[test]
fn single_entry_roundtrip() {
    let f = ckks();
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let c = f.backend.encrypt(&f.keys.public, &[0.5], &mut rng).unwrap();
    assert!((f.backend.decrypt(&f.keys.secret, &c)[0] - 0.5).abs() < EPS_ROUNDTRIP);
}

#[test]
fn two_chunk_roundtrip() {
    let f = ckks();
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let x = random(3000, &mut rng);
    let c = f.backend.encrypt(&f.keys.public, &x, &mut rng).unwrap();
    assert_eq!(c.chunk_count(), 2);
    assert_eq!(c.level(), 2);
    assert!(max_err(&f.backend.decrypt(&f.keys.secret, &c), &x) < EPS_ROUNDTRIP);
}

#[test]
fn add_sub_identities() {
    let f = ckks();
    let b = &f.backend;
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let x = random(2500, &mut rng);
    let y = random(2500, &mut rng);
    let cx = b.encrypt(&f.keys.public, &x, &mut rng).unwrap();
    let cy = b.encrypt(&f.keys.public, &y, &mut rng).unwrap();
    let zero = b
        .encrypt(&f.keys.public, &vec![0.0; 2500], &mut rng)
        .unwrap();

    let plus_zero = b.decrypt(&f.keys.secret, &b.add(&cx, &zero).unwrap());
    assert!(max_err(&plus_zero, &x) < EPS_ROUNDTRIP);
    let self_diff = b.decrypt(&f.keys.secret, &b.sub(&cx, &cx).unwrap());
    assert!(self_diff.iter().all(|v| v.abs() < EPS_ROUNDTRIP));
    let sum = b.decrypt(&f.keys.secret, &b.add(&cx, &cy).unwrap());
    let expected: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p + q).collect();
    assert!(max_err(&sum, &expected) < 2.0 * EPS_ROUNDTRIP);
}

#[test]
fn pmult_cases() {
    let f = ckks();
    let b = &f.backend;
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let x = random(3000, &mut rng);
    let c = b.encrypt(&f.keys.public, &x, &mut rng).unwrap();

    let ones = vec![1.0; 3000];
    let id = b.pmult(Plaintext::Vector(&ones), &c).unwrap();
    assert_eq!(id.level(), 1);
    assert!(max_err(&b.decrypt(&f.keys.secret, &id), &x) < EPS_MULT);

    let zero = b.decrypt(
        &f.keys.secret,
        &b.pmult(Plaintext::Scalar(0.0), &c).unwrap(),
    );
    assert!(zero.iter().all(|v| v.abs() < EPS_MULT));

    let quarter = b.decrypt(
        &f.keys.secret,
        &b.pmult(Plaintext::Scalar(0.25), &c).unwrap(),
    );
    let expected: Vec<f64> = x.iter().map(|v| 0.25 * v).collect();
    assert!(max_err(&quarter, &expected) < EPS_MULT);
}

#[test]
fn cmult_cases() {
    let f = ckks();
    let b = &f.backend;
    let mut rng = ChaCha20Rng::seed_from_u64(6);
    let x = random(2100, &mut rng);
    let y = random(2100, &mut rng);
    let cx = b.encrypt(&f.keys.public, &x, &mut rng).unwrap();
    let cy = b.encrypt(&f.keys.public, &y, &mut rng).unwrap();
    let ones = b
        .encrypt(&f.keys.public, &vec![1.0; 2100], &mut rng)
        .unwrap();
    let zeros = b
        .encrypt(&f.keys.public, &vec![0.0; 2100], &mut rng)
        .unwrap();

    let ek = &f.keys.evaluation;
    assert!(
        max_err(
            &b.decrypt(&f.keys.secret, &b.cmult(ek, &cx, &ones).unwrap()),
            &x
        ) < EPS_MULT
    );
    let z = b.decrypt(&f.keys.secret, &b.cmult(ek, &cx, &zeros).unwrap());
    assert!(z.iter().all(|v| v.abs() < EPS_MULT));
    let prod = b.decrypt(&f.keys.secret, &b.cmult(ek, &cx, &cy).unwrap());
    let expected: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
    assert!(max_err(&prod, &expected) < EPS_MULT);
}

#[test]
fn dot_cases() {
    let f = ckks();
    let b = &f.backend;
    let ek = &f.keys.evaluation;
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let x = random(3000, &mut rng);
    let y = random(3000, &mut rng);
    let cx = b.encrypt(&f.keys.public, &x, &mut rng).unwrap();
    let cy = b.encrypt(&f.keys.public, &y, &mut rng).unwrap();
    let zeros = b
        .encrypt(&f.keys.public, &vec![0.0; 3000], &mut rng)
        .unwrap();

    let d = b.decrypt(&f.keys.secret, &b.dot(ek, &cx, &zeros).unwrap());
    assert_eq!(d.len(), 1);
    assert!(d[0].abs() < EPS_DOT);

    for k in [0usize, 17, 2047, 2048, 2999] {
        let mut unit = vec![0.0; 3000];
        unit[k] = 1.0;
        let cu = b.encrypt(&f.keys.public, &unit, &mut rng).unwrap();
        let got = b.decrypt(&f.keys.secret, &b.dot(ek, &cu, &cx).unwrap())[0];
        assert!((got - x[k]).abs() < EPS_DOT, "unit {k}: {got} vs {}", x[k]);
    }

    let expected: f64 = x.iter().zip(&y).map(|(p, q)| p * q).sum();
    let got = b.decrypt(&f.keys.secret, &b.dot(ek, &cx, &cy).unwrap())[0];
    assert!((got - expected).abs() < EPS_DOT, "{got} vs {expected}");
}

#[test]
fn padding_never_contaminates() {
    let f = ckks();
    let b = &f.backend;
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    let x = random(2049, &mut rng);
    let c = b.encrypt(&f.keys.public, &x, &mut rng).unwrap();
    let raw = b.decrypt_chunk(&f.keys.secret, &c.chunks()[1]);
    assert!(raw[1..].iter().all(|v| v.abs() < EPS_ROUNDTRIP));
    let squared = b.decrypt(&f.keys.secret, &b.dot(&f.keys.evaluation, &c, &c).unwrap())[0];
    let expected: f64 = x.iter().map(|v| v * v).sum();
    assert!((squared - expected).abs() < EPS_DOT);
}

fn level_accounting<B: HeBackend>(f: &Fixture<B>) {
    let b = &f.backend;
    let ek = &f.keys.evaluation;
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    let x = random(10, &mut rng);
    let c2 = b.encrypt(&f.keys.public, &x, &mut rng).unwrap();
    let c1 = b.pmult(Plaintext::Scalar(0.5), &c2).unwrap();
    let c0 = b.cmult(ek, &c1, &c1).unwrap();
    assert_eq!((c2.level(), c1.level(), c0.level()), (2, 1, 0));
    assert!(matches!(
        b.cmult(ek, &c0, &c0),
        Err(HeError::LevelExhausted {
            required: 1,
            available: 0
        })
    ));
    assert!(matches!(
        b.pmult(Plaintext::Scalar(1.0), &c0),
        Err(HeError::LevelExhausted { .. })
    ));
    assert!(matches!(
        b.dot(ek, &c0, &c0),
        Err(HeError::LevelExhausted { .. })
    ));
    assert!(matches!(
        b.add(&c2, &c1),
        Err(HeError::LevelMismatch { .. })
    ));
    assert!(matches!(
        b.drop_to_level(&c0, 1),
        Err(HeError::LevelRaise { .. })
    ));
    let (a, bb) = b.align(&c2, &c1).unwrap();
    assert_eq!((a.level(), bb.level()), (1, 1));
    let short = b.encrypt(&f.keys.public, &x[..5], &mut rng).unwrap();
    assert!(matches!(
        b.add(&c2, &short),
        Err(HeError::LengthMismatch { .. })
    ));
    assert!(matches!(
        b.pmult(Plaintext::Vector(&[1.0; 3]), &c2),
        Err(HeError::LengthMismatch { .. })
    ));
    assert!(matches!(
        b.encrypt(&f.keys.public, &[], &mut rng),
        Err(HeError::Empty)
    ));
}

#[test]
fn level_accounting_mock() {
    level_accounting(mock());
}

#[test]
fn level_accounting_ckks() {
    level_accounting(ckks());
}

#[test]
fn capacity_is_enforced() {
    let params = HeParams {
        ring_dimension: 16,
        max_chunks: 2,
        ..HeParams::test()
    };
    let b = MockBackend::new(params).unwrap();
    let k = b.keygen(1);
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    assert!(b.encrypt(&k.public, &[0.0; 16], &mut rng).is_ok());
    assert!(matches!(
        b.encrypt(&k.public, &[0.0; 17], &mut rng),
        Err(HeError::CapacityExceeded {
            length: 17,
            capacity: 16
        })
    ));
}

#[test]
fn unsupported_ring_dimension() {
    let params = HeParams {
        ring_dimension: 1000,
        ..HeParams::test()
    };
    assert!(matches!(
        CkksBackend::new(params),
        Err(HeError::InvalidParams(_))
    ));
    assert!(matches!(
        MockBackend::new(params),
        Err(HeError::InvalidParams(_))
    ));
}

#[test]
fn standard_parameters_support_depth_two() {
    let b = CkksBackend::new(HeParams::standard()).unwrap();
    let moduli = b.moduli();
    assert_eq!(moduli.len(), 4);
    assert_eq!(64 - moduli[0].leading_zeros(), 60);
    let k = b.keygen(3);
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    // level-0 plaintexts must stay below 2^(60-50-1) in magnitude
    let x: Vec<f64> = random(8192, &mut rng).iter().map(|v| 0.1 * v).collect();
    let y: Vec<f64> = random(8192, &mut rng).iter().map(|v| 0.1 * v).collect();
    let cx = b.encrypt(&k.public, &x, &mut rng).unwrap();
    let cy = b.encrypt(&k.public, &y, &mut rng).unwrap();
    // weighted sum -> scalar product -> difference masked: the round circuit.
    let agg = b
        .add(
            &b.pmult(Plaintext::Scalar(0.3), &cx).unwrap(),
            &b.pmult(Plaintext::Scalar(0.7), &cy).unwrap(),
        )
        .unwrap();
    let s = b.dot(&k.evaluation, &agg, &agg).unwrap();
    assert_eq!(s.level(), 0);
    let agg_plain: Vec<f64> = x.iter().zip(&y).map(|(p, q)| 0.3 * p + 0.7 * q).collect();
    let expected: f64 = agg_plain.iter().map(|v| v * v).sum();
    let got = b.decrypt(&k.secret, &s)[0];
    assert!(
        ((got - expected) / expected).abs() < 1e-9,
        "{got} vs {expected}"
    );
    let mask: Vec<f64> = (0..8192).map(|i| (i % 3 == 0) as u8 as f64).collect();
    let (a, c) = b.align(&agg, &cx).unwrap();
    let masked = b
        .pmult(Plaintext::Vector(&mask), &b.sub(&a, &c).unwrap())
        .unwrap();
    let got = b.decrypt(&k.secret, &masked);
    let expected: Vec<f64> = (0..8192).map(|i| mask[i] * (agg_plain[i] - x[i])).collect();
    assert!(max_err(&got, &expected) < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn mock_and_ckks_agree(seed in any::<u64>(), len in 1usize..4096, r in -1.0f64..1.0) {
        let (c, m) = (ckks(), mock());
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let x = random(len, &mut rng);
        let y = random(len, &mut rng);
        let ckks_x = c.backend.encrypt(&c.keys.public, &x, &mut rng).unwrap();
        let ckks_y = c.backend.encrypt(&c.keys.public, &y, &mut rng).unwrap();
        let mock_x = m.backend.encrypt(&m.keys.public, &x, &mut rng).unwrap();
        let mock_y = m.backend.encrypt(&m.keys.public, &y, &mut rng).unwrap();

        let cs = c.backend.decrypt(&c.keys.secret, &c.backend.sub(&ckks_x, &ckks_y).unwrap());
        let ms = m.backend.decrypt(&m.keys.secret, &m.backend.sub(&mock_x, &mock_y).unwrap());
        prop_assert!(max_err(&cs, &ms) < 2.0 * EPS_ROUNDTRIP);

        let cp = c.backend.decrypt(&c.keys.secret, &c.backend.pmult(Plaintext::Scalar(r), &ckks_x).unwrap());
        let mp = m.backend.decrypt(&m.keys.secret, &m.backend.pmult(Plaintext::Scalar(r), &mock_x).unwrap());
        prop_assert!(max_err(&cp, &mp) < EPS_MULT);

        let cm = c.backend.decrypt(&c.keys.secret, &c.backend.cmult(&c.keys.evaluation, &ckks_x, &ckks_y).unwrap());
        let mm = m.backend.decrypt(&m.keys.secret, &m.backend.cmult(&m.keys.evaluation, &mock_x, &mock_y).unwrap());
        prop_assert!(max_err(&cm, &mm) < EPS_MULT);

        let cd = c.backend.decrypt(&c.keys.secret, &c.backend.dot(&c.keys.evaluation, &ckks_x, &ckks_y).unwrap());
        let md = m.backend.decrypt(&m.keys.secret, &m.backend.dot(&m.keys.evaluation, &mock_x, &mock_y).unwrap());
        prop_assert!((cd[0] - md[0]).abs() < EPS_DOT);
    }
}
