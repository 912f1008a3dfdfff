//! Operation timings for the mock and CKKS backends at both presets.

use fairfed::experiment::bench;
use fairfed::he::{CkksBackend, HeParams, MockBackend};

fn main() -> fairfed::Result<()> {
    let length = 3010;
    print!(
        "{}",
        bench(&MockBackend::new(HeParams::test())?, length, 20, 0)?
    );
    for params in [HeParams::test(), HeParams::standard()] {
        let report = bench(&CkksBackend::new(params)?, length, 3, 0)?;
        print!("{report}");
        println!(
            "round estimate, 10 participants: {:.2} s",
            report.round_estimate(10).as_secs_f64()
        );
    }
    Ok(())
}
