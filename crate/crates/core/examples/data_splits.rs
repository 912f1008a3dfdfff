//! The three partitioning regimes on one synthetic dataset.

use fairfed::data::{generate_dataset, partition, Regime, SplitSpec};

fn main() -> fairfed::Result<()> {
    for regime in [Regime::IidUniform, Regime::IidPowerlaw, Regime::NiidClasses] {
        let spec = SplitSpec {
            regime,
            participants: 10,
            local_samples: 6000,
            test_samples: 1000,
            ..SplitSpec::default()
        };
        let data = generate_dataset(10, spec.required_samples(10)?, 16, 2.5, 7)?;
        let parts = partition(&data, &spec, 8)?;
        println!("{regime:?}");
        for (i, local) in parts.locals.iter().enumerate() {
            println!(
                "  participant {i}: {:>4} samples, classes {:?}",
                local.len(),
                local.label_set()
            );
        }
        println!(
            "  test set: {} samples, {} classes",
            parts.test.len(),
            parts.test.label_set().len()
        );
    }
    let spec = SplitSpec {
        regime: Regime::IidPowerlaw,
        participants: 10,
        ..SplitSpec::default()
    };
    println!("power-law exponent at N=10: {:.4}", spec.exponent());
    Ok(())
}
