//! All four schemes on a power-law split, printed as result tables.

use fairfed::data::{Regime, SplitSpec};
use fairfed::experiment::{emit_results, run_experiment, ExperimentConfig, OutputFormat, Scheme};

fn main() -> fairfed::Result<()> {
    for scheme in [
        Scheme::Standalone,
        Scheme::Fedsgd,
        Scheme::Fflx,
        Scheme::Gbppffl,
    ] {
        let config = ExperimentConfig {
            scheme,
            split: SplitSpec {
                regime: Regime::IidPowerlaw,
                participants: 10,
                ..SplitSpec::default()
            },
            ..ExperimentConfig::default()
        };
        let table = run_experiment(&config)?;
        println!("== {}", scheme.name());
        emit_results(&table, OutputFormat::TextTable, std::io::stdout().lock())?;
    }
    Ok(())
}
