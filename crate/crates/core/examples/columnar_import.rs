//! Runs an experiment on data read from the columnar text format (label
//! first, then features). Writes a synthetic file first when no path is
//! given.

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use fairfed::data::{generate_dataset, write_columnar, Regime, SplitSpec};
use fairfed::experiment::{
    emit_results, run_experiment, DataConfig, ExperimentConfig, OutputFormat,
};

fn main() -> fairfed::Result<()> {
    let path = match std::env::args().nth(1) {
        Some(p) => PathBuf::from(p),
        None => {
            let p = std::env::temp_dir().join("fairfed_columnar.txt");
            let data = generate_dataset(5, 2500, 12, 2.5, 11)?;
            write_columnar(&data, BufWriter::new(File::create(&p)?))?;
            println!("wrote {}", p.display());
            p
        }
    };
    let config = ExperimentConfig {
        rounds: 20,
        hidden: vec![16],
        data: DataConfig {
            path: Some(path),
            ..DataConfig::default()
        },
        split: SplitSpec {
            regime: Regime::IidUniform,
            participants: 4,
            local_samples: 2000,
            test_samples: 400,
            ..SplitSpec::default()
        },
        ..ExperimentConfig::default()
    };
    emit_results(
        &run_experiment(&config)?,
        OutputFormat::Csv,
        std::io::stdout().lock(),
    )
}
