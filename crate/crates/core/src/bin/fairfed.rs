use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use fairfed::experiment::{
    bench, emit_results, run_experiment, sweep, write_results, BackendKind, ExperimentConfig,
    OutputFormat, Scheme, SweepParameter,
};
use fairfed::fairness::QVariant;
use fairfed::he::{CkksBackend, HeParams, HePreset, MockBackend};
use fairfed::Result;

#[derive(Parser)]
#[command(
    name = "fairfed",
    version,
    about = "Fair federated learning experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration and print its result table.
    Run(Overrides),
    /// Repeat an experiment over values of beta or gamma.
    Sweep {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, value_enum)]
        parameter: Param,
        /// Comma separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Time the homomorphic operations.
    Bench {
        #[arg(long, value_enum, default_value = "ckks")]
        backend: Backend,
        #[arg(long, value_enum, default_value = "standard")]
        preset: Preset,
        /// Vector length; defaults to the size of the default model.
        #[arg(long, default_value_t = 3010)]
        length: usize,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        /// Participants assumed in the per-round estimate.
        #[arg(long, default_value_t = 5)]
        participants: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct Overrides {
    /// TOML configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    #[arg(long, value_enum)]
    backend: Option<Backend>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    participants: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Selects the tanh relative reputation.
    #[arg(long, conflicts_with = "gamma")]
    beta: Option<f64>,
    /// Selects the power relative reputation.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Standalone,
    Fedsgd,
    Fflx,
    Gbppffl,
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Mock,
    Ckks,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Test,
    Standard,
}

#[derive(Clone, Copy, ValueEnum)]
enum Param {
    Beta,
    Gamma,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    TextTable,
}

impl Overrides {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.scheme {
            c.scheme = match s {
                SchemeArg::Standalone => Scheme::Standalone,
                SchemeArg::Fedsgd => Scheme::Fedsgd,
                SchemeArg::Fflx => Scheme::Fflx,
                SchemeArg::Gbppffl => Scheme::Gbppffl,
            };
        }
        if let Some(b) = self.backend {
            c.backend = match b {
                Backend::Mock => BackendKind::Mock,
                Backend::Ckks => BackendKind::Ckks,
            };
        }
        c.seed = self.seed.unwrap_or(c.seed);
        c.rounds = self.rounds.unwrap_or(c.rounds);
        c.split.participants = self.participants.unwrap_or(c.split.participants);
        c.fairness.alpha = self.alpha.unwrap_or(c.fairness.alpha);
        c.fairness.delta = self.delta.unwrap_or(c.fairness.delta);
        if let Some(beta) = self.beta {
            c.fairness.q_variant = QVariant::TanhBeta;
            c.fairness.beta = Some(beta);
            c.fairness.gamma = None;
        }
        if let Some(gamma) = self.gamma {
            c.fairness.q_variant = QVariant::GammaPower;
            c.fairness.gamma = Some(gamma);
            c.fairness.beta = None;
        }
        if self.output.is_some() {
            c.output = self.output.clone();
        }
        Ok(c)
    }

    fn format(&self) -> OutputFormat {
        match self.format {
            Format::Csv => OutputFormat::Csv,
            Format::TextTable => OutputFormat::TextTable,
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run(o) => {
            let config = o.config()?;
            let table = run_experiment(&config)?;
            match &config.output {
                Some(path) => write_results(&table, o.format(), path),
                None => emit_results(&table, o.format(), io::stdout().lock()),
            }
        }
        Command::Sweep {
            overrides,
            parameter,
            values,
        } => {
            let (param, name) = match parameter {
                Param::Beta => (SweepParameter::Beta, "beta"),
                Param::Gamma => (SweepParameter::Gamma, "gamma"),
            };
            let config = overrides.config()?;
            let tables = sweep(&config, param, &values)?;
            let format = overrides.format();
            let ext = match format {
                OutputFormat::Csv => "csv",
                OutputFormat::TextTable => "txt",
            };
            if let Some(dir) = &config.output {
                std::fs::create_dir_all(dir)?;
            }
            let mut out = io::stdout().lock();
            for (v, t) in values.iter().zip(&tables) {
                match &config.output {
                    Some(dir) => write_results(t, format, &dir.join(format!("{name}_{v}.{ext}")))?,
                    None => {
                        writeln!(out, "# {name} = {v}")?;
                        emit_results(t, format, &mut out)?;
                    }
                }
            }
            writeln!(out, "# {name}  mean_acc  max_acc  pearson_rho")?;
            for (v, t) in values.iter().zip(&tables) {
                writeln!(
                    out,
                    "# {v}  {:.4}  {:.4}  {:.4}",
                    t.mean_accuracy().1,
                    t.max_accuracy().1,
                    t.pearson()
                )?;
            }
            Ok(())
        }
        Command::Bench {
            backend,
            preset,
            length,
            repeats,
            participants,
            seed,
        } => {
            let params = HeParams::preset(match preset {
                Preset::Test => HePreset::Test,
                Preset::Standard => HePreset::Standard,
            });
            let report = match backend {
                Backend::Mock => bench(&MockBackend::new(params)?, length, repeats, seed)?,
                Backend::Ckks => bench(&CkksBackend::new(params)?, length, repeats, seed)?,
            };
            print!("{report}");
            println!(
                "server work per round with {participants} participants: {:.3} s",
                report.round_estimate(participants).as_secs_f64()
            );
            Ok(())
        }
    }
}
