//! Experiment configuration, execution and result emission.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use fairfed_he::{CkksBackend, HeBackend, HeParams, HePreset, MockBackend, Plaintext};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{generate_dataset, partition, read_columnar, SplitSpec};
use crate::error::{Error, Result};
use crate::fairness::{pearson, FairnessParams, MaskStrategy, QVariant};
use crate::nn::{Dataset, Layout, ModelParams};
use crate::protocol::{
    distribute_keys, run_round_fedsgd, run_round_fflx, run_round_gbppffl, run_round_standalone,
    Participant, Payload, RoundContext, RoundTranscript, ServerState,
};
use crate::seeds::{self, Stream};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Standalone,
    Fedsgd,
    Fflx,
    #[default]
    Gbppffl,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Standalone => "standalone",
            Scheme::Fedsgd => "fedsgd",
            Scheme::Fflx => "fflx",
            Scheme::Gbppffl => "gbppffl",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Mock,
    Ckks,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub classes: usize,
    pub features: usize,
    /// Distance of the class centres from the origin, in noise standard
    /// deviations.
    pub separation: f64,
    /// Columnar text file to use instead of synthetic data.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            classes: 10,
            features: 64,
            separation: 2.5,
            path: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scheme: Scheme,
    /// Only read by the encrypted scheme.
    pub backend: BackendKind,
    pub seed: u64,
    pub rounds: usize,
    pub learning_rate: f64,
    /// Samples per local step; the whole local set when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub local_batch_size: Option<usize>,
    pub he_preset: HePreset,
    /// Standard deviation of the noise the mock backend adds on encryption.
    pub mock_noise: f64,
    /// Defaults to 0 for the exact mock and 1e-4 otherwise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi_tolerance: Option<f64>,
    pub fflx_masks: MaskStrategy,
    /// Hidden layer widths of the perceptron.
    pub hidden: Vec<usize>,
    pub data: DataConfig,
    pub split: SplitSpec,
    pub fairness: FairnessParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Line-delimited JSON round log.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transcript: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::default(),
            backend: BackendKind::default(),
            seed: 0,
            rounds: 30,
            learning_rate: 0.5,
            local_batch_size: None,
            he_preset: HePreset::default(),
            mock_noise: 0.0,
            phi_tolerance: None,
            fflx_masks: MaskStrategy::TopK,
            hidden: vec![40],
            data: DataConfig::default(),
            split: SplitSpec::default(),
            fairness: FairnessParams::default(),
            output: None,
            transcript: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs serialize")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn phi_tolerance(&self) -> f64 {
        self.phi_tolerance.unwrap_or(match self.backend {
            BackendKind::Mock if self.mock_noise == 0.0 => 0.0,
            _ => 1e-4,
        })
    }

    pub fn layout(&self, features: usize, classes: usize) -> Result<Layout> {
        let mut sizes = Vec::with_capacity(self.hidden.len() + 2);
        sizes.push(features);
        sizes.extend(&self.hidden);
        sizes.push(classes);
        Layout::new(sizes)
    }

    pub fn validate(&self) -> Result<()> {
        self.fairness.validate()?;
        if self.rounds == 0 {
            return Err(Error::InvalidConfig("rounds must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if self.local_batch_size == Some(0) {
            return Err(Error::InvalidConfig(
                "local batch size must be at least 1".into(),
            ));
        }
        if !(self.phi_tolerance() >= 0.0) {
            return Err(Error::InvalidConfig(
                "phi tolerance must be non-negative".into(),
            ));
        }
        Ok(())
    }

    fn context(&self, round: usize) -> RoundContext {
        RoundContext {
            round,
            seed: self.seed,
            learning_rate: self.learning_rate,
            batch_size: self.local_batch_size,
            phi_tolerance: self.phi_tolerance(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRow {
    pub participant_id: usize,
    pub standalone_acc: f64,
    pub scheme_acc: f64,
    pub final_r: f64,
    pub final_q: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultTable {
    pub scheme: Scheme,
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    fn column(&self, f: impl Fn(&ResultRow) -> f64) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }

    pub fn mean_accuracy(&self) -> (f64, f64) {
        let n = self.rows.len() as f64;
        let sum = |v: Vec<f64>| v.iter().sum::<f64>() / n;
        (
            sum(self.column(|r| r.standalone_acc)),
            sum(self.column(|r| r.scheme_acc)),
        )
    }

    pub fn max_accuracy(&self) -> (f64, f64) {
        let max = |v: Vec<f64>| v.into_iter().fold(f64::NEG_INFINITY, f64::max);
        (
            max(self.column(|r| r.standalone_acc)),
            max(self.column(|r| r.scheme_acc)),
        )
    }

    /// Correlation between standalone and scheme accuracies; NaN when
    /// either column is constant.
    pub fn pearson(&self) -> f64 {
        pearson(
            &self.column(|r| r.standalone_acc),
            &self.column(|r| r.scheme_acc),
        )
        .unwrap_or(f64::NAN)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    #[default]
    Csv,
    TextTable,
}

pub fn emit_results<W: Write>(table: &ResultTable, format: OutputFormat, mut out: W) -> Result<()> {
    if table.rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let text = match format {
        OutputFormat::Csv => csv(table),
        OutputFormat::TextTable => text_table(table),
    };
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

pub fn write_results(table: &ResultTable, format: OutputFormat, path: &Path) -> Result<()> {
    emit_results(table, format, BufWriter::new(File::create(path)?))
}

fn csv(table: &ResultTable) -> String {
    let mut s = String::from("participant_id,standalone_acc,scheme_acc,final_r,final_q\n");
    for r in &table.rows {
        writeln!(
            s,
            "{},{:.6},{:.6},{:.6},{:.6}",
            r.participant_id, r.standalone_acc, r.scheme_acc, r.final_r, r.final_q
        )
        .unwrap();
    }
    let (ms, mx) = table.mean_accuracy();
    let (xs, xx) = table.max_accuracy();
    writeln!(s, "mean_acc,{ms:.6},{mx:.6}").unwrap();
    writeln!(s, "max_acc,{xs:.6},{xx:.6}").unwrap();
    writeln!(s, "pearson_rho,{:.6}", table.pearson()).unwrap();
    s
}

fn text_table(table: &ResultTable) -> String {
    let scheme = table.scheme.name();
    let mut s = format!(
        "{:<12} {:>14} {:>14} {:>9} {:>9}\n",
        "participant", "standalone", scheme, "r", "q"
    );
    for r in &table.rows {
        writeln!(
            s,
            "{:<12} {:>14.2} {:>14.2} {:>9.4} {:>9.4}",
            r.participant_id,
            100.0 * r.standalone_acc,
            100.0 * r.scheme_acc,
            r.final_r,
            r.final_q
        )
        .unwrap();
    }
    let (ms, mx) = table.mean_accuracy();
    let (xs, xx) = table.max_accuracy();
    let cell = |m: f64, x: f64| format!("{:.2} ({:.2})", 100.0 * m, 100.0 * x);
    writeln!(
        s,
        "{:<12} {:>14} {:>14}",
        "accuracy",
        cell(ms, xs),
        cell(mx, xx)
    )
    .unwrap();
    writeln!(
        s,
        "{:<12} {:>14} {:>14.2}",
        "pearson_rho",
        "",
        table.pearson()
    )
    .unwrap();
    s
}

/// Participants with their local data and the held-out test set, before
/// any training.
#[derive(Clone, Debug)]
pub struct Setup {
    pub participants: Vec<Participant>,
    pub test: Dataset,
}

pub fn prepare(config: &ExperimentConfig) -> Result<Setup> {
    config.validate()?;
    let split = &config.split;
    let data = match &config.data.path {
        Some(path) => read_columnar(BufReader::new(File::open(path)?), None)?,
        None => {
            let total = split.required_samples(config.data.classes)?;
            let seed = seeds::seed_u64(config.seed, Stream::Data, &[0]);
            generate_dataset(
                config.data.classes,
                total,
                config.data.features,
                config.data.separation,
                seed,
            )?
        }
    };
    let parts = partition(
        &data,
        split,
        seeds::seed_u64(config.seed, Stream::Data, &[1]),
    )?;
    let layout = config.layout(data.n_features(), data.classes())?;
    let model = ModelParams::init(layout, &mut seeds::rng(config.seed, Stream::Init, &[]));
    let participants = parts
        .locals
        .into_iter()
        .enumerate()
        .map(|(id, d)| Participant::new(id, model.clone(), d))
        .collect();
    Ok(Setup {
        participants,
        test: parts.test,
    })
}

/// Final models, reputations and relative reputations of one run.
#[derive(Clone, Debug)]
pub struct Trained {
    pub models: Vec<ModelParams>,
    pub r: Vec<f64>,
    pub q: Vec<f64>,
}

impl Trained {
    pub fn accuracies(&self, test: &Dataset) -> Result<Vec<f64>> {
        self.models
            .iter()
            .map(|m| m.evaluate_accuracy(test))
            .collect()
    }
}

fn models(participants: &[Participant]) -> Vec<ModelParams> {
    participants.iter().map(|p| p.model.clone()).collect()
}

fn transcript_sink(config: &ExperimentConfig) -> Result<Option<BufWriter<File>>> {
    config
        .transcript
        .as_deref()
        .map(|p| File::create(p).map(BufWriter::new))
        .transpose()
        .map_err(Error::from)
}

fn log<G: Payload>(sink: &mut Option<BufWriter<File>>, t: &RoundTranscript<G>) -> Result<()> {
    if let Some(w) = sink {
        writeln!(w, "{}", t.to_json_line())?;
    }
    Ok(())
}

/// Trains `scheme` from the prepared starting point.
pub fn train(config: &ExperimentConfig, scheme: Scheme, setup: &Setup) -> Result<Trained> {
    let mut ps = setup.participants.clone();
    let n = ps.len();
    let uniform = || (vec![1.0 / n as f64; n], vec![1.0; n]);
    match scheme {
        Scheme::Standalone => {
            for round in 1..=config.rounds {
                run_round_standalone(&mut ps, config.fairness.delta, &config.context(round))?;
            }
            let (r, q) = uniform();
            Ok(Trained {
                models: models(&ps),
                r,
                q,
            })
        }
        Scheme::Fedsgd => {
            for round in 1..=config.rounds {
                run_round_fedsgd(&mut ps, &config.context(round))?;
            }
            let (r, q) = uniform();
            Ok(Trained {
                models: models(&ps),
                r,
                q,
            })
        }
        Scheme::Fflx => {
            let mut server = server_state(config, &ps)?;
            let mut sink = transcript_sink(config)?;
            for round in 1..=config.rounds {
                let t = run_round_fflx(
                    &mut ps,
                    &mut server,
                    config.fflx_masks,
                    &config.context(round),
                )?;
                log(&mut sink, &t)?;
            }
            Ok(finish(&ps, server.reputation.r, server.reputation.q))
        }
        Scheme::Gbppffl => {
            let params = HeParams::preset(config.he_preset);
            match config.backend {
                BackendKind::Mock => {
                    let noise_seed = seeds::seed_u64(config.seed, Stream::MockNoise, &[]);
                    let backend = MockBackend::with_noise(params, config.mock_noise, noise_seed)?;
                    train_encrypted(&backend, config, ps)
                }
                BackendKind::Ckks => train_encrypted(&CkksBackend::new(params)?, config, ps),
            }
        }
    }
}

fn finish(ps: &[Participant], r: Vec<f64>, q: Vec<f64>) -> Trained {
    Trained {
        models: models(ps),
        r,
        q,
    }
}

fn server_state(config: &ExperimentConfig, ps: &[Participant]) -> Result<ServerState> {
    let sizes: Vec<usize> = ps.iter().map(|p| p.data.len()).collect();
    ServerState::new(
        config.fairness.initial_reputations(&sizes)?,
        config.fairness.clone(),
    )
}

fn train_encrypted<B: HeBackend>(
    backend: &B,
    config: &ExperimentConfig,
    mut ps: Vec<Participant>,
) -> Result<Trained> {
    let (server_keys, keys) = distribute_keys(backend, config.seed);
    let mut server = server_state(config, &ps)?.with_keys(server_keys);
    let mut sink = transcript_sink(config)?;
    for round in 1..=config.rounds {
        let t = run_round_gbppffl(
            backend,
            &mut ps,
            &keys,
            &mut server,
            &config.context(round),
            None,
        )?;
        log(&mut sink, &t)?;
    }
    Ok(finish(&ps, server.reputation.r, server.reputation.q))
}

fn table(
    scheme: Scheme,
    standalone: &[f64],
    trained: &Trained,
    test: &Dataset,
) -> Result<ResultTable> {
    let acc = trained.accuracies(test)?;
    let rows = (0..acc.len())
        .map(|i| ResultRow {
            participant_id: i,
            standalone_acc: standalone[i],
            scheme_acc: acc[i],
            final_r: trained.r[i],
            final_q: trained.q[i],
        })
        .collect();
    Ok(ResultTable { scheme, rows })
}

/// Trains the standalone baseline and the configured scheme from the same
/// data and initial model and tabulates their test accuracies.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ResultTable> {
    let setup = prepare(config)?;
    let baseline = train(config, Scheme::Standalone, &setup)?;
    let standalone = baseline.accuracies(&setup.test)?;
    let trained = match config.scheme {
        Scheme::Standalone => baseline,
        scheme => train(config, scheme, &setup)?,
    };
    table(config.scheme, &standalone, &trained, &setup.test)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Beta,
    Gamma,
}

/// One table per value of `parameter`, all sharing data, initial model and
/// the standalone baseline.
pub fn sweep(
    template: &ExperimentConfig,
    parameter: SweepParameter,
    values: &[f64],
) -> Result<Vec<ResultTable>> {
    let configs = values
        .iter()
        .map(|&v| {
            let mut c = template.clone();
            let (variant, beta, gamma) = match parameter {
                SweepParameter::Beta => (QVariant::TanhBeta, Some(v), None),
                SweepParameter::Gamma => (QVariant::GammaPower, None, Some(v)),
            };
            c.fairness.q_variant = variant;
            c.fairness.beta = beta;
            c.fairness.gamma = gamma;
            c.validate().map(|_| c)
        })
        .collect::<Result<Vec<_>>>()?;
    let setup = prepare(template)?;
    let standalone = train(template, Scheme::Standalone, &setup)?.accuracies(&setup.test)?;
    configs
        .iter()
        .map(|c| {
            table(
                c.scheme,
                &standalone,
                &train(c, c.scheme, &setup)?,
                &setup.test,
            )
        })
        .collect()
}

/// Mean wall time of each homomorphic operation on vectors of `length`
/// entries.
#[derive(Clone, Debug, Serialize)]
pub struct BenchReport {
    pub backend: &'static str,
    pub ring_dimension: usize,
    pub length: usize,
    pub chunks: usize,
    pub timings: Vec<(&'static str, Duration)>,
}

impl BenchReport {
    /// Server-side cost of one encrypted round with `n` participants,
    /// from the measured operation times.
    pub fn round_estimate(&self, n: usize) -> Duration {
        let t = |name| {
            self.timings
                .iter()
                .find(|(k, _)| *k == name)
                .map(|(_, d)| *d)
                .unwrap_or_default()
        };
        let n = n as u32;
        t("pmult") * (3 * n) + t("add") * (2 * n) + t("dot") * (2 * n + 1)
    }
}

impl std::fmt::Display for BenchReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "{} ring 2^{} length {} ({} chunks)",
            self.backend,
            self.ring_dimension.trailing_zeros(),
            self.length,
            self.chunks
        )?;
        for (name, d) in &self.timings {
            writeln!(f, "{name:<8} {:>10.3} ms", d.as_secs_f64() * 1e3)?;
        }
        Ok(())
    }
}

pub fn bench<B: HeBackend>(
    backend: &B,
    length: usize,
    repeats: usize,
    seed: u64,
) -> Result<BenchReport> {
    let repeats = repeats.max(1);
    let mut rng = seeds::rng(seed, Stream::Encryption, &[u64::MAX]);
    let a: Vec<f64> = (0..length).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..length).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mask: Vec<f64> = (0..length).map(|i| (i % 2) as f64).collect();

    let start = Instant::now();
    let keys = backend.keygen(seed);
    let keygen = start.elapsed();
    let ca = backend.encrypt(&keys.public, &a, &mut rng)?;
    let cb = backend.encrypt(&keys.public, &b, &mut rng)?;

    fn time<T, E: Into<Error>>(
        repeats: usize,
        mut f: impl FnMut() -> Result<T, E>,
    ) -> Result<Duration> {
        let start = Instant::now();
        for _ in 0..repeats {
            std::hint::black_box(f().map_err(Into::into)?);
        }
        Ok(start.elapsed() / repeats as u32)
    }
    let timings = vec![
        ("keygen", keygen),
        (
            "encrypt",
            time(repeats, || backend.encrypt(&keys.public, &a, &mut rng))?,
        ),
        (
            "decrypt",
            time(repeats, || {
                Ok::<_, Error>(backend.decrypt(&keys.secret, &ca))
            })?,
        ),
        ("add", time(repeats, || backend.add(&ca, &cb))?),
        (
            "pmult",
            time(repeats, || backend.pmult(Plaintext::Vector(&mask), &ca))?,
        ),
        (
            "cmult",
            time(repeats, || backend.cmult(&keys.evaluation, &ca, &cb))?,
        ),
        (
            "dot",
            time(repeats, || backend.dot(&keys.evaluation, &ca, &cb))?,
        ),
    ];
    Ok(BenchReport {
        backend: backend.name(),
        ring_dimension: backend.params().ring_dimension,
        length,
        chunks: ca.chunk_count(),
        timings,
    })
}

/// Reads a whitespace or comma separated list of numbers.
pub fn parse_values<R: BufRead>(reader: R) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (line, text) in reader.lines().enumerate() {
        for token in text?
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
        {
            out.push(token.parse().map_err(|_| Error::Parse {
                line: line + 1,
                reason: format!("not a number: {token}"),
            })?);
        }
    }
    Ok(out)
}
