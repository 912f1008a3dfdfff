//! Synthetic Gaussian-cluster data and the three participant splits.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Dataset;

/// Largest to smallest local dataset size under the power-law split.
pub const DEFAULT_SIZE_RATIO: f64 = 1120.0 / 71.0;

/// `classes` isotropic unit-variance clusters whose centres are random
/// directions of norm `separation`. Labels are assigned round-robin and
/// shuffled, so class counts differ by at most one.
pub fn generate_dataset(
    classes: usize,
    samples: usize,
    features: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if classes < 2 || samples < classes || features == 0 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 classes, one sample per class and one feature (got {classes} classes, {samples} samples, {features} features)"
        )));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "separation {separation} must be finite and non-negative"
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let centres: Vec<Vec<f64>> = (0..classes)
        .map(|_| {
            let v: Vec<f64> = (0..features).map(|_| rng.sample(StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| separation * x / norm).collect()
        })
        .collect();
    let mut labels: Vec<usize> = (0..samples).map(|i| i % classes).collect();
    labels.shuffle(&mut rng);
    let mut xs = Vec::with_capacity(samples * features);
    for &label in &labels {
        for c in &centres[label] {
            let noise: f64 = rng.sample(StandardNormal);
            xs.push(c + noise);
        }
    }
    Dataset::new(xs, features, labels, classes)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    IidUniform,
    IidPowerlaw,
    NiidClasses,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub regime: Regime,
    pub participants: usize,
    /// Samples distributed over all participants.
    pub local_samples: usize,
    pub test_samples: usize,
    /// Power-law exponent; derived from `size_ratio` when absent.
    pub powerlaw_exponent: Option<f64>,
    pub size_ratio: f64,
    /// Classes visible to each participant; a linear ramp from 1 to all
    /// classes when absent.
    pub classes_per_participant: Option<Vec<usize>>,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            regime: Regime::IidPowerlaw,
            participants: 5,
            local_samples: 3000,
            test_samples: 2000,
            powerlaw_exponent: None,
            size_ratio: DEFAULT_SIZE_RATIO,
            classes_per_participant: None,
        }
    }
}

impl SplitSpec {
    pub fn exponent(&self) -> f64 {
        match self.powerlaw_exponent {
            Some(a) => a,
            None if self.participants > 1 => self.size_ratio.ln() / (self.participants as f64).ln(),
            None => 0.0,
        }
    }

    /// Local dataset sizes in participant order.
    pub fn sizes(&self) -> Result<Vec<usize>> {
        let n = self.participants;
        if n == 0 {
            return Err(Error::InfeasibleSplit("no participants".into()));
        }
        let sizes = match self.regime {
            Regime::IidUniform | Regime::NiidClasses => vec![self.local_samples / n; n],
            Regime::IidPowerlaw => {
                let a = self.exponent();
                if !(a > 0.0 && a.is_finite()) && n > 1 {
                    return Err(Error::InfeasibleSplit(format!(
                        "power-law exponent {a} must be positive"
                    )));
                }
                let weights: Vec<f64> = (1..=n).map(|i| (i as f64).powf(-a)).collect();
                let total: f64 = weights.iter().sum();
                let sizes: Vec<usize> = weights
                    .iter()
                    .map(|w| (self.local_samples as f64 * w / total).floor() as usize)
                    .collect();
                if sizes.windows(2).any(|w| w[0] <= w[1]) {
                    return Err(Error::InfeasibleSplit(format!(
                        "power-law sizes {sizes:?} are not strictly decreasing; increase local_samples"
                    )));
                }
                sizes
            }
        };
        if sizes.contains(&0) {
            return Err(Error::InfeasibleSplit(format!(
                "{} samples cannot give every one of {n} participants a sample",
                self.local_samples
            )));
        }
        Ok(sizes)
    }

    pub fn class_counts(&self, classes: usize) -> Result<Vec<usize>> {
        let n = self.participants;
        let counts = match &self.classes_per_participant {
            Some(c) if c.len() != n => {
                return Err(Error::InfeasibleSplit(format!(
                    "{} class counts for {n} participants",
                    c.len()
                )));
            }
            Some(c) => c.clone(),
            None if n == 1 => vec![classes],
            None => (0..n)
                .map(|i| 1 + ((i * (classes - 1)) as f64 / (n - 1) as f64).round() as usize)
                .collect(),
        };
        if let Some(&k) = counts.iter().find(|&&k| k == 0 || k > classes) {
            return Err(Error::InfeasibleSplit(format!(
                "class count {k} outside [1, {classes}]"
            )));
        }
        Ok(counts)
    }

    /// Classes visible to participant `i`: a cyclic window starting at an
    /// offset spread evenly over the classes.
    pub fn class_window(&self, i: usize, classes: usize) -> Result<Vec<usize>> {
        let k = self.class_counts(classes)?[i];
        let start = i * classes / self.participants;
        Ok((0..k).map(|t| (start + t) % classes).collect())
    }

    /// Balanced dataset size guaranteeing that [`partition`] is feasible.
    pub fn required_samples(&self, classes: usize) -> Result<usize> {
        let test_per_class = self.test_samples.div_ceil(classes);
        match self.regime {
            Regime::IidUniform | Regime::IidPowerlaw => {
                Ok(self.local_samples + self.test_samples + classes)
            }
            Regime::NiidClasses => {
                let mut demand = vec![0usize; classes];
                let sizes = self.sizes()?;
                for (i, size) in sizes.iter().enumerate() {
                    let window = self.class_window(i, classes)?;
                    for (t, &c) in window.iter().enumerate() {
                        demand[c] += quota(*size, window.len(), t);
                    }
                }
                Ok(classes * (demand.into_iter().max().unwrap() + test_per_class))
            }
        }
    }
}

fn quota(size: usize, parts: usize, t: usize) -> usize {
    size / parts + usize::from(t < size % parts)
}

#[derive(Clone, Debug)]
pub struct Partition {
    pub locals: Vec<Dataset>,
    pub test: Dataset,
    pub local_indices: Vec<Vec<usize>>,
    pub test_indices: Vec<usize>,
}

/// Splits `data` into disjoint local sets and a class-stratified test set.
pub fn partition(data: &Dataset, spec: &SplitSpec, seed: u64) -> Result<Partition> {
    let classes = data.classes();
    if spec.test_samples < classes {
        return Err(Error::InfeasibleSplit(format!(
            "test set of {} samples cannot cover {classes} classes",
            spec.test_samples
        )));
    }
    let sizes = spec.sizes()?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in data.labels().iter().enumerate() {
        pools[l].push(i);
    }
    for pool in &mut pools {
        pool.shuffle(&mut rng);
    }

    let mut test_indices = Vec::with_capacity(spec.test_samples);
    for (c, pool) in pools.iter_mut().enumerate() {
        let take = quota(spec.test_samples, classes, c);
        if pool.len() < take {
            return Err(Error::InfeasibleSplit(format!(
                "class {c} has too few samples for the test set"
            )));
        }
        test_indices.extend(pool.drain(..take));
    }

    let local_indices = match spec.regime {
        Regime::IidUniform | Regime::IidPowerlaw => {
            let mut rest: Vec<usize> = pools.into_iter().flatten().collect();
            rest.sort_unstable();
            rest.shuffle(&mut rng);
            let needed: usize = sizes.iter().sum();
            if rest.len() < needed {
                return Err(Error::InfeasibleSplit(format!(
                    "{needed} local samples requested, {} left",
                    rest.len()
                )));
            }
            let mut out = Vec::with_capacity(sizes.len());
            let mut start = 0;
            for size in &sizes {
                out.push(rest[start..start + size].to_vec());
                start += size;
            }
            out
        }
        Regime::NiidClasses => {
            let mut out = Vec::with_capacity(sizes.len());
            for (i, &size) in sizes.iter().enumerate() {
                let window = spec.class_window(i, classes)?;
                let mut local = Vec::with_capacity(size);
                for (t, &c) in window.iter().enumerate() {
                    let take = quota(size, window.len(), t);
                    if pools[c].len() < take {
                        return Err(Error::InfeasibleSplit(format!(
                            "class {c} exhausted at participant {i}"
                        )));
                    }
                    let at = pools[c].len() - take;
                    local.extend(pools[c].drain(at..));
                }
                local.shuffle(&mut rng);
                out.push(local);
            }
            out
        }
    };

    let locals = local_indices
        .iter()
        .map(|idx| data.subset(idx))
        .collect::<Result<_>>()?;
    Ok(Partition {
        locals,
        test: data.subset(&test_indices)?,
        local_indices,
        test_indices,
    })
}

/// Reads one sample per line: the integer label followed by the features,
/// separated by commas or whitespace. Blank lines and lines starting with
/// `#` are skipped. The class count defaults to the largest label plus one.
pub fn read_columnar<R: BufRead>(reader: R, classes: Option<usize>) -> Result<Dataset> {
    let mut labels = Vec::new();
    let mut features = Vec::new();
    let mut width = None;
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty());
        let parse_err = |reason: String| Error::Parse {
            line: n + 1,
            reason,
        };
        let label = fields.next().expect("non-empty line");
        let label: usize = label
            .parse()
            .map_err(|_| parse_err(format!("label {label:?} is not a class index")))?;
        let start = features.len();
        for f in fields {
            features.push(
                f.parse::<f64>()
                    .map_err(|_| parse_err(format!("feature {f:?} is not a number")))?,
            );
        }
        let count = features.len() - start;
        match width {
            None if count == 0 => return Err(parse_err("no features".into())),
            None => width = Some(count),
            Some(w) if w != count => {
                return Err(parse_err(format!("expected {w} features, found {count}")))
            }
            Some(_) => {}
        }
        labels.push(label);
    }
    let width = width.ok_or(Error::EmptyDataset)?;
    let classes = classes.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
    Dataset::new(features, width, labels, classes)
}

pub fn write_columnar<W: Write>(data: &Dataset, mut out: W) -> Result<()> {
    for i in 0..data.len() {
        write!(out, "{}", data.labels()[i])?;
        for x in data.sample(i) {
            write!(out, ",{x}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}
