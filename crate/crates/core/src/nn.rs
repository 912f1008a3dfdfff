//! Fully connected classifier with tanh hidden layers, a softmax output and
//! mean cross-entropy loss. All parameters live in one flat vector whose
//! index space is described by a [`Layout`]; gradients and updates use the
//! same indexing.

use rand::Rng;

use crate::error::{Error, Result};

/// Row-major feature matrix with integer labels in `[0, classes)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    n_features: usize,
    labels: Vec<usize>,
    classes: usize,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        n_features: usize,
        labels: Vec<usize>,
        classes: usize,
    ) -> Result<Self> {
        if n_features == 0 || features.len() != labels.len() * n_features {
            return Err(Error::DimensionMismatch {
                expected: labels.len() * n_features.max(1),
                found: features.len(),
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::InvalidLabel { label, classes });
        }
        Ok(Self {
            features,
            n_features,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn sample(&self, index: usize) -> &[f64] {
        &self.features[index * self.n_features..(index + 1) * self.n_features]
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    len: self.len(),
                });
            }
            features.extend_from_slice(self.sample(i));
            labels.push(self.labels[i]);
        }
        Ok(Self {
            features,
            n_features: self.n_features,
            labels,
            classes: self.classes,
        })
    }

    /// Sorted distinct labels present.
    pub fn label_set(&self) -> Vec<usize> {
        let mut seen = vec![false; self.classes];
        for &l in &self.labels {
            seen[l] = true;
        }
        (0..self.classes).filter(|&c| seen[c]).collect()
    }
}

/// Where a flat parameter index lives.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Position {
    Weight {
        layer: usize,
        row: usize,
        col: usize,
    },
    Bias {
        layer: usize,
        index: usize,
    },
}

/// Layer widths from input to output. Layer `k` stores its
/// `sizes[k+1] x sizes[k]` weight matrix row-major, followed by its bias.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
}

impl Layout {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "layer sizes {sizes:?} need at least two positive widths"
            )));
        }
        let mut offsets = vec![0];
        for w in sizes.windows(2) {
            offsets.push(offsets.last().unwrap() + w[1] * (w[0] + 1));
        }
        Ok(Self { sizes, offsets })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn inputs(&self) -> usize {
        self.sizes[0]
    }

    pub fn outputs(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn layer_count(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Total parameter count.
    pub fn len(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn weight_range(&self, layer: usize) -> std::ops::Range<usize> {
        let start = self.offsets[layer];
        start..start + self.sizes[layer + 1] * self.sizes[layer]
    }

    fn bias_range(&self, layer: usize) -> std::ops::Range<usize> {
        self.weight_range(layer).end..self.offsets[layer + 1]
    }

    pub fn position(&self, index: usize) -> Option<Position> {
        let layer = (0..self.layer_count()).find(|&k| index < self.offsets[k + 1])?;
        let w = self.weight_range(layer);
        if w.contains(&index) {
            let local = index - w.start;
            Some(Position::Weight {
                layer,
                row: local / self.sizes[layer],
                col: local % self.sizes[layer],
            })
        } else {
            Some(Position::Bias {
                layer,
                index: index - w.end,
            })
        }
    }

    pub fn index(&self, position: Position) -> Option<usize> {
        match position {
            Position::Weight { layer, row, col } => (layer < self.layer_count()
                && row < self.sizes[layer + 1]
                && col < self.sizes[layer])
                .then(|| self.offsets[layer] + row * self.sizes[layer] + col),
            Position::Bias { layer, index } => (layer < self.layer_count()
                && index < self.sizes[layer + 1])
                .then(|| self.bias_range(layer).start + index),
        }
    }
}

/// Weight rows and bias of one layer, as used by [`ModelParams::from_layers`].
pub type LayerParams = (Vec<Vec<f64>>, Vec<f64>);

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    layout: Layout,
    flat: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(layout: Layout) -> Self {
        let flat = vec![0.0; layout.len()];
        Self { layout, flat }
    }

    /// Uniform in `[-s, s]` with `s = 1/sqrt(fan_in)` per layer.
    pub fn init<R: Rng + ?Sized>(layout: Layout, rng: &mut R) -> Self {
        let mut p = Self::zeros(layout);
        for k in 0..p.layout.layer_count() {
            let s = 1.0 / (p.layout.sizes[k] as f64).sqrt();
            let range = p.layout.offsets[k]..p.layout.offsets[k + 1];
            for v in &mut p.flat[range] {
                *v = rng.random_range(-s..=s);
            }
        }
        p
    }

    pub fn from_flat(layout: Layout, flat: Vec<f64>) -> Result<Self> {
        if flat.len() != layout.len() {
            return Err(Error::DimensionMismatch {
                expected: layout.len(),
                found: flat.len(),
            });
        }
        Ok(Self { layout, flat })
    }

    pub fn from_layers(layers: &[LayerParams]) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::InvalidConfig("no layers".into()))?;
        let mut sizes = vec![first.0.first().map_or(0, Vec::len)];
        for (w, b) in layers {
            if w.len() != b.len() || w.iter().any(|row| row.len() != *sizes.last().unwrap()) {
                return Err(Error::DimensionMismatch {
                    expected: *sizes.last().unwrap(),
                    found: w.first().map_or(0, Vec::len),
                });
            }
            sizes.push(b.len());
        }
        let layout = Layout::new(sizes)?;
        let mut flat = Vec::with_capacity(layout.len());
        for (w, b) in layers {
            flat.extend(w.iter().flatten());
            flat.extend(b);
        }
        Ok(Self { layout, flat })
    }

    pub fn to_layers(&self) -> Vec<LayerParams> {
        (0..self.layout.layer_count())
            .map(|k| {
                let rows = self
                    .weights(k)
                    .chunks(self.layout.sizes[k])
                    .map(<[f64]>::to_vec)
                    .collect();
                (rows, self.bias(k).to_vec())
            })
            .collect()
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.flat
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.flat
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        &self.flat[self.layout.weight_range(layer)]
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        &self.flat[self.layout.bias_range(layer)]
    }

    /// Pre-activations of every layer; the last entry holds the logits.
    fn forward(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut outs: Vec<Vec<f64>> = Vec::with_capacity(self.layout.layer_count());
        for k in 0..self.layout.layer_count() {
            let input: &[f64] = if k == 0 { x } else { outs.last().unwrap() };
            let (w, b) = (self.weights(k), self.bias(k));
            let fan_in = self.layout.sizes[k];
            let mut z: Vec<f64> = b
                .iter()
                .enumerate()
                .map(|(r, &bias)| bias + dot(&w[r * fan_in..(r + 1) * fan_in], input))
                .collect();
            if k + 1 < self.layout.layer_count() {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            outs.push(z);
        }
        outs
    }

    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x).pop().unwrap()
    }

    /// Argmax of the scores; ties go to the lowest class.
    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.scores(x))
    }

    fn check_data(&self, data: &Dataset) -> Result<()> {
        if data.n_features != self.layout.inputs() {
            return Err(Error::DimensionMismatch {
                expected: self.layout.inputs(),
                found: data.n_features,
            });
        }
        if data.classes > self.layout.outputs() {
            return Err(Error::DimensionMismatch {
                expected: self.layout.outputs(),
                found: data.classes,
            });
        }
        Ok(())
    }

    fn check_batch(&self, data: &Dataset, batch: &[usize]) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        self.check_data(data)?;
        if let Some(&index) = batch.iter().find(|&&i| i >= data.len()) {
            return Err(Error::IndexOutOfRange {
                index,
                len: data.len(),
            });
        }
        Ok(())
    }

    /// Mean cross-entropy over `batch`.
    pub fn loss(&self, data: &Dataset, batch: &[usize]) -> Result<f64> {
        self.check_batch(data, batch)?;
        let total: f64 = batch
            .iter()
            .map(|&i| {
                let z = self.scores(data.sample(i));
                log_sum_exp(&z) - z[data.labels[i]]
            })
            .sum();
        Ok(total / batch.len() as f64)
    }

    /// Gradient of [`loss`](Self::loss) with respect to the flat parameters.
    pub fn local_gradient(&self, data: &Dataset, batch: &[usize]) -> Result<Vec<f64>> {
        self.check_batch(data, batch)?;
        let layers = self.layout.layer_count();
        let mut grad = vec![0.0; self.layout.len()];
        for &i in batch {
            let x = data.sample(i);
            let acts = self.forward(x);
            let mut delta = softmax(&acts[layers - 1]);
            delta[data.labels[i]] -= 1.0;
            for k in (0..layers).rev() {
                let input: &[f64] = if k == 0 { x } else { &acts[k - 1] };
                let fan_in = self.layout.sizes[k];
                let w_range = self.layout.weight_range(k);
                let b_range = self.layout.bias_range(k);
                for (r, &d) in delta.iter().enumerate() {
                    let row =
                        &mut grad[w_range.start + r * fan_in..w_range.start + (r + 1) * fan_in];
                    for (g, &a) in row.iter_mut().zip(input) {
                        *g += d * a;
                    }
                    grad[b_range.start + r] += d;
                }
                if k > 0 {
                    let w = self.weights(k);
                    let mut prev = vec![0.0; fan_in];
                    for (r, &d) in delta.iter().enumerate() {
                        for (p, &wv) in prev.iter_mut().zip(&w[r * fan_in..(r + 1) * fan_in]) {
                            *p += wv * d;
                        }
                    }
                    for (p, &a) in prev.iter_mut().zip(input) {
                        *p *= 1.0 - a * a;
                    }
                    delta = prev;
                }
            }
        }
        let n = batch.len() as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        Ok(grad)
    }

    /// `params - learning_rate * update`.
    pub fn apply_update(&self, update: &[f64], learning_rate: f64) -> Result<Self> {
        if update.len() != self.flat.len() {
            return Err(Error::DimensionMismatch {
                expected: self.flat.len(),
                found: update.len(),
            });
        }
        let flat = self
            .flat
            .iter()
            .zip(update)
            .map(|(p, u)| p - learning_rate * u)
            .collect();
        Ok(Self {
            layout: self.layout.clone(),
            flat,
        })
    }

    pub fn evaluate_accuracy(&self, test: &Dataset) -> Result<f64> {
        if test.is_empty() {
            return Err(Error::EmptyDataset);
        }
        self.check_data(test)?;
        let correct = (0..test.len())
            .filter(|&i| self.predict(test.sample(i)) == test.labels[i])
            .count();
        Ok(correct as f64 / test.len() as f64)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_data(n: usize, d: usize, c: usize, rng: &mut ChaCha8Rng) -> Dataset {
        let features = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let labels = (0..n).map(|_| rng.random_range(0..c)).collect();
        Dataset::new(features, d, labels, c).unwrap()
    }

    #[test]
    fn layout_counts_every_parameter() {
        let l = Layout::new(vec![64, 40, 10]).unwrap();
        assert_eq!(l.len(), 64 * 40 + 40 + 40 * 10 + 10);
        assert_eq!(
            l.position(0),
            Some(Position::Weight {
                layer: 0,
                row: 0,
                col: 0
            })
        );
        assert_eq!(
            l.position(64 * 40),
            Some(Position::Bias { layer: 0, index: 0 })
        );
        assert_eq!(
            l.position(l.len() - 1),
            Some(Position::Bias { layer: 1, index: 9 })
        );
        assert_eq!(l.position(l.len()), None);
        assert!(Layout::new(vec![3]).is_err());
        assert!(Layout::new(vec![3, 0, 2]).is_err());
    }

    #[test]
    fn layers_roundtrip() {
        let layers = vec![
            (
                vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]],
                vec![7.0, 8.0, 9.0],
            ),
            (vec![vec![10.0, 11.0, 12.0]], vec![13.0]),
        ];
        let p = ModelParams::from_layers(&layers).unwrap();
        assert_eq!(
            p.as_flat(),
            &(1..=13).map(f64::from).collect::<Vec<_>>()[..]
        );
        assert_eq!(p.to_layers(), layers);
        assert!(ModelParams::from_layers(&[(vec![vec![1.0]], vec![1.0, 2.0])]).is_err());
    }

    #[test]
    fn saturated_sample_has_zero_gradient() {
        let mut p = ModelParams::zeros(Layout::new(vec![3, 4, 3]).unwrap());
        let bias = p
            .layout
            .index(Position::Bias { layer: 1, index: 2 })
            .unwrap();
        p.flat[bias] = 1000.0;
        let data = Dataset::new(vec![0.3, -0.2, 0.9], 3, vec![2], 3).unwrap();
        let g = p.local_gradient(&data, &[0]).unwrap();
        assert!(g.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-6);
    }

    #[test]
    fn duplicated_batch_gives_same_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = random_data(6, 4, 3, &mut rng);
        let p = ModelParams::init(Layout::new(vec![4, 5, 3]).unwrap(), &mut rng);
        let g = p.local_gradient(&data, &[0, 1, 2, 3, 4, 5]).unwrap();
        let g2 = p
            .local_gradient(&data, &[0, 1, 2, 3, 4, 5, 0, 1, 2, 3, 4, 5])
            .unwrap();
        for (a, b) in g.iter().zip(&g2) {
            assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let data = random_data(5, 4, 3, &mut rng);
        let batch = [0, 1, 2, 3, 4];
        let p = ModelParams::init(Layout::new(vec![4, 6, 5, 3]).unwrap(), &mut rng);
        let g = p.local_gradient(&data, &batch).unwrap();
        let h = 1e-5;
        for k in 0..p.flat.len() {
            let mut plus = p.clone();
            plus.flat[k] += h;
            let mut minus = p.clone();
            minus.flat[k] -= h;
            let fd = (plus.loss(&data, &batch).unwrap() - minus.loss(&data, &batch).unwrap())
                / (2.0 * h);
            let rel = (fd - g[k]).abs() / fd.abs().max(g[k].abs()).max(1e-8);
            assert!(
                rel < 1e-4 || (fd - g[k]).abs() < 1e-10,
                "coordinate {k}: fd {fd} vs analytic {}",
                g[k]
            );
        }
    }

    #[test]
    fn gradient_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data = random_data(3, 4, 3, &mut rng);
        let p = ModelParams::zeros(Layout::new(vec![4, 2, 3]).unwrap());
        assert!(matches!(
            p.local_gradient(&data, &[]),
            Err(Error::EmptyBatch)
        ));
        assert!(matches!(
            p.local_gradient(&data, &[3]),
            Err(Error::IndexOutOfRange { .. })
        ));
        let wrong = ModelParams::zeros(Layout::new(vec![5, 2, 3]).unwrap());
        assert!(matches!(
            wrong.local_gradient(&data, &[0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn update_arithmetic() {
        let layout = Layout::new(vec![1, 1]).unwrap();
        let p = ModelParams::from_flat(layout.clone(), vec![1.0, 2.0]).unwrap();
        assert_eq!(
            p.apply_update(&[0.5, -1.0], 1.0).unwrap().as_flat(),
            &[0.5, 3.0]
        );
        assert_eq!(p.apply_update(&[0.0, 0.0], 0.3).unwrap(), p);
        assert_eq!(p.apply_update(&[4.0, 5.0], 0.0).unwrap(), p);
        assert!(p.apply_update(&[1.0], 1.0).is_err());
    }

    #[test]
    fn accuracy_edge_cases() {
        let p = ModelParams::zeros(Layout::new(vec![2, 3]).unwrap());
        let zeros = Dataset::new(vec![0.5; 8], 2, vec![0; 4], 3).unwrap();
        assert_eq!(p.evaluate_accuracy(&zeros).unwrap(), 1.0);
        let ones = Dataset::new(vec![0.5; 8], 2, vec![1; 4], 3).unwrap();
        assert_eq!(p.evaluate_accuracy(&ones).unwrap(), 0.0);
        let empty = Dataset::new(vec![], 2, vec![], 3).unwrap();
        assert!(matches!(
            p.evaluate_accuracy(&empty),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn hand_evaluated_accuracy() {
        // Linear model 2 -> 2: class 1 iff x0 < x1, ties to class 0.
        let p = ModelParams::from_layers(&[(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0, 0.0])])
            .unwrap();
        let xs = [
            [1.0, 0.0],
            [0.0, 1.0],
            [0.5, 0.5],
            [2.0, 3.0],
            [-1.0, -2.0],
            [0.1, 0.2],
            [3.0, 1.0],
            [-0.5, 0.5],
            [0.0, 0.0],
            [4.0, 4.5],
        ];
        // predictions: 0 1 0 1 0 1 0 1 0 1
        let labels = vec![0, 1, 1, 1, 0, 0, 0, 0, 0, 1];
        let data = Dataset::new(xs.iter().flatten().copied().collect(), 2, labels, 2).unwrap();
        assert_eq!(p.evaluate_accuracy(&data).unwrap(), 0.7);
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::new(vec![0.0; 5], 2, vec![0, 1], 2).is_err());
        assert!(matches!(
            Dataset::new(vec![0.0; 4], 2, vec![0, 2], 2),
            Err(Error::InvalidLabel {
                label: 2,
                classes: 2
            })
        ));
        let d = Dataset::new(vec![1.0, 2.0, 3.0, 4.0], 2, vec![1, 0], 3).unwrap();
        assert_eq!(d.subset(&[1]).unwrap().sample(0), &[3.0, 4.0]);
        assert_eq!(d.label_set(), vec![0, 1]);
        assert!(d.subset(&[2]).is_err());
    }

    proptest! {
        #[test]
        fn flat_roundtrip(sizes in prop::collection::vec(1usize..6, 2..5), seed in any::<u64>()) {
            let layout = Layout::new(sizes).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v: Vec<f64> = (0..layout.len()).map(|_| rng.random_range(-5.0..5.0)).collect();
            let p = ModelParams::from_flat(layout.clone(), v.clone()).unwrap();
            prop_assert_eq!(p.as_flat(), &v[..]);
            prop_assert_eq!(ModelParams::from_layers(&p.to_layers()).unwrap(), p);
            for k in 0..layout.len() {
                prop_assert_eq!(layout.index(layout.position(k).unwrap()), Some(k));
            }
        }

        #[test]
        fn accuracy_ignores_order(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data = random_data(20, 3, 4, &mut rng);
            let p = ModelParams::init(Layout::new(vec![3, 4, 4]).unwrap(), &mut rng);
            let mut order: Vec<usize> = (0..20).collect();
            rand::seq::SliceRandom::shuffle(&mut order[..], &mut rng);
            let shuffled = data.subset(&order).unwrap();
            prop_assert_eq!(p.evaluate_accuracy(&data).unwrap(), p.evaluate_accuracy(&shuffled).unwrap());
        }
    }
}
