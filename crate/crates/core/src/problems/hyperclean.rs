//! Multi-dataset data hyper-cleaning on generated Gaussian clusters.
//!
//! Upper level: one weight logit `alpha_{i,j}` per training sample and the
//! shared linear softmax model `omega`; objective `F_i` is the cross-entropy on
//! the clean validation split of dataset `i`. Lower level:
//!
//! ```text
//! f(alpha, omega) = sum_i 1/N_i sum_j sigmoid(alpha_ij) CE(omega; x_ij, y_ij) + ridge |omega|^2
//! ```
//!
//! `ridge > 0` makes `f` strongly convex in `omega` with modulus `2 ridge`.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ForumError, Result};
use crate::linalg;
use crate::problem::{Capabilities, DecisionPoint, Dims, Problem};
use crate::rng::{self, ForumRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HypercleanSpec {
    /// Number of datasets (upper-level objectives).
    pub datasets: usize,
    pub classes: usize,
    pub feature_dim: usize,
    pub train_size: usize,
    pub val_size: usize,
    pub test_size: usize,
    /// Fraction of training labels replaced by a different random class.
    pub corruption_rate: f64,
    /// Norm of each class mean.
    pub cluster_separation: f64,
    pub ridge: f64,
    pub seed: u64,
}

impl Default for HypercleanSpec {
    fn default() -> Self {
        Self {
            datasets: 2,
            classes: 3,
            feature_dim: 10,
            train_size: 200,
            val_size: 100,
            test_size: 200,
            corruption_rate: 0.5,
            cluster_separation: 3.0,
            ridge: 1e-2,
            seed: 0,
        }
    }
}

impl HypercleanSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(ForumError::Config(msg));
        if self.datasets == 0 {
            return bad("datasets must be >= 1".into());
        }
        if self.classes < 2 {
            return bad("classes must be >= 2".into());
        }
        if self.feature_dim == 0 {
            return bad("feature_dim must be >= 1".into());
        }
        if self.val_size == 0 || self.test_size == 0 {
            return bad("validation and test splits must be non-empty".into());
        }
        if self.train_size < self.classes {
            return bad(format!(
                "train_size {} leaves a class without training samples",
                self.train_size
            ));
        }
        if !(0.0..1.0).contains(&self.corruption_rate) {
            return bad(format!("corruption_rate {} must lie in [0, 1)", self.corruption_rate));
        }
        if self.ridge.is_nan() || self.ridge <= 0.0 {
            return bad("ridge must be > 0".into());
        }
        if self.cluster_separation.is_nan() || self.cluster_separation < 0.0 {
            return bad("cluster_separation must be >= 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Samples of one split; features are stored with a trailing bias entry of 1.
#[derive(Debug, Clone)]
struct SampleSet {
    features: Vec<f64>,
    labels: Vec<usize>,
    /// Only meaningful for training splits.
    corrupted: Vec<bool>,
}

impl SampleSet {
    fn len(&self) -> usize {
        self.labels.len()
    }
}

#[derive(Debug, Clone)]
struct Dataset {
    train: SampleSet,
    val: SampleSet,
    test: SampleSet,
}

#[derive(Debug, Clone)]
pub struct Hyperclean {
    spec: HypercleanSpec,
    datasets: Vec<Dataset>,
    /// `d + 1` (bias included).
    stride: usize,
    /// Start of each dataset's block inside `alpha`.
    offsets: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypercleanReport {
    pub mean_weight_clean: f64,
    pub mean_weight_corrupt: f64,
    pub val_accuracy: Vec<f64>,
    pub test_accuracy: Vec<f64>,
    pub test_macro_f1: Vec<f64>,
}

impl HypercleanReport {
    pub fn mean_test_accuracy(&self) -> f64 {
        self.test_accuracy.iter().sum::<f64>() / self.test_accuracy.len() as f64
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Hyperclean {
    pub fn generate(spec: HypercleanSpec) -> Result<Self> {
        spec.validate()?;
        let stride = spec.feature_dim + 1;
        let mut datasets = Vec::with_capacity(spec.datasets);
        let mut offsets = Vec::with_capacity(spec.datasets);
        for i in 0..spec.datasets {
            let mut r = rng::seeded(rng::derive_seed(spec.seed, 0x4843_0000 + i as u64));
            let means: Vec<Vec<f64>> = (0..spec.classes)
                .map(|_| {
                    let u = rng::normal_vec(&mut r, spec.feature_dim);
                    let norm = linalg::norm(&u);
                    linalg::scale(spec.cluster_separation / norm, &u)
                })
                .collect();
            let mut train = draw_split(&mut r, &means, spec.train_size, stride);
            let val = draw_split(&mut r, &means, spec.val_size, stride);
            let test = draw_split(&mut r, &means, spec.test_size, stride);
            corrupt(&mut r, &mut train, spec.corruption_rate, spec.classes);
            offsets.push(i * spec.train_size);
            datasets.push(Dataset { train, val, test });
        }
        Ok(Self {
            spec,
            datasets,
            stride,
            offsets,
        })
    }

    pub fn spec(&self) -> &HypercleanSpec {
        &self.spec
    }

    /// Corruption flag for every training sample, in `alpha` order.
    pub fn corruption_mask(&self) -> Vec<bool> {
        self.datasets
            .iter()
            .flat_map(|d| d.train.corrupted.iter().copied())
            .collect()
    }

    fn logits(&self, omega: &[f64], x: &[f64]) -> Vec<f64> {
        (0..self.spec.classes)
            .map(|c| linalg::dot(&omega[c * self.stride..(c + 1) * self.stride], x))
            .collect()
    }

    fn softmax(&self, omega: &[f64], x: &[f64]) -> (Vec<f64>, f64) {
        let z = self.logits(omega, x);
        let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let log_sum = max + sum.ln();
        (exps.iter().map(|e| e / sum).collect(), log_sum)
    }

    /// Cross-entropy and softmax probabilities for one sample.
    fn sample_loss(&self, omega: &[f64], x: &[f64], y: usize) -> (f64, Vec<f64>) {
        let z = self.logits(omega, x);
        let (probs, log_sum) = self.softmax(omega, x);
        (log_sum - z[y], probs)
    }

    /// Adds `scale * grad_omega CE(x, y)` into `out`.
    fn add_sample_grad(&self, out: &mut [f64], probs: &[f64], x: &[f64], y: usize, scale: f64) {
        for c in 0..self.spec.classes {
            let coeff = scale * (probs[c] - if c == y { 1.0 } else { 0.0 });
            linalg::axpy(coeff, x, &mut out[c * self.stride..(c + 1) * self.stride]);
        }
    }

    fn mean_loss_and_grad(&self, set: &SampleSet, omega: &[f64]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; omega.len()];
        let mut loss = 0.0;
        let scale = 1.0 / set.len() as f64;
        for (j, &y) in set.labels.iter().enumerate() {
            let x = &set.features[j * self.stride..(j + 1) * self.stride];
            let (l, probs) = self.sample_loss(omega, x, y);
            loss += scale * l;
            self.add_sample_grad(&mut grad, &probs, x, y, scale);
        }
        (loss, grad)
    }

    fn predict(&self, omega: &[f64], x: &[f64]) -> usize {
        let z = self.logits(omega, x);
        let mut best = 0;
        for c in 1..z.len() {
            if z[c] > z[best] {
                best = c;
            }
        }
        best
    }

    fn accuracy_and_f1(&self, set: &SampleSet, omega: &[f64]) -> (f64, f64) {
        let k = self.spec.classes;
        let mut tp = vec![0usize; k];
        let mut fp = vec![0usize; k];
        let mut fn_ = vec![0usize; k];
        let mut correct = 0;
        for (j, &y) in set.labels.iter().enumerate() {
            let pred = self.predict(omega, &set.features[j * self.stride..(j + 1) * self.stride]);
            if pred == y {
                correct += 1;
                tp[y] += 1;
            } else {
                fp[pred] += 1;
                fn_[y] += 1;
            }
        }
        let f1: f64 = (0..k)
            .map(|c| {
                let denom = 2 * tp[c] + fp[c] + fn_[c];
                if denom == 0 {
                    0.0
                } else {
                    2.0 * tp[c] as f64 / denom as f64
                }
            })
            .sum::<f64>()
            / k as f64;
        (correct as f64 / set.len() as f64, f1)
    }

    /// Weight statistics by corruption mask and per-dataset accuracies of `z.omega`.
    pub fn report(&self, z: &DecisionPoint) -> HypercleanReport {
        let (mean_weight_clean, mean_weight_corrupt) = weight_summary(&z.alpha, &self.corruption_mask());
        let mut val_accuracy = Vec::new();
        let mut test_accuracy = Vec::new();
        let mut test_macro_f1 = Vec::new();
        for d in &self.datasets {
            val_accuracy.push(self.accuracy_and_f1(&d.val, &z.omega).0);
            let (acc, f1) = self.accuracy_and_f1(&d.test, &z.omega);
            test_accuracy.push(acc);
            test_macro_f1.push(f1);
        }
        HypercleanReport {
            mean_weight_clean,
            mean_weight_corrupt,
            val_accuracy,
            test_accuracy,
            test_macro_f1,
        }
    }

    /// Writes every sample as `feature_0..feature_{d-1}, label, dataset_id, is_corrupted, split`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (0..self.spec.feature_dim).map(|i| format!("feature_{i}")).collect();
        header.extend(["label", "dataset_id", "is_corrupted", "split"].map(String::from));
        w.write_record(&header)?;
        for (id, d) in self.datasets.iter().enumerate() {
            for (split, set) in [(Split::Train, &d.train), (Split::Val, &d.val), (Split::Test, &d.test)] {
                for j in 0..set.len() {
                    let x = &set.features[j * self.stride..j * self.stride + self.spec.feature_dim];
                    let mut row: Vec<String> = x.iter().map(|v| v.to_string()).collect();
                    row.push(set.labels[j].to_string());
                    row.push(id.to_string());
                    row.push(set.corrupted.get(j).copied().unwrap_or(false).to_string());
                    row.push(split.as_str().to_string());
                    w.write_record(&row)?;
                }
            }
        }
        w.flush().map_err(|e| ForumError::io(path, e))?;
        Ok(())
    }

    /// Calls `visit(alpha index, dataset, sample index)` for every training sample.
    fn train_samples(&self) -> impl Iterator<Item = (usize, &Dataset, usize)> {
        self.datasets
            .iter()
            .zip(&self.offsets)
            .flat_map(|(d, &off)| (0..d.train.len()).map(move |j| (off + j, d, j)))
    }
}

/// Mean `sigmoid(alpha)` over clean and over corrupted samples.
pub fn weight_summary(alpha: &[f64], corrupted: &[bool]) -> (f64, f64) {
    let (mut clean, mut nc, mut bad, mut nb) = (0.0, 0usize, 0.0, 0usize);
    for (a, &c) in alpha.iter().zip(corrupted) {
        if c {
            bad += sigmoid(*a);
            nb += 1;
        } else {
            clean += sigmoid(*a);
            nc += 1;
        }
    }
    let avg = |s: f64, n: usize| if n == 0 { f64::NAN } else { s / n as f64 };
    (avg(clean, nc), avg(bad, nb))
}

fn draw_split(r: &mut ForumRng, means: &[Vec<f64>], size: usize, stride: usize) -> SampleSet {
    let classes = means.len();
    let mut labels: Vec<usize> = (0..size).map(|j| j % classes).collect();
    labels.shuffle(r);
    let mut features = Vec::with_capacity(size * stride);
    for &y in &labels {
        let noise = rng::normal_vec(r, stride - 1);
        features.extend(means[y].iter().zip(&noise).map(|(m, e)| m + e));
        features.push(1.0);
    }
    SampleSet {
        features,
        corrupted: vec![false; size],
        labels,
    }
}

fn corrupt(r: &mut ForumRng, set: &mut SampleSet, rate: f64, classes: usize) {
    let count = (rate * set.len() as f64).round() as usize;
    let mut idx: Vec<usize> = (0..set.len()).collect();
    idx.shuffle(r);
    for &j in idx.iter().take(count) {
        let shift = r.random_range(1..classes);
        set.labels[j] = (set.labels[j] + shift) % classes;
        set.corrupted[j] = true;
    }
}

impl Problem for Hyperclean {
    fn name(&self) -> &str {
        "hyperclean"
    }

    fn dims(&self) -> Dims {
        Dims {
            n: self.spec.datasets * self.spec.train_size,
            p: self.spec.classes * self.stride,
            m: self.spec.datasets,
        }
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            hvp: true,
            ..Capabilities::default()
        }
    }

    fn ul_value(&self, i: usize, _alpha: &[f64], omega: &[f64]) -> f64 {
        self.mean_loss_and_grad(&self.datasets[i].val, omega).0
    }

    fn ul_grad(&self, i: usize, alpha: &[f64], omega: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; alpha.len()];
        g.extend(self.mean_loss_and_grad(&self.datasets[i].val, omega).1);
        g
    }

    fn ll_value(&self, alpha: &[f64], omega: &[f64]) -> f64 {
        let mut total = self.spec.ridge * linalg::norm_sq(omega);
        for (k, d, j) in self.train_samples() {
            let x = &d.train.features[j * self.stride..(j + 1) * self.stride];
            let (l, _) = self.sample_loss(omega, x, d.train.labels[j]);
            total += sigmoid(alpha[k]) * l / d.train.len() as f64;
        }
        total
    }

    fn ll_grad(&self, alpha: &[f64], omega: &[f64]) -> Vec<f64> {
        let n = alpha.len();
        let mut g = vec![0.0; n + omega.len()];
        let (ga, gw) = g.split_at_mut(n);
        for (wi, w) in gw.iter_mut().zip(omega) {
            *wi = 2.0 * self.spec.ridge * w;
        }
        for (k, d, j) in self.train_samples() {
            let x = &d.train.features[j * self.stride..(j + 1) * self.stride];
            let y = d.train.labels[j];
            let (l, probs) = self.sample_loss(omega, x, y);
            let s = sigmoid(alpha[k]);
            let inv_n = 1.0 / d.train.len() as f64;
            ga[k] = inv_n * s * (1.0 - s) * l;
            self.add_sample_grad(gw, &probs, x, y, inv_n * s);
        }
        g
    }

    fn ll_grad_omega(&self, alpha: &[f64], omega: &[f64]) -> Vec<f64> {
        let mut g = linalg::scale(2.0 * self.spec.ridge, omega);
        for (k, d, j) in self.train_samples() {
            let x = &d.train.features[j * self.stride..(j + 1) * self.stride];
            let y = d.train.labels[j];
            let (probs, _) = self.softmax(omega, x);
            let s = sigmoid(alpha[k]);
            self.add_sample_grad(&mut g, &probs, x, y, s / d.train.len() as f64);
        }
        g
    }

    fn ll_grad_alpha(&self, alpha: &[f64], omega: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; alpha.len()];
        for (k, d, j) in self.train_samples() {
            let x = &d.train.features[j * self.stride..(j + 1) * self.stride];
            let (l, _) = self.sample_loss(omega, x, d.train.labels[j]);
            let s = sigmoid(alpha[k]);
            g[k] = s * (1.0 - s) * l / d.train.len() as f64;
        }
        g
    }

    fn ll_hvp_ww(&self, alpha: &[f64], omega: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        let classes = self.spec.classes;
        let mut out = linalg::scale(2.0 * self.spec.ridge, v);
        for (k, d, j) in self.train_samples() {
            let x = &d.train.features[j * self.stride..(j + 1) * self.stride];
            let (probs, _) = self.softmax(omega, x);
            let weight = sigmoid(alpha[k]) / d.train.len() as f64;
            // (diag(s) - s s^T) (V x), then outer product with x.
            let vx: Vec<f64> = (0..classes)
                .map(|c| linalg::dot(&v[c * self.stride..(c + 1) * self.stride], x))
                .collect();
            let mean = linalg::dot(&probs, &vx);
            for c in 0..classes {
                let coeff = weight * probs[c] * (vx[c] - mean);
                linalg::axpy(coeff, x, &mut out[c * self.stride..(c + 1) * self.stride]);
            }
        }
        Some(out)
    }

    fn ll_hvp_aw(&self, alpha: &[f64], omega: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        let mut out = vec![0.0; alpha.len()];
        let mut sample_grad = vec![0.0; omega.len()];
        for (k, d, j) in self.train_samples() {
            let x = &d.train.features[j * self.stride..(j + 1) * self.stride];
            let y = d.train.labels[j];
            let (probs, _) = self.softmax(omega, x);
            sample_grad.iter_mut().for_each(|g| *g = 0.0);
            self.add_sample_grad(&mut sample_grad, &probs, x, y, 1.0);
            let s = sigmoid(alpha[k]);
            out[k] = s * (1.0 - s) / d.train.len() as f64 * linalg::dot(&sample_grad, v);
        }
        Some(out)
    }
}
