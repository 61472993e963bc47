//! Small tanh MLP classifier on seeded Gaussian blobs.
//!
//! Architecture is a plain feed-forward stack: tanh on every hidden
//! layer, raw logits into a softmax cross-entropy loss with optional
//! label smoothing. Data comes from two isotropic Gaussian blobs at
//! mirrored means, so shrinking the blob spread makes the classes
//! linearly separable.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::params::{check_finite, LayerPartition};

use super::{split_seed, DataGen, Dataset, Model, Targets};

#[derive(Debug, Clone, PartialEq)]
pub struct MlpTask {
    /// Unit counts per layer, input first, classes last.
    layer_sizes: Vec<usize>,
    /// Mass moved from the true class to the uniform distribution.
    label_smoothing: f64,
    /// Distance between the two blob means.
    blob_sep: f64,
    /// Isotropic standard deviation of each blob.
    blob_std: f64,
    partition: LayerPartition,
}

impl MlpTask {
    pub const DEFAULT_LAYER_SIZES: [usize; 3] = [20, 32, 2];

    pub fn new(layer_sizes: Vec<usize>, label_smoothing: f64) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::config(
                "layer_sizes needs at least an input and an output size",
            ));
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::config("layer sizes must all be positive"));
        }
        let classes = *layer_sizes.last().expect("len checked above");
        if classes < 2 {
            return Err(Error::config("output layer needs at least two classes"));
        }
        if !(0.0..0.5).contains(&label_smoothing) {
            return Err(Error::config(format!(
                "label_smoothing must lie in [0, 0.5), got {label_smoothing}"
            )));
        }
        let mut sizes = Vec::new();
        for l in 0..layer_sizes.len() - 1 {
            sizes.push((format!("layer{l}_w"), layer_sizes[l] * layer_sizes[l + 1]));
            sizes.push((format!("layer{l}_b"), layer_sizes[l + 1]));
        }
        let partition = LayerPartition::from_layer_sizes(sizes)?;
        Ok(MlpTask {
            layer_sizes,
            label_smoothing,
            blob_sep: 3.0,
            blob_std: 1.0,
            partition,
        })
    }

    /// Overrides the blob geometry (mean separation, per-class spread).
    pub fn with_blob_geometry(mut self, sep: f64, std: f64) -> Result<Self> {
        if !sep.is_finite() || sep < 0.0 || !std.is_finite() || std < 0.0 {
            return Err(Error::config(format!(
                "blob geometry must be finite and non-negative, got sep {sep}, std {std}"
            )));
        }
        self.blob_sep = sep;
        self.blob_std = std;
        Ok(self)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn classes(&self) -> usize {
        *self.layer_sizes.last().expect("validated at construction")
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn label_smoothing(&self) -> f64 {
        self.label_smoothing
    }

    fn weight_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    /// Offset of weight matrix `l` in the flat parameter vector.
    fn w_offset(&self, l: usize) -> usize {
        self.partition.segments()[2 * l].offset
    }

    /// Offset of bias vector `l` in the flat parameter vector.
    fn b_offset(&self, l: usize) -> usize {
        self.partition.segments()[2 * l + 1].offset
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.partition.total_len() {
            return Err(Error::structure(format!(
                "parameter vector has {} entries but the network needs {}",
                params.len(),
                self.partition.total_len()
            )));
        }
        Ok(())
    }

    /// Runs the stack for one sample, filling `acts[l]` for every layer
    /// (hidden layers hold tanh outputs, the last holds raw logits).
    fn forward(&self, params: &[f64], x: &[f64], acts: &mut [Vec<f64>]) {
        let layers = self.weight_layers();
        for l in 0..layers {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let w = &params[self.w_offset(l)..self.w_offset(l) + n_in * n_out];
            let b = &params[self.b_offset(l)..self.b_offset(l) + n_out];
            let (prev, rest) = acts.split_at_mut(l + 1);
            let input: &[f64] = if l == 0 { x } else { &prev[l] };
            let out = &mut rest[0];
            let hidden = l + 1 < layers;
            for j in 0..n_out {
                let mut z = b[j];
                for i in 0..n_in {
                    z += input[i] * w[i * n_out + j];
                }
                out[j] = if hidden { z.tanh() } else { z };
            }
        }
    }

    /// Smoothed target distribution for class `y`.
    fn target_dist(&self, y: usize, t: &mut [f64]) {
        let c = t.len() as f64;
        let eps = self.label_smoothing;
        for v in t.iter_mut() {
            *v = eps / c;
        }
        t[y] += 1.0 - eps;
    }

    /// Cross-entropy of `logits` against the smoothed target, plus the
    /// logit-space gradient `softmax(logits) - target` written to `dz`.
    fn ce_loss_dz(&self, logits: &[f64], y: usize, dz: &mut [f64]) -> f64 {
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for &z in logits {
            sum += (z - max).exp();
        }
        let lse = max + sum.ln();
        self.target_dist(y, dz);
        let mut loss = lse;
        for (c, &z) in logits.iter().enumerate() {
            loss -= dz[c] * z;
        }
        for (c, &z) in logits.iter().enumerate() {
            dz[c] = (z - max).exp() / sum - dz[c];
        }
        loss
    }

    /// Most likely class under the current parameters.
    pub fn predict_class(&self, params: &[f64], x: &[f64]) -> Result<usize> {
        self.check_params(params)?;
        let mut acts: Vec<Vec<f64>> =
            self.layer_sizes.iter().map(|&s| vec![0.0; s]).collect();
        self.forward(params, x, &mut acts);
        let logits = acts.last().expect("at least two layers");
        let mut best = 0;
        for (c, &z) in logits.iter().enumerate() {
            if z > logits[best] {
                best = c;
            }
        }
        Ok(best)
    }

    /// Fraction of samples whose argmax logit matches the label.
    pub fn accuracy(&self, params: &[f64], data: &Dataset, idx: &[usize]) -> Result<f64> {
        data.check_indices(idx)?;
        let mut hits = 0usize;
        for &i in idx {
            if self.predict_class(params, data.input(i))? == data.target_class(i)? {
                hits += 1;
            }
        }
        Ok(hits as f64 / idx.len() as f64)
    }

    fn sample_blobs(&self, n: usize, seed: u64) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::config("dataset size must be positive"));
        }
        let d = self.input_dim();
        if self.classes() != 2 {
            return Err(Error::config(
                "blob generation is defined for two-class tasks",
            ));
        }
        let half_sep = 0.5 * self.blob_sep / (d as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut inputs = Vec::with_capacity(n * d);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let label = usize::from(rng.random_bool(0.5));
            let mean = if label == 1 { half_sep } else { -half_sep };
            for _ in 0..d {
                let z: f64 = StandardNormal.sample(&mut rng);
                inputs.push(mean + self.blob_std * z);
            }
            labels.push(label);
        }
        Dataset::new(n, d, inputs, Targets::Class(labels))
    }
}

impl Model for MlpTask {
    fn partition(&self) -> &LayerPartition {
        &self.partition
    }

    fn loss(&self, params: &[f64], data: &Dataset, idx: &[usize]) -> Result<f64> {
        self.check_params(params)?;
        data.check_indices(idx)?;
        if data.dim() != self.input_dim() {
            return Err(Error::structure(format!(
                "dataset dim {} does not match network input {}",
                data.dim(),
                self.input_dim()
            )));
        }
        let mut acts: Vec<Vec<f64>> =
            self.layer_sizes.iter().map(|&s| vec![0.0; s]).collect();
        let mut dz = vec![0.0; self.classes()];
        let mut loss = 0.0;
        for &i in idx {
            let y = data.target_class(i)?;
            if y >= self.classes() {
                return Err(Error::range(format!(
                    "label {y} out of range for {} classes",
                    self.classes()
                )));
            }
            self.forward(params, data.input(i), &mut acts);
            loss += self.ce_loss_dz(acts.last().expect("logits"), y, &mut dz);
        }
        loss /= idx.len() as f64;
        if !loss.is_finite() {
            return Err(Error::numeric("loss", "cross-entropy is non-finite"));
        }
        Ok(loss)
    }

    fn loss_grad(
        &self,
        params: &[f64],
        data: &Dataset,
        idx: &[usize],
    ) -> Result<(f64, Vec<f64>)> {
        self.check_params(params)?;
        data.check_indices(idx)?;
        if data.dim() != self.input_dim() {
            return Err(Error::structure(format!(
                "dataset dim {} does not match network input {}",
                data.dim(),
                self.input_dim()
            )));
        }
        let layers = self.weight_layers();
        let mut acts: Vec<Vec<f64>> =
            self.layer_sizes.iter().map(|&s| vec![0.0; s]).collect();
        let mut delta = vec![0.0; self.layer_sizes.iter().copied().max().unwrap_or(0)];
        let mut next_delta = delta.clone();
        let mut grad = vec![0.0; self.partition.total_len()];
        let mut loss = 0.0;

        for &i in idx {
            let y = data.target_class(i)?;
            if y >= self.classes() {
                return Err(Error::range(format!(
                    "label {y} out of range for {} classes",
                    self.classes()
                )));
            }
            let x = data.input(i);
            self.forward(params, x, &mut acts);
            loss += self.ce_loss_dz(
                acts.last().expect("logits"),
                y,
                &mut delta[..self.classes()],
            );

            for l in (0..layers).rev() {
                let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
                let input: &[f64] = if l == 0 { x } else { &acts[l] };
                let wo = self.w_offset(l);
                let bo = self.b_offset(l);
                for i_in in 0..n_in {
                    let a = input[i_in];
                    let row = &mut grad[wo + i_in * n_out..wo + (i_in + 1) * n_out];
                    for (j, dj) in delta[..n_out].iter().enumerate() {
                        row[j] += a * dj;
                    }
                }
                for (j, dj) in delta[..n_out].iter().enumerate() {
                    grad[bo + j] += dj;
                }
                if l > 0 {
                    let w = &params[wo..wo + n_in * n_out];
                    for i_in in 0..n_in {
                        let mut da = 0.0;
                        for (j, dj) in delta[..n_out].iter().enumerate() {
                            da += w[i_in * n_out + j] * dj;
                        }
                        let a = input[i_in];
                        next_delta[i_in] = (1.0 - a * a) * da;
                    }
                    std::mem::swap(&mut delta, &mut next_delta);
                }
            }
        }

        // Divide rather than multiply by a reciprocal so this loss is
        // bitwise identical to the loss-only path.
        let m = idx.len() as f64;
        loss /= m;
        for g in &mut grad {
            *g /= m;
        }
        if !loss.is_finite() {
            return Err(Error::numeric("loss", "cross-entropy is non-finite"));
        }
        check_finite(&grad, &self.partition, "gradient evaluation")?;
        Ok((loss, grad))
    }
}

impl DataGen for MlpTask {
    fn generate(&self, n: usize, seed: u64) -> Result<Dataset> {
        self.sample_blobs(n, seed)
    }
}

/// Disjoint train/test blob draws from one seed.
pub fn gen_blob_data(
    task: &MlpTask,
    n_train: usize,
    n_test: usize,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if n_train == 0 || n_test == 0 {
        return Err(Error::config(
            "train and test sizes must both be positive",
        ));
    }
    let [train_seed, test_seed] = split_seed::<2>(seed);
    Ok((
        task.sample_blobs(n_train, train_seed)?,
        task.sample_blobs(n_test, test_seed)?,
    ))
}
