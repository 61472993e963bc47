//! Linear regression with a known ground-truth weight vector.
//!
//! Inputs are standard-normal, targets are `w_true . x` plus optional
//! Gaussian label noise, and the loss is the mean squared error over the
//! evaluated samples. The default task sets `w_true = (1, 2, ..., dim)`
//! and trains from a zero init, so the distance to the optimum differs
//! per coordinate by construction.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::params::LayerPartition;

use super::{dot, split_seed, DataGen, Dataset, Model, Targets};

#[derive(Debug, Clone, PartialEq)]
pub struct LinRegTask {
    true_weights: Vec<f64>,
    noise_std: f64,
    partition: LayerPartition,
}

impl LinRegTask {
    /// Task with `w_true[i] = i + 1` (so coordinate magnitudes 1..=dim).
    pub fn new(dim: usize, noise_std: f64) -> Result<Self> {
        let weights = (1..=dim).map(|i| i as f64).collect();
        Self::with_weights(weights, noise_std)
    }

    /// Task with explicit ground-truth weights.
    pub fn with_weights(true_weights: Vec<f64>, noise_std: f64) -> Result<Self> {
        if true_weights.is_empty() {
            return Err(Error::config("linear regression needs dim >= 1"));
        }
        if true_weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::config("true weights must be finite"));
        }
        if !noise_std.is_finite() || noise_std < 0.0 {
            return Err(Error::config(format!(
                "noise_std must be finite and non-negative, got {noise_std}"
            )));
        }
        let partition = LayerPartition::single("weights", true_weights.len())?;
        Ok(LinRegTask {
            true_weights,
            noise_std,
            partition,
        })
    }

    pub fn dim(&self) -> usize {
        self.true_weights.len()
    }

    pub fn true_weights(&self) -> &[f64] {
        &self.true_weights
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.dim() {
            return Err(Error::structure(format!(
                "parameter vector has {} entries but task dim is {}",
                params.len(),
                self.dim()
            )));
        }
        Ok(())
    }
}

impl Model for LinRegTask {
    fn partition(&self) -> &LayerPartition {
        &self.partition
    }

    fn loss(&self, params: &[f64], data: &Dataset, idx: &[usize]) -> Result<f64> {
        self.check_params(params)?;
        data.check_indices(idx)?;
        let mut loss = 0.0;
        for &i in idx {
            let r = dot(params, data.input(i)) - data.target_real(i)?;
            loss += r * r;
        }
        loss /= idx.len() as f64;
        if !loss.is_finite() {
            return Err(Error::numeric("loss", "mean squared error is non-finite"));
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
        let d = self.dim();
        let mut loss = 0.0;
        let mut grad = vec![0.0; d];
        for &i in idx {
            let x = data.input(i);
            let r = dot(params, x) - data.target_real(i)?;
            loss += r * r;
            let two_r = 2.0 * r;
            for j in 0..d {
                grad[j] += two_r * x[j];
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
            return Err(Error::numeric("loss", "mean squared error is non-finite"));
        }
        crate::params::check_finite(&grad, &self.partition, "gradient evaluation")?;
        Ok((loss, grad))
    }
}

impl DataGen for LinRegTask {
    /// `n` samples with standard-normal inputs and `y = w_true . x +
    /// noise_std * z`. The noise draw happens even at `noise_std = 0`, so
    /// the inputs for a given seed do not depend on the noise level.
    fn generate(&self, n: usize, seed: u64) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::config("dataset size must be positive"));
        }
        let d = self.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut inputs = Vec::with_capacity(n * d);
        let mut targets = Vec::with_capacity(n);
        for _ in 0..n {
            let start = inputs.len();
            for _ in 0..d {
                let z: f64 = StandardNormal.sample(&mut rng);
                inputs.push(z);
            }
            let noise: f64 = StandardNormal.sample(&mut rng);
            let y = dot(&self.true_weights, &inputs[start..]) + self.noise_std * noise;
            targets.push(y);
        }
        Dataset::new(n, d, inputs, Targets::Real(targets))
    }
}

/// Convenience pair: a training set and an independently drawn test set
/// from the same task distribution.
pub fn gen_linreg_data(
    task: &LinRegTask,
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
        task.generate(n_train, train_seed)?,
        task.generate(n_test, test_seed)?,
    ))
}
