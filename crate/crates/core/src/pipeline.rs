//! Simulated k-device gradient pipeline and the GSNR statistic chain.
//!
//! One training step works on a global batch sharded contiguously across
//! `k` simulated devices. Each device contributes the mean gradient over
//! its shard; the reduction averages those means, forms the device-wise
//! second moment, and from them a variance surrogate and the gradient
//! signal-to-noise ratio (squared mean over variance). The raw ratio is
//! normalized to unit mean per layer and clamped into `[gamma, 1]`,
//! producing the field the variance-reduced optimizers multiply into the
//! gradient.
//!
//! Determinism contract: per-device evaluation may run in parallel, but
//! every reduction folds sequentially in ascending device index, so
//! results are bit-identical across thread counts and execution modes.

use crate::error::{Error, Result};
use crate::exec;
use crate::models::{Dataset, Model};
use crate::params::{check_finite, LayerPartition, ParamVector};

/// Default denominator guard for the raw GSNR ratio.
pub const DEFAULT_EPS: f64 = 1e-12;

/// Default lower clamp bound for the normalized GSNR field.
pub const DEFAULT_GAMMA: f64 = 0.1;

/// Layers whose mean raw GSNR falls at or below this floor get a flat
/// all-ones field instead of an ill-conditioned normalization.
pub const NORMALIZE_FLOOR: f64 = 1e-30;

/// Contiguous assignment of a batch's sample indices to `k` devices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShardPlan {
    indices: Vec<usize>,
    k: usize,
    per_device: usize,
}

impl ShardPlan {
    pub fn k(&self) -> usize {
        self.k
    }

    /// Samples per device (`B`).
    pub fn per_device(&self) -> usize {
        self.per_device
    }

    pub fn global_batch(&self) -> usize {
        self.indices.len()
    }

    /// Sample indices assigned to device `d`.
    pub fn shard(&self, d: usize) -> &[usize] {
        &self.indices[d * self.per_device..(d + 1) * self.per_device]
    }

    pub fn shards(&self) -> impl Iterator<Item = &[usize]> {
        (0..self.k).map(move |d| self.shard(d))
    }
}

/// Splits a batch index list into `k` equal contiguous shards.
pub fn shard_batch(batch: &[usize], k: usize) -> Result<ShardPlan> {
    if k < 2 {
        return Err(Error::config(format!(
            "need at least 2 devices for a variance estimate, got k = {k}"
        )));
    }
    if batch.is_empty() {
        return Err(Error::config("cannot shard an empty batch"));
    }
    if batch.len() % k != 0 {
        return Err(Error::config(format!(
            "global batch {} is not divisible by k = {k}",
            batch.len()
        )));
    }
    Ok(ShardPlan {
        indices: batch.to_vec(),
        k,
        per_device: batch.len() / k,
    })
}

/// Per-device mean gradients, evaluated independently per shard (in
/// parallel when the `parallel` feature is on) and returned in device
/// order.
pub fn device_grad_means<M: Model>(
    model: &M,
    params: &ParamVector,
    plan: &ShardPlan,
    data: &Dataset,
) -> Result<Vec<Vec<f64>>> {
    let results = exec::map_ordered(plan.k(), |d| {
        model
            .loss_grad(params.values(), data, plan.shard(d))
            .map(|(_, g)| g)
    });
    let mut means = Vec::with_capacity(plan.k());
    for r in results {
        let g = r?;
        check_finite(&g, params.partition(), "device gradient")?;
        means.push(g);
    }
    Ok(means)
}

/// Reduces per-device means to the global mean and second moment.
///
/// Both reductions sum in ascending device index before dividing by `k`,
/// which pins the floating-point result independent of scheduling.
pub fn reduce_stats(per_device: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    let k = per_device.len();
    if k < 2 {
        return Err(Error::config(format!(
            "need at least 2 device views to reduce, got {k}"
        )));
    }
    let len = per_device[0].len();
    if per_device.iter().any(|v| v.len() != len) {
        return Err(Error::structure(
            "device views disagree on parameter count",
        ));
    }
    let mut mean = vec![0.0; len];
    let mut sq_mean = vec![0.0; len];
    for view in per_device {
        for j in 0..len {
            let g = view[j];
            mean[j] += g;
            sq_mean[j] += g * g;
        }
    }
    let inv_k = 1.0 / k as f64;
    for j in 0..len {
        mean[j] *= inv_k;
        sq_mean[j] *= inv_k;
    }
    Ok((mean, sq_mean))
}

/// Device-wise variance surrogate `max(E[g^2] - E[g]^2, 0)`.
pub fn variance(mean: &[f64], sq_mean: &[f64]) -> Vec<f64> {
    assert_eq!(
        mean.len(),
        sq_mean.len(),
        "mean and second moment must have equal length"
    );
    mean.iter()
        .zip(sq_mean)
        .map(|(m, sq)| (sq - m * m).max(0.0))
        .collect()
}

/// Raw gradient signal-to-noise ratio `mean^2 / (variance + eps)`.
pub fn gsnr_raw(mean: &[f64], variance: &[f64], eps: f64) -> Vec<f64> {
    assert_eq!(
        mean.len(),
        variance.len(),
        "mean and variance must have equal length"
    );
    debug_assert!(eps > 0.0, "eps must be positive");
    mean.iter()
        .zip(variance)
        .map(|(m, v)| m * m / (v + eps))
        .collect()
}

/// Rescales the raw field so each layer averages to one. Layers whose raw
/// mean is at or below [`NORMALIZE_FLOOR`] become all-ones instead.
pub fn normalize_per_layer(gsnr: &[f64], partition: &LayerPartition) -> Result<Vec<f64>> {
    if gsnr.len() != partition.total_len() {
        return Err(Error::structure(format!(
            "field length {} does not match partition total {}",
            gsnr.len(),
            partition.total_len()
        )));
    }
    let mut out = vec![0.0; gsnr.len()];
    for seg in partition.segments() {
        let slice = &gsnr[seg.range()];
        let mut sum = 0.0;
        for r in slice {
            sum += r;
        }
        let mean = sum / seg.len as f64;
        let dst = &mut out[seg.range()];
        if mean <= NORMALIZE_FLOOR {
            dst.fill(1.0);
        } else {
            for (o, r) in dst.iter_mut().zip(slice) {
                *o = r / mean;
            }
        }
    }
    Ok(out)
}

/// Clamps a normalized field into `[gamma, 1]`: entries below `gamma`
/// become `gamma`, entries above one become one.
pub fn clamp_gsnr(gsnr: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if !gamma.is_finite() || gamma <= 0.0 || gamma > 1.0 {
        return Err(Error::config(format!(
            "gamma must lie in (0, 1], got {gamma}"
        )));
    }
    Ok(gsnr.iter().map(|&r| r.clamp(gamma, 1.0)).collect())
}

/// Everything one step of the statistic chain produces.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceGradStats {
    /// Mean gradient per device, in device order.
    pub per_device_means: Vec<Vec<f64>>,
    /// Global mean gradient (average of device means).
    pub mean: Vec<f64>,
    /// Second moment of device means.
    pub sq_mean: Vec<f64>,
    /// Device-wise variance surrogate.
    pub variance: Vec<f64>,
    /// Raw signal-to-noise ratio before any rescaling.
    pub gsnr_raw: Vec<f64>,
    /// Raw field normalized to unit mean per layer (pre-clamp).
    pub gsnr_normalized: Vec<f64>,
    /// Final field after per-layer normalization and clamping; this is
    /// what variance-reduced optimizers consume.
    pub gsnr: Vec<f64>,
}

/// Runs the full chain: device means, reduction, variance, raw GSNR,
/// per-layer normalization, clamp.
pub fn compute_gsnr_field<M: Model>(
    model: &M,
    params: &ParamVector,
    plan: &ShardPlan,
    data: &Dataset,
    partition: &LayerPartition,
    gamma: f64,
    eps: f64,
) -> Result<DeviceGradStats> {
    if !eps.is_finite() || eps <= 0.0 {
        return Err(Error::config(format!(
            "eps must be finite and positive, got {eps}"
        )));
    }
    let per_device_means = device_grad_means(model, params, plan, data)?;
    let (mean, sq_mean) = reduce_stats(&per_device_means)?;
    let var = variance(&mean, &sq_mean);
    let raw = gsnr_raw(&mean, &var, eps);
    let normalized = normalize_per_layer(&raw, partition)?;
    let clamped = clamp_gsnr(&normalized, gamma)?;
    Ok(DeviceGradStats {
        per_device_means,
        mean,
        sq_mean,
        variance: var,
        gsnr_raw: raw,
        gsnr_normalized: normalized,
        gsnr: clamped,
    })
}
