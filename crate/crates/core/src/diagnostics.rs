//! Per-step records, generalization-gap estimators, and a Monte Carlo
//! check that the one-step gap prediction tracks reality.
//!
//! Two running estimators accumulate alongside training:
//!
//! * `gap_est_sgd`: per-step increment `lr * sum_j variance[j]`, the
//!   predicted gap growth for a plain gradient step.
//! * `gap_est_vrgd`: per-step increment `lr * sum_j gsnr[j]*variance[j]`
//!   using the clamped field the optimizer actually applied.
//!
//! Since every field value lies in (0, 1], each vrgd term is bounded by
//! the sgd term and both sums run in the same coordinate order, so the
//! vrgd increment never exceeds the sgd increment, even in floating
//! point.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{split_seed, DataGen, Model};
use crate::params::{LayerPartition, ParamVector};
use crate::pipeline::DeviceGradStats;

/// Clamped-field statistics for one layer at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerGsnrSummary {
    pub layer: String,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// Everything worth keeping about one training step. The `gap_est_*`
/// fields are per-step increments; their running totals live on the
/// ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub step: u64,
    pub lr: f64,
    pub train_loss: f64,
    pub test_loss: f64,
    /// `test_loss - train_loss`.
    pub gap: f64,
    /// Total device-wise gradient variance.
    pub sum_var: f64,
    /// Total squared mean gradient.
    pub sum_gsq: f64,
    pub gap_est_sgd: f64,
    pub gap_est_vrgd: f64,
    pub gsnr_mean: f64,
    pub gsnr_min: f64,
    pub gsnr_max: f64,
    pub layer_gsnr: Vec<LayerGsnrSummary>,
    /// Full clamped field, captured only when requested; large.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub per_param_gsnr: Option<Vec<f64>>,
    /// Raw signal-to-noise field before normalization and clamping,
    /// captured together with the clamped one.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub per_param_gsnr_raw: Option<Vec<f64>>,
}

fn field_summary(values: &[f64]) -> (f64, f64, f64) {
    let mut sum = 0.0;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &v in values {
        sum += v;
        min = min.min(v);
        max = max.max(v);
    }
    (sum / values.len() as f64, min, max)
}

/// Accumulates per-step records and the two running gap estimators.
#[derive(Debug, Clone)]
pub struct GapLedger {
    partition: LayerPartition,
    capture_per_param: bool,
    records: Vec<TrainRecord>,
    total_sgd: f64,
    total_vrgd: f64,
}

impl GapLedger {
    pub fn new(partition: LayerPartition, capture_per_param: bool) -> Self {
        GapLedger {
            partition,
            capture_per_param,
            records: Vec::new(),
            total_sgd: 0.0,
            total_vrgd: 0.0,
        }
    }

    /// Folds one step's statistics into the ledger and returns the
    /// finished record.
    pub fn record_step(
        &mut self,
        step: u64,
        lr: f64,
        train_loss: f64,
        test_loss: f64,
        stats: &DeviceGradStats,
    ) -> Result<&TrainRecord> {
        let n = self.partition.total_len();
        if stats.gsnr.len() != n || stats.variance.len() != n || stats.mean.len() != n {
            return Err(Error::structure(format!(
                "statistics sized for {} parameters, ledger partition has {}",
                stats.gsnr.len(),
                n
            )));
        }

        let mut sum_var = 0.0;
        let mut sum_gsq = 0.0;
        let mut weighted_var = 0.0;
        for j in 0..n {
            sum_var += stats.variance[j];
            sum_gsq += stats.mean[j] * stats.mean[j];
            weighted_var += stats.gsnr[j] * stats.variance[j];
        }
        let inc_sgd = lr * sum_var;
        let inc_vrgd = lr * weighted_var;
        self.total_sgd += inc_sgd;
        self.total_vrgd += inc_vrgd;

        let (gsnr_mean, gsnr_min, gsnr_max) = field_summary(&stats.gsnr);
        let mut layer_gsnr = Vec::with_capacity(self.partition.layer_count());
        for seg in self.partition.segments() {
            let (mean, min, max) = field_summary(&stats.gsnr[seg.range()]);
            layer_gsnr.push(LayerGsnrSummary {
                layer: seg.name.clone(),
                mean,
                min,
                max,
            });
        }

        self.records.push(TrainRecord {
            step,
            lr,
            train_loss,
            test_loss,
            gap: test_loss - train_loss,
            sum_var,
            sum_gsq,
            gap_est_sgd: inc_sgd,
            gap_est_vrgd: inc_vrgd,
            gsnr_mean,
            gsnr_min,
            gsnr_max,
            layer_gsnr,
            per_param_gsnr: self.capture_per_param.then(|| stats.gsnr.clone()),
            per_param_gsnr_raw: self.capture_per_param.then(|| stats.gsnr_raw.clone()),
        });
        Ok(self.records.last().expect("just pushed"))
    }

    pub fn records(&self) -> &[TrainRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<TrainRecord> {
        self.records
    }

    /// Running totals of the two estimators: (sgd-style, vrgd-style).
    pub fn totals(&self) -> (f64, f64) {
        (self.total_sgd, self.total_vrgd)
    }

    pub fn partition(&self) -> &LayerPartition {
        &self.partition
    }
}

pub const SUMMARY_CSV_HEADER: &str =
    "step,lr,train_loss,test_loss,gap,sum_var,sum_gsq,gap_est_sgd,gap_est_vrgd,gsnr_mean,gsnr_min,gsnr_max";

/// One CSV row matching [`SUMMARY_CSV_HEADER`]. Floats are printed with
/// 17 significant digits so parsing them back is exact.
pub fn summary_csv_row(r: &TrainRecord) -> String {
    format!(
        "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
        r.step,
        r.lr,
        r.train_loss,
        r.test_loss,
        r.gap,
        r.sum_var,
        r.sum_gsq,
        r.gap_est_sgd,
        r.gap_est_vrgd,
        r.gsnr_mean,
        r.gsnr_min,
        r.gsnr_max
    )
}

pub fn write_jsonl_line(w: &mut impl Write, record: &TrainRecord) -> Result<()> {
    serde_json::to_writer(&mut *w, record)
        .map_err(|e| Error::structure(format!("record serialization failed: {e}")))?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn read_jsonl(r: impl BufRead) -> Result<Vec<TrainRecord>> {
    let mut records = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TrainRecord = serde_json::from_str(&line)
            .map_err(|e| Error::structure(format!("bad record on line {}: {e}", i + 1)))?;
        records.push(record);
    }
    Ok(records)
}

fn trajectory_of(
    records: &[TrainRecord],
    param_indices: &[usize],
    pick: impl Fn(&TrainRecord) -> Option<&Vec<f64>>,
) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::with_capacity(records.len());
    for rec in records {
        let field = pick(rec).ok_or_else(|| {
            Error::config(format!(
                "step {} has no per-parameter field; rerun with capture enabled",
                rec.step
            ))
        })?;
        let mut row = Vec::with_capacity(param_indices.len());
        for &j in param_indices {
            if j >= field.len() {
                return Err(Error::range(format!(
                    "parameter index {} out of range for field of {}",
                    j,
                    field.len()
                )));
            }
            row.push(field[j]);
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Extracts the clamped-field history of selected coordinates, one row
/// per record. Requires the run to have captured per-parameter fields.
pub fn gsnr_trajectory(
    records: &[TrainRecord],
    param_indices: &[usize],
) -> Result<Vec<Vec<f64>>> {
    trajectory_of(records, param_indices, |r| r.per_param_gsnr.as_ref())
}

/// Same as [`gsnr_trajectory`] but for the raw pre-normalization field.
pub fn gsnr_raw_trajectory(
    records: &[TrainRecord],
    param_indices: &[usize],
) -> Result<Vec<Vec<f64>>> {
    trajectory_of(records, param_indices, |r| r.per_param_gsnr_raw.as_ref())
}

/// Monte Carlo estimate versus prediction for the one-step gap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapMcResult {
    /// Mean over replicates of the measured one-step gap.
    pub measured: f64,
    /// Mean over replicates of `lr * sum_j rho2[j] / n`.
    pub predicted: f64,
    pub reps: usize,
}

/// Draws `reps` independent dataset pairs (D, D'), takes one plain
/// gradient step on D from `theta`, and compares the realized gap
/// against the variance-based prediction.
///
/// The measured gap uses the paired form
/// `(L_D'(theta') - L_D'(theta)) - (L_D(theta') - L_D(theta))`,
/// which has the same expectation as `L_D'(theta') - L_D(theta')` but
/// far lower replicate variance. The prediction is `lr` times the total
/// variance of the batch-mean gradient, estimated per coordinate from
/// per-sample gradients on D with the unbiased (n-1) divisor.
pub fn one_step_gap_mc<T: Model + DataGen>(
    task: &T,
    theta: &ParamVector,
    lr: f64,
    n: usize,
    reps: usize,
    seed: u64,
) -> Result<GapMcResult> {
    if n < 2 {
        return Err(Error::config(format!(
            "per-replicate sample count must be at least 2, got {n}"
        )));
    }
    if reps == 0 {
        return Err(Error::config("replicate count must be positive"));
    }
    if !lr.is_finite() || lr < 0.0 {
        return Err(Error::config(format!(
            "learning rate must be finite and non-negative, got {lr}"
        )));
    }

    let dim = theta.len();
    let per_rep = crate::exec::map_ordered(reps, |rep| -> Result<(f64, f64)> {
        let [seed_d, seed_dp] = split_seed(seed.wrapping_add(rep as u64));
        let data = task.generate(n, seed_d)?;
        let data_prime = task.generate(n, seed_dp)?;
        let all: Vec<usize> = (0..n).collect();

        let (loss_d, grad) = task.loss_grad(theta.values(), &data, &all)?;
        let loss_dp = task.loss(theta.values(), &data_prime, &all)?;

        let stepped: Vec<f64> = theta
            .values()
            .iter()
            .zip(&grad)
            .map(|(t, g)| t - lr * g)
            .collect();
        let loss_d_after = task.loss(&stepped, &data, &all)?;
        let loss_dp_after = task.loss(&stepped, &data_prime, &all)?;
        let measured = (loss_dp_after - loss_dp) - (loss_d_after - loss_d);

        // Per-sample gradients on D give the batch-mean variance.
        let mut per_sample = Vec::with_capacity(n);
        for i in 0..n {
            let (_, g_i) = task.loss_grad(theta.values(), &data, &[i])?;
            per_sample.push(g_i);
        }
        let mut predicted = 0.0;
        for j in 0..dim {
            let mean_j = per_sample.iter().map(|g| g[j]).sum::<f64>() / n as f64;
            let ss: f64 = per_sample
                .iter()
                .map(|g| {
                    let d = g[j] - mean_j;
                    d * d
                })
                .sum();
            let rho2 = ss / (n - 1) as f64;
            predicted += rho2 / n as f64;
        }
        Ok((measured, lr * predicted))
    });

    let mut measured_sum = 0.0;
    let mut predicted_sum = 0.0;
    for rep in per_rep {
        let (m, p) = rep?;
        measured_sum += m;
        predicted_sum += p;
    }
    Ok(GapMcResult {
        measured: measured_sum / reps as f64,
        predicted: predicted_sum / reps as f64,
        reps,
    })
}
