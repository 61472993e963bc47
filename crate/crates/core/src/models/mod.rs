//! Deterministic toy tasks used to exercise the optimizer pipeline.
//!
//! Two models: a linear regression with analytically known optimum
//! ([`LinRegTask`]) and a small tanh MLP classifier on Gaussian blobs
//! ([`MlpTask`]). Both expose mean loss and mean analytic gradient over an
//! arbitrary index set of a [`Dataset`], which is all the gradient
//! pipeline needs.

mod linreg;
mod mlp;

pub use linreg::{gen_linreg_data, LinRegTask};
pub use mlp::{gen_blob_data, MlpTask};

use std::io::{BufRead, Write};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::params::LayerPartition;

/// Derives `N` independent sub-seeds from one seed, so distinct sampling
/// streams (train/test, paired resamples) never share state.
pub(crate) fn split_seed<const N: usize>(seed: u64) -> [u64; N] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    std::array::from_fn(|_| rng.next_u64())
}

/// Left-to-right dot product. Data generation and model prediction share
/// this so "evaluate at the true weights" reproduces targets exactly.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Per-sample targets: a real value (regression) or a class index.
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Real(Vec<f64>),
    Class(Vec<usize>),
}

/// Target flavor selector for CSV loading.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetKind {
    Real,
    Class,
}

/// Sample-major dataset: `n` rows of `dim` features plus one target each.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n: usize,
    dim: usize,
    inputs: Vec<f64>,
    targets: Targets,
}

impl Dataset {
    pub fn new(n: usize, dim: usize, inputs: Vec<f64>, targets: Targets) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("dataset must contain at least one sample"));
        }
        if inputs.len() != n * dim {
            return Err(Error::structure(format!(
                "input buffer holds {} values but {} x {} expected",
                inputs.len(),
                n,
                dim
            )));
        }
        let target_len = match &targets {
            Targets::Real(t) => t.len(),
            Targets::Class(t) => t.len(),
        };
        if target_len != n {
            return Err(Error::structure(format!(
                "{target_len} targets for {n} samples"
            )));
        }
        Ok(Dataset {
            n,
            dim,
            inputs,
            targets,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn targets(&self) -> &Targets {
        &self.targets
    }

    pub(crate) fn target_real(&self, i: usize) -> Result<f64> {
        match &self.targets {
            Targets::Real(t) => Ok(t[i]),
            Targets::Class(_) => Err(Error::structure(
                "dataset carries class targets but a real target was requested",
            )),
        }
    }

    pub(crate) fn target_class(&self, i: usize) -> Result<usize> {
        match &self.targets {
            Targets::Class(t) => Ok(t[i]),
            Targets::Real(_) => Err(Error::structure(
                "dataset carries real targets but a class target was requested",
            )),
        }
    }

    /// Validates that every index addresses a sample.
    pub(crate) fn check_indices(&self, idx: &[usize]) -> Result<()> {
        if idx.is_empty() {
            return Err(Error::config("empty sample index set"));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= self.n) {
            return Err(Error::range(format!(
                "sample index {bad} out of range for dataset of {} samples",
                self.n
            )));
        }
        Ok(())
    }

    /// Dumps the dataset as CSV with header `x_0,..,x_{d-1},y_0`. Numbers
    /// carry 17 significant digits so a reload reproduces them exactly.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        for j in 0..self.dim {
            write!(w, "x_{j},")?;
        }
        writeln!(w, "y_0")?;
        for i in 0..self.n {
            for v in self.input(i) {
                write!(w, "{v:.16e},")?;
            }
            match &self.targets {
                Targets::Real(t) => writeln!(w, "{:.16e}", t[i])?,
                Targets::Class(t) => writeln!(w, "{}", t[i])?,
            }
        }
        Ok(())
    }

    /// Reads a dataset written by [`Dataset::write_csv`].
    pub fn read_csv<R: BufRead>(r: &mut R, kind: TargetKind) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::structure("csv is empty"))??;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 2 || cols.last() != Some(&"y_0") {
            return Err(Error::structure("csv header must end with y_0"));
        }
        let dim = cols.len() - 1;
        let mut inputs = Vec::new();
        let mut reals = Vec::new();
        let mut classes = Vec::new();
        let mut n = 0usize;
        for line in lines {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != dim + 1 {
                return Err(Error::structure(format!(
                    "csv row {n} has {} fields, {} expected",
                    fields.len(),
                    dim + 1
                )));
            }
            for f in &fields[..dim] {
                inputs.push(f.parse::<f64>().map_err(|e| {
                    Error::structure(format!("bad csv value '{f}': {e}"))
                })?);
            }
            match kind {
                TargetKind::Real => reals.push(fields[dim].parse::<f64>().map_err(|e| {
                    Error::structure(format!("bad csv target '{}': {e}", fields[dim]))
                })?),
                TargetKind::Class => classes.push(fields[dim].parse::<usize>().map_err(
                    |e| Error::structure(format!("bad csv target '{}': {e}", fields[dim])),
                )?),
            }
            n += 1;
        }
        let targets = match kind {
            TargetKind::Real => Targets::Real(reals),
            TargetKind::Class => Targets::Class(classes),
        };
        Dataset::new(n, dim, inputs, targets)
    }
}

/// Mean loss and mean gradient over arbitrary sample subsets.
///
/// `params` is the flat value slice of a parameter vector laid out
/// according to [`Model::partition`]. Implementations are deterministic:
/// identical inputs produce bitwise identical outputs.
pub trait Model: Sync {
    /// Layer layout of this model's parameter vector.
    fn partition(&self) -> &LayerPartition;

    /// Mean loss over `idx`.
    fn loss(&self, params: &[f64], data: &Dataset, idx: &[usize]) -> Result<f64>;

    /// Mean loss and mean analytic gradient over `idx`.
    fn loss_grad(&self, params: &[f64], data: &Dataset, idx: &[usize])
        -> Result<(f64, Vec<f64>)>;
}

/// Seeded draw of a fresh dataset from the task's sampling distribution.
pub trait DataGen {
    fn generate(&self, n: usize, seed: u64) -> Result<Dataset>;
}
