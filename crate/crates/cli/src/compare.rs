//! Side-by-side optimizer comparisons on a shared data draw.
//!
//! Every optimizer trains on the same datasets, init, and batch order
//! (all seeds come from the one base config), so loss curves differ
//! only through the update rule. Two CSVs land in the base output
//! directory: `compare.csv` with per-step test losses in columns, and
//! `crossings.csv` with, for each ordered pair, the first step at which
//! one optimizer's test loss reaches the other's final test loss.

use std::path::Path;

use vrgd_core::{exec, Error, OptimizerKind, Result};

use crate::config::ExperimentConfig;
use crate::runner::{run, RunOutcome};

/// `a` first reached `b`'s final test loss after `step` updates.
/// `step == steps` means it only got there at the very end;
/// a missing pair row means it never did.
#[derive(Debug, Clone, PartialEq)]
pub struct Crossing {
    pub optimizer: OptimizerKind,
    pub other: OptimizerKind,
    pub step: u64,
}

#[derive(Debug)]
pub struct CompareOutcome {
    pub runs: Vec<(OptimizerKind, RunOutcome)>,
    pub crossings: Vec<Crossing>,
}

impl CompareOutcome {
    pub fn run_for(&self, kind: OptimizerKind) -> Option<&RunOutcome> {
        self.runs.iter().find(|(k, _)| *k == kind).map(|(_, o)| o)
    }

    pub fn crossing(&self, optimizer: OptimizerKind, other: OptimizerKind) -> Option<u64> {
        self.crossings
            .iter()
            .find(|c| c.optimizer == optimizer && c.other == other)
            .map(|c| c.step)
    }
}

/// Runs each optimizer into `<base>/<kind>/` and writes the two CSVs.
/// Unlike a sweep, any sub-run failure fails the whole comparison:
/// half a comparison answers nothing.
pub fn compare(base: &ExperimentConfig, optimizers: &[OptimizerKind]) -> Result<CompareOutcome> {
    if optimizers.len() < 2 {
        return Err(Error::config("compare needs at least two optimizers"));
    }
    for (i, kind) in optimizers.iter().enumerate() {
        if optimizers[..i].contains(kind) {
            return Err(Error::config(format!("optimizer {kind} listed twice")));
        }
    }
    base.validate()?;

    let configs: Vec<ExperimentConfig> = optimizers
        .iter()
        .map(|&kind| {
            let mut cfg = base.clone();
            cfg.optimizer.kind = kind;
            cfg.output_dir = base.output_dir.join(kind.as_str());
            cfg
        })
        .collect();

    let results: Vec<Result<RunOutcome>> =
        exec::map_ordered(configs.len(), |i| run(&configs[i]));
    let mut runs = Vec::with_capacity(optimizers.len());
    for (kind, result) in optimizers.iter().zip(results) {
        runs.push((*kind, result?));
    }

    let crossings = find_crossings(&runs);
    std::fs::create_dir_all(&base.output_dir)?;
    write_compare_csv(&base.output_dir.join("compare.csv"), &runs)?;
    write_crossings_csv(&base.output_dir.join("crossings.csv"), &crossings)?;
    Ok(CompareOutcome { runs, crossings })
}

/// The record at step t holds the test loss after t updates (measured
/// before that step's update), so a crossing step counts updates spent.
fn find_crossings(runs: &[(OptimizerKind, RunOutcome)]) -> Vec<Crossing> {
    let mut crossings = Vec::new();
    for (kind, outcome) in runs {
        for (other, other_outcome) in runs {
            if kind == other {
                continue;
            }
            let target = other_outcome.summary.final_test_loss;
            let step = outcome
                .records
                .iter()
                .find(|r| r.test_loss <= target)
                .map(|r| r.step)
                .or_else(|| {
                    (outcome.summary.final_test_loss <= target).then_some(outcome.summary.steps)
                });
            if let Some(step) = step {
                crossings.push(Crossing {
                    optimizer: *kind,
                    other: *other,
                    step,
                });
            }
        }
    }
    crossings
}

fn write_compare_csv(path: &Path, runs: &[(OptimizerKind, RunOutcome)]) -> Result<()> {
    let steps = runs[0].1.records.len();
    let mut text = String::from("step");
    for (kind, _) in runs {
        text.push_str(&format!(",{kind}_test_loss"));
    }
    text.push('\n');
    for i in 0..steps {
        text.push_str(&format!("{i}"));
        for (_, outcome) in runs {
            text.push_str(&format!(",{:.16e}", outcome.records[i].test_loss));
        }
        text.push('\n');
    }
    // One trailing row for the state after the last update.
    text.push_str(&format!("{steps}"));
    for (_, outcome) in runs {
        text.push_str(&format!(",{:.16e}", outcome.summary.final_test_loss));
    }
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn write_crossings_csv(path: &Path, crossings: &[Crossing]) -> Result<()> {
    let mut text = String::from("optimizer,other,first_step_reaching_other_final\n");
    for c in crossings {
        text.push_str(&format!("{},{},{}\n", c.optimizer, c.other, c.step));
    }
    std::fs::write(path, text)?;
    Ok(())
}
