//! One-axis hyper-parameter sweeps.
//!
//! A sweep clones the base config once per value, rewrites a single
//! field, and runs each clone into its own subdirectory. Rows that fail
//! record the error and the sweep keeps going, so one divergent setting
//! does not cost the rest of the grid. The summary CSV is assembled in
//! input order after all rows finish.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use vrgd_core::{exec, Error, Result};

use crate::config::ExperimentConfig;
use crate::runner::{run, RunOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Gamma,
    K,
    Lr,
    Batch,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 4] = [SweepAxis::Gamma, SweepAxis::K, SweepAxis::Lr, SweepAxis::Batch];

    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::Gamma => "gamma",
            SweepAxis::K => "k",
            SweepAxis::Lr => "lr",
            SweepAxis::Batch => "batch",
        }
    }

    fn is_integral(self) -> bool {
        matches!(self, SweepAxis::K | SweepAxis::Batch)
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SweepAxis::ALL
            .into_iter()
            .find(|axis| axis.as_str() == s)
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown sweep axis {s:?}; expected one of gamma, k, lr, batch"
                ))
            })
    }
}

/// One sweep row. Exactly one of `outcome` and `error` is set.
#[derive(Debug)]
pub struct SweepRow {
    pub value: f64,
    pub outcome: Option<RunOutcome>,
    pub error: Option<String>,
}

impl SweepRow {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
}

impl SweepOutcome {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.failed()).count()
    }
}

/// Runs the sweep and writes `sweep.csv` under the base output
/// directory. Per-row run artifacts land in `<axis>_<value>/` subdirs.
/// Row failures are recorded, not fatal; the caller inspects
/// [`SweepOutcome::failures`] for the exit status.
pub fn sweep(base: &ExperimentConfig, axis: SweepAxis, values: &[f64]) -> Result<SweepOutcome> {
    if values.is_empty() {
        return Err(Error::config("sweep needs at least one value"));
    }
    // Validate the base once so a broken config fails the whole sweep
    // loudly instead of producing a CSV of identical per-row errors.
    base.validate()?;
    let configs: Vec<Result<ExperimentConfig>> = values
        .iter()
        .map(|&v| apply_axis(base, axis, v))
        .collect();

    let rows: Vec<SweepRow> = exec::map_ordered(values.len(), |i| {
        let value = values[i];
        match &configs[i] {
            Ok(cfg) => match run(cfg) {
                Ok(outcome) => SweepRow {
                    value,
                    outcome: Some(outcome),
                    error: None,
                },
                Err(e) => SweepRow {
                    value,
                    outcome: None,
                    error: Some(e.to_string()),
                },
            },
            Err(e) => SweepRow {
                value,
                outcome: None,
                error: Some(e.to_string()),
            },
        }
    });

    std::fs::create_dir_all(&base.output_dir)?;
    write_sweep_csv(&base.output_dir.join("sweep.csv"), &rows)?;
    Ok(SweepOutcome { axis, rows })
}

/// Clone of `base` with the axis field replaced and the output
/// directory moved into a per-value subdir.
fn apply_axis(base: &ExperimentConfig, axis: SweepAxis, value: f64) -> Result<ExperimentConfig> {
    if !value.is_finite() {
        return Err(Error::config(format!("sweep value {value} is not finite")));
    }
    let mut cfg = base.clone();
    match axis {
        SweepAxis::Gamma => cfg.gamma = value,
        SweepAxis::K => cfg.k = Some(integral(axis, value)?),
        SweepAxis::Lr => cfg.schedule.base_lr = value,
        SweepAxis::Batch => cfg.global_batch = integral(axis, value)?,
    }
    cfg.output_dir = base.output_dir.join(format!("{axis}_{}", fmt_value(axis, value)));
    cfg.validate()?;
    Ok(cfg)
}

fn integral(axis: SweepAxis, value: f64) -> Result<usize> {
    if value.fract() != 0.0 || value < 2.0 || value > u32::MAX as f64 {
        return Err(Error::config(format!(
            "axis {axis} needs whole values >= 2, got {value}"
        )));
    }
    Ok(value as usize)
}

fn fmt_value(axis: SweepAxis, value: f64) -> String {
    if axis.is_integral() {
        format!("{}", value as u64)
    } else {
        format!("{value}")
    }
}

fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut text = String::from("value,final_test_loss,gap,error\n");
    for row in rows {
        match &row.outcome {
            Some(o) => text.push_str(&format!(
                "{},{:.16e},{:.16e},\n",
                row.value, o.summary.final_test_loss, o.summary.final_gap
            )),
            None => {
                let msg = row.error.as_deref().unwrap_or("unknown failure");
                text.push_str(&format!("{},,,{}\n", row.value, sanitize(msg)));
            }
        }
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Keeps error messages on one CSV cell: commas become semicolons,
/// newlines become spaces.
fn sanitize(msg: &str) -> String {
    msg.chars()
        .map(|c| match c {
            ',' => ';',
            '\n' | '\r' => ' ',
            c => c,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::minimal_linreg_json;

    fn base_cfg(dir: &Path) -> ExperimentConfig {
        let json = minimal_linreg_json(dir.join("out").to_str().unwrap());
        let mut cfg = ExperimentConfig::from_json(&json).unwrap();
        cfg.steps = 4;
        cfg
    }

    #[test]
    fn axis_names_round_trip() {
        for axis in SweepAxis::ALL {
            assert_eq!(axis.as_str().parse::<SweepAxis>().unwrap(), axis);
        }
        assert!("epochs".parse::<SweepAxis>().is_err());
    }

    #[test]
    fn gamma_sweep_writes_rows_in_input_order() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = base_cfg(dir.path());
        let outcome = sweep(&cfg, SweepAxis::Gamma, &[0.5, 0.1]).unwrap();
        assert_eq!(outcome.failures(), 0);

        let text = std::fs::read_to_string(cfg.output_dir.join("sweep.csv")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "value,final_test_loss,gap,error");
        assert!(lines[1].starts_with("0.5,"));
        assert!(lines[2].starts_with("0.1,"));
        assert!(cfg.output_dir.join("gamma_0.5/final.json").exists());
        assert!(cfg.output_dir.join("gamma_0.1/final.json").exists());
    }

    #[test]
    fn bad_row_is_recorded_and_the_rest_still_run() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = base_cfg(dir.path());
        // k = 7 does not divide global_batch = 32.
        let outcome = sweep(&cfg, SweepAxis::K, &[4.0, 7.0]).unwrap();
        assert_eq!(outcome.failures(), 1);
        assert!(!outcome.rows[0].failed());
        assert!(outcome.rows[1].failed());

        let text = std::fs::read_to_string(cfg.output_dir.join("sweep.csv")).unwrap();
        let failed_line = text.lines().nth(2).unwrap();
        assert!(failed_line.starts_with("7,,,"), "line was {failed_line:?}");
        assert_eq!(failed_line.matches(',').count(), 3, "error must stay in one cell");
    }

    #[test]
    fn integral_axes_reject_fractional_values() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = base_cfg(dir.path());
        let outcome = sweep(&cfg, SweepAxis::Batch, &[2.5]).unwrap();
        assert_eq!(outcome.failures(), 1);
        assert!(outcome.rows[0].error.as_ref().unwrap().contains("whole values"));
    }

    #[test]
    fn empty_values_are_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = base_cfg(dir.path());
        assert!(sweep(&cfg, SweepAxis::Lr, &[]).is_err());
    }

    #[test]
    fn integer_directory_names_have_no_decimal_point() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = base_cfg(dir.path());
        let outcome = sweep(&cfg, SweepAxis::K, &[8.0]).unwrap();
        assert_eq!(outcome.failures(), 0);
        assert!(cfg.output_dir.join("k_8/final.json").exists());
    }
}
