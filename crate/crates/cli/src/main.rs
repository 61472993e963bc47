use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use vrgd::config::ExperimentConfig;
use vrgd::sweep::SweepAxis;
use vrgd_core::OptimizerKind;

#[derive(Parser)]
#[command(
    name = "vrgd",
    about = "Variance-weighted gradient descent experiments on a simulated device pipeline",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Path to a JSON experiment config.
    #[arg(long)]
    config: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Train once and write artifacts to the config's output directory.
    Run(ConfigArg),
    /// Re-run the config across one axis, one subdirectory per value.
    Sweep {
        #[command(flatten)]
        config: ConfigArg,
        /// Field to vary: gamma, k, lr, or batch.
        #[arg(long)]
        axis: String,
        /// Comma-separated values for the axis.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Vec<f64>,
    },
    /// Run each optimizer on identical data and seeds, side by side.
    Compare {
        #[command(flatten)]
        config: ConfigArg,
        /// Comma-separated optimizer names (at least two).
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        optimizers: Vec<String>,
    },
    /// Parse and validate a config without running anything.
    Validate(ConfigArg),
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Run(arg) => {
            let cfg = ExperimentConfig::load(&arg.config)?;
            let outcome = vrgd::run(&cfg)?;
            let s = &outcome.summary;
            println!(
                "{} | {} steps, k={}, batch={} | train {:.6e} test {:.6e} gap {:.6e}",
                s.optimizer, s.steps, s.devices, s.global_batch,
                s.final_train_loss, s.final_test_loss, s.final_gap
            );
            if let Some(acc) = s.final_accuracy {
                println!("test accuracy {acc:.4}");
            }
            println!("artifacts in {}", cfg.output_dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep {
            config,
            axis,
            values,
        } => {
            let cfg = ExperimentConfig::load(&config.config)?;
            let axis = SweepAxis::from_str(&axis)?;
            let outcome = vrgd::sweep(&cfg, axis, &values)?;
            for row in &outcome.rows {
                match (&row.outcome, &row.error) {
                    (Some(o), _) => println!(
                        "{}={} -> test {:.6e} gap {:.6e}",
                        axis, row.value, o.summary.final_test_loss, o.summary.final_gap
                    ),
                    (None, Some(e)) => println!("{}={} -> failed: {e}", axis, row.value),
                    (None, None) => unreachable!("row has neither outcome nor error"),
                }
            }
            println!("sweep summary in {}", cfg.output_dir.join("sweep.csv").display());
            let failures = outcome.failures();
            if failures > 0 {
                eprintln!("{failures} of {} rows failed", outcome.rows.len());
                return Ok(ExitCode::FAILURE);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare {
            config,
            optimizers,
        } => {
            let cfg = ExperimentConfig::load(&config.config)?;
            let kinds = optimizers
                .iter()
                .map(|s| OptimizerKind::from_str(s))
                .collect::<Result<Vec<_>, _>>()?;
            let outcome = vrgd::compare(&cfg, &kinds)?;
            for (kind, run) in &outcome.runs {
                println!(
                    "{kind} -> test {:.6e} gap {:.6e}",
                    run.summary.final_test_loss, run.summary.final_gap
                );
            }
            for c in &outcome.crossings {
                println!(
                    "{} reached {}'s final test loss after {} steps",
                    c.optimizer, c.other, c.step
                );
            }
            println!("comparison in {}", cfg.output_dir.join("compare.csv").display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate(arg) => {
            let cfg = ExperimentConfig::load(&arg.config)?;
            let resolved = cfg.resolved()?;
            println!(
                "config ok: {} on {}, {} steps, k={}, batch={}",
                resolved.optimizer.kind,
                match &resolved.model {
                    vrgd::ModelConfig::Linreg(m) => format!("linreg dim {}", m.dim),
                    vrgd::ModelConfig::Mlp(m) => format!("mlp {:?}", m.layer_sizes),
                },
                resolved.steps,
                resolved.k.expect("resolved config pins k"),
                resolved.global_batch
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}
