//! The training loop and its artifact trail.
//!
//! Every run leaves four files in its output directory:
//!
//! * `config.json`: the resolved configuration (defaults made
//!   explicit), enough to reproduce the run bit for bit.
//! * `records.jsonl`: one full record per step.
//! * `summary.csv`: the same records as plot-ready columns.
//! * `final.json`: end-of-run metrics and accumulated estimators.
//!
//! Records stream to disk with a flush per step, so a run that dies
//! mid-flight leaves every completed step behind.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use vrgd_core::models::{gen_blob_data, gen_linreg_data, DataGen, Dataset, Model};
use vrgd_core::{
    compute_gsnr_field, lr_at, make_params, shard_batch, summary_csv_row, write_jsonl_line,
    Error, GapLedger, Optimizer, OptimizerKind, Result, TrainRecord, SUMMARY_CSV_HEADER,
};

use crate::config::{build_task, ExperimentConfig, TaskInstance};

/// End-of-run metrics, also serialized as `final.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalSummary {
    pub optimizer: OptimizerKind,
    pub steps: u64,
    pub devices: usize,
    pub global_batch: usize,
    pub gamma: f64,
    pub final_train_loss: f64,
    pub final_test_loss: f64,
    pub final_gap: f64,
    /// Accumulated plain-gradient gap estimator.
    pub gap_est_sgd_total: f64,
    /// Accumulated weighted-gradient gap estimator.
    pub gap_est_vrgd_total: f64,
    /// Test-set accuracy for classifiers; absent for regression.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub final_accuracy: Option<f64>,
}

/// Everything a caller might want from a finished run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// The resolved config the run actually used.
    pub config: ExperimentConfig,
    pub records: Vec<TrainRecord>,
    pub summary: FinalSummary,
}

/// Epoch-shuffled batch windows: each epoch permutes the sample indices
/// once, batches are consecutive windows, and a tail shorter than a
/// batch is dropped.
struct BatchStream {
    order: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
}

impl BatchStream {
    fn new(n: usize, seed: u64) -> Self {
        let mut stream = BatchStream {
            order: (0..n).collect(),
            cursor: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        stream.order.shuffle(&mut stream.rng);
        stream
    }

    fn next_batch(&mut self, size: usize) -> &[usize] {
        debug_assert!(size <= self.order.len());
        if self.cursor + size > self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let window = &self.order[self.cursor..self.cursor + size];
        self.cursor += size;
        window
    }
}

/// Validates, resolves, trains, writes artifacts. The output directory
/// comes from the config and is created if missing.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let resolved = cfg.resolved()?;
    match build_task(&resolved.model)? {
        TaskInstance::Linreg(task) => {
            let (train, test) = gen_linreg_data(
                &task,
                resolved.model.n_train(),
                resolved.model.n_test(),
                resolved.seeds.data,
            )?;
            execute(&resolved, &task, &train, &test, |_| Ok(None))
        }
        TaskInstance::Mlp(task) => {
            let (train, test) = gen_blob_data(
                &task,
                resolved.model.n_train(),
                resolved.model.n_test(),
                resolved.seeds.data,
            )?;
            let all_test: Vec<usize> = (0..test.len()).collect();
            let task_ref = &task;
            let test_ref = &test;
            execute(&resolved, &task, &train, &test, move |params| {
                task_ref.accuracy(params, test_ref, &all_test).map(Some)
            })
        }
    }
}

fn execute<M: Model + DataGen>(
    cfg: &ExperimentConfig,
    task: &M,
    train: &Dataset,
    test: &Dataset,
    accuracy: impl Fn(&[f64]) -> Result<Option<f64>>,
) -> Result<RunOutcome> {
    let partition = task.partition().clone();
    let mut params = make_params(partition.clone(), &cfg.build_init()?)?;
    let mut optimizer = Optimizer::new(cfg.build_optimizer_config(), partition.total_len())?;
    let schedule = cfg.build_schedule()?;
    let k = cfg.devices()?;

    std::fs::create_dir_all(&cfg.output_dir)?;
    write_text(&cfg.output_dir.join("config.json"), &cfg.to_json()?)?;
    let mut jsonl = BufWriter::new(File::create(cfg.output_dir.join("records.jsonl"))?);
    let mut csv = BufWriter::new(File::create(cfg.output_dir.join("summary.csv"))?);
    writeln!(csv, "{SUMMARY_CSV_HEADER}")?;
    csv.flush()?;

    let mut ledger = GapLedger::new(partition, cfg.record_per_param_gsnr);
    let mut stream = BatchStream::new(train.len(), cfg.seeds.shuffle);
    let all_train: Vec<usize> = (0..train.len()).collect();
    let all_test: Vec<usize> = (0..test.len()).collect();

    for step in 0..cfg.steps {
        let lr = lr_at(&schedule, step)?;
        let batch = stream.next_batch(cfg.global_batch).to_vec();
        let plan = shard_batch(&batch, k)?;
        let stats = compute_gsnr_field(
            task,
            &params,
            &plan,
            train,
            params.partition(),
            cfg.gamma,
            cfg.eps,
        )?;
        let train_loss = task.loss(params.values(), train, &all_train)?;
        let test_loss = task.loss(params.values(), test, &all_test)?;

        let record = ledger.record_step(step, lr, train_loss, test_loss, &stats)?;
        write_jsonl_line(&mut jsonl, record)?;
        writeln!(csv, "{}", summary_csv_row(record))?;
        jsonl.flush()?;
        csv.flush()?;

        optimizer.step(&mut params, &stats.mean, Some(&stats.gsnr), lr)?;
    }

    let final_train_loss = task.loss(params.values(), train, &all_train)?;
    let final_test_loss = task.loss(params.values(), test, &all_test)?;
    let final_accuracy = accuracy(params.values())?;
    let (gap_est_sgd_total, gap_est_vrgd_total) = ledger.totals();

    let summary = FinalSummary {
        optimizer: cfg.optimizer.kind,
        steps: cfg.steps,
        devices: k,
        global_batch: cfg.global_batch,
        gamma: cfg.gamma,
        final_train_loss,
        final_test_loss,
        final_gap: final_test_loss - final_train_loss,
        gap_est_sgd_total,
        gap_est_vrgd_total,
        final_accuracy,
    };
    let final_json = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::config(format!("final summary serialization failed: {e}")))?;
    write_text(&cfg.output_dir.join("final.json"), &final_json)?;

    Ok(RunOutcome {
        config: cfg.clone(),
        records: ledger.into_records(),
        summary,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = File::create(path)?;
    f.write_all(text.as_bytes())?;
    if !text.ends_with('\n') {
        f.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::minimal_linreg_json;

    fn temp_cfg(steps: u64) -> (tempfile::TempDir, ExperimentConfig) {
        let dir = tempfile::tempdir().unwrap();
        let json = minimal_linreg_json(dir.path().join("out").to_str().unwrap());
        let mut cfg = ExperimentConfig::from_json(&json).unwrap();
        cfg.steps = steps;
        (dir, cfg)
    }

    #[test]
    fn run_writes_all_four_artifacts() {
        let (_dir, cfg) = temp_cfg(5);
        let outcome = run(&cfg).unwrap();
        for name in ["config.json", "records.jsonl", "summary.csv", "final.json"] {
            assert!(cfg.output_dir.join(name).exists(), "missing {name}");
        }
        assert_eq!(outcome.records.len(), 5);

        let text = std::fs::read_to_string(cfg.output_dir.join("summary.csv")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 6, "header plus one row per step");
        assert_eq!(lines[0], SUMMARY_CSV_HEADER);

        let config_text = std::fs::read_to_string(cfg.output_dir.join("config.json")).unwrap();
        let embedded = ExperimentConfig::from_json(&config_text).unwrap();
        assert_eq!(embedded.k, Some(8), "embedded config must be resolved");
    }

    #[test]
    fn reruns_are_bit_identical() {
        let (_dir, cfg) = temp_cfg(6);
        run(&cfg).unwrap();
        let first = std::fs::read(cfg.output_dir.join("summary.csv")).unwrap();
        run(&cfg).unwrap();
        let second = std::fs::read(cfg.output_dir.join("summary.csv")).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn losses_fall_on_the_toy_problem() {
        let (_dir, mut cfg) = temp_cfg(60);
        cfg.schedule.base_lr = 0.2;
        let outcome = run(&cfg).unwrap();
        let first = &outcome.records[0];
        assert!(
            outcome.summary.final_train_loss < 0.1 * first.train_loss,
            "train loss {} -> {}",
            first.train_loss,
            outcome.summary.final_train_loss
        );
    }

    #[test]
    fn estimator_totals_match_record_sums() {
        let (_dir, cfg) = temp_cfg(8);
        let outcome = run(&cfg).unwrap();
        let sgd: f64 = outcome.records.iter().map(|r| r.gap_est_sgd).sum();
        let vrgd: f64 = outcome.records.iter().map(|r| r.gap_est_vrgd).sum();
        assert_eq!(sgd, outcome.summary.gap_est_sgd_total);
        assert_eq!(vrgd, outcome.summary.gap_est_vrgd_total);
        assert!(vrgd <= sgd);
    }

    #[test]
    fn per_param_capture_round_trips_through_jsonl() {
        let (_dir, mut cfg) = temp_cfg(3);
        cfg.record_per_param_gsnr = true;
        let outcome = run(&cfg).unwrap();
        let file = std::fs::File::open(cfg.output_dir.join("records.jsonl")).unwrap();
        let parsed = vrgd_core::read_jsonl(std::io::BufReader::new(file)).unwrap();
        assert_eq!(parsed, outcome.records);
        assert!(parsed[0].per_param_gsnr.as_ref().is_some_and(|f| f.len() == 4));
        assert!(parsed[0].per_param_gsnr_raw.is_some());
    }

    #[test]
    fn epoch_shuffle_covers_every_sample_without_repeats() {
        let mut stream = BatchStream::new(64, 9);
        let mut seen: Vec<usize> = Vec::new();
        for _ in 0..4 {
            seen.extend_from_slice(stream.next_batch(16));
        }
        let mut sorted = seen.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 64, "one epoch must visit every sample once");

        // Different epochs use different permutations.
        let mut second: Vec<usize> = Vec::new();
        for _ in 0..4 {
            second.extend_from_slice(stream.next_batch(16));
        }
        assert_ne!(seen, second);
    }

    #[test]
    fn mlp_runs_report_accuracy() {
        let dir = tempfile::tempdir().unwrap();
        let json = format!(
            r#"{{
  "model": {{"mlp": {{"layer_sizes": [6, 8, 2], "blob_sep": 6.0, "n_train": 64, "n_test": 32}}}},
  "optimizer": {{"kind": "vr_adam"}},
  "schedule": {{"kind": "constant", "base_lr": 0.02}},
  "global_batch": 16,
  "steps": 30,
  "output_dir": "{}"
}}"#,
            dir.path().join("out").to_str().unwrap()
        );
        let cfg = ExperimentConfig::from_json(&json).unwrap();
        let outcome = run(&cfg).unwrap();
        let acc = outcome.summary.final_accuracy.expect("classifier reports accuracy");
        assert!(acc > 0.8, "accuracy {acc}");
    }
}
