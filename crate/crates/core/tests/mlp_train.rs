//! End-to-end sanity: the little classifier actually learns separable
//! blobs, both with a plain optimizer and through the full
//! device-sharded field pipeline.

use vrgd_core::models::{gen_blob_data, Model};
use vrgd_core::{
    compute_gsnr_field, make_params, shard_batch, InitSpec, MlpTask, Optimizer, OptimizerConfig,
    OptimizerKind, DEFAULT_EPS, DEFAULT_GAMMA,
};

const N_TRAIN: usize = 256;
const BATCH: usize = 64;
const STEPS: usize = 80;
const K: usize = 8;

fn train(kind: OptimizerKind) -> (f64, f64, f64) {
    let task = MlpTask::new(vec![10, 16, 2], 0.0)
        .unwrap()
        .with_blob_geometry(6.0, 1.0)
        .unwrap();
    let (train, _) = gen_blob_data(&task, N_TRAIN, 64, 33).unwrap();
    let partition = task.partition().clone();
    let mut params = make_params(
        partition.clone(),
        &InitSpec::Uniform {
            seed: 2,
            bound: 0.2,
        },
    )
    .unwrap();
    let mut opt = Optimizer::new(OptimizerConfig::new(kind), partition.total_len()).unwrap();
    let all: Vec<usize> = (0..N_TRAIN).collect();
    let loss_before = task.loss(params.values(), &train, &all).unwrap();

    for step in 0..STEPS {
        // Fixed rotation through contiguous windows; real shuffling
        // lives in the experiment runner.
        let start = (step * BATCH) % N_TRAIN;
        let batch: Vec<usize> = (start..start + BATCH).map(|i| i % N_TRAIN).collect();
        let plan = shard_batch(&batch, K).unwrap();
        let stats = compute_gsnr_field(
            &task,
            &params,
            &plan,
            &train,
            &partition,
            DEFAULT_GAMMA,
            DEFAULT_EPS,
        )
        .unwrap();
        opt.step(&mut params, &stats.mean, Some(&stats.gsnr), 0.02)
            .unwrap();
    }

    let loss_after = task.loss(params.values(), &train, &all).unwrap();
    let acc = task.accuracy(params.values(), &train, &all).unwrap();
    (loss_before, loss_after, acc)
}

#[test]
fn adam_learns_separable_blobs() {
    let (before, after, acc) = train(OptimizerKind::Adam);
    assert!(after < 0.5 * before, "loss barely moved: {before} -> {after}");
    assert!(acc >= 0.95, "train accuracy only {acc}");
}

#[test]
fn vr_adam_learns_separable_blobs_through_the_field_pipeline() {
    let (before, after, acc) = train(OptimizerKind::VrAdam);
    assert!(after < 0.5 * before, "loss barely moved: {before} -> {after}");
    assert!(acc >= 0.95, "train accuracy only {acc}");
}

#[test]
fn vr_sgd_learns_separable_blobs() {
    let (before, after, acc) = train(OptimizerKind::VrSgd);
    assert!(after < 0.5 * before, "loss barely moved: {before} -> {after}");
    assert!(acc >= 0.90, "train accuracy only {acc}");
}
