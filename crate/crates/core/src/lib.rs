//! Simulated data-parallel training with gradient signal-to-noise
//! weighting.
//!
//! The pipeline splits a batch across `k` virtual devices, averages the
//! per-device gradients, and estimates each coordinate's signal-to-noise
//! ratio from the spread of the device means. That field, normalized per
//! layer and clamped from below, rescales the update of the `vr_`
//! optimizer family. Alongside training, running estimators track how
//! fast the generalization gap should grow with and without the
//! weighting.
//!
//! Device gradients evaluate in parallel under the `parallel` feature
//! (on by default) and sequentially without it; every reduction is a
//! fixed-order sequential fold either way, so results are bit-identical
//! across the two builds.

pub mod diagnostics;
pub mod error;
pub mod exec;
pub mod models;
pub mod optim;
pub mod params;
pub mod pipeline;
pub mod schedule;

pub use error::{Error, Result};
pub use models::{
    gen_blob_data, gen_linreg_data, DataGen, Dataset, LinRegTask, MlpTask, Model, TargetKind,
    Targets,
};
pub use optim::{init_state, Optimizer, OptimizerConfig, OptimizerKind, OptimizerState};
pub use params::{
    check_finite, make_params, InitSpec, LayerPartition, LayerSegment, ParamVector,
};
pub use pipeline::{
    clamp_gsnr, compute_gsnr_field, device_grad_means, gsnr_raw, normalize_per_layer,
    reduce_stats, shard_batch, variance, DeviceGradStats, ShardPlan, DEFAULT_EPS,
    DEFAULT_GAMMA,
};
pub use schedule::{lr_at, scaled_lr, DecayPoint, Schedule, ScheduleKind};
pub use diagnostics::{
    gsnr_raw_trajectory, gsnr_trajectory, one_step_gap_mc, read_jsonl, summary_csv_row,
    write_jsonl_line, GapLedger, GapMcResult, LayerGsnrSummary, TrainRecord,
    SUMMARY_CSV_HEADER,
};
