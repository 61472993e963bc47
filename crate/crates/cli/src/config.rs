//! Experiment configuration: JSON in, validated and resolved settings
//! out. Unknown fields are rejected everywhere so a typo in a
//! hyperparameter name fails loudly instead of silently running the
//! defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vrgd_core::{
    DecayPoint, Error, InitSpec, LinRegTask, MlpTask, Model, OptimizerConfig, OptimizerKind,
    Result, Schedule, ScheduleKind,
};

/// Parameter-count ceiling; these are desk-scale experiments and a typo
/// like a 10^6-wide layer should fail fast, not thrash.
pub const MAX_PARAMS: usize = 4096;

fn default_noise_std() -> f64 {
    0.1
}

fn default_blob_sep() -> f64 {
    3.0
}

fn default_blob_std() -> f64 {
    1.0
}

/// How to draw the starting parameter vector. The seed comes from
/// `seeds.init`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitConfig {
    Zeros,
    Constant { value: f64 },
    Uniform { bound: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinRegConfig {
    pub dim: usize,
    #[serde(default = "default_noise_std")]
    pub noise_std: f64,
    pub n_train: usize,
    pub n_test: usize,
    /// Defaults to zeros.
    #[serde(default)]
    pub init: Option<InitConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpConfig {
    pub layer_sizes: Vec<usize>,
    #[serde(default)]
    pub label_smoothing: f64,
    #[serde(default = "default_blob_sep")]
    pub blob_sep: f64,
    #[serde(default = "default_blob_std")]
    pub blob_std: f64,
    pub n_train: usize,
    pub n_test: usize,
    /// Defaults to uniform with bound 0.2.
    #[serde(default)]
    pub init: Option<InitConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelConfig {
    Linreg(LinRegConfig),
    Mlp(MlpConfig),
}

impl ModelConfig {
    pub fn n_train(&self) -> usize {
        match self {
            ModelConfig::Linreg(c) => c.n_train,
            ModelConfig::Mlp(c) => c.n_train,
        }
    }

    pub fn n_test(&self) -> usize {
        match self {
            ModelConfig::Linreg(c) => c.n_test,
            ModelConfig::Mlp(c) => c.n_test,
        }
    }
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_beta3() -> f64 {
    0.9
}

fn default_eps_adam() -> f64 {
    vrgd_core::optim::DEFAULT_EPS_ADAM
}

fn default_momentum_coef() -> f64 {
    0.9
}

fn default_trust_eps() -> f64 {
    vrgd_core::optim::DEFAULT_TRUST_EPS
}

/// Optimizer hyperparameters. The field clamp `gamma` lives at the top
/// level of the experiment config because it belongs to the statistics
/// pipeline, not to any single optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    pub kind: OptimizerKind,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_beta3")]
    pub beta3: f64,
    #[serde(default = "default_eps_adam")]
    pub eps_adam: f64,
    #[serde(default = "default_momentum_coef")]
    pub momentum_coef: f64,
    #[serde(default = "default_trust_eps")]
    pub trust_eps: f64,
    #[serde(default)]
    pub weight_decay: f64,
}

fn default_poly_power() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    pub kind: ScheduleKind,
    pub base_lr: f64,
    #[serde(default)]
    pub warmup_steps: u64,
    /// Defaults to the run's step count.
    #[serde(default)]
    pub total_steps: Option<u64>,
    #[serde(default = "default_poly_power")]
    pub poly_power: f64,
    #[serde(default)]
    pub decay_points: Vec<DecayPoint>,
    /// When set, `base_lr` is scaled by sqrt(global_batch /
    /// reference_batch) before use.
    #[serde(default)]
    pub reference_batch: Option<usize>,
}

fn seed_data() -> u64 {
    1
}

fn seed_init() -> u64 {
    2
}

fn seed_shuffle() -> u64 {
    3
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    #[serde(default = "seed_data")]
    pub data: u64,
    #[serde(default = "seed_init")]
    pub init: u64,
    #[serde(default = "seed_shuffle")]
    pub shuffle: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds {
            data: seed_data(),
            init: seed_init(),
            shuffle: seed_shuffle(),
        }
    }
}

fn default_gamma() -> f64 {
    vrgd_core::DEFAULT_GAMMA
}

fn default_eps() -> f64 {
    vrgd_core::DEFAULT_EPS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub optimizer: OptimizerSection,
    pub schedule: ScheduleSection,
    /// Virtual device count. Defaults to the smallest divisor of
    /// `global_batch` that is at least 8, falling back to the largest
    /// divisor of at least 2.
    #[serde(default)]
    pub k: Option<usize>,
    pub global_batch: usize,
    pub steps: u64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default)]
    pub seeds: Seeds,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub record_per_param_gsnr: bool,
}

/// Smallest divisor of `batch` that is >= 8; otherwise the largest
/// divisor >= 2.
pub fn default_device_count(batch: usize) -> Result<usize> {
    if batch < 2 {
        return Err(Error::config(format!(
            "global_batch must be at least 2, got {batch}"
        )));
    }
    if let Some(k) = (8..=batch).find(|k| batch % k == 0) {
        return Ok(k);
    }
    let k = (2..=batch).rev().find(|k| batch % k == 0).expect("batch divides itself");
    Ok(k)
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::config(format!("config parse failed: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::config(format!("config serialization failed: {e}")))
    }

    /// Device count after applying the default policy.
    pub fn devices(&self) -> Result<usize> {
        match self.k {
            Some(k) => Ok(k),
            None => default_device_count(self.global_batch),
        }
    }

    /// Schedule with `total_steps` defaulted and the square-root batch
    /// scaling applied to `base_lr`.
    pub fn build_schedule(&self) -> Result<Schedule> {
        let s = &self.schedule;
        let base_lr = match s.reference_batch {
            Some(reference) => {
                if reference == 0 {
                    return Err(Error::config("reference_batch must be positive"));
                }
                vrgd_core::scaled_lr(s.base_lr, self.global_batch, reference)
            }
            None => s.base_lr,
        };
        let schedule = Schedule {
            kind: s.kind,
            base_lr,
            warmup_steps: s.warmup_steps,
            total_steps: s.total_steps.unwrap_or(self.steps),
            poly_power: s.poly_power,
            decay_points: s.decay_points.clone(),
        };
        schedule.validate()?;
        if schedule.total_steps < self.steps {
            return Err(Error::config(format!(
                "schedule covers {} steps but the run asks for {}",
                schedule.total_steps, self.steps
            )));
        }
        Ok(schedule)
    }

    /// Optimizer hyperparameters with the top-level clamp folded in.
    pub fn build_optimizer_config(&self) -> OptimizerConfig {
        let o = &self.optimizer;
        OptimizerConfig {
            kind: o.kind,
            beta1: o.beta1,
            beta2: o.beta2,
            beta3: o.beta3,
            eps_adam: o.eps_adam,
            gamma: self.gamma,
            momentum_coef: o.momentum_coef,
            trust_eps: o.trust_eps,
            weight_decay: o.weight_decay,
        }
    }

    /// Initial parameters resolved per model kind.
    pub fn build_init(&self) -> Result<InitSpec> {
        let (choice, fallback) = match &self.model {
            ModelConfig::Linreg(c) => (c.init, InitSpec::Zeros),
            ModelConfig::Mlp(c) => (
                c.init,
                InitSpec::Uniform {
                    seed: self.seeds.init,
                    bound: 0.2,
                },
            ),
        };
        Ok(match choice {
            None => fallback,
            Some(InitConfig::Zeros) => InitSpec::Zeros,
            Some(InitConfig::Constant { value }) => InitSpec::Constant(value),
            Some(InitConfig::Uniform { bound }) => InitSpec::Uniform {
                seed: self.seeds.init,
                bound,
            },
        })
    }

    /// Full validation pass: every error this can catch is caught before
    /// any artifact is written.
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::config("steps must be at least 1"));
        }
        let k = self.devices()?;
        if k < 2 {
            return Err(Error::config(format!(
                "need at least 2 devices for a variance estimate, got k = {k}"
            )));
        }
        if self.global_batch % k != 0 {
            return Err(Error::config(format!(
                "global_batch {} is not divisible by k = {k}",
                self.global_batch
            )));
        }
        if !self.gamma.is_finite() || self.gamma <= 0.0 || self.gamma > 1.0 {
            return Err(Error::config(format!(
                "gamma must lie in (0, 1], got {}",
                self.gamma
            )));
        }
        if !self.eps.is_finite() || self.eps <= 0.0 {
            return Err(Error::config(format!(
                "eps must be finite and positive, got {}",
                self.eps
            )));
        }
        if self.model.n_train() < self.global_batch {
            return Err(Error::config(format!(
                "n_train {} is smaller than global_batch {}",
                self.model.n_train(),
                self.global_batch
            )));
        }
        if self.model.n_test() == 0 {
            return Err(Error::config("n_test must be at least 1"));
        }

        let param_count = match &self.model {
            ModelConfig::Linreg(c) => {
                if c.dim == 0 {
                    return Err(Error::config("dim must be at least 1"));
                }
                if !c.noise_std.is_finite() || c.noise_std < 0.0 {
                    return Err(Error::config(format!(
                        "noise_std must be finite and non-negative, got {}",
                        c.noise_std
                    )));
                }
                c.dim
            }
            ModelConfig::Mlp(c) => {
                // Constructor re-checks shape details; build it once to
                // surface those errors at validation time.
                let task = MlpTask::new(c.layer_sizes.clone(), c.label_smoothing)?
                    .with_blob_geometry(c.blob_sep, c.blob_std)?;
                if task.classes() != 2 {
                    return Err(Error::config(format!(
                        "blob data is two-class; the network ends in {} outputs",
                        task.classes()
                    )));
                }
                task.partition().total_len()
            }
        };
        if param_count > MAX_PARAMS {
            return Err(Error::config(format!(
                "{param_count} parameters exceeds the harness ceiling of {MAX_PARAMS}"
            )));
        }

        if let Some(InitConfig::Uniform { bound }) = match &self.model {
            ModelConfig::Linreg(c) => c.init,
            ModelConfig::Mlp(c) => c.init,
        } {
            if !bound.is_finite() || bound < 0.0 {
                return Err(Error::config(format!(
                    "init bound must be finite and non-negative, got {bound}"
                )));
            }
        }

        self.build_schedule()?;
        self.build_optimizer_config().validate()?;
        Ok(())
    }

    /// A copy with defaults made explicit, suitable for writing next to
    /// the artifacts so a run is reproducible from its directory alone.
    pub fn resolved(&self) -> Result<ExperimentConfig> {
        self.validate()?;
        let mut out = self.clone();
        out.k = Some(self.devices()?);
        out.schedule.total_steps = Some(self.schedule.total_steps.unwrap_or(self.steps));
        Ok(out)
    }
}

/// Instantiated model task, dispatched by config.
pub enum TaskInstance {
    Linreg(LinRegTask),
    Mlp(MlpTask),
}

pub fn build_task(model: &ModelConfig) -> Result<TaskInstance> {
    match model {
        ModelConfig::Linreg(c) => {
            Ok(TaskInstance::Linreg(LinRegTask::new(c.dim, c.noise_std)?))
        }
        ModelConfig::Mlp(c) => {
            let task = MlpTask::new(c.layer_sizes.clone(), c.label_smoothing)?
                .with_blob_geometry(c.blob_sep, c.blob_std)?;
            Ok(TaskInstance::Mlp(task))
        }
    }
}

/// Small valid config used across this crate's tests.
#[cfg(test)]
pub(crate) fn minimal_linreg_json(out: &str) -> String {
    format!(
        r#"{{
  "model": {{"linreg": {{"dim": 4, "n_train": 64, "n_test": 64}}}},
  "optimizer": {{"kind": "vr_sgd"}},
  "schedule": {{"kind": "constant", "base_lr": 0.1}},
  "global_batch": 16,
  "steps": 5,
  "output_dir": "{out}"
}}"#
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses_and_validates() {
        let cfg = ExperimentConfig::from_json(&minimal_linreg_json("/tmp/x")).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.gamma, 0.1);
        assert_eq!(cfg.eps, 1e-12);
        assert_eq!(cfg.seeds, Seeds::default());
        assert_eq!(cfg.devices().unwrap(), 8);
        let schedule = cfg.build_schedule().unwrap();
        assert_eq!(schedule.total_steps, 5);
    }

    #[test]
    fn unknown_fields_are_rejected_at_every_level() {
        let top = minimal_linreg_json("/tmp/x").replace("\"steps\": 5", "\"steps\": 5, \"stepz\": 9");
        assert!(ExperimentConfig::from_json(&top).is_err());

        let nested = minimal_linreg_json("/tmp/x")
            .replace("\"dim\": 4", "\"dim\": 4, \"dims\": 9");
        assert!(ExperimentConfig::from_json(&nested).is_err());

        let opt = minimal_linreg_json("/tmp/x")
            .replace("\"kind\": \"vr_sgd\"", "\"kind\": \"vr_sgd\", \"gamma\": 0.2");
        let err = ExperimentConfig::from_json(&opt).unwrap_err();
        assert!(
            err.to_string().contains("gamma"),
            "error should name the stray field: {err}"
        );
    }

    #[test]
    fn device_default_policy() {
        assert_eq!(default_device_count(256).unwrap(), 8);
        assert_eq!(default_device_count(2048).unwrap(), 8);
        assert_eq!(default_device_count(10).unwrap(), 10);
        assert_eq!(default_device_count(6).unwrap(), 6);
        assert_eq!(default_device_count(7).unwrap(), 7);
        assert_eq!(default_device_count(2).unwrap(), 2);
        assert!(default_device_count(1).is_err());
    }

    #[test]
    fn indivisible_batch_is_rejected() {
        let mut cfg = ExperimentConfig::from_json(&minimal_linreg_json("/tmp/x")).unwrap();
        cfg.k = Some(5);
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("divisible"), "{err}");
    }

    #[test]
    fn batch_larger_than_train_set_is_rejected() {
        let mut cfg = ExperimentConfig::from_json(&minimal_linreg_json("/tmp/x")).unwrap();
        cfg.global_batch = 128;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn short_schedule_is_rejected() {
        let mut cfg = ExperimentConfig::from_json(&minimal_linreg_json("/tmp/x")).unwrap();
        cfg.schedule.total_steps = Some(3);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn parameter_ceiling_is_enforced() {
        let mut cfg = ExperimentConfig::from_json(&minimal_linreg_json("/tmp/x")).unwrap();
        cfg.model = ModelConfig::Linreg(LinRegConfig {
            dim: MAX_PARAMS + 1,
            noise_std: 0.1,
            n_train: 8192,
            n_test: 64,
            init: None,
        });
        cfg.global_batch = 16;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn resolved_config_pins_defaults() {
        let cfg = ExperimentConfig::from_json(&minimal_linreg_json("/tmp/x")).unwrap();
        let resolved = cfg.resolved().unwrap();
        assert_eq!(resolved.k, Some(8));
        assert_eq!(resolved.schedule.total_steps, Some(5));
        // A resolved config resolves to itself.
        let again = resolved.resolved().unwrap();
        assert_eq!(resolved, again);
    }

    #[test]
    fn sqrt_scaling_applies_to_base_lr() {
        let mut cfg = ExperimentConfig::from_json(&minimal_linreg_json("/tmp/x")).unwrap();
        cfg.schedule.reference_batch = Some(4);
        let schedule = cfg.build_schedule().unwrap();
        // batch 16 vs reference 4: sqrt(4) = 2.
        assert!((schedule.base_lr - 0.2).abs() < 1e-15);
    }

    #[test]
    fn mlp_config_builds_and_checks_classes() {
        let json = r#"{
  "model": {"mlp": {"layer_sizes": [6, 8, 2], "n_train": 64, "n_test": 32}},
  "optimizer": {"kind": "vr_adam"},
  "schedule": {"kind": "constant", "base_lr": 0.01},
  "global_batch": 16,
  "steps": 3,
  "output_dir": "/tmp/x"
}"#;
        let cfg = ExperimentConfig::from_json(json).unwrap();
        cfg.validate().unwrap();

        let bad = json.replace("[6, 8, 2]", "[6, 8, 3]");
        let cfg = ExperimentConfig::from_json(&bad).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = ExperimentConfig::from_json(&minimal_linreg_json("/tmp/x")).unwrap();
        let text = cfg.to_json().unwrap();
        let back = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(cfg, back);
    }
}
