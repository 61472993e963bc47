//! The optimizer family: five classic baselines and their
//! variance-reduced counterparts.
//!
//! A variance-reduced ("vr_") optimizer multiplies the gradient by the
//! clamped per-parameter GSNR field before anything else happens, then
//! proceeds exactly like its base optimizer. vr_adam and vr_lamb
//! additionally smooth the field itself with a third moment `p` (decay
//! `beta3`, bias-corrected like the Adam moments) before multiplying.
//! With an all-ones field every vr_ optimizer reduces to its base.
//!
//! All step functions are pure state transitions: identical inputs give
//! bitwise identical parameters and state.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{check_finite, ParamVector};
use crate::pipeline::DEFAULT_GAMMA;

/// Default trust-ratio denominator guard for the layer-wise optimizers.
pub const DEFAULT_TRUST_EPS: f64 = 1e-9;

/// Default denominator guard inside the Adam-style update.
pub const DEFAULT_EPS_ADAM: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Momentum,
    Adam,
    Lars,
    Lamb,
    VrSgd,
    VrMomentum,
    VrAdam,
    VrLars,
    VrLamb,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 10] = [
        OptimizerKind::Sgd,
        OptimizerKind::Momentum,
        OptimizerKind::Adam,
        OptimizerKind::Lars,
        OptimizerKind::Lamb,
        OptimizerKind::VrSgd,
        OptimizerKind::VrMomentum,
        OptimizerKind::VrAdam,
        OptimizerKind::VrLars,
        OptimizerKind::VrLamb,
    ];

    /// Whether the optimizer consumes a GSNR field.
    pub fn uses_gsnr(self) -> bool {
        matches!(
            self,
            OptimizerKind::VrSgd
                | OptimizerKind::VrMomentum
                | OptimizerKind::VrAdam
                | OptimizerKind::VrLars
                | OptimizerKind::VrLamb
        )
    }

    /// The base optimizer a variance-reduced kind collapses to when fed an
    /// all-ones field.
    pub fn base(self) -> OptimizerKind {
        match self {
            OptimizerKind::VrSgd => OptimizerKind::Sgd,
            OptimizerKind::VrMomentum => OptimizerKind::Momentum,
            OptimizerKind::VrAdam => OptimizerKind::Adam,
            OptimizerKind::VrLars => OptimizerKind::Lars,
            OptimizerKind::VrLamb => OptimizerKind::Lamb,
            other => other,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Momentum => "momentum",
            OptimizerKind::Adam => "adam",
            OptimizerKind::Lars => "lars",
            OptimizerKind::Lamb => "lamb",
            OptimizerKind::VrSgd => "vr_sgd",
            OptimizerKind::VrMomentum => "vr_momentum",
            OptimizerKind::VrAdam => "vr_adam",
            OptimizerKind::VrLars => "vr_lars",
            OptimizerKind::VrLamb => "vr_lamb",
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OptimizerKind::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown optimizer '{s}'")))
    }
}

/// Hyperparameters for the whole family; each optimizer reads the subset
/// it needs.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    /// First-moment decay (Adam/LAMB families).
    pub beta1: f64,
    /// Second-moment decay (Adam/LAMB families).
    pub beta2: f64,
    /// GSNR-moment decay (vr_adam, vr_lamb).
    pub beta3: f64,
    pub eps_adam: f64,
    /// Lower clamp bound of the GSNR field consumed by vr_ kinds.
    pub gamma: f64,
    /// Heavy-ball coefficient (momentum, LARS families).
    pub momentum_coef: f64,
    /// Trust-ratio denominator guard (LARS/LAMB families).
    pub trust_eps: f64,
    /// Optional decoupled-from-loss L2 term added to the raw gradient.
    pub weight_decay: f64,
}

impl OptimizerConfig {
    pub fn new(kind: OptimizerKind) -> Self {
        OptimizerConfig {
            kind,
            beta1: 0.9,
            beta2: 0.999,
            beta3: 0.9,
            eps_adam: DEFAULT_EPS_ADAM,
            gamma: DEFAULT_GAMMA,
            momentum_coef: 0.9,
            trust_eps: DEFAULT_TRUST_EPS,
            weight_decay: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, beta) in [
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("beta3", self.beta3),
            ("momentum_coef", self.momentum_coef),
        ] {
            if !(0.0..1.0).contains(&beta) {
                return Err(Error::config(format!(
                    "{name} must lie in [0, 1), got {beta}"
                )));
            }
        }
        if !self.eps_adam.is_finite() || self.eps_adam <= 0.0 {
            return Err(Error::config(format!(
                "eps_adam must be finite and positive, got {}",
                self.eps_adam
            )));
        }
        if !self.gamma.is_finite() || self.gamma <= 0.0 || self.gamma > 1.0 {
            return Err(Error::config(format!(
                "gamma must lie in (0, 1], got {}",
                self.gamma
            )));
        }
        if !self.trust_eps.is_finite() || self.trust_eps <= 0.0 {
            return Err(Error::config(format!(
                "trust_eps must be finite and positive, got {}",
                self.trust_eps
            )));
        }
        if !self.weight_decay.is_finite() || self.weight_decay < 0.0 {
            return Err(Error::config(format!(
                "weight_decay must be finite and non-negative, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::new(OptimizerKind::Sgd)
    }
}

/// Moment buffers. Slots an optimizer never touches stay zero-length.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    /// Completed update count.
    pub step: u64,
    /// First moment (Adam/LAMB families).
    pub m: Vec<f64>,
    /// Second moment (Adam/LAMB families).
    pub v: Vec<f64>,
    /// GSNR moment (vr_adam, vr_lamb).
    pub p: Vec<f64>,
    /// Velocity (momentum, LARS families).
    pub u: Vec<f64>,
}

/// Fresh all-zero state sized for `cfg.kind`.
pub fn init_state(cfg: &OptimizerConfig, param_len: usize) -> OptimizerState {
    use OptimizerKind::*;
    let zeros = || vec![0.0; param_len];
    let (m, v, p, u) = match cfg.kind {
        Sgd | VrSgd => (Vec::new(), Vec::new(), Vec::new(), Vec::new()),
        Momentum | VrMomentum | Lars | VrLars => {
            (Vec::new(), Vec::new(), Vec::new(), zeros())
        }
        Adam | Lamb => (zeros(), zeros(), Vec::new(), Vec::new()),
        VrAdam | VrLamb => (zeros(), zeros(), zeros(), Vec::new()),
    };
    OptimizerState {
        step: 0,
        m,
        v,
        p,
        u,
    }
}

fn check_lengths(n: usize, grad: &[f64], gsnr: Option<&[f64]>) -> Result<()> {
    if grad.len() != n {
        return Err(Error::structure(format!(
            "gradient has {} entries for {} parameters",
            grad.len(),
            n
        )));
    }
    if let Some(r) = gsnr {
        if r.len() != n {
            return Err(Error::structure(format!(
                "gsnr field has {} entries for {} parameters",
                r.len(),
                n
            )));
        }
    }
    Ok(())
}

fn check_lr(lr: f64) -> Result<()> {
    if !lr.is_finite() || lr < 0.0 {
        return Err(Error::config(format!(
            "learning rate must be finite and non-negative, got {lr}"
        )));
    }
    Ok(())
}

fn check_slot(slot: &[f64], n: usize, name: &str) -> Result<()> {
    if slot.len() != n {
        return Err(Error::structure(format!(
            "optimizer state slot '{name}' has {} entries for {} parameters (state built for a different optimizer?)",
            slot.len(),
            n
        )));
    }
    Ok(())
}

/// `theta <- theta - lr * grad`.
pub fn sgd_step(params: &mut ParamVector, grad: &[f64], lr: f64) -> Result<()> {
    check_lengths(params.len(), grad, None)?;
    check_lr(lr)?;
    let (values, partition) = params.parts_mut();
    for (t, g) in values.iter_mut().zip(grad) {
        *t -= lr * g;
    }
    check_finite(values, partition, "sgd update")
}

/// `theta <- theta - lr * (gsnr . grad)`, elementwise.
pub fn vr_sgd_step(
    params: &mut ParamVector,
    grad: &[f64],
    gsnr: &[f64],
    lr: f64,
) -> Result<()> {
    check_lengths(params.len(), grad, Some(gsnr))?;
    check_lr(lr)?;
    let (values, partition) = params.parts_mut();
    for ((t, g), r) in values.iter_mut().zip(grad).zip(gsnr) {
        *t -= lr * (r * g);
    }
    check_finite(values, partition, "vr_sgd update")
}

fn momentum_apply(
    params: &mut ParamVector,
    state: &mut OptimizerState,
    effective_grad: impl Iterator<Item = f64>,
    lr: f64,
    coef: f64,
    label: &str,
) -> Result<()> {
    state.step += 1;
    let (values, partition) = params.parts_mut();
    for ((t, u), g) in values.iter_mut().zip(state.u.iter_mut()).zip(effective_grad) {
        *u = coef * *u + g;
        *t -= lr * *u;
    }
    check_finite(values, partition, label)
}

/// Heavy-ball momentum: `u <- coef*u + grad; theta <- theta - lr*u`.
pub fn momentum_step(
    params: &mut ParamVector,
    state: &mut OptimizerState,
    grad: &[f64],
    lr: f64,
    coef: f64,
) -> Result<()> {
    check_lengths(params.len(), grad, None)?;
    check_lr(lr)?;
    check_slot(&state.u, params.len(), "u")?;
    momentum_apply(
        params,
        state,
        grad.iter().copied(),
        lr,
        coef,
        "momentum update",
    )
}

/// Momentum on the GSNR-weighted gradient.
pub fn vr_momentum_step(
    params: &mut ParamVector,
    state: &mut OptimizerState,
    grad: &[f64],
    gsnr: &[f64],
    lr: f64,
    coef: f64,
) -> Result<()> {
    check_lengths(params.len(), grad, Some(gsnr))?;
    check_lr(lr)?;
    check_slot(&state.u, params.len(), "u")?;
    momentum_apply(
        params,
        state,
        grad.iter().zip(gsnr).map(|(g, r)| r * g),
        lr,
        coef,
        "vr_momentum update",
    )
}

/// Shared Adam core, applied after `state.step` has been advanced:
/// updates moments from `grad`, bias-corrects, and steps the parameters.
fn adam_apply(
    params: &mut ParamVector,
    state: &mut OptimizerState,
    grad: &[f64],
    lr: f64,
    cfg: &OptimizerConfig,
    label: &str,
) -> Result<()> {
    let t = state.step;
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    let (values, partition) = params.parts_mut();
    for (j, tv) in values.iter_mut().enumerate() {
        let g = grad[j];
        state.m[j] = cfg.beta1 * state.m[j] + (1.0 - cfg.beta1) * g;
        state.v[j] = cfg.beta2 * state.v[j] + (1.0 - cfg.beta2) * (g * g);
        let m_hat = state.m[j] / bc1;
        let v_hat = state.v[j] / bc2;
        *tv -= lr * m_hat / (v_hat.sqrt() + cfg.eps_adam);
    }
    check_finite(values, partition, label)
}

/// Adam with bias correction.
pub fn adam_step(
    params: &mut ParamVector,
    state: &mut OptimizerState,
    grad: &[f64],
    lr: f64,
    cfg: &OptimizerConfig,
) -> Result<()> {
    check_lengths(params.len(), grad, None)?;
    check_lr(lr)?;
    check_slot(&state.m, params.len(), "m")?;
    check_slot(&state.v, params.len(), "v")?;
    state.step += 1;
    adam_apply(params, state, grad, lr, cfg, "adam update")
}

/// Smooths the GSNR field into `state.p`, bias-corrects it, and returns
/// the weighted gradient that the Adam/LAMB core consumes. Must run after
/// `state.step` has been advanced.
fn weight_gradient_by_gsnr(
    state: &mut OptimizerState,
    grad: &[f64],
    gsnr: &[f64],
    beta3: f64,
) -> Vec<f64> {
    let t = state.step;
    let bc3 = 1.0 - beta3.powi(t as i32);
    let mut weighted = Vec::with_capacity(grad.len());
    for (j, (&g, &r)) in grad.iter().zip(gsnr).enumerate() {
        state.p[j] = beta3 * state.p[j] + (1.0 - beta3) * r;
        let p_hat = state.p[j] / bc3;
        weighted.push(p_hat * g);
    }
    weighted
}

/// Adam on the gradient weighted by the smoothed, bias-corrected GSNR
/// moment: `p <- beta3*p + (1-beta3)*gsnr`, `ghat = (p/(1-beta3^t)) .
/// grad`, then the ordinary Adam update on `ghat`.
pub fn vr_adam_step(
    params: &mut ParamVector,
    state: &mut OptimizerState,
    grad: &[f64],
    gsnr: &[f64],
    lr: f64,
    cfg: &OptimizerConfig,
) -> Result<()> {
    check_lengths(params.len(), grad, Some(gsnr))?;
    check_lr(lr)?;
    check_slot(&state.m, params.len(), "m")?;
    check_slot(&state.v, params.len(), "v")?;
    check_slot(&state.p, params.len(), "p")?;
    state.step += 1;
    let weighted = weight_gradient_by_gsnr(state, grad, gsnr, cfg.beta3);
    adam_apply(params, state, &weighted, lr, cfg, "vr_adam update")
}

fn l2_norm(values: &[f64]) -> f64 {
    let mut acc = 0.0;
    for v in values {
        acc += v * v;
    }
    acc.sqrt()
}

/// Layer-wise trust ratio: `|theta| / (|update| + trust_eps)`, defined as
/// 1 for an all-zero layer so fresh parameters can move.
fn trust_ratio(theta_norm: f64, update_norm: f64, trust_eps: f64) -> f64 {
    if theta_norm == 0.0 {
        1.0
    } else {
        theta_norm / (update_norm + trust_eps)
    }
}

/// LAMB core after moments: scale the bias-corrected Adam direction per
/// layer by the trust ratio.
fn lamb_apply(
    params: &mut ParamVector,
    state: &mut OptimizerState,
    grad: &[f64],
    lr: f64,
    cfg: &OptimizerConfig,
    label: &str,
) -> Result<()> {
    let t = state.step;
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    let n = params.len();
    let mut direction = vec![0.0; n];
    for j in 0..n {
        let g = grad[j];
        state.m[j] = cfg.beta1 * state.m[j] + (1.0 - cfg.beta1) * g;
        state.v[j] = cfg.beta2 * state.v[j] + (1.0 - cfg.beta2) * (g * g);
        let m_hat = state.m[j] / bc1;
        let v_hat = state.v[j] / bc2;
        direction[j] = m_hat / (v_hat.sqrt() + cfg.eps_adam);
    }
    let (values, partition) = params.parts_mut();
    for seg in partition.segments() {
        let range = seg.range();
        let ratio = trust_ratio(
            l2_norm(&values[range.clone()]),
            l2_norm(&direction[range.clone()]),
            cfg.trust_eps,
        );
        for j in range {
            values[j] -= lr * ratio * direction[j];
        }
    }
    check_finite(values, partition, label)
}

/// LAMB: Adam direction scaled per layer by the trust ratio.
pub fn lamb_step(
    params: &mut ParamVector,
    state: &mut OptimizerState,
    grad: &[f64],
    lr: f64,
    cfg: &OptimizerConfig,
) -> Result<()> {
    check_lengths(params.len(), grad, None)?;
    check_lr(lr)?;
    check_slot(&state.m, params.len(), "m")?;
    check_slot(&state.v, params.len(), "v")?;
    state.step += 1;
    lamb_apply(params, state, grad, lr, cfg, "lamb update")
}

/// LAMB on the GSNR-weighted gradient (same field smoothing as vr_adam).
pub fn vr_lamb_step(
    params: &mut ParamVector,
    state: &mut OptimizerState,
    grad: &[f64],
    gsnr: &[f64],
    lr: f64,
    cfg: &OptimizerConfig,
) -> Result<()> {
    check_lengths(params.len(), grad, Some(gsnr))?;
    check_lr(lr)?;
    check_slot(&state.m, params.len(), "m")?;
    check_slot(&state.v, params.len(), "v")?;
    check_slot(&state.p, params.len(), "p")?;
    state.step += 1;
    let weighted = weight_gradient_by_gsnr(state, grad, gsnr, cfg.beta3);
    lamb_apply(params, state, &weighted, lr, cfg, "vr_lamb update")
}

/// LARS core: per layer, velocity accumulates the gradient scaled by the
/// local trust ratio, then parameters move along the velocity.
fn lars_apply(
    params: &mut ParamVector,
    state: &mut OptimizerState,
    grad: &[f64],
    lr: f64,
    cfg: &OptimizerConfig,
    label: &str,
) -> Result<()> {
    state.step += 1;
    let (values, partition) = params.parts_mut();
    for seg in partition.segments() {
        let range = seg.range();
        let local = trust_ratio(
            l2_norm(&values[range.clone()]),
            l2_norm(&grad[range.clone()]),
            cfg.trust_eps,
        );
        for j in range {
            state.u[j] = cfg.momentum_coef * state.u[j] + local * grad[j];
            values[j] -= lr * state.u[j];
        }
    }
    check_finite(values, partition, label)
}

/// LARS with momentum.
pub fn lars_step(
    params: &mut ParamVector,
    state: &mut OptimizerState,
    grad: &[f64],
    lr: f64,
    cfg: &OptimizerConfig,
) -> Result<()> {
    check_lengths(params.len(), grad, None)?;
    check_lr(lr)?;
    check_slot(&state.u, params.len(), "u")?;
    lars_apply(params, state, grad, lr, cfg, "lars update")
}

/// LARS on the GSNR-weighted gradient.
pub fn vr_lars_step(
    params: &mut ParamVector,
    state: &mut OptimizerState,
    grad: &[f64],
    gsnr: &[f64],
    lr: f64,
    cfg: &OptimizerConfig,
) -> Result<()> {
    check_lengths(params.len(), grad, Some(gsnr))?;
    check_lr(lr)?;
    check_slot(&state.u, params.len(), "u")?;
    let weighted: Vec<f64> = grad.iter().zip(gsnr).map(|(g, r)| r * g).collect();
    lars_apply(params, state, &weighted, lr, cfg, "vr_lars update")
}

/// Config + state bundle that dispatches to the right step function and
/// applies optional weight decay to the raw gradient first.
#[derive(Debug, Clone)]
pub struct Optimizer {
    cfg: OptimizerConfig,
    state: OptimizerState,
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig, param_len: usize) -> Result<Self> {
        cfg.validate()?;
        let state = init_state(&cfg, param_len);
        Ok(Optimizer { cfg, state })
    }

    pub fn kind(&self) -> OptimizerKind {
        self.cfg.kind
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.cfg
    }

    pub fn state(&self) -> &OptimizerState {
        &self.state
    }

    /// One update. vr_ kinds require `gsnr`; base kinds ignore it.
    pub fn step(
        &mut self,
        params: &mut ParamVector,
        grad: &[f64],
        gsnr: Option<&[f64]>,
        lr: f64,
    ) -> Result<()> {
        use OptimizerKind::*;
        let kind = self.cfg.kind;
        let field = if kind.uses_gsnr() {
            Some(gsnr.ok_or_else(|| {
                Error::config(format!("{kind} requires a gsnr field"))
            })?)
        } else {
            None
        };

        // Optional parity knob: fold lambda_wd * theta into the raw
        // gradient before any GSNR weighting.
        let decayed;
        let g_eff: &[f64] = if self.cfg.weight_decay > 0.0 {
            check_lengths(params.len(), grad, None)?;
            decayed = grad
                .iter()
                .zip(params.values())
                .map(|(g, t)| g + self.cfg.weight_decay * t)
                .collect::<Vec<f64>>();
            &decayed
        } else {
            grad
        };

        let state = &mut self.state;
        let cfg = &self.cfg;
        match kind {
            Sgd => {
                sgd_step(params, g_eff, lr)?;
                state.step += 1;
            }
            VrSgd => {
                vr_sgd_step(params, g_eff, field.expect("checked above"), lr)?;
                state.step += 1;
            }
            Momentum => momentum_step(params, state, g_eff, lr, cfg.momentum_coef)?,
            VrMomentum => vr_momentum_step(
                params,
                state,
                g_eff,
                field.expect("checked above"),
                lr,
                cfg.momentum_coef,
            )?,
            Adam => adam_step(params, state, g_eff, lr, cfg)?,
            VrAdam => {
                vr_adam_step(params, state, g_eff, field.expect("checked above"), lr, cfg)?
            }
            Lars => lars_step(params, state, g_eff, lr, cfg)?,
            VrLars => {
                vr_lars_step(params, state, g_eff, field.expect("checked above"), lr, cfg)?
            }
            Lamb => lamb_step(params, state, g_eff, lr, cfg)?,
            VrLamb => {
                vr_lamb_step(params, state, g_eff, field.expect("checked above"), lr, cfg)?
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{make_params, InitSpec, LayerPartition};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(n: usize, seed: u64) -> ParamVector {
        let part = LayerPartition::from_layer_sizes([("a", n / 2), ("b", n - n / 2)]).unwrap();
        make_params(
            part,
            &InitSpec::Uniform {
                seed,
                bound: 2.0,
            },
        )
        .unwrap()
    }

    fn random_grad(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect()
    }

    #[test]
    fn sgd_moves_against_gradient() {
        let part = LayerPartition::single("w", 2).unwrap();
        let mut p = ParamVector::new(vec![1.0, -1.0], part).unwrap();
        sgd_step(&mut p, &[0.5, -0.25], 0.1).unwrap();
        assert_eq!(p.values(), &[1.0 - 0.05, -1.0 + 0.025]);
    }

    #[test]
    fn vr_sgd_scales_per_coordinate_learning_rate() {
        let part = LayerPartition::single("w", 2).unwrap();
        let mut p = ParamVector::new(vec![1.0, 1.0], part).unwrap();
        vr_sgd_step(&mut p, &[1.0, 1.0], &[0.5, 1.0], 0.1).unwrap();
        assert_eq!(p.values(), &[1.0 - 0.05, 1.0 - 0.1]);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point_for_every_kind() {
        for kind in OptimizerKind::ALL {
            let mut opt = Optimizer::new(OptimizerConfig::new(kind), 6).unwrap();
            let mut p = params(6, 9);
            let before = p.values().to_vec();
            let zeros = vec![0.0; 6];
            let field = vec![0.7; 6];
            for _ in 0..3 {
                opt.step(&mut p, &zeros, Some(&field), 0.5).unwrap();
            }
            assert_eq!(
                p.values(),
                before.as_slice(),
                "{kind} moved despite a zero gradient"
            );
        }
    }

    #[test]
    fn vr_kinds_reduce_to_base_bitwise_under_unit_field_sgd_momentum_lars() {
        // These three have no bias-corrected field moment, so a literal
        // all-ones field gives a bitwise identical trajectory.
        let pairs = [
            (OptimizerKind::VrSgd, OptimizerKind::Sgd),
            (OptimizerKind::VrMomentum, OptimizerKind::Momentum),
            (OptimizerKind::VrLars, OptimizerKind::Lars),
        ];
        for (vr, base) in pairs {
            let mut opt_vr = Optimizer::new(OptimizerConfig::new(vr), 8).unwrap();
            let mut opt_base = Optimizer::new(OptimizerConfig::new(base), 8).unwrap();
            let mut p_vr = params(8, 17);
            let mut p_base = p_vr.clone();
            let ones = vec![1.0; 8];
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            for _ in 0..100 {
                let g = random_grad(&mut rng, 8);
                opt_vr.step(&mut p_vr, &g, Some(&ones), 0.05).unwrap();
                opt_base.step(&mut p_base, &g, Some(&ones), 0.05).unwrap();
            }
            assert_eq!(
                p_vr.values(),
                p_base.values(),
                "{vr} with unit field must equal {base} bitwise"
            );
        }
    }

    #[test]
    fn vr_adam_and_vr_lamb_reduce_to_base_within_1e12_under_unit_field() {
        // The field moment's bias correction can wobble at the last ulp,
        // so the adam-family reduction is tested at 1e-12 rather than
        // bitwise.
        let pairs = [
            (OptimizerKind::VrAdam, OptimizerKind::Adam),
            (OptimizerKind::VrLamb, OptimizerKind::Lamb),
        ];
        for (vr, base) in pairs {
            let mut opt_vr = Optimizer::new(OptimizerConfig::new(vr), 8).unwrap();
            let mut opt_base = Optimizer::new(OptimizerConfig::new(base), 8).unwrap();
            let mut p_vr = params(8, 23);
            let mut p_base = p_vr.clone();
            let ones = vec![1.0; 8];
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            for step in 0..100 {
                let g = random_grad(&mut rng, 8);
                opt_vr.step(&mut p_vr, &g, Some(&ones), 0.05).unwrap();
                opt_base.step(&mut p_base, &g, Some(&ones), 0.05).unwrap();
                let max_abs = p_vr
                    .values()
                    .iter()
                    .zip(p_base.values())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max);
                assert!(
                    max_abs <= 1e-12,
                    "{vr} diverged from {base} by {max_abs} at step {step}"
                );
            }
        }
    }

    #[test]
    fn adam_first_step_is_signlike() {
        let part = LayerPartition::single("w", 3).unwrap();
        let mut p = ParamVector::new(vec![0.0, 0.0, 0.0], part).unwrap();
        let cfg = OptimizerConfig::new(OptimizerKind::Adam);
        let mut state = init_state(&cfg, 3);
        adam_step(&mut p, &mut state, &[0.3, -2.0, 5.0], 0.01, &cfg).unwrap();
        for (v, g) in p.values().iter().zip([0.3f64, -2.0, 5.0]) {
            assert!(
                (v + 0.01 * g.signum()).abs() < 1e-9,
                "first adam step should be ~ -lr*sign(g), got {v}"
            );
        }
        assert_eq!(state.step, 1);
    }

    #[test]
    fn vr_adam_with_beta3_zero_uses_the_instantaneous_field() {
        // beta3 = 0 makes the bias-corrected field moment equal the raw
        // field each step, so vr_adam equals adam fed gsnr .* grad.
        let mut cfg = OptimizerConfig::new(OptimizerKind::VrAdam);
        cfg.beta3 = 0.0;
        let base_cfg = OptimizerConfig::new(OptimizerKind::Adam);
        let mut p_vr = params(6, 31);
        let mut p_base = p_vr.clone();
        let mut s_vr = init_state(&cfg, 6);
        let mut s_base = init_state(&base_cfg, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let g = random_grad(&mut rng, 6);
            let r: Vec<f64> = (0..6).map(|_| rng.random_range(0.1..=1.0)).collect();
            let pre: Vec<f64> = g.iter().zip(&r).map(|(g, r)| r * g).collect();
            vr_adam_step(&mut p_vr, &mut s_vr, &g, &r, 0.02, &cfg).unwrap();
            adam_step(&mut p_base, &mut s_base, &pre, 0.02, &base_cfg).unwrap();
        }
        assert_eq!(p_vr.values(), p_base.values());
    }

    #[test]
    fn lamb_trust_ratio_scales_update_to_parameter_norm() {
        // beta1 = beta2 = 0 makes the Adam direction ~ sign(g), so a
        // single-parameter layer moves by ~ lr * |theta|.
        let part = LayerPartition::single("w", 1).unwrap();
        let mut p = ParamVector::new(vec![2.0], part).unwrap();
        let mut cfg = OptimizerConfig::new(OptimizerKind::Lamb);
        cfg.beta1 = 0.0;
        cfg.beta2 = 0.0;
        let mut state = init_state(&cfg, 1);
        lamb_step(&mut p, &mut state, &[3.0], 0.1, &cfg).unwrap();
        let moved = 2.0 - p.values()[0];
        assert!(
            (moved - 0.1 * 2.0).abs() < 1e-7,
            "expected ~0.2 movement, got {moved}"
        );
    }

    #[test]
    fn trust_ratio_is_one_for_zero_layers() {
        assert_eq!(trust_ratio(0.0, 5.0, 1e-9), 1.0);
        let r = trust_ratio(2.0, 4.0, 1e-9);
        assert!((r - 0.5).abs() < 1e-9);
    }

    #[test]
    fn lars_moves_fresh_zero_parameters() {
        let part = LayerPartition::single("w", 2).unwrap();
        let mut p = ParamVector::new(vec![0.0, 0.0], part).unwrap();
        let cfg = OptimizerConfig::new(OptimizerKind::Lars);
        let mut state = init_state(&cfg, 2);
        lars_step(&mut p, &mut state, &[1.0, -1.0], 0.1, &cfg).unwrap();
        assert_eq!(p.values(), &[-0.1, 0.1]);
    }

    #[test]
    fn steps_are_pure_state_transitions() {
        for kind in OptimizerKind::ALL {
            let cfg = OptimizerConfig::new(kind);
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let g = random_grad(&mut rng, 6);
            let r: Vec<f64> = (0..6).map(|_| rng.random_range(0.1..=1.0)).collect();

            let mut opt_a = Optimizer::new(cfg.clone(), 6).unwrap();
            let mut opt_b = Optimizer::new(cfg, 6).unwrap();
            let mut p_a = params(6, 13);
            let mut p_b = p_a.clone();
            for _ in 0..5 {
                opt_a.step(&mut p_a, &g, Some(&r), 0.03).unwrap();
                opt_b.step(&mut p_b, &g, Some(&r), 0.03).unwrap();
            }
            assert_eq!(p_a.values(), p_b.values(), "{kind} is not deterministic");
            assert_eq!(opt_a.state(), opt_b.state(), "{kind} state diverged");
        }
    }

    #[test]
    fn unused_state_slots_stay_empty() {
        let cfg = OptimizerConfig::new(OptimizerKind::Sgd);
        let s = init_state(&cfg, 10);
        assert!(s.m.is_empty() && s.v.is_empty() && s.p.is_empty() && s.u.is_empty());

        let cfg = OptimizerConfig::new(OptimizerKind::Adam);
        let s = init_state(&cfg, 10);
        assert_eq!(s.m.len(), 10);
        assert_eq!(s.v.len(), 10);
        assert!(s.p.is_empty() && s.u.is_empty());

        let cfg = OptimizerConfig::new(OptimizerKind::VrAdam);
        let s = init_state(&cfg, 10);
        assert_eq!(s.p.len(), 10);
    }

    #[test]
    fn vr_kinds_demand_a_field() {
        let mut opt = Optimizer::new(OptimizerConfig::new(OptimizerKind::VrSgd), 4).unwrap();
        let mut p = params(4, 1);
        let g = vec![0.1; 4];
        assert!(matches!(
            opt.step(&mut p, &g, None, 0.1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn weight_decay_adds_theta_scaled_gradient() {
        let part = LayerPartition::single("w", 1).unwrap();
        let mut cfg = OptimizerConfig::new(OptimizerKind::Sgd);
        cfg.weight_decay = 0.5;
        let mut opt = Optimizer::new(cfg, 1).unwrap();
        let mut p = ParamVector::new(vec![2.0], part).unwrap();
        // g_eff = 1 + 0.5*2 = 2; theta <- 2 - 0.1*2 = 1.8
        opt.step(&mut p, &[1.0], None, 0.1).unwrap();
        assert!((p.values()[0] - 1.8).abs() < 1e-15);
    }

    #[test]
    fn divergence_reports_the_offending_layer() {
        let part = LayerPartition::from_layer_sizes([("head", 1), ("tail", 1)]).unwrap();
        let mut p = ParamVector::new(vec![0.0, 1e308], part).unwrap();
        let err = sgd_step(&mut p, &[0.0, -1e308], 10.0).unwrap_err();
        match err {
            Error::Numeric { location, .. } => assert_eq!(location, "tail"),
            other => panic!("expected numeric error, got {other:?}"),
        }
    }

    #[test]
    fn config_validation_catches_bad_values() {
        let mut cfg = OptimizerConfig::new(OptimizerKind::Adam);
        cfg.beta1 = 1.0;
        assert!(cfg.validate().is_err());
        cfg.beta1 = 0.9;
        cfg.gamma = 0.0;
        assert!(cfg.validate().is_err());
        cfg.gamma = 0.1;
        cfg.eps_adam = 0.0;
        assert!(cfg.validate().is_err());
    }
}
