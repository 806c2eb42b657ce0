//! Integration of the gradient-flow inference dynamics `ż = -∂F/∂z`.
//!
//! Two integrators are provided: fixed-step forward Euler and adaptive Heun
//! (an explicit second-order Runge-Kutta pair with an embedded Euler result
//! for error estimation) driven by a PID step-size controller. Integration
//! always runs to the configured horizon `t_max`; gradient-norm early
//! stopping is opt-in.

use ndarray::Array2;

use crate::energy::{activity_grad, ActivityGradient};
use crate::error::{Error, Result};
use crate::network::{ActivityState, Network};
use crate::real::Real;

/// Default cap on solver steps (accepted + rejected attempts).
pub const DEFAULT_MAX_STEPS: usize = 100_000;
/// Default relative tolerance for the adaptive error norm.
pub const DEFAULT_RTOL: f64 = 1e-3;
/// Default absolute tolerance for the adaptive error norm.
pub const DEFAULT_ATOL: f64 = 1e-6;

/// Which integrator drives inference.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverKind {
    Euler,
    Heun,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Euler => "euler",
            SolverKind::Heun => "heun",
        }
    }

    pub fn parse(s: &str) -> Option<SolverKind> {
        match s {
            "euler" => Some(SolverKind::Euler),
            "heun" => Some(SolverKind::Heun),
            _ => None,
        }
    }
}

impl std::fmt::Display for SolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Step-size controller coefficients.
///
/// The accept/shrink factor after a step with scaled error ratio `r` is
///
/// ```text
/// clamp(safety * r^(-i/(q+1)) * r_prev^(-p/(q+1)) * r_prev2^(-d/(q+1)),
///       factor_min, factor_max)
/// ```
///
/// where `q` is the method order and missing memory terms count as 1. The
/// defaults reduce this to the elementary integral controller.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PidCoeffs {
    pub p: f64,
    pub i: f64,
    pub d: f64,
    pub safety: f64,
    pub factor_min: f64,
    pub factor_max: f64,
}

impl Default for PidCoeffs {
    fn default() -> Self {
        Self {
            p: 0.0,
            i: 1.0,
            d: 0.0,
            safety: 0.9,
            factor_min: 0.2,
            factor_max: 10.0,
        }
    }
}

/// Error-ratio memory of the controller: ratios of the two most recent step
/// attempts (accepted or rejected).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ControllerState {
    prev: Option<f64>,
    prev2: Option<f64>,
}

impl ControllerState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, err_ratio: f64) {
        self.prev2 = self.prev;
        self.prev = Some(err_ratio);
    }
}

/// Full integrator configuration.
///
/// Euler ignores `rtol`, `atol` and `controller` (fixed step). For both
/// integrators the final step is truncated so the trajectory lands exactly on
/// `t_max`; for Euler this makes the step count exactly `ceil(t_max / dt0)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub kind: SolverKind,
    /// Fixed step (Euler) or initial step (Heun).
    pub dt0: f64,
    /// Upper integration limit `T`.
    pub t_max: f64,
    pub rtol: f64,
    pub atol: f64,
    pub controller: PidCoeffs,
    /// Cap on total step attempts, accepted plus rejected.
    pub max_steps: usize,
    /// Stop once the max-norm of the activity gradient falls below this.
    pub early_stop_grad_norm: Option<f64>,
}

impl SolverConfig {
    pub fn euler(dt: f64, t_max: f64) -> Self {
        Self {
            kind: SolverKind::Euler,
            dt0: dt,
            t_max,
            rtol: DEFAULT_RTOL,
            atol: DEFAULT_ATOL,
            controller: PidCoeffs::default(),
            max_steps: DEFAULT_MAX_STEPS,
            early_stop_grad_norm: None,
        }
    }

    pub fn heun(dt0: f64, t_max: f64) -> Self {
        Self {
            kind: SolverKind::Heun,
            ..Self::euler(dt0, t_max)
        }
    }

    pub fn with_tolerances(mut self, rtol: f64, atol: f64) -> Self {
        self.rtol = rtol;
        self.atol = atol;
        self
    }

    pub fn with_early_stop(mut self, grad_norm: f64) -> Self {
        self.early_stop_grad_norm = Some(grad_norm);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt0 > 0.0) || !self.dt0.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "dt0 must be positive and finite, got {}",
                self.dt0
            )));
        }
        if !(self.t_max > 0.0) || !self.t_max.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "t_max must be positive and finite, got {}",
                self.t_max
            )));
        }
        if self.dt0 > self.t_max {
            return Err(Error::InvalidArgument(format!(
                "dt0 = {} exceeds t_max = {}",
                self.dt0, self.t_max
            )));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidArgument("max_steps must be at least 1".into()));
        }
        if let Some(g) = self.early_stop_grad_norm {
            if !(g >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "early_stop_grad_norm must be non-negative, got {g}"
                )));
            }
        }
        if self.kind == SolverKind::Heun {
            if !(self.rtol > 0.0) || !(self.atol > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "tolerances must be positive, got rtol={} atol={}",
                    self.rtol, self.atol
                )));
            }
            let c = &self.controller;
            if !(c.safety > 0.0 && c.safety <= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "safety must lie in (0, 1], got {}",
                    c.safety
                )));
            }
            if !(c.factor_min > 0.0 && c.factor_min < 1.0 && c.factor_max > 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "need 0 < factor_min < 1 < factor_max, got {} and {}",
                    c.factor_min, c.factor_max
                )));
            }
        }
        Ok(())
    }
}

/// Counters and diagnostics from one `solve_inference` call.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SolveStats {
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub rhs_evaluations: usize,
    /// Max-norm of the activity gradient at the last evaluation.
    pub final_grad_norm: f64,
    pub t_reached: f64,
}

/// One forward-Euler step `z_ℓ ← z_ℓ - dt · grad_ℓ` on every free level.
pub fn euler_step<F: Real>(
    state: &ActivityState<F>,
    grad: &ActivityGradient<F>,
    dt: f64,
) -> Result<ActivityState<F>> {
    if !(dt >= 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "dt must be non-negative and finite, got {dt}"
        )));
    }
    if !grad.matches_state(state) {
        return Err(Error::ShapeMismatch {
            layer: 0,
            details: "gradient does not mirror the activity state".into(),
        });
    }
    if dt == 0.0 {
        return Ok(state.clone());
    }
    apply_flow(state, grad, F::from_f64(-dt))
}

/// Adds `coeff * grad` to every free level, erroring on non-finite results.
fn apply_flow<F: Real>(
    state: &ActivityState<F>,
    grad: &ActivityGradient<F>,
    coeff: F,
) -> Result<ActivityState<F>> {
    let mut next = state.clone();
    for level in state.free_levels().collect::<Vec<_>>() {
        let updated: Array2<F> = state.activity(level) + &(grad.grad(level) * coeff);
        if updated.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step: 0 });
        }
        *next.activity_mut(level) = updated;
    }
    Ok(next)
}

/// Same as [`apply_flow`] with two gradients, for the Heun combination step.
fn apply_flow2<F: Real>(
    state: &ActivityState<F>,
    g1: &ActivityGradient<F>,
    g2: &ActivityGradient<F>,
    c1: F,
    c2: F,
) -> Result<ActivityState<F>> {
    let mut next = state.clone();
    for level in state.free_levels().collect::<Vec<_>>() {
        let updated: Array2<F> =
            state.activity(level) + &(g1.grad(level) * c1) + &(g2.grad(level) * c2);
        if updated.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step: 0 });
        }
        *next.activity_mut(level) = updated;
    }
    Ok(next)
}

/// One Heun step. With `k1 = -rhs(z)` and `k2 = -rhs(z + dt k1)`:
///
/// ```text
/// z' = z + (dt/2)(k1 + k2)
/// error_estimate = (dt/2)(k2 - k1)
/// ```
///
/// the latter being the difference between the second-order result and the
/// embedded Euler result, shaped like an activity gradient.
pub fn heun_step<F: Real>(
    state: &ActivityState<F>,
    mut rhs: impl FnMut(&ActivityState<F>) -> Result<ActivityGradient<F>>,
    dt: f64,
) -> Result<(ActivityState<F>, ActivityGradient<F>)> {
    let g1 = rhs(state)?;
    let g2 = heun_trial_grad(state, &g1, &mut rhs, dt)?;
    heun_combine(state, &g1, &g2, dt)
}

fn heun_trial_grad<F: Real>(
    state: &ActivityState<F>,
    g1: &ActivityGradient<F>,
    rhs: &mut impl FnMut(&ActivityState<F>) -> Result<ActivityGradient<F>>,
    dt: f64,
) -> Result<ActivityGradient<F>> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "dt must be positive and finite, got {dt}"
        )));
    }
    if !g1.matches_state(state) {
        return Err(Error::ShapeMismatch {
            layer: 0,
            details: "gradient does not mirror the activity state".into(),
        });
    }
    let trial = apply_flow(state, g1, F::from_f64(-dt))?;
    rhs(&trial)
}

fn heun_combine<F: Real>(
    state: &ActivityState<F>,
    g1: &ActivityGradient<F>,
    g2: &ActivityGradient<F>,
    dt: f64,
) -> Result<(ActivityState<F>, ActivityGradient<F>)> {
    let half = F::from_f64(-dt / 2.0);
    let next = apply_flow2(state, g1, g2, half, half)?;
    // (dt/2)(k2 - k1) with k = -g.
    let err = ActivityGradient::combine(g1, g2, F::from_f64(dt / 2.0), F::from_f64(-dt / 2.0));
    Ok((next, err))
}

/// Step factor from the PID controller for a step of the given method order.
/// The step is accepted iff `err_ratio <= 1`; either way the next step is
/// scaled by the returned factor.
pub fn pid_adapt(err_ratio: f64, memory: &ControllerState, coeffs: &PidCoeffs, order: u32) -> f64 {
    let k = (order + 1) as f64;
    let prev = memory.prev.unwrap_or(1.0);
    let prev2 = memory.prev2.unwrap_or(1.0);
    let factor = coeffs.safety
        * err_ratio.powf(-coeffs.i / k)
        * prev.powf(-coeffs.p / k)
        * prev2.powf(-coeffs.d / k);
    if factor.is_nan() {
        coeffs.factor_min
    } else {
        factor.clamp(coeffs.factor_min, coeffs.factor_max)
    }
}

/// RMS of `err / (atol + rtol * max(|z_old|, |z_new|))` over all free-level
/// entries. A step is acceptable when this is at most 1.
pub fn scaled_error_norm<F: Real>(
    err: &ActivityGradient<F>,
    z_old: &ActivityState<F>,
    z_new: &ActivityState<F>,
    rtol: f64,
    atol: f64,
) -> f64 {
    let mut acc = 0.0_f64;
    let mut count = 0usize;
    for level in z_old.free_levels() {
        let e = err.grad(level);
        let old = z_old.activity(level);
        let new = z_new.activity(level);
        for ((&ev, &ov), &nv) in e.iter().zip(old.iter()).zip(new.iter()) {
            let scale = atol + rtol * ov.abs().to_f64().max(nv.abs().to_f64());
            let r = ev.to_f64() / scale;
            acc += r * r;
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        (acc / count as f64).sqrt()
    }
}

/// Integrates `ż = -activity_grad` from `t = 0` to `t = t_max` and returns
/// the equilibrated activities plus statistics.
pub fn solve_inference<F: Real>(
    network: &Network<F>,
    state: &ActivityState<F>,
    config: &SolverConfig,
) -> Result<(ActivityState<F>, SolveStats)> {
    solve_inference_observed(network, state, config, |_, _| {})
}

/// [`solve_inference`] with a callback invoked after every accepted step with
/// the current state and time. Used for trajectory recording.
pub fn solve_inference_observed<F: Real>(
    network: &Network<F>,
    state: &ActivityState<F>,
    config: &SolverConfig,
    mut observe: impl FnMut(&ActivityState<F>, f64),
) -> Result<(ActivityState<F>, SolveStats)> {
    config.validate()?;
    network.check_state(state)?;
    if !state.clamped_output() {
        return Err(Error::OutputNotClamped);
    }
    match config.kind {
        SolverKind::Euler => euler_solve(network, state, config, &mut observe),
        SolverKind::Heun => heun_solve(network, state, config, &mut observe),
    }
}

fn at_step(err: Error, step: usize) -> Error {
    match err {
        Error::Divergence { .. } => Error::Divergence { step },
        other => other,
    }
}

fn euler_solve<F: Real>(
    network: &Network<F>,
    state: &ActivityState<F>,
    config: &SolverConfig,
    observe: &mut impl FnMut(&ActivityState<F>, f64),
) -> Result<(ActivityState<F>, SolveStats)> {
    let mut stats = SolveStats::default();
    // Guard against `t_max/dt0` ratios like 200.0000000000003.
    let n_steps = ((config.t_max / config.dt0) - 1e-9).ceil().max(1.0) as usize;
    let mut z = state.clone();
    for k in 0..n_steps {
        if k >= config.max_steps {
            stats.t_reached = k as f64 * config.dt0;
            return Err(Error::Budget {
                max_steps: config.max_steps,
                stats,
            });
        }
        let g = activity_grad(network, &z)?;
        stats.rhs_evaluations += 1;
        let gnorm = g.max_norm();
        if let Some(threshold) = config.early_stop_grad_norm {
            if gnorm <= threshold {
                stats.final_grad_norm = gnorm;
                stats.t_reached = k as f64 * config.dt0;
                return Ok((z, stats));
            }
        }
        let t = k as f64 * config.dt0;
        let h = config.dt0.min(config.t_max - t);
        z = euler_step(&z, &g, h).map_err(|e| at_step(e, k))?;
        stats.accepted_steps += 1;
        observe(&z, (t + h).min(config.t_max));
    }
    stats.t_reached = config.t_max;
    let g = activity_grad(network, &z)?;
    stats.rhs_evaluations += 1;
    stats.final_grad_norm = g.max_norm();
    Ok((z, stats))
}

fn heun_solve<F: Real>(
    network: &Network<F>,
    state: &ActivityState<F>,
    config: &SolverConfig,
    observe: &mut impl FnMut(&ActivityState<F>, f64),
) -> Result<(ActivityState<F>, SolveStats)> {
    let mut stats = SolveStats::default();
    let mut z = state.clone();
    let mut t = 0.0_f64;
    let mut h = config.dt0;
    let mut controller = ControllerState::new();
    // Gradient at the current position, reused across rejected attempts.
    let mut g1_cache: Option<ActivityGradient<F>> = None;
    let t_end = config.t_max * (1.0 - 1e-12);

    while t < t_end {
        let attempt = stats.accepted_steps + stats.rejected_steps;
        if attempt >= config.max_steps {
            stats.t_reached = t;
            return Err(Error::Budget {
                max_steps: config.max_steps,
                stats,
            });
        }
        let g1 = match g1_cache.take() {
            Some(g) => g,
            None => {
                stats.rhs_evaluations += 1;
                activity_grad(network, &z)?
            }
        };
        let gnorm = g1.max_norm();
        if let Some(threshold) = config.early_stop_grad_norm {
            if gnorm <= threshold {
                stats.final_grad_norm = gnorm;
                stats.t_reached = t;
                return Ok((z, stats));
            }
        }
        let h_step = h.min(config.t_max - t);
        let g2 = {
            stats.rhs_evaluations += 1;
            heun_trial_grad(&z, &g1, &mut |s| activity_grad(network, s), h_step)
                .map_err(|e| at_step(e, attempt))?
        };
        let (z_new, err) = heun_combine(&z, &g1, &g2, h_step).map_err(|e| at_step(e, attempt))?;
        let ratio = scaled_error_norm(&err, &z, &z_new, config.rtol, config.atol);
        let factor = pid_adapt(ratio, &controller, &config.controller, 2);
        controller.record(ratio);
        if ratio <= 1.0 {
            z = z_new;
            t = if config.t_max - t <= h_step * (1.0 + 1e-12) {
                config.t_max
            } else {
                t + h_step
            };
            stats.accepted_steps += 1;
            observe(&z, t);
        } else {
            stats.rejected_steps += 1;
            g1_cache = Some(g1);
        }
        h = h_step * factor;
    }
    stats.t_reached = config.t_max;
    let g = activity_grad(network, &z)?;
    stats.rhs_evaluations += 1;
    stats.final_grad_norm = g.max_norm();
    Ok((z, stats))
}
