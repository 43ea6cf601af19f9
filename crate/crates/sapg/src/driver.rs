//! The projected stochastic approximation driver.
//!
//! Each outer iteration freezes θ, advances the posterior chain (and the
//! prior chain, for the inhomogeneous estimator) by the batch size of the
//! iteration, averages the two estimator terms over the batch, and applies
//! a projected gradient step. Chains are warm-started across iterations.
//! The reported output is the step-size-weighted average of the visited
//! iterates, which is the quantity the objective-gap guarantees speak to.

use std::time::Instant;

use crate::model::{project_theta, EstimatorVariant, ProblemInstance};
use crate::samplers::{run_chain, validate_admissibility, ChainState, KernelConfig, KernelKind};
use crate::{Error, Result};

/// Step-size exponents accepted as "boundary valid" with this slack, so
/// that power-law families sitting exactly on a published boundary
/// (summability with margin zero) validate.
const BOUNDARY_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchMode {
    /// Batch size grows as a power law (`c > 0`).
    Increasing,
    /// Constant batch size (`c = 0`), with its own admissible exponent
    /// window.
    Fixed,
}

impl BatchMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            BatchMode::Increasing => "increasing",
            BatchMode::Fixed => "fixed",
        }
    }
}

/// Power-law schedule family:
/// `δ_n = δ₀(n+1)^{−a}`, `γ_n = γ₀(n+1)^{−b}`, `m_n = ⌈m₀(n+1)^c⌉`.
/// The sequences are nonincreasing / nondecreasing by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub delta0: f64,
    pub gamma0: f64,
    pub m0: u64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub batch_mode: BatchMode,
}

impl Schedule {
    pub fn new(
        delta0: f64,
        gamma0: f64,
        m0: u64,
        a: f64,
        b: f64,
        c: f64,
        batch_mode: BatchMode,
    ) -> Result<Self> {
        if !(delta0 > 0.0) || !(gamma0 > 0.0) {
            return Err(Error::InvalidArgument(
                "delta0 and gamma0 must be positive".into(),
            ));
        }
        if m0 == 0 {
            return Err(Error::InvalidArgument(
                "m0 must be a positive integer".into(),
            ));
        }
        if a < 0.0 || b < 0.0 || c < 0.0 {
            return Err(Error::InvalidArgument(
                "schedule exponents must be nonnegative".into(),
            ));
        }
        if batch_mode == BatchMode::Fixed && c != 0.0 {
            return Err(Error::InvalidArgument(
                "fixed batch mode requires c = 0".into(),
            ));
        }
        Ok(Self {
            delta0,
            gamma0,
            m0,
            a,
            b,
            c,
            batch_mode,
        })
    }

    /// Constant-step, constant-batch schedule (a = b = c = 0). It fails the
    /// summability conditions and is only runnable behind the explicit
    /// override used by the plateau experiments.
    pub fn constant(delta0: f64, gamma0: f64, m0: u64) -> Result<Self> {
        Self::new(delta0, gamma0, m0, 0.0, 0.0, 0.0, BatchMode::Fixed)
    }

    pub fn delta(&self, n: u64) -> f64 {
        self.delta0 * ((n + 1) as f64).powf(-self.a)
    }

    pub fn gamma(&self, n: u64) -> f64 {
        self.gamma0 * ((n + 1) as f64).powf(-self.b)
    }

    pub fn batch(&self, n: u64) -> u64 {
        (self.m0 as f64 * ((n + 1) as f64).powf(self.c)).ceil() as u64
    }

    pub fn is_constant_step(&self) -> bool {
        self.a == 0.0 && self.b == 0.0 && self.c == 0.0
    }

    /// Total kernel steps over `n` outer iterations (posterior chain only).
    pub fn total_kernel_steps(&self, iterations: u64) -> u64 {
        (0..iterations).map(|n| self.batch(n)).sum()
    }
}

/// One validated summability condition with its margin (positive means
/// satisfied with room).
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub name: String,
    pub satisfied: bool,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleReport {
    pub mode: BatchMode,
    pub conditions: Vec<ConditionReport>,
    pub valid: bool,
}

impl ScheduleReport {
    pub fn first_violation(&self) -> Option<&ConditionReport> {
        self.conditions.iter().find(|c| !c.satisfied)
    }
}

fn condition(name: &str, margin: f64) -> ConditionReport {
    ConditionReport {
        name: name.to_string(),
        satisfied: margin > -BOUNDARY_SLACK,
        margin,
    }
}

/// Check the summability conditions for almost-sure convergence of the
/// driver under the schedule's batch mode.
///
/// Increasing batches: `a + b/2 > 1`, `a − b + c > 1`, `a ≤ 1`.
/// Fixed batches (`c = 0`): `a ∈ (5/6, 1]` and
/// `b ∈ (2(1−a), min(a − 1/2, a/2))`.
/// Strict inequalities are evaluated with a 1e-9 slack so families placed
/// exactly on a boundary validate with zero margin.
pub fn validate_schedule(s: &Schedule) -> ScheduleReport {
    let conditions = match s.batch_mode {
        BatchMode::Increasing => vec![
            condition("a + b/2 > 1", s.a + s.b / 2.0 - 1.0),
            condition("a - b + c > 1", s.a - s.b + s.c - 1.0),
            condition("a <= 1", 1.0 - s.a),
        ],
        BatchMode::Fixed => {
            let upper = (s.a - 0.5).min(s.a / 2.0);
            vec![
                condition("a > 5/6", s.a - 5.0 / 6.0),
                condition("a <= 1", 1.0 - s.a),
                condition("b > 2(1 - a)", s.b - 2.0 * (1.0 - s.a)),
                condition("b < min(a - 1/2, a/2)", upper - s.b),
            ]
        }
    };
    let valid = conditions.iter().all(|c| c.satisfied);
    ScheduleReport {
        mode: s.batch_mode,
        conditions,
        valid,
    }
}

/// Projected update `θ' = Π_Θ[θ − δ·estimate]`; the elementary move the
/// driver makes once per outer iteration.
pub fn apply_update(
    domain: &crate::model::ParameterDomain,
    theta: &[f64],
    delta: f64,
    estimate: &[f64],
) -> Result<Vec<f64>> {
    if estimate.len() != theta.len() {
        return Err(Error::InvalidArgument(format!(
            "gradient estimate has length {}, theta has length {}",
            estimate.len(),
            theta.len()
        )));
    }
    let stepped: Vec<f64> = theta
        .iter()
        .zip(estimate)
        .map(|(t, g)| t - delta * g)
        .collect();
    project_theta(domain, &stepped)
}

/// Driver state across outer iterations.
#[derive(Debug, Clone)]
pub struct SapgState {
    pub theta: Vec<f64>,
    theta_bar_num: Vec<f64>,
    delta_sum: f64,
    pub posterior_chain: ChainState,
    pub prior_chain: Option<ChainState>,
    pub iteration: u64,
}

impl SapgState {
    pub fn new(
        theta0: Vec<f64>,
        posterior_chain: ChainState,
        prior_chain: Option<ChainState>,
    ) -> Self {
        let d = theta0.len();
        Self {
            theta: theta0,
            theta_bar_num: vec![0.0; d],
            delta_sum: 0.0,
            posterior_chain,
            prior_chain,
            iteration: 0,
        }
    }

    /// Weighted average of the visited iterates,
    /// `Σ δ_n θ_n / Σ δ_n` over the iterations run so far.
    pub fn theta_bar(&self) -> Result<Vec<f64>> {
        if self.delta_sum <= 0.0 {
            return Err(Error::InvalidArgument(
                "averaged iterate undefined before the first iteration".into(),
            ));
        }
        Ok(self
            .theta_bar_num
            .iter()
            .map(|v| v / self.delta_sum)
            .collect())
    }

    pub fn delta_sum(&self) -> f64 {
        self.delta_sum
    }
}

/// Per-iteration record. `elapsed_s` is wall-clock and therefore excluded
/// from the deterministic trace artifact (it lands in `timing.csv`).
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub n: u64,
    pub theta: Vec<f64>,
    pub theta_bar: Vec<f64>,
    pub gamma: f64,
    pub delta: f64,
    pub m: u64,
    pub grad_estimate: Vec<f64>,
    pub elapsed_s: f64,
}

/// Full run trace, one record per outer iteration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunTrace {
    pub records: Vec<IterationRecord>,
}

impl RunTrace {
    /// Recompute the averaged iterate from the recorded (δ_n, θ_n) columns;
    /// the streaming accumulator must agree with this to full precision.
    pub fn theta_bar_recomputed(&self) -> Result<Vec<f64>> {
        if self.records.is_empty() {
            return Err(Error::InvalidArgument("empty trace".into()));
        }
        let d = self.records[0].theta.len();
        let mut num = vec![0.0; d];
        let mut den = 0.0;
        for r in &self.records {
            for (acc, t) in num.iter_mut().zip(&r.theta) {
                *acc += r.delta * t;
            }
            den += r.delta;
        }
        Ok(num.into_iter().map(|v| v / den).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub theta_bar: Vec<f64>,
    pub final_theta: Vec<f64>,
    pub trace: RunTrace,
    pub total_kernel_steps: u64,
}

/// One outer iteration at the frozen `state.theta`:
/// run the batch, average the estimator terms, apply the projected update,
/// and fold `δ_n θ_n` into the averaged-iterate accumulator.
pub fn sapg_iteration(
    instance: &ProblemInstance,
    kind: KernelKind,
    kappa: f64,
    schedule: &Schedule,
    state: &mut SapgState,
) -> Result<IterationRecord> {
    let started = Instant::now();
    let n = state.iteration;
    let gamma_n = schedule.gamma(n);
    let delta_n = schedule.delta(n);
    let delta_next = schedule.delta(n + 1);
    let m_n = schedule.batch(n);
    let cfg = KernelConfig::new(kind, gamma_n, kappa)?;
    validate_admissibility(&instance.model, &cfg)?;

    let theta_n = state.theta.clone();
    let d_theta = theta_n.len();

    // The averaged iterate weights θ_n by δ_n, before the update.
    for (acc, t) in state.theta_bar_num.iter_mut().zip(&theta_n) {
        *acc += delta_n * t;
    }
    state.delta_sum += delta_n;

    let stat = instance.estimator.statistic_fn();
    let post_summary = run_chain(
        &instance.model,
        &theta_n,
        &cfg,
        &mut state.posterior_chain,
        m_n,
        &|t, x| stat(t, x),
    )?;
    let mut estimate: Vec<f64> = post_summary
        .stat_sum
        .iter()
        .map(|s| s / m_n as f64)
        .collect();

    match instance.estimator.variant() {
        EstimatorVariant::Inhomogeneous => {
            let prior_cfg = cfg.for_prior();
            validate_admissibility(&instance.model, &prior_cfg)?;
            let prior_chain = state.prior_chain.as_mut().ok_or_else(|| {
                Error::InvalidArgument("inhomogeneous estimator requires a prior chain".into())
            })?;
            let prior_summary = run_chain(
                &instance.model,
                &theta_n,
                &prior_cfg,
                prior_chain,
                m_n,
                &|t, x| stat(t, x),
            )?;
            for (e, s) in estimate.iter_mut().zip(&prior_summary.stat_sum) {
                *e -= s / m_n as f64;
            }
        }
        _ => {
            let h_bar = instance
                .estimator
                .deterministic_prior_term(&theta_n, instance.model.dim())?;
            for (e, hb) in estimate.iter_mut().zip(&h_bar) {
                *e += hb;
            }
        }
    }
    if estimate.len() != d_theta {
        return Err(Error::InvalidArgument(
            "gradient estimate dimension mismatch".into(),
        ));
    }

    state.theta = apply_update(&instance.domain, &theta_n, delta_next, &estimate)?;
    state.iteration += 1;

    Ok(IterationRecord {
        n,
        theta: theta_n,
        theta_bar: state.theta_bar()?,
        gamma: gamma_n,
        delta: delta_n,
        m: m_n,
        grad_estimate: estimate,
        elapsed_s: started.elapsed().as_secs_f64(),
    })
}

/// Run the driver for `iterations` outer iterations and return the
/// averaged iterate with the full trace. Deterministic given the seed.
///
/// The schedule must pass [`validate_schedule`] unless
/// `allow_constant_step` is set, which admits the constant-step/-batch
/// families used by the plateau experiments.
pub fn run(
    instance: &ProblemInstance,
    kind: KernelKind,
    kappa: f64,
    schedule: &Schedule,
    iterations: u64,
    seed: u64,
    allow_constant_step: bool,
) -> Result<RunResult> {
    if iterations == 0 {
        return Err(Error::InvalidArgument(
            "at least one iteration is required: the averaged iterate is undefined on an empty weight sum"
                .into(),
        ));
    }
    let report = validate_schedule(schedule);
    if !report.valid && !allow_constant_step {
        let failed = report
            .first_violation()
            .map(|c| c.name.clone())
            .unwrap_or_default();
        return Err(Error::InvalidArgument(format!(
            "schedule fails the convergence conditions (violated: {failed}); pass the constant-step override to run anyway"
        )));
    }
    if let Some(l_f) = instance.objective_grad_lipschitz {
        if schedule.delta0 >= 1.0 / l_f {
            return Err(Error::InvalidArgument(format!(
                "delta0 = {} must stay below 1/L_f = {} for the declared objective smoothness",
                schedule.delta0,
                1.0 / l_f
            )));
        }
    }

    let theta0 = instance.domain.initial_theta();
    let x0 = instance
        .model
        .initial_state()
        .map(|s| s.to_vec())
        .unwrap_or_else(|| vec![0.0; instance.model.dim()]);
    let posterior_chain = ChainState::with_stream(x0.clone(), seed, 1);
    let prior_chain = if instance.estimator.needs_prior_chain() {
        Some(ChainState::with_stream(x0, seed, 2))
    } else {
        None
    };
    let mut state = SapgState::new(theta0, posterior_chain, prior_chain);
    let mut trace = RunTrace::default();
    let mut total_steps = 0u64;
    for _ in 0..iterations {
        let rec = sapg_iteration(instance, kind, kappa, schedule, &mut state)?;
        total_steps += rec.m;
        trace.records.push(rec);
    }
    Ok(RunResult {
        theta_bar: state.theta_bar()?,
        final_theta: state.theta.clone(),
        trace,
        total_kernel_steps: total_steps,
    })
}

/// Running averaged objective gap
/// `Σ_{k≤n} δ_k f(θ_k) / Σ_{k≤n} δ_k − f_min` for each trace prefix.
/// `f` is an oracle for the objective (scalar θ only) and `f_min` its
/// minimum over the box.
pub fn averaged_objective_gap(
    trace: &RunTrace,
    f: &dyn Fn(f64) -> f64,
    f_min: f64,
) -> Result<Vec<f64>> {
    if trace.records.is_empty() {
        return Err(Error::InvalidArgument("empty trace".into()));
    }
    if trace.records[0].theta.len() != 1 {
        return Err(Error::Unsupported(
            "objective-gap diagnostics support scalar parameters only".into(),
        ));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    let mut gaps = Vec::with_capacity(trace.records.len());
    for r in &trace.records {
        num += r.delta * f(r.theta[0]);
        den += r.delta;
        gaps.push(num / den - f_min);
    }
    Ok(gaps)
}
