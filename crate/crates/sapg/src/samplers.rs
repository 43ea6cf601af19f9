//! One-step Markov kernels and chain drivers.
//!
//! Each kernel decomposes into a deterministic drift map `T_{γ,θ}` plus
//! Gaussian noise `√(2γ) Z`. [`drift_map`] exposes the deterministic part
//! exactly, which is what the drift verifier and the coupling diagnostics
//! consume, and [`one_step_second_moment`] evaluates
//! `∫‖y‖² K(x, dy) = ‖T(x)‖² + 2γd` without sampling.
//!
//! Step-size admissibility is enforced as a hard error: every convergence
//! statement consumed downstream assumes it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::model::PotentialModel;
use crate::util::norm_sq;
use crate::{Error, Result};

/// Statistic evaluated along a chain: `(θ, x) → g(x)`.
pub type Statistic<'a> = &'a dyn Fn(&[f64], &[f64]) -> Vec<f64>;

/// Sampler family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    /// Plain unadjusted Langevin step; requires a fully smooth potential
    /// (`U ≡ 0`).
    Ula,
    /// Langevin step on `V` plus the Moreau–Yosida envelope gradient of
    /// `U` at smoothing `λ = κγ`.
    Myula,
    /// Backward (prox) step on `U` followed by a forward gradient step on
    /// `V` at the prox point.
    Pula,
}

impl KernelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            KernelKind::Ula => "ula",
            KernelKind::Myula => "myula",
            KernelKind::Pula => "pula",
        }
    }
}

/// Which potential pair the kernel targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainTarget {
    /// `V_θ + U_θ`.
    Posterior,
    /// `V̄_θ + Ū_θ`.
    Prior,
}

/// Kernel configuration: kind, step size γ, smoothing ratio κ (the
/// effective Moreau parameter is `λ = κγ`) and the targeted chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig {
    pub kind: KernelKind,
    pub gamma: f64,
    pub kappa: f64,
    pub target: ChainTarget,
}

impl KernelConfig {
    /// κ must exceed 1/2 for the envelope-smoothed kernels to inherit the
    /// admissible step range. γ = 0 is accepted as the degenerate
    /// stand-still kernel; chain drivers additionally require γ > 0 and the
    /// model-dependent step bound.
    pub fn new(kind: KernelKind, gamma: f64, kappa: f64) -> Result<Self> {
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "step size must be nonnegative and finite, got {gamma}"
            )));
        }
        if !(kappa > 0.5) || !kappa.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "smoothing ratio must exceed 1/2, got {kappa}"
            )));
        }
        Ok(Self {
            kind,
            gamma,
            kappa,
            target: ChainTarget::Posterior,
        })
    }

    pub fn for_prior(mut self) -> Self {
        self.target = ChainTarget::Prior;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }
}

/// Regularity constants of the targeted potential pair.
pub(crate) struct TargetRegularity {
    pub(crate) l: f64,
    pub(crate) m: Option<f64>,
    pub(crate) lip_u: f64,
    pub(crate) eta: Option<f64>,
    pub(crate) nonsmooth_zero: bool,
}

pub(crate) fn target_regularity(
    model: &PotentialModel,
    target: ChainTarget,
) -> Result<TargetRegularity> {
    match target {
        ChainTarget::Posterior => Ok(TargetRegularity {
            l: model.lipschitz_grad(),
            m: model.strong_convexity(),
            lip_u: model.lipschitz_nonsmooth(),
            eta: model.coercivity().map(|(eta, _)| eta),
            nonsmooth_zero: model.nonsmooth_is_zero(),
        }),
        ChainTarget::Prior => {
            let p = model.require_prior()?;
            Ok(TargetRegularity {
                l: p.lipschitz_grad,
                m: p.strong_convexity,
                lip_u: p.lipschitz_nonsmooth,
                eta: model.coercivity().map(|(eta, _)| eta),
                nonsmooth_zero: p.nonsmooth_zero,
            })
        }
    }
}

fn div_or_inf(num: f64, den: f64) -> f64 {
    if den <= 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

/// Strict upper bound on admissible step sizes for the given kernel and
/// target. Strong convexity takes precedence over coercivity when both are
/// declared.
pub fn max_step(
    model: &PotentialModel,
    kind: KernelKind,
    kappa: f64,
    target: ChainTarget,
) -> Result<f64> {
    let reg = target_regularity(model, target)?;
    let bound = match kind {
        KernelKind::Myula => {
            let envelope = div_or_inf(2.0 - 1.0 / kappa, reg.l);
            match (reg.m, reg.eta) {
                (Some(m), _) => envelope.min(div_or_inf(2.0, m + reg.l)),
                (None, Some(eta)) => envelope.min(div_or_inf(eta, 2.0 * reg.lip_u * reg.l)),
                (None, None) => {
                    return Err(Error::Unsupported(
                        "model declares neither strong convexity nor coercivity".into(),
                    ))
                }
            }
        }
        KernelKind::Pula | KernelKind::Ula => match (reg.m, reg.eta) {
            (Some(m), _) => div_or_inf(2.0, m + reg.l),
            (None, Some(_)) => div_or_inf(2.0, reg.l),
            (None, None) => {
                return Err(Error::Unsupported(
                    "model declares neither strong convexity nor coercivity".into(),
                ))
            }
        },
    };
    Ok(bound)
}

/// Hard admissibility gate: γ > 0, strictly below the step bound, and ULA
/// only on fully smooth targets.
pub fn validate_admissibility(model: &PotentialModel, cfg: &KernelConfig) -> Result<()> {
    let reg = target_regularity(model, cfg.target)?;
    if cfg.kind == KernelKind::Ula && !reg.nonsmooth_zero {
        return Err(Error::Unsupported(
            "ULA requires a smooth potential; this target has a nonsmooth part".into(),
        ));
    }
    if !(cfg.gamma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "chain steps require a positive step size, got {}",
            cfg.gamma
        )));
    }
    let cap = max_step(model, cfg.kind, cfg.kappa, cfg.target)?;
    if cfg.gamma >= cap {
        return Err(Error::InvalidArgument(format!(
            "step size {} violates the admissible bound {} for {} on this model",
            cfg.gamma,
            cap,
            cfg.kind.as_str()
        )));
    }
    Ok(())
}

fn potentials(
    model: &PotentialModel,
    target: ChainTarget,
    theta: &[f64],
    x: &[f64],
    lambda: f64,
    want_prox: bool,
) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    match target {
        ChainTarget::Posterior => {
            let g = model.smooth_grad(theta, x);
            let p = if want_prox {
                Some(model.nonsmooth_prox(theta, lambda, x))
            } else {
                None
            };
            Ok((g, p))
        }
        ChainTarget::Prior => {
            let g = model.prior_smooth_grad(theta, x)?;
            let p = if want_prox {
                Some(model.prior_nonsmooth_prox(theta, lambda, x)?)
            } else {
                None
            };
            Ok((g, p))
        }
    }
}

/// Deterministic part of the kernel update.
///
/// MYULA: `x − γ∇V(x) − γ(x − prox^{κγ}(x))/(κγ)`;
/// PULA: `prox^{κγ}(x) − γ∇V(prox^{κγ}(x))`;
/// ULA: `x − γ∇V(x)` (smooth targets only). γ = 0 degenerates to the
/// identity for all kinds.
pub fn drift_map(
    model: &PotentialModel,
    theta: &[f64],
    cfg: &KernelConfig,
    x: &[f64],
) -> Result<Vec<f64>> {
    let reg = target_regularity(model, cfg.target)?;
    if cfg.kind == KernelKind::Ula && !reg.nonsmooth_zero {
        return Err(Error::Unsupported(
            "ULA requires a smooth potential; this target has a nonsmooth part".into(),
        ));
    }
    let gamma = cfg.gamma;
    if gamma == 0.0 {
        return Ok(x.to_vec());
    }
    let lambda = cfg.kappa * gamma;
    match cfg.kind {
        KernelKind::Ula => {
            let (g, _) = potentials(model, cfg.target, theta, x, lambda, false)?;
            Ok(x.iter().zip(&g).map(|(xi, gi)| xi - gamma * gi).collect())
        }
        KernelKind::Myula => {
            let (g, p) = potentials(model, cfg.target, theta, x, lambda, true)?;
            let q = p.unwrap();
            Ok(x.iter()
                .zip(&g)
                .zip(&q)
                .map(|((xi, gi), qi)| xi - gamma * gi - gamma * (xi - qi) / lambda)
                .collect())
        }
        KernelKind::Pula => {
            let q = match cfg.target {
                ChainTarget::Posterior => model.nonsmooth_prox(theta, lambda, x),
                ChainTarget::Prior => model.prior_nonsmooth_prox(theta, lambda, x)?,
            };
            let g = match cfg.target {
                ChainTarget::Posterior => model.smooth_grad(theta, &q),
                ChainTarget::Prior => model.prior_smooth_grad(theta, &q)?,
            };
            Ok(q.iter().zip(&g).map(|(qi, gi)| qi - gamma * gi).collect())
        }
    }
}

/// Chain state: position, seeded noise stream and a step counter. The
/// trajectory is a deterministic function of the initial state, the seed
/// and the configuration sequence. `zero_noise` is the drift-only test
/// hook that is part of the kernel contract.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub x: Vec<f64>,
    rng: ChaCha8Rng,
    pub steps_taken: u64,
    zero_noise: bool,
}

impl ChainState {
    pub fn new(x0: Vec<f64>, seed: u64) -> Self {
        Self {
            x: x0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            steps_taken: 0,
            zero_noise: false,
        }
    }

    /// Seeded with an independent stream index, so several chains can share
    /// one experiment seed without sharing noise.
    pub fn with_stream(x0: Vec<f64>, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self {
            x: x0,
            rng,
            steps_taken: 0,
            zero_noise: false,
        }
    }

    /// Drift-only stepping (the zero-noise hook).
    pub fn deterministic(x0: Vec<f64>) -> Self {
        let mut s = Self::new(x0, 0);
        s.zero_noise = true;
        s
    }

    pub fn set_zero_noise(&mut self, on: bool) {
        self.zero_noise = on;
    }
}

/// Advance the chain one kernel step: `x ← T(x) + √(2γ) Z`.
pub fn step(
    model: &PotentialModel,
    theta: &[f64],
    cfg: &KernelConfig,
    state: &mut ChainState,
) -> Result<()> {
    let mut next = drift_map(model, theta, cfg, &state.x)?;
    if !state.zero_noise {
        let scale = (2.0 * cfg.gamma).sqrt();
        for v in &mut next {
            let z: f64 = state.rng.sample(StandardNormal);
            *v += scale * z;
        }
    }
    state.x = next;
    state.steps_taken += 1;
    Ok(())
}

/// One step of the prior chain (`V̄_θ`, `Ū_θ`); the prior runs at the same
/// step size as the posterior.
pub fn step_prior(
    model: &PotentialModel,
    theta: &[f64],
    cfg: &KernelConfig,
    state: &mut ChainState,
) -> Result<()> {
    let prior_cfg = cfg.for_prior();
    model.require_prior()?;
    step(model, theta, &prior_cfg, state)
}

/// Running sums of a statistic along a chain segment.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSummary {
    pub stat_sum: Vec<f64>,
    pub steps: u64,
}

impl ChainSummary {
    pub fn mean(&self) -> Vec<f64> {
        if self.steps == 0 {
            return self.stat_sum.clone();
        }
        self.stat_sum
            .iter()
            .map(|s| s / self.steps as f64)
            .collect()
    }
}

/// Apply `n` kernel steps, accumulating `statistic(θ, X_k)` over the `n`
/// freshly produced states (the warm-start state is not counted).
pub fn run_chain(
    model: &PotentialModel,
    theta: &[f64],
    cfg: &KernelConfig,
    state: &mut ChainState,
    n: u64,
    statistic: Statistic<'_>,
) -> Result<ChainSummary> {
    if n == 0 {
        return Ok(ChainSummary {
            stat_sum: Vec::new(),
            steps: 0,
        });
    }
    validate_admissibility(model, cfg)?;
    let mut sum: Option<Vec<f64>> = None;
    for _ in 0..n {
        step(model, theta, cfg, state)?;
        let s = statistic(theta, &state.x);
        match &mut sum {
            None => sum = Some(s),
            Some(acc) => {
                for (a, b) in acc.iter_mut().zip(&s) {
                    *a += b;
                }
            }
        }
    }
    Ok(ChainSummary {
        stat_sum: sum.unwrap_or_default(),
        steps: n,
    })
}

/// Exact one-step second moment `∫‖y‖² K(x, dy) = ‖T(x)‖² + 2γd`.
pub fn one_step_second_moment(
    model: &PotentialModel,
    theta: &[f64],
    cfg: &KernelConfig,
    x: &[f64],
) -> Result<f64> {
    let t = drift_map(model, theta, cfg, x)?;
    Ok(norm_sq(&t) + 2.0 * cfg.gamma * model.dim() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{centered_gaussian, gaussian_conjugate, laplace_scalar, PotentialModel};
    use crate::util::dist;
    use rand::Rng;

    fn abs_model() -> PotentialModel {
        // V = 0, U_θ = θ|x|: coercive, no strong convexity.
        PotentialModel::builder(1)
            .smooth(|_, _| 0.0, |_, x| vec![0.0; x.len()], 0.0)
            .nonsmooth(
                |t: &[f64], x: &[f64]| t[0] * x[0].abs(),
                |t: &[f64], l: f64, x: &[f64]| vec![crate::prox::soft_threshold(l * t[0], x[0])],
                5.0,
            )
            .coercivity(0.1, 0.0)
            .build()
            .unwrap()
    }

    #[test]
    fn myula_drift_on_pure_l1() {
        let m = abs_model();
        let cfg = KernelConfig::new(KernelKind::Myula, 0.1, 1.0).unwrap();
        let t = drift_map(&m, &[1.0], &cfg, &[2.0]).unwrap();
        // prox^{0.1}(2) = 1.9, envelope gradient 1, V = 0.
        assert!((t[0] - 1.9).abs() < 1e-15);
    }

    #[test]
    fn pula_drift_on_pure_quadratic() {
        let m = centered_gaussian(1).unwrap();
        let cfg = KernelConfig::new(KernelKind::Pula, 0.1, 1.0).unwrap();
        let t = drift_map(&m, &[], &cfg, &[2.0]).unwrap();
        assert!((t[0] - 1.8).abs() < 1e-15);
    }

    #[test]
    fn myula_with_zero_nonsmooth_equals_ula() {
        let m = centered_gaussian(2).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let x = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
            let gamma = rng.random_range(0.01..0.9);
            let my = KernelConfig::new(KernelKind::Myula, gamma, 1.0).unwrap();
            let ula = KernelConfig::new(KernelKind::Ula, gamma, 1.0).unwrap();
            let a = drift_map(&m, &[], &my, &x).unwrap();
            let b = drift_map(&m, &[], &ula, &x).unwrap();
            assert!(dist(&a, &b) < 1e-14);
        }
    }

    #[test]
    fn ula_rejects_nonsmooth_target() {
        let m = abs_model();
        let cfg = KernelConfig::new(KernelKind::Ula, 0.1, 1.0).unwrap();
        assert!(matches!(
            drift_map(&m, &[1.0], &cfg, &[1.0]),
            Err(crate::Error::Unsupported(_))
        ));
    }

    #[test]
    fn zero_noise_step_equals_drift() {
        let inst = laplace_scalar(2.0, 1.0).unwrap();
        let cfg = KernelConfig::new(KernelKind::Myula, 0.2, 1.0).unwrap();
        let mut st = ChainState::deterministic(vec![3.0]);
        let t = drift_map(&inst.model, &[1.0], &cfg, &[3.0]).unwrap();
        step(&inst.model, &[1.0], &cfg, &mut st).unwrap();
        assert_eq!(st.x, t);
        assert_eq!(st.steps_taken, 1);
    }

    #[test]
    fn equal_seeds_give_identical_trajectories() {
        let inst = laplace_scalar(2.0, 1.0).unwrap();
        let cfg = KernelConfig::new(KernelKind::Myula, 0.3, 1.0).unwrap();
        let mut a = ChainState::new(vec![0.0], 99);
        let mut b = ChainState::new(vec![0.0], 99);
        for _ in 0..10_000 {
            step(&inst.model, &[1.0], &cfg, &mut a).unwrap();
            step(&inst.model, &[1.0], &cfg, &mut b).unwrap();
            assert_eq!(a.x, b.x);
        }
    }

    #[test]
    fn step_mean_matches_drift_monte_carlo() {
        // Mean of X₁ over replicas equals the drift map value.
        let m = abs_model();
        let cfg = KernelConfig::new(KernelKind::Myula, 0.1, 1.0).unwrap();
        let drift = drift_map(&m, &[1.0], &cfg, &[2.0]).unwrap()[0];
        let n = 1_000_000u64;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut st = ChainState::new(vec![2.0], 1234);
        for _ in 0..n {
            st.x = vec![2.0];
            step(&m, &[1.0], &cfg, &mut st).unwrap();
            sum += st.x[0];
            sum_sq += st.x[0] * st.x[0];
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        let stderr = (var / n as f64).sqrt();
        assert!(
            (mean - drift).abs() <= 3.0 * stderr,
            "mean {mean}, drift {drift}, stderr {stderr}"
        );
        assert!((drift - 1.9).abs() < 1e-15);
    }

    #[test]
    fn second_moment_identity() {
        let m = abs_model();
        let cfg = KernelConfig::new(KernelKind::Myula, 0.1, 1.0).unwrap();
        // Drift at x=2 is 1.9: moment = 1.9² + 2·0.1·1.
        let v = one_step_second_moment(&m, &[1.0], &cfg, &[2.0]).unwrap();
        assert!((v - 3.81).abs() < 1e-12);
        // γ = 0 degenerates to ‖T(x)‖² = ‖x‖².
        let cfg0 = KernelConfig::new(KernelKind::Myula, 0.0, 1.0).unwrap();
        let v0 = one_step_second_moment(&m, &[1.0], &cfg0, &[2.0]).unwrap();
        assert!((v0 - 4.0).abs() < 1e-15);
    }

    #[test]
    fn second_moment_matches_monte_carlo() {
        let m = abs_model();
        let cfg = KernelConfig::new(KernelKind::Myula, 0.1, 1.0).unwrap();
        let exact = one_step_second_moment(&m, &[1.0], &cfg, &[2.0]).unwrap();
        let n = 1_000_000u64;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut st = ChainState::new(vec![2.0], 777);
        for _ in 0..n {
            st.x = vec![2.0];
            step(&m, &[1.0], &cfg, &mut st).unwrap();
            let v = st.x[0] * st.x[0];
            sum += v;
            sum_sq += v * v;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        let stderr = (var / n as f64).sqrt();
        assert!(
            (mean - exact).abs() <= 3.0 * stderr,
            "mc {mean}, exact {exact}, stderr {stderr}"
        );
    }

    #[test]
    fn prior_chain_contract() {
        let inst = laplace_scalar(2.0, 1.0).unwrap();
        let cfg = KernelConfig::new(KernelKind::Pula, 0.1, 1.0).unwrap();
        // Prior PULA drift is the prox alone (V̄ = 0): soft(2, 0.1·1) = 1.9.
        let mut st = ChainState::deterministic(vec![2.0]);
        step_prior(&inst.model, &[1.0], &cfg, &mut st).unwrap();
        assert!((st.x[0] - 1.9).abs() < 1e-15);
        // Prior MYULA with Ū = 0 is pure diffusion.
        let smooth_prior =
            crate::model::PriorSplit::nonsmooth_only(|_, _| 0.0, |_, _, x: &[f64]| x.to_vec(), 0.0);
        let m2 = PotentialModel::builder(1)
            .smooth(|_, x| 0.5 * x[0] * x[0], |_, x| x.to_vec(), 1.0)
            .nonsmooth_zero()
            .strong_convexity(1.0)
            .prior_split(smooth_prior)
            .build()
            .unwrap();
        let cfg_my = KernelConfig::new(KernelKind::Myula, 0.1, 1.0).unwrap();
        let mut st2 = ChainState::deterministic(vec![1.5]);
        step_prior(&m2, &[], &cfg_my, &mut st2).unwrap();
        assert_eq!(st2.x, vec![1.5]);
        // Missing prior split is an unsupported configuration.
        let m3 = centered_gaussian(1).unwrap();
        let mut st3 = ChainState::deterministic(vec![0.0]);
        assert!(step_prior(&m3, &[], &cfg_my, &mut st3).is_err());
    }

    #[test]
    fn run_chain_summary_contract() {
        let inst = laplace_scalar(2.0, 1.0).unwrap();
        let cfg = KernelConfig::new(KernelKind::Myula, 0.2, 1.0).unwrap();
        let g = |t: &[f64], x: &[f64]| inst.estimator.statistic(t, x);

        let mut st = ChainState::new(vec![0.5], 5);
        let before = st.clone();
        let s0 = run_chain(&inst.model, &[1.0], &cfg, &mut st, 0, &g).unwrap();
        assert_eq!(s0.steps, 0);
        assert!(s0.stat_sum.is_empty());
        assert_eq!(st.x, before.x);

        let s1 = run_chain(&inst.model, &[1.0], &cfg, &mut st, 1, &g).unwrap();
        assert_eq!(s1.steps, 1);
        assert!((s1.stat_sum[0] - st.x[0].abs()).abs() < 1e-15);
    }

    #[test]
    fn run_chain_long_run_mean_matches_quadrature() {
        // Small-step long chain: the empirical mean of g agrees with the
        // quadrature posterior expectation within Monte Carlo error.
        let inst = gaussian_conjugate(2.0, 1.0).unwrap();
        let theta = [1.0];
        let cfg = KernelConfig::new(KernelKind::Myula, 1e-3, 1.0).unwrap();
        let oracle =
            crate::oracle::posterior_expectation_1d(&inst.model, &theta, &|x| 0.5 * x * x).unwrap();
        let mut chain = ChainState::new(vec![1.0], 51);
        let n = 1_000_000u64;
        let g = |t: &[f64], x: &[f64]| inst.estimator.statistic(t, x);
        // Burn-in then measure with batch means for the standard error.
        run_chain(&inst.model, &theta, &cfg, &mut chain, 100_000, &g).unwrap();
        let batches = 20;
        let mut means = Vec::new();
        for _ in 0..batches {
            let s = run_chain(&inst.model, &theta, &cfg, &mut chain, n / batches, &g).unwrap();
            means.push(s.mean()[0]);
        }
        let mean = crate::util::mean(&means);
        let var =
            means.iter().map(|b| (b - mean) * (b - mean)).sum::<f64>() / (batches as f64 - 1.0);
        let stderr = (var / batches as f64).sqrt();
        assert!(
            (mean - oracle).abs() <= 3.0 * stderr,
            "chain {mean}, quadrature {oracle}, stderr {stderr}"
        );
    }

    #[test]
    fn admissibility_bounds_enforced() {
        let inst = gaussian_conjugate(2.0, 1.0).unwrap();
        // m = L = 1, κ = 1: bound is min{(2−1/κ)/L, 2/(m+L)} = 1.
        let cap = max_step(&inst.model, KernelKind::Myula, 1.0, ChainTarget::Posterior).unwrap();
        assert!((cap - 1.0).abs() < 1e-15);
        let bad = KernelConfig::new(KernelKind::Myula, 1.0, 1.0).unwrap();
        assert!(validate_admissibility(&inst.model, &bad).is_err());
        let ok = KernelConfig::new(KernelKind::Myula, 0.5, 1.0).unwrap();
        validate_admissibility(&inst.model, &ok).unwrap();
        // H3-only model: MYULA bound is min{(2−1/κ)/L, η/(2ML)} = ∞ at L = 0.
        let m = abs_model();
        assert!(max_step(&m, KernelKind::Myula, 1.0, ChainTarget::Posterior)
            .unwrap()
            .is_infinite());
    }

    #[test]
    fn myula_drift_is_nonexpansive_under_admissible_steps() {
        let inst = laplace_scalar(2.0, 1.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for _ in 0..1000 {
            let gamma = rng.random_range(0.01..0.99);
            let cfg = KernelConfig::new(KernelKind::Myula, gamma, 1.0).unwrap();
            let x = [rng.random_range(-8.0..8.0)];
            let y = [rng.random_range(-8.0..8.0)];
            let tx = drift_map(&inst.model, &[1.0], &cfg, &x).unwrap();
            let ty = drift_map(&inst.model, &[1.0], &cfg, &y).unwrap();
            assert!(dist(&tx, &ty) <= dist(&x, &y) + 1e-12);
        }
    }

    #[test]
    fn pula_drift_is_nonexpansive_under_admissible_steps() {
        let inst = laplace_scalar(2.0, 1.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(32);
        for _ in 0..1000 {
            let gamma = rng.random_range(0.01..0.99);
            let cfg = KernelConfig::new(KernelKind::Pula, gamma, 1.0).unwrap();
            let x = [rng.random_range(-8.0..8.0)];
            let y = [rng.random_range(-8.0..8.0)];
            let tx = drift_map(&inst.model, &[1.0], &cfg, &x).unwrap();
            let ty = drift_map(&inst.model, &[1.0], &cfg, &y).unwrap();
            assert!(dist(&tx, &ty) <= dist(&x, &y) + 1e-12);
        }
    }

    #[test]
    fn strict_contraction_under_strong_convexity() {
        // Gaussian conjugate: factor ≤ (1 − γϖ/2)^{1/2}, ϖ = mL/(m+L).
        let inst = gaussian_conjugate(2.0, 1.0).unwrap();
        let varpi = 0.5;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(33);
        for _ in 0..1000 {
            let gamma = rng.random_range(0.01..0.9);
            let cfg = KernelConfig::new(KernelKind::Myula, gamma, 1.0).unwrap();
            let x = [rng.random_range(-8.0..8.0)];
            let y = [rng.random_range(-8.0..8.0)];
            let tx = drift_map(&inst.model, &[1.0], &cfg, &x).unwrap();
            let ty = drift_map(&inst.model, &[1.0], &cfg, &y).unwrap();
            let bound = (1.0 - gamma * varpi / 2.0).sqrt();
            assert!(dist(&tx, &ty) <= bound * dist(&x, &y) + 1e-12);
        }
    }

    #[test]
    fn pula_matches_myula_to_second_order_at_unit_kappa() {
        // With λ = γ and a smooth regulariser the drifts differ by
        // γ(∇V(x) − ∇V(prox x)), of size O(γ²).
        let inst = gaussian_conjugate(2.0, 1.0).unwrap();
        let l = inst.model.lipschitz_grad();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(34);
        for _ in 0..500 {
            let gamma = rng.random_range(0.001..0.5);
            let theta = [rng.random_range(0.05..5.0)];
            let x = [rng.random_range(-8.0..8.0)];
            let my = KernelConfig::new(KernelKind::Myula, gamma, 1.0).unwrap();
            let pu = KernelConfig::new(KernelKind::Pula, gamma, 1.0).unwrap();
            let a = drift_map(&inst.model, &theta, &my, &x).unwrap();
            let b = drift_map(&inst.model, &theta, &pu, &x).unwrap();
            let bound = gamma * gamma * l * theta[0] * (1.0 + x[0].abs()) * (1.0 + 1e-9);
            assert!(
                dist(&a, &b) <= bound,
                "gamma={gamma} theta={} diff={} bound={bound}",
                theta[0],
                dist(&a, &b)
            );
        }
    }

    #[test]
    fn synchronous_coupling_distance_is_drift_distance() {
        let inst = laplace_scalar(2.0, 1.0).unwrap();
        let cfg = KernelConfig::new(KernelKind::Myula, 0.3, 1.0).unwrap();
        let mut a = ChainState::new(vec![4.0], 2024);
        let mut b = ChainState::new(vec![-3.0], 2024);
        let mut expected = (dist(&a.x, &b.x), vec![a.x.clone(), b.x.clone()]);
        for _ in 0..200 {
            let ta = drift_map(&inst.model, &[1.0], &cfg, &expected.1[0]).unwrap();
            let tb = drift_map(&inst.model, &[1.0], &cfg, &expected.1[1]).unwrap();
            step(&inst.model, &[1.0], &cfg, &mut a).unwrap();
            step(&inst.model, &[1.0], &cfg, &mut b).unwrap();
            let d = dist(&a.x, &b.x);
            // Shared noise cancels: coupled distance equals drift distance.
            assert!((d - dist(&ta, &tb)).abs() < 1e-12);
            assert!(d <= expected.0 + 1e-12);
            expected = (d, vec![a.x.clone(), b.x.clone()]);
        }
    }
}
