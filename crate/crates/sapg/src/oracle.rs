//! Independent ground truth for scalar instances.
//!
//! Posterior expectations come from composite Gauss–Legendre quadrature on
//! an adaptively truncated interval; the truncation radius is chosen from
//! the model's declared strong-convexity or coercivity constants so the
//! discarded tail is far below the working tolerance. Maximising θ values
//! come from bracketed bisection on the marginal-likelihood gradient, with
//! the gradient evaluated through the same quadrature. None of this shares
//! code with the sampling path it is used to check.

use crate::model::{EstimatorVariant, PotentialModel, ProblemInstance};
use crate::samplers::{max_step, one_step_second_moment, ChainTarget, KernelConfig, KernelKind};
use crate::util::norm_sq;
use crate::{Error, Result};

/// Composite quadrature layout: `panels` equal panels per segment, each
/// integrated with a fixed-order Gauss–Legendre rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureGrid {
    pub radius: f64,
    pub nodes_per_panel: usize,
    pub panels: usize,
}

/// Gauss–Legendre nodes and weights on [-1, 1]; computed once per order by
/// Newton iteration on the Legendre recurrence and cached.
fn gauss_legendre(n: usize) -> std::sync::Arc<(Vec<f64>, Vec<f64>)> {
    use std::collections::HashMap;
    use std::sync::{Arc, Mutex, OnceLock};
    type RuleCache = Mutex<HashMap<usize, Arc<(Vec<f64>, Vec<f64>)>>>;
    static CACHE: OnceLock<RuleCache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(hit) = cache.lock().unwrap().get(&n) {
        return Arc::clone(hit);
    }
    let rule = Arc::new(gauss_legendre_uncached(n));
    cache.lock().unwrap().insert(n, Arc::clone(&rule));
    rule
}

fn gauss_legendre_uncached(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..64 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Composite Gauss–Legendre integral of `f` over `[a, b]` split into
/// `panels` equal panels. Breakpoints should be inserted by the caller at
/// kinks of the integrand.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, panels: usize, order: usize) -> f64 {
    let rule = gauss_legendre(order);
    let (nodes, weights) = (&rule.0, &rule.1);
    let width = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * width;
        let half = 0.5 * width;
        let mid = lo + half;
        let mut acc = 0.0;
        for (t, w) in nodes.iter().zip(weights) {
            acc += w * f(mid + half * t);
        }
        total += acc * half;
    }
    total
}

fn log_target(model: &PotentialModel, theta: &[f64], x: f64) -> f64 {
    let xv = [x];
    -(model.smooth_value(theta, &xv) + model.nonsmooth_value(theta, &xv))
}

fn log_prior_target(model: &PotentialModel, theta: &[f64], x: f64) -> Result<f64> {
    let xv = [x];
    Ok(-(model.prior_smooth_value(theta, &xv)? + model.prior_nonsmooth_value(theta, &xv)?))
}

/// Minimise a unimodal scalar function by golden-section search.
fn golden_min(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let inv_phi = 0.5 * (5.0f64.sqrt() - 1.0);
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
        if (hi - lo).abs() < 1e-12 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Truncation half-width beyond the mode such that the discarded tail mass
/// is far below 1e-12 of the normaliser, derived from declared regularity.
fn tail_halfwidth(model: &PotentialModel, target: ChainTarget) -> Result<f64> {
    // Strong convexity gives an exp(-m k²/2) tail; coercivity exp(-η k).
    let m = match target {
        ChainTarget::Posterior => model.strong_convexity(),
        ChainTarget::Prior => model.require_prior()?.strong_convexity,
    };
    let eta = model.coercivity().map(|(eta, _)| eta);
    let k = match (m, eta) {
        (Some(m), _) => (2.0 * 42.0 / m).sqrt(),
        (None, Some(eta)) => 42.0 / eta,
        (None, None) => {
            return Err(Error::Unsupported(
                "model declares no tail information (strong convexity or coercivity)".into(),
            ))
        }
    };
    Ok(k)
}

struct ScalarDensity<'a> {
    model: &'a PotentialModel,
    theta: &'a [f64],
    target: ChainTarget,
}

impl ScalarDensity<'_> {
    fn log_density(&self, x: f64) -> f64 {
        match self.target {
            ChainTarget::Posterior => log_target(self.model, self.theta, x),
            ChainTarget::Prior => log_prior_target(self.model, self.theta, x)
                .expect("prior split checked at construction"),
        }
    }

    fn support(&self) -> Result<(f64, f64, f64)> {
        let mode = golden_min(&|x| -self.log_density(x), -1e3, 1e3);
        let pad = tail_halfwidth(self.model, self.target)?;
        let lo = (mode - pad).min(-pad);
        let hi = (mode + pad).max(pad);
        Ok((lo, hi, mode))
    }

    /// Expectation of `stat` under the unnormalised density, with
    /// panel-doubling self-consistency.
    fn expectation(&self, stat: &dyn Fn(f64) -> f64) -> Result<f64> {
        let (lo, hi, mode) = self.support()?;
        let peak = self.log_density(mode);
        let weight = |x: f64| (self.log_density(x) - peak).exp();
        let order = 32;
        let mut panels = 8;
        let mut prev: Option<f64> = None;
        for _ in 0..12 {
            let segs = segments(lo, hi, &[0.0, mode]);
            let mut num = 0.0;
            let mut den = 0.0;
            for (a, b) in &segs {
                num += integrate(&|x| stat(x) * weight(x), *a, *b, panels, order);
                den += integrate(&weight, *a, *b, panels, order);
            }
            if !(den.is_finite() && den > 0.0) {
                return Err(Error::Numerical(
                    "quadrature normaliser is not positive and finite".into(),
                ));
            }
            let e = num / den;
            if let Some(p) = prev {
                if (e - p).abs() <= 1e-10 * e.abs().max(1.0) {
                    return Ok(e);
                }
            }
            prev = Some(e);
            panels *= 2;
        }
        Err(Error::Numerical(
            "quadrature failed to self-converge under panel doubling".into(),
        ))
    }

    /// Log of the normaliser ∫ exp(log_density).
    fn log_normaliser(&self) -> Result<f64> {
        let (lo, hi, mode) = self.support()?;
        let peak = self.log_density(mode);
        let weight = |x: f64| (self.log_density(x) - peak).exp();
        let order = 32;
        let mut panels = 8;
        let mut prev: Option<f64> = None;
        for _ in 0..12 {
            let segs = segments(lo, hi, &[0.0, mode]);
            let mut den = 0.0;
            for (a, b) in &segs {
                den += integrate(&weight, *a, *b, panels, order);
            }
            if !(den.is_finite() && den > 0.0) {
                return Err(Error::Numerical(
                    "quadrature normaliser is not positive and finite".into(),
                ));
            }
            let v = peak + den.ln();
            if let Some(p) = prev {
                if (v - p).abs() <= 1e-12 * v.abs().max(1.0) {
                    return Ok(v);
                }
            }
            prev = Some(v);
            panels *= 2;
        }
        Err(Error::Numerical(
            "quadrature failed to self-converge under panel doubling".into(),
        ))
    }
}

fn segments(lo: f64, hi: f64, breakpoints: &[f64]) -> Vec<(f64, f64)> {
    let mut pts = vec![lo, hi];
    for b in breakpoints {
        if *b > lo && *b < hi {
            pts.push(*b);
        }
    }
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    pts.windows(2).map(|w| (w[0], w[1])).collect()
}

/// Posterior expectation `E_{π_θ}[stat]` for a scalar model, to relative
/// tolerance 1e-8 (self-consistent under panel doubling).
pub fn posterior_expectation_1d(
    model: &PotentialModel,
    theta: &[f64],
    stat: &dyn Fn(f64) -> f64,
) -> Result<f64> {
    if model.dim() != 1 {
        return Err(Error::Unsupported(format!(
            "quadrature oracle requires a scalar model, got dimension {}",
            model.dim()
        )));
    }
    ScalarDensity {
        model,
        theta,
        target: ChainTarget::Posterior,
    }
    .expectation(stat)
}

/// Same posterior expectation on an explicit fixed grid; used by the
/// grid-doubling self-consistency checks.
pub fn expectation_on_grid(
    model: &PotentialModel,
    theta: &[f64],
    stat: &dyn Fn(f64) -> f64,
    grid: &QuadratureGrid,
) -> Result<f64> {
    if model.dim() != 1 {
        return Err(Error::Unsupported("scalar models only".into()));
    }
    let density = ScalarDensity {
        model,
        theta,
        target: ChainTarget::Posterior,
    };
    let mode = golden_min(&|x| -density.log_density(x), -1e3, 1e3);
    let peak = density.log_density(mode);
    let weight = |x: f64| (density.log_density(x) - peak).exp();
    let segs = segments(-grid.radius, grid.radius, &[0.0, mode]);
    let mut num = 0.0;
    let mut den = 0.0;
    for (a, b) in &segs {
        num += integrate(
            &|x| stat(x) * weight(x),
            *a,
            *b,
            grid.panels,
            grid.nodes_per_panel,
        );
        den += integrate(&weight, *a, *b, grid.panels, grid.nodes_per_panel);
    }
    if !(den.is_finite() && den > 0.0) {
        return Err(Error::Numerical("normaliser is not positive".into()));
    }
    Ok(num / den)
}

/// Prior expectation `E_{π̄_θ}[stat]` for scalar models with a prior split.
pub fn prior_expectation_1d(
    model: &PotentialModel,
    theta: &[f64],
    stat: &dyn Fn(f64) -> f64,
) -> Result<f64> {
    if model.dim() != 1 {
        return Err(Error::Unsupported("scalar models only".into()));
    }
    model.require_prior()?;
    ScalarDensity {
        model,
        theta,
        target: ChainTarget::Prior,
    }
    .expectation(stat)
}

/// Marginal-likelihood gradient at θ for a scalar instance: the posterior
/// expectation of the statistic plus the prior-side term.
pub fn marginal_gradient_1d(instance: &ProblemInstance, theta: f64) -> Result<f64> {
    let th = [theta];
    let stat = |x: f64| instance.estimator.statistic(&th, &[x])[0];
    let post = posterior_expectation_1d(&instance.model, &th, &stat)?;
    let prior_term = match instance.estimator.variant() {
        EstimatorVariant::Inhomogeneous => -prior_expectation_1d(&instance.model, &th, &stat)?,
        _ => instance.estimator.deterministic_prior_term(&th, 1)?[0],
    };
    Ok(post + prior_term)
}

/// Maximiser of the marginal likelihood over the box, for scalar θ:
/// bracketed bisection on the gradient, falling back to the boundary when
/// the gradient does not change sign. Tolerance 1e-8 in θ.
pub fn theta_star_1d(instance: &ProblemInstance) -> Result<f64> {
    if instance.domain.dim() != 1 {
        return Err(Error::Unsupported("scalar parameter domains only".into()));
    }
    let mut lo = instance.domain.lower()[0];
    let mut hi = instance.domain.upper()[0];
    let g_lo = marginal_gradient_1d(instance, lo)?;
    let g_hi = marginal_gradient_1d(instance, hi)?;
    // The objective is convex on the box: a nonnegative gradient at the
    // lower end puts the minimum there, and symmetrically at the upper end.
    if g_lo >= 0.0 {
        return Ok(lo);
    }
    if g_hi <= 0.0 {
        return Ok(hi);
    }
    for _ in 0..200 {
        if hi - lo <= 1e-8 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let g = marginal_gradient_1d(instance, mid)?;
        if g >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Negative log marginal likelihood up to a θ-free constant:
/// `−log ∫ e^{−V_θ−U_θ} + log ∫ e^{−V̄_θ−Ū_θ}`. Requires a prior split to
/// normalise against.
pub fn negative_log_marginal(model: &PotentialModel, theta: &[f64]) -> Result<f64> {
    if model.dim() != 1 {
        return Err(Error::Unsupported("scalar models only".into()));
    }
    if model.prior_split().is_none() {
        return Err(Error::Unsupported(
            "marginal objective requires a prior split to normalise against".into(),
        ));
    }
    let log_post = ScalarDensity {
        model,
        theta,
        target: ChainTarget::Posterior,
    }
    .log_normaliser()?;
    let log_prior = ScalarDensity {
        model,
        theta,
        target: ChainTarget::Prior,
    }
    .log_normaliser()?;
    Ok(-log_post + log_prior)
}

/// Exact KL divergence between isotropic Gaussians `N(v₁, σ₁² I)` and
/// `N(v₂, σ₂² I)`:
/// `‖v₁−v₂‖²/(2σ₂²) + (d/2){−log(σ₁²/σ₂²) − 1 + σ₁²/σ₂²}`.
pub fn gaussian_kl(v1: &[f64], sigma1: f64, v2: &[f64], sigma2: f64) -> Result<f64> {
    if !(sigma1 > 0.0) || !(sigma2 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "standard deviations must be positive, got {sigma1}, {sigma2}"
        )));
    }
    if v1.len() != v2.len() || v1.is_empty() {
        return Err(Error::InvalidArgument(
            "mean vectors must be nonempty and of equal length".into(),
        ));
    }
    let d = v1.len() as f64;
    let r = sigma1 * sigma1 / (sigma2 * sigma2);
    let sq: f64 = v1.iter().zip(v2).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sq / (2.0 * sigma2 * sigma2) + 0.5 * d * (-r.ln() - 1.0 + r))
}

/// Both sides of the one-step Foster–Lyapunov inequality for
/// `W(x) = 1 + ‖x‖²` on strongly log-concave targets.
///
/// The left side `1 + ∫‖y‖² K(x, dy)` is exact via the Gaussian
/// second-moment identity; the right side is
/// `e^{−γϖ/2} W(x) + b₂ γ` with `ϖ = mL/(m+L)` and `b₂` assembled from the
/// model metadata (`R_{V,1}`, `M`, `d`, the certificate step cap γ̄). The
/// cap is `max(γ, 0.9 · max admissible step)`, keeping `2/(m+L) − γ̄`
/// bounded away from zero.
pub fn drift_sides(
    model: &PotentialModel,
    theta: &[f64],
    cfg: &KernelConfig,
    x: &[f64],
) -> Result<(f64, f64)> {
    let reg = crate::samplers::target_regularity(model, cfg.target)?;
    let m = reg.m.ok_or_else(|| {
        Error::Unsupported("drift certificate requires strong convexity of the smooth part".into())
    })?;
    crate::samplers::validate_admissibility(model, cfg)?;

    let l = reg.l;
    let big_m = reg.lip_u;
    let d = model.dim() as f64;
    let r_v1 = model.minimizer_bounds().r_v1;
    let varpi = m * l / (m + l);
    let gamma = cfg.gamma;
    let cap = max_step(model, cfg.kind, cfg.kappa, cfg.target)?;
    let gamma_bar = gamma.max(0.9 * cap.min(1e12));
    let two_over_ml = 2.0 / (m + l);
    if gamma_bar >= two_over_ml {
        return Err(Error::Unsupported(format!(
            "certificate step cap {gamma_bar} reaches 2/(m+L) = {two_over_ml}"
        )));
    }
    let shared = (1.0 / (two_over_ml - gamma_bar) + 4.0 * varpi) * r_v1 * r_v1;
    let b2 = match cfg.kind {
        KernelKind::Myula | KernelKind::Ula => {
            shared
                + 2.0 * gamma_bar * big_m * l * r_v1
                + gamma_bar * big_m * big_m
                + 2.0 * d
                + 2.0 * big_m * big_m * (1.0 + gamma_bar * l).powi(2) / varpi
                + varpi / 2.0
        }
        KernelKind::Pula => {
            let k = cfg.kappa;
            gamma_bar * k * k * big_m * big_m
                + shared
                + 2.0 * d
                + 2.0 * k * k * big_m * big_m / varpi
                + varpi / 2.0
        }
    };
    let lhs = 1.0 + one_step_second_moment(model, theta, cfg, x)?;
    let rhs = (-gamma * varpi / 2.0).exp() * (1.0 + norm_sq(x)) + b2 * gamma;
    Ok((lhs, rhs))
}
