//! θ-indexed potential families and their regularity metadata.
//!
//! A [`PotentialModel`] splits the target potential into a smooth part
//! `V_θ` (handled by gradient steps) and a prox-friendly part `U_θ`
//! (handled through its proximal operator). Regularity constants are
//! declared by the model author — Lipschitz constants for `∇V` and `U`,
//! strong convexity of `V`, coercivity of `U` — and the library spot-checks
//! them on sampled points instead of inferring them. Built-in desk-scale
//! instances ([`gaussian_conjugate`], [`laplace_scalar`], [`group_lasso`],
//! [`centered_gaussian`]) are re-exported here.

mod builtins;

pub use builtins::{
    centered_gaussian, gaussian_conjugate, gaussian_conjugate_with_domain, group_lasso,
    group_lasso_with_domain, laplace_scalar, laplace_scalar_with_domain,
};

use std::sync::Arc;

use crate::util::norm;
use crate::{Error, Result};

/// Homogeneous estimator variants reject θ-coordinates this close to zero
/// to avoid the 1/θ singularity; parameter boxes must sit above it.
pub const MIN_THETA: f64 = 1e-12;

pub(crate) type ThetaScalarFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
pub(crate) type ThetaGradFn = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;
pub(crate) type ThetaProxFn = Arc<dyn Fn(&[f64], f64, &[f64]) -> Vec<f64> + Send + Sync>;
pub(crate) type StatisticFn = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;

/// Axis-aligned box of feasible regularisation parameters.
///
/// The projection onto a box is a coordinatewise clamp, which keeps the
/// projected stochastic approximation update cheap and exact.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
    radius_bound: f64,
}

impl ParameterDomain {
    pub fn new_box(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::InvalidArgument(
                "domain bounds must be nonempty and of equal length".into(),
            ));
        }
        for (l, u) in lower.iter().zip(&upper) {
            if !(l < u) || !l.is_finite() || !u.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "domain requires lower < upper per coordinate, got [{l}, {u}]"
                )));
            }
        }
        let radius_bound = lower
            .iter()
            .zip(&upper)
            .map(|(l, u)| l.abs().max(u.abs()).powi(2))
            .sum::<f64>()
            .sqrt();
        Ok(Self {
            lower,
            upper,
            radius_bound,
        })
    }

    pub fn scalar(lower: f64, upper: f64) -> Result<Self> {
        Self::new_box(vec![lower], vec![upper])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Upper bound on the Euclidean norm of any feasible θ.
    pub fn radius_bound(&self) -> f64 {
        self.radius_bound
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(t, (l, u))| *t >= *l && *t <= *u)
    }

    /// Default starting point for the driver: the geometric midpoint for
    /// strictly positive boxes (scale parameters live on a log scale), the
    /// arithmetic midpoint otherwise.
    pub fn initial_theta(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| {
                if *l > 0.0 {
                    (l * u).sqrt()
                } else {
                    0.5 * (l + u)
                }
            })
            .collect()
    }
}

/// Project θ onto the box: a coordinatewise clamp. Idempotent and
/// nonexpansive.
pub fn project_theta(domain: &ParameterDomain, theta: &[f64]) -> Result<Vec<f64>> {
    if theta.len() != domain.dim() {
        return Err(Error::InvalidArgument(format!(
            "theta has length {}, domain has dimension {}",
            theta.len(),
            domain.dim()
        )));
    }
    Ok(theta
        .iter()
        .zip(domain.lower.iter().zip(&domain.upper))
        .map(|(t, (l, u))| t.clamp(*l, *u))
        .collect())
}

/// Radii bounding the minimizers and minimum values of `V_θ` and `U_θ`
/// uniformly over the parameter box. They feed the drift certificates.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MinimizerBounds {
    /// ‖argmin V_θ‖ ≤ r_v1 for all feasible θ.
    pub r_v1: f64,
    /// min V_θ ≤ r_v2.
    pub r_v2: f64,
    /// ‖x with U_θ(x) small‖ ≤ r_u1.
    pub r_u1: f64,
    /// U_θ at that point ≤ r_u2.
    pub r_u2: f64,
}

/// θ-uniform Lipschitz moduli of the potentials in the θ direction.
#[derive(Clone)]
pub struct ThetaLipschitz {
    /// ‖∇V_{θ1}(x) − ∇V_{θ2}(x)‖ ≤ m_theta ‖θ1 − θ2‖ (1 + ‖x‖).
    pub m_theta: f64,
    /// κ ↦ modulus for the envelope gradients at smoothing ratio κ.
    pub envelope_modulus: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

/// The prior-chain mirror of the potential split. Built-in models target
/// the prior with `V̄ = 0` and `Ū = U`, so only the nonsmooth fields carry
/// content there.
#[derive(Clone)]
pub struct PriorSplit {
    pub(crate) smooth_value: ThetaScalarFn,
    pub(crate) smooth_grad: ThetaGradFn,
    pub(crate) nonsmooth_value: ThetaScalarFn,
    pub(crate) nonsmooth_prox: ThetaProxFn,
    pub(crate) lipschitz_grad: f64,
    pub(crate) lipschitz_nonsmooth: f64,
    pub(crate) strong_convexity: Option<f64>,
    pub(crate) nonsmooth_zero: bool,
}

impl PriorSplit {
    /// Prior with no smooth part: `V̄ ≡ 0`, `Ū` given by the value/prox pair.
    pub fn nonsmooth_only(
        value: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
        prox: impl Fn(&[f64], f64, &[f64]) -> Vec<f64> + Send + Sync + 'static,
        lipschitz_nonsmooth: f64,
    ) -> Self {
        Self {
            smooth_value: Arc::new(|_, _| 0.0),
            smooth_grad: Arc::new(|_, x| vec![0.0; x.len()]),
            nonsmooth_value: Arc::new(value),
            nonsmooth_prox: Arc::new(prox),
            lipschitz_grad: 0.0,
            lipschitz_nonsmooth,
            strong_convexity: None,
            nonsmooth_zero: false,
        }
    }
}

/// A θ-indexed potential `V_θ + U_θ` with declared regularity metadata.
#[derive(Clone)]
pub struct PotentialModel {
    dim: usize,
    smooth_value: ThetaScalarFn,
    smooth_grad: ThetaGradFn,
    nonsmooth_value: ThetaScalarFn,
    nonsmooth_prox: ThetaProxFn,
    nonsmooth_zero: bool,
    lipschitz_grad: f64,
    lipschitz_nonsmooth: f64,
    strong_convexity: Option<f64>,
    coercivity: Option<(f64, f64)>,
    minimizer_bounds: MinimizerBounds,
    prior_split: Option<PriorSplit>,
    theta_lipschitz: Option<ThetaLipschitz>,
    initial_state: Option<Vec<f64>>,
}

impl PotentialModel {
    pub fn builder(dim: usize) -> PotentialModelBuilder {
        PotentialModelBuilder::new(dim)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn smooth_value(&self, theta: &[f64], x: &[f64]) -> f64 {
        (self.smooth_value)(theta, x)
    }

    pub fn smooth_grad(&self, theta: &[f64], x: &[f64]) -> Vec<f64> {
        (self.smooth_grad)(theta, x)
    }

    pub fn nonsmooth_value(&self, theta: &[f64], x: &[f64]) -> f64 {
        (self.nonsmooth_value)(theta, x)
    }

    pub fn nonsmooth_prox(&self, theta: &[f64], lambda: f64, x: &[f64]) -> Vec<f64> {
        (self.nonsmooth_prox)(theta, lambda, x)
    }

    /// True when `U_θ ≡ 0`; such models admit the plain ULA kernel.
    pub fn nonsmooth_is_zero(&self) -> bool {
        self.nonsmooth_zero
    }

    pub fn lipschitz_grad(&self) -> f64 {
        self.lipschitz_grad
    }

    pub fn lipschitz_nonsmooth(&self) -> f64 {
        self.lipschitz_nonsmooth
    }

    pub fn strong_convexity(&self) -> Option<f64> {
        self.strong_convexity
    }

    pub fn coercivity(&self) -> Option<(f64, f64)> {
        self.coercivity
    }

    pub fn minimizer_bounds(&self) -> MinimizerBounds {
        self.minimizer_bounds
    }

    pub fn prior_split(&self) -> Option<&PriorSplit> {
        self.prior_split.as_ref()
    }

    pub fn theta_lipschitz(&self) -> Option<&ThetaLipschitz> {
        self.theta_lipschitz.as_ref()
    }

    /// Data-informed chain start (the smooth part's minimizer for the
    /// built-in models); chains fall back to the origin when absent.
    pub fn initial_state(&self) -> Option<&[f64]> {
        self.initial_state.as_deref()
    }

    pub fn prior_smooth_value(&self, theta: &[f64], x: &[f64]) -> Result<f64> {
        let p = self.require_prior()?;
        Ok((p.smooth_value)(theta, x))
    }

    pub fn prior_smooth_grad(&self, theta: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        let p = self.require_prior()?;
        Ok((p.smooth_grad)(theta, x))
    }

    pub fn prior_nonsmooth_value(&self, theta: &[f64], x: &[f64]) -> Result<f64> {
        let p = self.require_prior()?;
        Ok((p.nonsmooth_value)(theta, x))
    }

    pub fn prior_nonsmooth_prox(&self, theta: &[f64], lambda: f64, x: &[f64]) -> Result<Vec<f64>> {
        let p = self.require_prior()?;
        Ok((p.nonsmooth_prox)(theta, lambda, x))
    }

    pub(crate) fn require_prior(&self) -> Result<&PriorSplit> {
        self.prior_split.as_ref().ok_or_else(|| {
            Error::Unsupported("model declares no prior split; the prior chain cannot run".into())
        })
    }
}

pub struct PotentialModelBuilder {
    dim: usize,
    smooth_value: Option<ThetaScalarFn>,
    smooth_grad: Option<ThetaGradFn>,
    nonsmooth_value: Option<ThetaScalarFn>,
    nonsmooth_prox: Option<ThetaProxFn>,
    nonsmooth_zero: bool,
    lipschitz_grad: f64,
    lipschitz_nonsmooth: f64,
    strong_convexity: Option<f64>,
    coercivity: Option<(f64, f64)>,
    minimizer_bounds: MinimizerBounds,
    prior_split: Option<PriorSplit>,
    theta_lipschitz: Option<ThetaLipschitz>,
    initial_state: Option<Vec<f64>>,
}

impl PotentialModelBuilder {
    fn new(dim: usize) -> Self {
        Self {
            dim,
            smooth_value: None,
            smooth_grad: None,
            nonsmooth_value: None,
            nonsmooth_prox: None,
            nonsmooth_zero: false,
            lipschitz_grad: 0.0,
            lipschitz_nonsmooth: 0.0,
            strong_convexity: None,
            coercivity: None,
            minimizer_bounds: MinimizerBounds::default(),
            prior_split: None,
            theta_lipschitz: None,
            initial_state: None,
        }
    }

    /// Smooth part `V_θ` with its gradient and the Lipschitz constant of
    /// the gradient.
    pub fn smooth(
        mut self,
        value: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
        lipschitz_grad: f64,
    ) -> Self {
        self.smooth_value = Some(Arc::new(value));
        self.smooth_grad = Some(Arc::new(grad));
        self.lipschitz_grad = lipschitz_grad;
        self
    }

    /// Nonsmooth part `U_θ` with its prox and Lipschitz constant.
    pub fn nonsmooth(
        mut self,
        value: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
        prox: impl Fn(&[f64], f64, &[f64]) -> Vec<f64> + Send + Sync + 'static,
        lipschitz: f64,
    ) -> Self {
        self.nonsmooth_value = Some(Arc::new(value));
        self.nonsmooth_prox = Some(Arc::new(prox));
        self.lipschitz_nonsmooth = lipschitz;
        self
    }

    /// Declare `U_θ ≡ 0` (prox is the identity); enables the ULA kernel.
    pub fn nonsmooth_zero(mut self) -> Self {
        self.nonsmooth_value = Some(Arc::new(|_, _| 0.0));
        self.nonsmooth_prox = Some(Arc::new(|_, _, x: &[f64]| x.to_vec()));
        self.lipschitz_nonsmooth = 0.0;
        self.nonsmooth_zero = true;
        self
    }

    pub fn strong_convexity(mut self, m: f64) -> Self {
        self.strong_convexity = Some(m);
        self
    }

    pub fn coercivity(mut self, eta: f64, c: f64) -> Self {
        self.coercivity = Some((eta, c));
        self
    }

    pub fn minimizer_bounds(mut self, b: MinimizerBounds) -> Self {
        self.minimizer_bounds = b;
        self
    }

    pub fn prior_split(mut self, p: PriorSplit) -> Self {
        self.prior_split = Some(p);
        self
    }

    pub fn theta_lipschitz(
        mut self,
        m_theta: f64,
        envelope_modulus: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.theta_lipschitz = Some(ThetaLipschitz {
            m_theta,
            envelope_modulus: Arc::new(envelope_modulus),
        });
        self
    }

    pub fn initial_state(mut self, x0: Vec<f64>) -> Self {
        self.initial_state = Some(x0);
        self
    }

    pub fn build(self) -> Result<PotentialModel> {
        if self.dim == 0 {
            return Err(Error::InvalidArgument(
                "state dimension must be positive".into(),
            ));
        }
        let (smooth_value, smooth_grad) = match (self.smooth_value, self.smooth_grad) {
            (Some(v), Some(g)) => (v, g),
            _ => {
                return Err(Error::InvalidArgument(
                    "model requires a smooth part (possibly zero)".into(),
                ))
            }
        };
        let (nonsmooth_value, nonsmooth_prox) = match (self.nonsmooth_value, self.nonsmooth_prox) {
            (Some(v), Some(p)) => (v, p),
            _ => {
                return Err(Error::InvalidArgument(
                    "model requires a nonsmooth part (possibly zero)".into(),
                ))
            }
        };
        if self.lipschitz_grad < 0.0 || self.lipschitz_nonsmooth < 0.0 {
            return Err(Error::InvalidArgument(
                "Lipschitz constants must be nonnegative".into(),
            ));
        }
        if let Some(m) = self.strong_convexity {
            if !(m > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "strong convexity constant must be positive, got {m}"
                )));
            }
        }
        if let Some((eta, c)) = self.coercivity {
            if !(eta > 0.0) || c < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "coercivity requires eta > 0 and c >= 0, got ({eta}, {c})"
                )));
            }
        }
        if self.strong_convexity.is_none() && self.coercivity.is_none() {
            return Err(Error::InvalidArgument(
                "model must declare strong convexity or coercivity".into(),
            ));
        }
        Ok(PotentialModel {
            dim: self.dim,
            smooth_value,
            smooth_grad,
            nonsmooth_value,
            nonsmooth_prox,
            nonsmooth_zero: self.nonsmooth_zero,
            lipschitz_grad: self.lipschitz_grad,
            lipschitz_nonsmooth: self.lipschitz_nonsmooth,
            strong_convexity: self.strong_convexity,
            coercivity: self.coercivity,
            minimizer_bounds: self.minimizer_bounds,
            prior_split: self.prior_split,
            theta_lipschitz: self.theta_lipschitz,
            initial_state: self.initial_state,
        })
    }
}

/// Which of the three gradient-estimator constructions supplies the
/// prior-side term `H̄_θ`.
#[derive(Debug, Clone, PartialEq)]
pub enum EstimatorVariant {
    /// `g(tx) = t^α g(x)` with scalar θ: the prior expectation is available
    /// in closed form, `H̄_θ = −d/(αθ)`; no prior chain runs.
    Homogeneous { alpha: f64 },
    /// Blockwise homogeneous `g`: `H̄_θ,i = −|A_i|/(α_i θ^i)` with `|A_i|`
    /// the block cardinality; no prior chain runs.
    SeparablyHomogeneous {
        blocks: Vec<Vec<usize>>,
        degrees: Vec<f64>,
    },
    /// General `g`: `H̄_θ = −g(X̄)` with `X̄` drawn from a prior chain.
    Inhomogeneous,
}

/// Statistic `g` plus the variant that turns it into the two-term gradient
/// estimate `H_θ + H̄_θ`.
#[derive(Clone)]
pub struct EstimatorSpec {
    variant: EstimatorVariant,
    statistic: StatisticFn,
    theta_dim: usize,
}

impl EstimatorSpec {
    pub fn homogeneous(
        alpha: f64,
        statistic: impl Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "homogeneity degree must be positive, got {alpha}"
            )));
        }
        Ok(Self {
            variant: EstimatorVariant::Homogeneous { alpha },
            statistic: Arc::new(statistic),
            theta_dim: 1,
        })
    }

    pub fn separably_homogeneous(
        blocks: Vec<Vec<usize>>,
        degrees: Vec<f64>,
        statistic: impl Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Result<Self> {
        if blocks.is_empty() || blocks.len() != degrees.len() {
            return Err(Error::InvalidArgument(
                "separable estimator needs one degree per block".into(),
            ));
        }
        if degrees.iter().any(|a| !(*a > 0.0)) {
            return Err(Error::InvalidArgument(
                "homogeneity degrees must be positive".into(),
            ));
        }
        let mut seen = std::collections::HashSet::new();
        for b in &blocks {
            if b.is_empty() {
                return Err(Error::InvalidArgument("blocks must be nonempty".into()));
            }
            for i in b {
                if !seen.insert(*i) {
                    return Err(Error::InvalidArgument(format!(
                        "blocks must be disjoint; coordinate {i} repeats"
                    )));
                }
            }
        }
        let theta_dim = blocks.len();
        Ok(Self {
            variant: EstimatorVariant::SeparablyHomogeneous { blocks, degrees },
            statistic: Arc::new(statistic),
            theta_dim,
        })
    }

    pub fn inhomogeneous(
        theta_dim: usize,
        statistic: impl Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            variant: EstimatorVariant::Inhomogeneous,
            statistic: Arc::new(statistic),
            theta_dim,
        }
    }

    pub fn variant(&self) -> &EstimatorVariant {
        &self.variant
    }

    pub fn theta_dim(&self) -> usize {
        self.theta_dim
    }

    pub fn statistic(&self, theta: &[f64], x: &[f64]) -> Vec<f64> {
        (self.statistic)(theta, x)
    }

    pub(crate) fn statistic_fn(&self) -> StatisticFn {
        Arc::clone(&self.statistic)
    }

    /// Whether this variant needs a prior chain at all.
    pub fn needs_prior_chain(&self) -> bool {
        matches!(self.variant, EstimatorVariant::Inhomogeneous)
    }

    /// The deterministic prior-side term for the homogeneous variants.
    /// `state_dim` is the dimension of the sampled state.
    pub fn deterministic_prior_term(&self, theta: &[f64], state_dim: usize) -> Result<Vec<f64>> {
        match &self.variant {
            EstimatorVariant::Homogeneous { alpha } => {
                if theta.len() != 1 {
                    return Err(Error::InvalidArgument(format!(
                        "homogeneous variant requires scalar theta, got length {}",
                        theta.len()
                    )));
                }
                if theta[0] <= MIN_THETA {
                    return Err(Error::Domain(format!(
                        "theta = {} too close to zero for the homogeneous prior term",
                        theta[0]
                    )));
                }
                Ok(vec![-(state_dim as f64) / (alpha * theta[0])])
            }
            EstimatorVariant::SeparablyHomogeneous { blocks, degrees } => {
                if theta.len() != blocks.len() {
                    return Err(Error::InvalidArgument(format!(
                        "theta length {} does not match {} blocks",
                        theta.len(),
                        blocks.len()
                    )));
                }
                blocks
                    .iter()
                    .zip(degrees)
                    .zip(theta)
                    .map(|((block, alpha), t)| {
                        if *t <= MIN_THETA {
                            return Err(Error::Domain(format!(
                                "theta coordinate {t} too close to zero for the separable prior term"
                            )));
                        }
                        Ok(-(block.len() as f64) / (alpha * t))
                    })
                    .collect()
            }
            EstimatorVariant::Inhomogeneous => Err(Error::Unsupported(
                "inhomogeneous variant has no deterministic prior term".into(),
            )),
        }
    }
}

/// The two estimator terms at a frozen θ: `H = g(x_post)` and the
/// prior-side `H̄` (closed form for the homogeneous variants, `−g(x_prior)`
/// otherwise).
pub fn estimator_terms(
    spec: &EstimatorSpec,
    theta: &[f64],
    x_post: &[f64],
    x_prior: Option<&[f64]>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let h = spec.statistic(theta, x_post);
    if h.len() != spec.theta_dim() {
        return Err(Error::InvalidArgument(format!(
            "statistic returned length {}, expected {}",
            h.len(),
            spec.theta_dim()
        )));
    }
    let h_bar = match &spec.variant {
        EstimatorVariant::Inhomogeneous => {
            let xp = x_prior.ok_or_else(|| {
                Error::InvalidArgument(
                    "inhomogeneous estimator requires a prior-chain sample".into(),
                )
            })?;
            spec.statistic(theta, xp).iter().map(|v| -v).collect()
        }
        _ => spec.deterministic_prior_term(theta, x_post.len())?,
    };
    Ok((h, h_bar))
}

/// A model, its estimator, the feasible parameter box and the observation
/// the likelihood was built from.
#[derive(Clone)]
pub struct ProblemInstance {
    pub model: PotentialModel,
    pub estimator: EstimatorSpec,
    pub domain: ParameterDomain,
    pub observation: Vec<f64>,
    /// Lipschitz constant of the marginal objective's gradient over the
    /// box, when known; the driver then enforces `δ₀ < 1/L_f`.
    pub objective_grad_lipschitz: Option<f64>,
}

impl ProblemInstance {
    pub fn new(
        model: PotentialModel,
        estimator: EstimatorSpec,
        domain: ParameterDomain,
        observation: Vec<f64>,
    ) -> Result<Self> {
        if estimator.theta_dim() != domain.dim() {
            return Err(Error::InvalidArgument(format!(
                "estimator dimension {} does not match domain dimension {}",
                estimator.theta_dim(),
                domain.dim()
            )));
        }
        if estimator.needs_prior_chain() && model.prior_split().is_none() {
            return Err(Error::InvalidArgument(
                "inhomogeneous estimator requires the model to declare a prior split".into(),
            ));
        }
        match estimator.variant() {
            EstimatorVariant::Homogeneous { .. }
            | EstimatorVariant::SeparablyHomogeneous { .. } => {
                if domain.lower().iter().any(|l| *l <= MIN_THETA) {
                    return Err(Error::InvalidArgument(
                        "homogeneous variants require the box lower bound to exceed 1e-12".into(),
                    ));
                }
            }
            EstimatorVariant::Inhomogeneous => {}
        }
        Ok(Self {
            model,
            estimator,
            domain,
            observation,
            objective_grad_lipschitz: None,
        })
    }

    pub fn with_objective_grad_lipschitz(mut self, l_f: f64) -> Result<Self> {
        if !(l_f > 0.0) || !l_f.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "objective gradient Lipschitz constant must be positive and finite, got {l_f}"
            )));
        }
        self.objective_grad_lipschitz = Some(l_f);
        Ok(self)
    }
}

/// Spot-check declared metadata on sampled points: finite-difference
/// gradients, Lipschitz ratios for `∇V` and `U`, and prox optimality.
/// `radius` bounds the sampling box; it should match the region the
/// declared constants are valid on.
pub fn check_metadata(
    model: &PotentialModel,
    domain: &ParameterDomain,
    radius: f64,
    samples: usize,
    seed: u64,
) -> Result<()> {
    use crate::prox::{prox_residual, ProxFn};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = model.dim();
    let random_theta = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        domain
            .lower()
            .iter()
            .zip(domain.upper())
            .map(|(l, u)| rng.random_range(*l..*u))
            .collect()
    };
    let random_x = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..d).map(|_| rng.random_range(-radius..radius)).collect()
    };

    // Finite-difference check of the declared gradient.
    let h = 1e-5;
    for _ in 0..samples.min(100) {
        let theta = random_theta(&mut rng);
        let x = random_x(&mut rng);
        let g = model.smooth_grad(&theta, &x);
        for i in 0..d {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd =
                (model.smooth_value(&theta, &xp) - model.smooth_value(&theta, &xm)) / (2.0 * h);
            if (fd - g[i]).abs() > 1e-6 * (1.0 + g[i].abs()) {
                return Err(Error::Numerical(format!(
                    "declared gradient disagrees with finite differences: coord {i}, fd {fd}, grad {}",
                    g[i]
                )));
            }
        }
    }

    // Lipschitz ratio checks on sampled pairs.
    let l = model.lipschitz_grad();
    let m = model.lipschitz_nonsmooth();
    for _ in 0..samples {
        let theta = random_theta(&mut rng);
        let x = random_x(&mut rng);
        let y = random_x(&mut rng);
        let dxy = crate::util::dist(&x, &y);
        if dxy < 1e-12 {
            continue;
        }
        let gx = model.smooth_grad(&theta, &x);
        let gy = model.smooth_grad(&theta, &y);
        if crate::util::dist(&gx, &gy) > l * dxy * (1.0 + 1e-9) {
            return Err(Error::Numerical(format!(
                "gradient Lipschitz constant {l} violated on a sampled pair"
            )));
        }
        let ux = model.nonsmooth_value(&theta, &x);
        let uy = model.nonsmooth_value(&theta, &y);
        if (ux - uy).abs() > m * dxy * (1.0 + 1e-9) {
            return Err(Error::Numerical(format!(
                "nonsmooth Lipschitz constant {m} violated on a sampled pair"
            )));
        }
    }

    // Prox optimality residual at sampled (θ, λ, x).
    for _ in 0..samples.min(200) {
        let theta = random_theta(&mut rng);
        let x = random_x(&mut rng);
        let lambda = rng.random_range(0.01..1.0);
        let th = theta.clone();
        let th2 = theta.clone();
        let model_value = model.clone();
        let model_prox = model.clone();
        let pf = ProxFn::new(
            move |z: &[f64]| model_value.nonsmooth_value(&th, z),
            move |lam, z: &[f64]| model_prox.nonsmooth_prox(&th2, lam, z),
            m,
        );
        let res = prox_residual(&pf, lambda, &x)?;
        if res > 1e-9 * (1.0 + norm(&x)) {
            return Err(Error::Numerical(format!(
                "prox optimality residual {res} positive at sampled point"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box() -> ParameterDomain {
        ParameterDomain::scalar(0.1, 5.0).unwrap()
    }

    #[test]
    fn metadata_spot_check_rejects_understated_constants() {
        // Declared gradient-Lipschitz constant half the true one: the
        // sampled-pair ratio check must flag it.
        let model = PotentialModel::builder(1)
            .smooth(
                |_, x| 0.5 * x[0] * x[0],
                |_, x| x.to_vec(),
                0.5,
            )
            .nonsmooth_zero()
            .strong_convexity(0.5)
            .build()
            .unwrap();
        let domain = ParameterDomain::scalar(0.1, 5.0).unwrap();
        assert!(matches!(
            check_metadata(&model, &domain, 10.0, 500, 9),
            Err(crate::Error::Numerical(_))
        ));

        // A prox that forgets to shrink fails the optimality residual.
        let broken = PotentialModel::builder(1)
            .smooth(|_, _| 0.0, |_, x| vec![0.0; x.len()], 0.0)
            .nonsmooth(
                |t: &[f64], x: &[f64]| t[0] * x[0].abs(),
                |_, _, x: &[f64]| x.to_vec(),
                5.0,
            )
            .coercivity(0.1, 0.0)
            .build()
            .unwrap();
        assert!(matches!(
            check_metadata(&broken, &domain, 10.0, 500, 9),
            Err(crate::Error::Numerical(_))
        ));
    }

    #[test]
    fn projection_clamps_to_box() {
        let d = unit_box();
        assert_eq!(project_theta(&d, &[7.0]).unwrap(), vec![5.0]);
        assert_eq!(project_theta(&d, &[1.0]).unwrap(), vec![1.0]);
        assert_eq!(project_theta(&d, &[-2.0]).unwrap(), vec![0.1]);
    }

    #[test]
    fn projection_rejects_dimension_mismatch() {
        let d = unit_box();
        assert!(project_theta(&d, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn projection_idempotent_and_nonexpansive() {
        use rand::{Rng, SeedableRng};
        use rand_chacha::ChaCha8Rng;
        let d = ParameterDomain::new_box(vec![0.1, -1.0], vec![5.0, 2.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let a = [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)];
            let b = [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)];
            let pa = project_theta(&d, &a).unwrap();
            let pb = project_theta(&d, &b).unwrap();
            assert_eq!(project_theta(&d, &pa).unwrap(), pa);
            assert!(crate::util::dist(&pa, &pb) <= crate::util::dist(&a, &b) + 1e-15);
            assert!(d.contains(&pa));
        }
    }

    #[test]
    fn domain_radius_bounds_feasible_norms() {
        let d = ParameterDomain::new_box(vec![-3.0, 0.5], vec![1.0, 2.0]).unwrap();
        assert!((d.radius_bound() - (9.0f64 + 4.0).sqrt()).abs() < 1e-15);
        assert!(d.radius_bound() >= crate::util::norm(&[-3.0, 2.0]));
    }

    #[test]
    fn domain_rejects_empty_interior() {
        assert!(ParameterDomain::scalar(1.0, 1.0).is_err());
        assert!(ParameterDomain::scalar(2.0, 1.0).is_err());
    }

    #[test]
    fn homogeneous_prior_term() {
        let spec = EstimatorSpec::homogeneous(1.0, |_, x| vec![x[0]]).unwrap();
        let (h, h_bar) = estimator_terms(&spec, &[0.5], &[3.0], None).unwrap();
        assert_eq!(h, vec![3.0]);
        assert_eq!(h_bar, vec![-2.0]);
    }

    #[test]
    fn inhomogeneous_terms_cancel_on_identical_samples() {
        let spec = EstimatorSpec::inhomogeneous(1, |_, x| vec![x[0].abs()]);
        let (h, h_bar) = estimator_terms(&spec, &[1.0], &[2.0], Some(&[2.0])).unwrap();
        assert_eq!(h[0] + h_bar[0], 0.0);
    }

    #[test]
    fn separable_prior_term_uses_block_cardinality() {
        let spec = EstimatorSpec::separably_homogeneous(vec![vec![0, 1]], vec![1.0], |_, x| {
            vec![x.iter().map(|v| v.abs()).sum()]
        })
        .unwrap();
        let (_, h_bar) = estimator_terms(&spec, &[2.0], &[1.0, -1.0], None).unwrap();
        assert_eq!(h_bar, vec![-1.0]);
        // Block of size 3 at θ = 1.5 gives −3/1.5 = −2.
        let spec3 = EstimatorSpec::separably_homogeneous(vec![vec![0, 1, 2]], vec![1.0], |_, x| {
            vec![x.iter().map(|v| v.abs()).sum()]
        })
        .unwrap();
        let term = spec3.deterministic_prior_term(&[1.5], 3).unwrap();
        assert_eq!(term, vec![-2.0]);
    }

    #[test]
    fn homogeneous_rejects_nonpositive_theta() {
        let spec = EstimatorSpec::homogeneous(2.0, |_, x| vec![0.5 * x[0] * x[0]]).unwrap();
        assert!(estimator_terms(&spec, &[0.0], &[1.0], None).is_err());
        assert!(estimator_terms(&spec, &[-1.0], &[1.0], None).is_err());
        assert!(estimator_terms(&spec, &[5e-13], &[1.0], None).is_err());
    }

    #[test]
    fn inhomogeneous_requires_prior_sample() {
        let spec = EstimatorSpec::inhomogeneous(1, |_, x| vec![x[0]]);
        assert!(estimator_terms(&spec, &[1.0], &[1.0], None).is_err());
    }

    #[test]
    fn prior_term_is_deterministic_in_theta() {
        let spec = EstimatorSpec::homogeneous(1.0, |_, x| vec![x[0].abs()]).unwrap();
        let (_, a) = estimator_terms(&spec, &[0.7], &[4.0], None).unwrap();
        let (_, b) = estimator_terms(&spec, &[0.7], &[-123.0], None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn overlapping_blocks_rejected() {
        let r = EstimatorSpec::separably_homogeneous(
            vec![vec![0, 1], vec![1, 2]],
            vec![1.0, 1.0],
            |_, x| vec![x[0], x[1]],
        );
        assert!(r.is_err());
    }
}
