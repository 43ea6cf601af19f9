//! Proximal operators and Moreau–Yosida envelopes.
//!
//! Every prox shipped here is closed form (soft-thresholding for ℓ1-type
//! penalties, a rescaling for quadratics), so envelope values and envelope
//! gradients are exact. [`prox_residual`] provides an optimality
//! certificate for externally supplied prox implementations: it probes the
//! subgradient inequality that the exact prox must satisfy and reports the
//! worst violation.

use std::sync::Arc;

use crate::util::{dot, norm};
use crate::{Error, Result};

type ValueFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type ProxOp = Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>;

/// A convex function bundled with its proximal operator and Lipschitz
/// constant.
///
/// The prox map must satisfy `prox(λ, x) = argmin_z { value(z) + ‖x − z‖²/(2λ) }`.
/// `lipschitz` is the Lipschitz constant of `value`; for penalties that are
/// only locally Lipschitz (the quadratic), it is the constant valid on the
/// operating box the caller samples from.
#[derive(Clone)]
pub struct ProxFn {
    value: ValueFn,
    prox: ProxOp,
    lipschitz: f64,
}

impl ProxFn {
    pub fn new(
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        prox: impl Fn(f64, &[f64]) -> Vec<f64> + Send + Sync + 'static,
        lipschitz: f64,
    ) -> Self {
        Self {
            value: Arc::new(value),
            prox: Arc::new(prox),
            lipschitz,
        }
    }

    /// `weight · ‖x‖₁` with the coordinatewise soft-threshold prox.
    pub fn l1(weight: f64) -> Result<Self> {
        if weight < 0.0 || !weight.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "l1 weight must be nonnegative, got {weight}"
            )));
        }
        Ok(Self::new(
            move |x| weight * x.iter().map(|v| v.abs()).sum::<f64>(),
            move |lambda, x| {
                x.iter()
                    .map(|&v| soft_threshold(lambda * weight, v))
                    .collect()
            },
            // Reported constant is exact for scalar arguments; for d > 1
            // the ℓ2 constant is w√d, so use `weighted_l1(vec![w; d])`.
            weight,
        ))
    }

    /// `Σ_i w_i |x_i|` with per-coordinate weights.
    pub fn weighted_l1(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::InvalidArgument(
                "weighted_l1 weights must be nonnegative".into(),
            ));
        }
        let m = norm(&weights);
        let w2 = weights.clone();
        Ok(Self::new(
            move |x| x.iter().zip(&weights).map(|(v, w)| w * v.abs()).sum(),
            move |lambda, x| {
                x.iter()
                    .zip(&w2)
                    .map(|(&v, w)| soft_threshold(lambda * w, v))
                    .collect()
            },
            m,
        ))
    }

    /// `weight · ‖x‖²/2` with prox `x / (1 + λ·weight)`.
    ///
    /// The quadratic is not globally Lipschitz; `box_radius` states the
    /// radius of the operating region on which the reported constant
    /// `weight · box_radius` is valid.
    pub fn scaled_quadratic(weight: f64, box_radius: f64) -> Result<Self> {
        if weight < 0.0 || !weight.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "quadratic weight must be nonnegative, got {weight}"
            )));
        }
        Ok(Self::new(
            move |x| 0.5 * weight * x.iter().map(|v| v * v).sum::<f64>(),
            move |lambda, x| {
                let s = 1.0 / (1.0 + lambda * weight);
                x.iter().map(|v| v * s).collect()
            },
            weight * box_radius,
        ))
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    pub fn prox(&self, lambda: f64, x: &[f64]) -> Vec<f64> {
        (self.prox)(lambda, x)
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
}

/// Soft-threshold a scalar toward zero by `t ≥ 0`.
pub fn soft_threshold(t: f64, v: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "smoothing parameter must be positive and finite, got {lambda}"
        )));
    }
    Ok(())
}

/// Moreau–Yosida envelope `U^λ(x) = U(prox^λ(x)) + ‖x − prox^λ(x)‖²/(2λ)`.
///
/// The result never exceeds `U(x)` and decreases in λ.
pub fn moreau_envelope(p: &ProxFn, lambda: f64, x: &[f64]) -> Result<f64> {
    check_lambda(lambda)?;
    let q = p.prox(lambda, x);
    let r: f64 = x.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(p.value(&q) + r / (2.0 * lambda))
}

/// Envelope gradient `∇U^λ(x) = (x − prox^λ(x))/λ`; its norm is bounded by
/// the Lipschitz constant of `U`.
pub fn moreau_gradient(p: &ProxFn, lambda: f64, x: &[f64]) -> Result<Vec<f64>> {
    check_lambda(lambda)?;
    let q = p.prox(lambda, x);
    Ok(x.iter().zip(&q).map(|(a, b)| (a - b) / lambda).collect())
}

/// Closed-form prox of `weight · ‖·‖₁`: coordinatewise soft-threshold at
/// level `λ · weight`.
pub fn prox_l1(weight: f64, lambda: f64, x: &[f64]) -> Result<Vec<f64>> {
    check_lambda(lambda)?;
    if weight < 0.0 || !weight.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "weight must be nonnegative, got {weight}"
        )));
    }
    Ok(x.iter()
        .map(|&v| soft_threshold(lambda * weight, v))
        .collect())
}

/// Optimality certificate for a prox implementation.
///
/// With `q = prox(λ, x)`, the exact prox satisfies
/// `λ(U(z) − U(q)) ≥ ⟨x − q, z − q⟩` for every `z`. Probes `z` over
/// `{0, x, ±e_i‖x‖}` and returns the worst violation
/// `max_z ⟨x − q, z − q⟩ − λ(U(z) − U(q))`; a correct prox yields a value
/// ≤ 0 up to rounding, a broken one a positive value.
pub fn prox_residual(p: &ProxFn, lambda: f64, x: &[f64]) -> Result<f64> {
    check_lambda(lambda)?;
    let q = p.prox(lambda, x);
    let uq = p.value(&q);
    let xq: Vec<f64> = x.iter().zip(&q).map(|(a, b)| a - b).collect();
    let r = norm(x);
    let d = x.len();

    let mut probes: Vec<Vec<f64>> = vec![vec![0.0; d], x.to_vec()];
    if r > 0.0 {
        for i in 0..d {
            let mut plus = vec![0.0; d];
            plus[i] = r;
            let mut minus = vec![0.0; d];
            minus[i] = -r;
            probes.push(plus);
            probes.push(minus);
        }
    }

    let mut worst = f64::NEG_INFINITY;
    for z in &probes {
        let zq: Vec<f64> = z.iter().zip(&q).map(|(a, b)| a - b).collect();
        let violation = dot(&xq, &zq) - lambda * (p.value(z) - uq);
        if violation > worst {
            worst = violation;
        }
    }
    Ok(worst)
}
