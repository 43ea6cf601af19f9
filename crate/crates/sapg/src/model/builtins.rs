//! Built-in desk-scale problem instances.
//!
//! All regularity constants are supplied analytically. Constants that are
//! only locally valid (the quadratic regulariser's Lipschitz constant) are
//! declared on the operating box `‖x‖_∞ ≤ OPERATING_RADIUS`, which is also
//! the box the metadata spot-checks sample from.

use crate::prox::soft_threshold;
use crate::util::norm_sq;
use crate::{Error, Result};

use super::{
    EstimatorSpec, MinimizerBounds, ParameterDomain, PotentialModel, PriorSplit, ProblemInstance,
};

/// Radius of the state-space box on which locally-valid Lipschitz
/// declarations hold and on which metadata spot-checks sample.
pub const OPERATING_RADIUS: f64 = 10.0;

fn check_sigma2(sigma2: f64) -> Result<()> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "noise variance must be positive, got {sigma2}"
        )));
    }
    Ok(())
}

/// Conjugate scalar model: Gaussian likelihood `V_θ(x) = (x−y)²/(2σ²)` and
/// quadratic regulariser `U_θ(x) = θ x²/2` with closed-form prox
/// `x/(1+λθ)`. The regularising statistic `g(x) = x²/2` is 2-homogeneous,
/// so the maximising θ has the closed form `1/θ* = y² − σ²` (projected to
/// the box).
///
/// Default parameter box `[0.05, 10]`.
pub fn gaussian_conjugate(y: f64, sigma2: f64) -> Result<ProblemInstance> {
    gaussian_conjugate_with_domain(y, sigma2, 0.05, 10.0)
}

pub fn gaussian_conjugate_with_domain(
    y: f64,
    sigma2: f64,
    theta_lo: f64,
    theta_hi: f64,
) -> Result<ProblemInstance> {
    check_sigma2(sigma2)?;
    let domain = ParameterDomain::scalar(theta_lo, theta_hi)?;
    let l = 1.0 / sigma2;
    // θ x²/2 is only locally Lipschitz; the declared constant is valid on
    // the operating box.
    let m_nonsmooth = theta_hi * OPERATING_RADIUS;

    let value = move |_: &[f64], x: &[f64]| (x[0] - y) * (x[0] - y) / (2.0 * sigma2);
    let grad = move |_: &[f64], x: &[f64]| vec![(x[0] - y) / sigma2];
    let u_value = |theta: &[f64], x: &[f64]| 0.5 * theta[0] * norm_sq(x);
    let u_prox = |theta: &[f64], lambda: f64, x: &[f64]| {
        let s = 1.0 / (1.0 + lambda * theta[0]);
        x.iter().map(|v| v * s).collect::<Vec<f64>>()
    };

    let model = PotentialModel::builder(1)
        .smooth(value, grad, l)
        .nonsmooth(u_value, u_prox, m_nonsmooth)
        .strong_convexity(l)
        // θ x²/2 ≥ θ_lo(|x| − 1/2).
        .coercivity(theta_lo, theta_lo / 2.0)
        .minimizer_bounds(MinimizerBounds {
            r_v1: y.abs(),
            r_v2: 0.0,
            r_u1: 0.0,
            r_u2: 0.0,
        })
        // ∇V is θ-free; the envelope gradients are 1-Lipschitz in θ.
        .theta_lipschitz(0.0, |_| 1.0)
        .prior_split(PriorSplit::nonsmooth_only(u_value, u_prox, m_nonsmooth))
        .initial_state(vec![y])
        .build()?;

    let estimator = EstimatorSpec::homogeneous(2.0, |_, x| vec![0.5 * norm_sq(x)])?;
    ProblemInstance::new(model, estimator, domain, vec![y])
}

/// Scalar Laplace-regularised model: `V_θ(x) = (x−y)²/(2σ²)` and
/// `U_θ(x) = θ|x|` with the soft-threshold prox. `g(x) = |x|` is
/// 1-homogeneous. Default parameter box `[0.1, 5]`.
pub fn laplace_scalar(y: f64, sigma2: f64) -> Result<ProblemInstance> {
    laplace_scalar_with_domain(y, sigma2, 0.1, 5.0)
}

pub fn laplace_scalar_with_domain(
    y: f64,
    sigma2: f64,
    theta_lo: f64,
    theta_hi: f64,
) -> Result<ProblemInstance> {
    check_sigma2(sigma2)?;
    let domain = ParameterDomain::scalar(theta_lo, theta_hi)?;
    let l = 1.0 / sigma2;

    let value = move |_: &[f64], x: &[f64]| (x[0] - y) * (x[0] - y) / (2.0 * sigma2);
    let grad = move |_: &[f64], x: &[f64]| vec![(x[0] - y) / sigma2];
    let u_value = |theta: &[f64], x: &[f64]| theta[0] * x.iter().map(|v| v.abs()).sum::<f64>();
    let u_prox = |theta: &[f64], lambda: f64, x: &[f64]| {
        x.iter()
            .map(|&v| soft_threshold(lambda * theta[0], v))
            .collect::<Vec<f64>>()
    };

    let model = PotentialModel::builder(1)
        .smooth(value, grad, l)
        .nonsmooth(u_value, u_prox, theta_hi)
        .strong_convexity(l)
        .coercivity(theta_lo, 0.0)
        .minimizer_bounds(MinimizerBounds {
            r_v1: y.abs(),
            r_v2: 0.0,
            r_u1: 0.0,
            r_u2: 0.0,
        })
        .theta_lipschitz(0.0, |_| 1.0)
        .prior_split(PriorSplit::nonsmooth_only(u_value, u_prox, theta_hi))
        .initial_state(vec![y])
        .build()?;

    let estimator =
        EstimatorSpec::homogeneous(1.0, |_, x| vec![x.iter().map(|v| v.abs()).sum::<f64>()])?;
    ProblemInstance::new(model, estimator, domain, vec![y])
}

/// Group-lasso model `V_θ(x) = ‖Ax − y‖²/(2σ²)`,
/// `U_θ(x) = Σ_i θ^i ‖x_{A_i}‖₁`; the prox soft-thresholds each block's
/// coordinates at level `λθ^i`. One θ-coordinate per block, default box
/// `[0.1, 5]` per coordinate.
pub fn group_lasso(
    a: &[Vec<f64>],
    y: &[f64],
    sigma2: f64,
    blocks: &[Vec<usize>],
) -> Result<ProblemInstance> {
    group_lasso_with_domain(a, y, sigma2, blocks, 0.1, 5.0)
}

pub fn group_lasso_with_domain(
    a: &[Vec<f64>],
    y: &[f64],
    sigma2: f64,
    blocks: &[Vec<usize>],
    theta_lo: f64,
    theta_hi: f64,
) -> Result<ProblemInstance> {
    check_sigma2(sigma2)?;
    let rows = a.len();
    if rows == 0 || rows != y.len() {
        return Err(Error::InvalidArgument(
            "design matrix rows must match observation length".into(),
        ));
    }
    let dim = a[0].len();
    if dim == 0 || dim > 32 || a.iter().any(|r| r.len() != dim) {
        return Err(Error::InvalidArgument(
            "design matrix must be rectangular with 1..=32 columns".into(),
        ));
    }
    if blocks.is_empty() {
        return Err(Error::InvalidArgument(
            "at least one block is required".into(),
        ));
    }
    let mut covered = vec![false; dim];
    for b in blocks {
        for &i in b {
            if i >= dim {
                return Err(Error::InvalidArgument(format!(
                    "block coordinate {i} out of range for dimension {dim}"
                )));
            }
            if covered[i] {
                return Err(Error::InvalidArgument(format!(
                    "blocks overlap at coordinate {i}"
                )));
            }
            covered[i] = true;
        }
    }
    let covers_all = covered.iter().all(|c| *c);

    // Gram matrix and its certified spectral bounds.
    let mut gram = vec![vec![0.0; dim]; dim];
    for i in 0..dim {
        for j in 0..dim {
            gram[i][j] = (0..rows).map(|r| a[r][i] * a[r][j]).sum();
        }
    }
    let l = gram
        .iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
        / sigma2;
    let m_lower = (0..dim)
        .map(|i| {
            gram[i][i]
                - (0..dim)
                    .filter(|j| *j != i)
                    .map(|j| gram[i][j].abs())
                    .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min)
        / sigma2;

    // Least-squares minimizer of V for the minimizer bounds.
    let aty: Vec<f64> = (0..dim)
        .map(|i| {
            (0..rows)
                .map(|r| a[r][i] * y[r])
                .collect::<Vec<f64>>()
                .iter()
                .sum()
        })
        .collect();
    let x_hat = solve_spd(&gram, &aty)?;
    let residual: f64 = (0..rows)
        .map(|r| {
            let pred: f64 = (0..dim).map(|i| a[r][i] * x_hat[i]).sum();
            (pred - y[r]) * (pred - y[r])
        })
        .sum();
    let r_v1 = x_hat.iter().map(|v| v * v).sum::<f64>().sqrt();
    let r_v2 = residual / (2.0 * sigma2);

    let max_block = blocks.iter().map(|b| b.len()).max().unwrap() as f64;
    let m_nonsmooth =
        (theta_hi * theta_hi * blocks.iter().map(|b| b.len() as f64).sum::<f64>()).sqrt();

    let a_owned: Vec<Vec<f64>> = a.to_vec();
    let a_grad = a_owned.clone();
    let y_owned: Vec<f64> = y.to_vec();
    let y_grad = y_owned.clone();
    let blocks_v: Vec<Vec<usize>> = blocks.to_vec();
    let blocks_p = blocks_v.clone();

    let value = move |_: &[f64], x: &[f64]| {
        (0..a_owned.len())
            .map(|r| {
                let pred: f64 = x.iter().zip(&a_owned[r]).map(|(xi, ai)| xi * ai).sum();
                (pred - y_owned[r]) * (pred - y_owned[r])
            })
            .sum::<f64>()
            / (2.0 * sigma2)
    };
    let grad = move |_: &[f64], x: &[f64]| {
        let rows = a_grad.len();
        let dim = x.len();
        let mut res: Vec<f64> = (0..rows)
            .map(|r| {
                let pred: f64 = x.iter().zip(&a_grad[r]).map(|(xi, ai)| xi * ai).sum();
                pred - y_grad[r]
            })
            .collect();
        for v in &mut res {
            *v /= sigma2;
        }
        (0..dim)
            .map(|i| (0..rows).map(|r| a_grad[r][i] * res[r]).sum())
            .collect::<Vec<f64>>()
    };
    let u_value = move |theta: &[f64], x: &[f64]| {
        blocks_v
            .iter()
            .zip(theta)
            .map(|(b, t)| t * b.iter().map(|&i| x[i].abs()).sum::<f64>())
            .sum()
    };
    let u_prox = move |theta: &[f64], lambda: f64, x: &[f64]| {
        let mut out = x.to_vec();
        for (b, t) in blocks_p.iter().zip(theta) {
            for &i in b {
                out[i] = soft_threshold(lambda * t, x[i]);
            }
        }
        out
    };

    let mut builder = PotentialModel::builder(dim)
        .smooth(value, grad, l)
        .nonsmooth(u_value.clone(), u_prox.clone(), m_nonsmooth)
        .minimizer_bounds(MinimizerBounds {
            r_v1,
            r_v2,
            r_u1: 0.0,
            r_u2: 0.0,
        })
        .theta_lipschitz(0.0, move |_| max_block.sqrt())
        .prior_split(PriorSplit::nonsmooth_only(u_value, u_prox, m_nonsmooth))
        .initial_state(x_hat.clone());
    if m_lower > 0.0 {
        builder = builder.strong_convexity(m_lower);
    }
    if covers_all {
        builder = builder.coercivity(theta_lo, 0.0);
    }
    let model = builder.build()?;

    let degrees = vec![1.0; blocks.len()];
    let stat_blocks = blocks.to_vec();
    let estimator = EstimatorSpec::separably_homogeneous(blocks.to_vec(), degrees, move |_, x| {
        stat_blocks
            .iter()
            .map(|b| b.iter().map(|&i| x[i].abs()).sum())
            .collect()
    })?;
    let theta_dim = blocks.len();
    let domain = ParameterDomain::new_box(vec![theta_lo; theta_dim], vec![theta_hi; theta_dim])?;
    ProblemInstance::new(model, estimator, domain, y.to_vec())
}

/// Centered quadratic test model `V(x) = ‖x‖²/2`, `U ≡ 0`. θ-free; the
/// kernel-level diagnostics use it because every drift quantity is exact
/// (`m = L = 1`, `M = 0`, all minimizer radii zero).
pub fn centered_gaussian(dim: usize) -> Result<PotentialModel> {
    PotentialModel::builder(dim)
        .smooth(|_, x| 0.5 * norm_sq(x), |_, x| x.to_vec(), 1.0)
        .nonsmooth_zero()
        .strong_convexity(1.0)
        .theta_lipschitz(0.0, |_| 0.0)
        .build()
}

/// Solve a symmetric positive-definite system by Gaussian elimination with
/// partial pivoting. Errors when the matrix is numerically singular.
fn solve_spd(g: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let n = g.len();
    let mut m: Vec<Vec<f64>> = g.to_vec();
    let mut rhs = b.to_vec();
    let scale = m
        .iter()
        .flat_map(|r| r.iter().map(|v| v.abs()))
        .fold(0.0, f64::max);
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())
            .unwrap();
        if m[pivot_row][col].abs() < 1e-10 * scale.max(1e-300) {
            return Err(Error::InvalidArgument(
                "design matrix is numerically rank-deficient".into(),
            ));
        }
        m.swap(col, pivot_row);
        rhs.swap(col, pivot_row);
        for row in (col + 1)..n {
            let f = m[row][col] / m[col][col];
            let (pivot, rest) = m.split_at_mut(row);
            for (a, b) in rest[0][col..n].iter_mut().zip(&pivot[col][col..n]) {
                *a -= f * b;
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = rhs[row];
        for k in (row + 1)..n {
            s -= m[row][k] * x[k];
        }
        x[row] = s / m[row][row];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::check_metadata;

    #[test]
    fn conjugate_prox_closed_form() {
        let inst = gaussian_conjugate(2.0, 1.0).unwrap();
        let p = inst.model.nonsmooth_prox(&[1.0], 1.0, &[2.0]);
        assert!((p[0] - 1.0).abs() < 1e-15);
        let p0 = inst.model.nonsmooth_prox(&[0.0], 0.7, &[2.0]);
        assert!((p0[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn conjugate_gradient_vanishes_at_observation() {
        let inst = gaussian_conjugate(2.0, 1.0).unwrap();
        assert_eq!(inst.model.smooth_grad(&[1.0], &[2.0]), vec![0.0]);
    }

    #[test]
    fn conjugate_rejects_bad_variance() {
        assert!(gaussian_conjugate(2.0, 0.0).is_err());
        assert!(gaussian_conjugate(2.0, -1.0).is_err());
    }

    #[test]
    fn laplace_metadata() {
        let inst = laplace_scalar(2.0, 1.0).unwrap();
        // Lipschitz constant of U over Θ = [0.1, 5] is the upper bound.
        assert_eq!(inst.model.lipschitz_nonsmooth(), 5.0);
        assert_eq!(inst.model.coercivity(), Some((0.1, 0.0)));
        assert_eq!(inst.model.smooth_grad(&[1.0], &[0.0]), vec![-2.0]);
        assert_eq!(inst.model.strong_convexity(), Some(1.0));
    }

    #[test]
    fn group_lasso_blockwise_prox() {
        let a = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let inst = group_lasso(&a, &[1.0, -1.0], 1.0, &[vec![0, 1]]).unwrap();
        let p = inst.model.nonsmooth_prox(&[1.0], 1.0, &[2.5, -0.5]);
        assert_eq!(p, vec![1.5, 0.0]);
        // Identity design: operator-norm bound is exact.
        assert!((inst.model.lipschitz_grad() - 1.0).abs() < 1e-15);
        assert_eq!(inst.model.strong_convexity(), Some(1.0));
    }

    #[test]
    fn group_lasso_rejects_overlap() {
        let a = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert!(group_lasso(&a, &[1.0, -1.0], 1.0, &[vec![0], vec![0, 1]]).is_err());
    }

    #[test]
    fn builtin_metadata_spot_checks_pass() {
        let conj = gaussian_conjugate(2.0, 1.0).unwrap();
        check_metadata(&conj.model, &conj.domain, OPERATING_RADIUS, 1000, 42).unwrap();
        let lap = laplace_scalar(2.0, 1.0).unwrap();
        check_metadata(&lap.model, &lap.domain, OPERATING_RADIUS, 1000, 43).unwrap();
        let a = vec![vec![1.0, 0.2], vec![0.1, 0.9]];
        let gl = group_lasso(&a, &[1.0, -0.5], 0.5, &[vec![0], vec![1]]).unwrap();
        check_metadata(&gl.model, &gl.domain, OPERATING_RADIUS, 1000, 44).unwrap();
    }

    #[test]
    fn centered_gaussian_is_fully_smooth() {
        let m = centered_gaussian(2).unwrap();
        assert!(m.nonsmooth_is_zero());
        assert_eq!(m.lipschitz_nonsmooth(), 0.0);
        assert_eq!(m.smooth_grad(&[], &[1.0, -2.0]), vec![1.0, -2.0]);
    }
}
