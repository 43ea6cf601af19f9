//! Empirical verification of the convergence theory at desk scale.
//!
//! Four studies: geometric contraction measured through synchronous
//! coupling, stationary bias against the quadrature oracle across a step
//! ladder, exact drift-certificate grids, and constant-step plateau
//! ordering of the averaged objective gap. Every study is deterministic
//! given its seed; sweep entries run in parallel.

use rayon::prelude::*;

use crate::driver::{averaged_objective_gap, run, Schedule};
use crate::model::{PotentialModel, ProblemInstance};
use crate::oracle::{drift_sides, negative_log_marginal, posterior_expectation_1d, theta_star_1d};
use crate::samplers::{step, validate_admissibility, ChainState, KernelConfig, KernelKind};
use crate::util::{dist, linear_fit, median};
use crate::{Error, Result};

/// Distances below this floor are dominated by rounding and excluded from
/// the geometric fit.
const DISTANCE_FLOOR: f64 = 1e-12;

/// Synchronous-coupling distance sequence with a fitted per-step geometric
/// factor.
#[derive(Debug, Clone)]
pub struct DecayFit {
    pub distances: Vec<f64>,
    /// Per-step factor from least squares on the log-distances (floor-
    /// clipped points excluded); 0 when the chains start at equality.
    pub factor: f64,
    /// R² of the log-linear fit.
    pub fit_quality: f64,
    /// Theoretical bound `(1 − γϖ/2)^{1/2}` when strong convexity is
    /// declared.
    pub factor_bound: Option<f64>,
}

/// Run two chains from `x0`, `y0` with shared noise and fit the geometric
/// decay of their distance. Shared noise cancels in the difference, so the
/// recorded distances are exactly the drift-map distances.
pub fn coupling_contraction(
    model: &PotentialModel,
    theta: &[f64],
    cfg: &KernelConfig,
    x0: &[f64],
    y0: &[f64],
    n: u64,
    seed: u64,
) -> Result<DecayFit> {
    validate_admissibility(model, cfg)?;
    let mut a = ChainState::with_stream(x0.to_vec(), seed, 7);
    let mut b = ChainState::with_stream(y0.to_vec(), seed, 7);
    let mut distances = Vec::with_capacity(n as usize + 1);
    distances.push(dist(x0, y0));
    for _ in 0..n {
        step(model, theta, cfg, &mut a)?;
        step(model, theta, cfg, &mut b)?;
        distances.push(dist(&a.x, &b.x));
    }

    let mut ks = Vec::new();
    let mut logs = Vec::new();
    for (k, d) in distances.iter().enumerate() {
        if *d > DISTANCE_FLOOR {
            ks.push(k as f64);
            logs.push(d.ln());
        }
    }
    let (factor, fit_quality) = if ks.len() < 2 {
        (0.0, 1.0)
    } else {
        let (slope, intercept) = linear_fit(&ks, &logs);
        let mut ss_res = 0.0;
        let mut ss_tot = 0.0;
        let mean_log = crate::util::mean(&logs);
        for (k, l) in ks.iter().zip(&logs) {
            let pred = intercept + slope * k;
            ss_res += (l - pred) * (l - pred);
            ss_tot += (l - mean_log) * (l - mean_log);
        }
        let r2 = if ss_tot > 0.0 {
            1.0 - ss_res / ss_tot
        } else {
            1.0
        };
        (slope.exp(), r2)
    };

    let reg = crate::samplers::target_regularity(model, cfg.target)?;
    let factor_bound = reg.m.map(|m| {
        let varpi = m * reg.l / (m + reg.l);
        (1.0 - cfg.gamma * varpi / 2.0).sqrt()
    });

    Ok(DecayFit {
        distances,
        factor,
        fit_quality,
        factor_bound,
    })
}

/// One stationary-bias measurement at a fixed step size.
#[derive(Debug, Clone)]
pub struct BiasPoint {
    pub gamma: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub oracle: f64,
    pub bias: f64,
    /// The measured bias is below 2·stderr: it must be reported as
    /// indistinguishable from zero, never used as a ratio datum.
    pub indistinguishable: bool,
}

/// Estimate the stationary bias of a scalar statistic at each step size in
/// `gammas`, against the quadrature oracle. Burn-in is 20% of the budget;
/// the standard error comes from batch means over the retained stretch.
/// Entries run in parallel and are ordered like `gammas`.
pub fn bias_sweep(
    model: &PotentialModel,
    theta: &[f64],
    kind: KernelKind,
    kappa: f64,
    gammas: &[f64],
    statistic: &(dyn Fn(f64) -> f64 + Sync),
    budget: u64,
    seed: u64,
) -> Result<Vec<BiasPoint>> {
    if model.dim() != 1 {
        return Err(Error::Unsupported(
            "bias sweeps support scalar models only".into(),
        ));
    }
    let oracle = posterior_expectation_1d(model, theta, &|x| statistic(x))?;
    let points: Result<Vec<BiasPoint>> = gammas
        .par_iter()
        .enumerate()
        .map(|(i, &gamma)| {
            let cfg = KernelConfig::new(kind, gamma, kappa)?;
            validate_admissibility(model, &cfg)?;
            let burn_in = budget / 5;
            let keep = budget - burn_in;
            let mut chain = ChainState::with_stream(vec![0.0], seed, 100 + i as u64);
            for _ in 0..burn_in {
                step(model, theta, &cfg, &mut chain)?;
            }
            // Batch means over 32 batches for an autocorrelation-robust
            // standard error.
            let batches = 32u64;
            let batch_len = (keep / batches).max(1);
            let mut batch_means = Vec::with_capacity(batches as usize);
            let mut total = 0.0;
            let mut count = 0u64;
            'outer: for _ in 0..batches {
                let mut acc = 0.0;
                for _ in 0..batch_len {
                    if count >= keep {
                        break 'outer;
                    }
                    step(model, theta, &cfg, &mut chain)?;
                    acc += statistic(chain.x[0]);
                    count += 1;
                }
                batch_means.push(acc / batch_len as f64);
                total += acc;
            }
            let estimate = total / count as f64;
            let bm = crate::util::mean(&batch_means);
            let bvar = batch_means.iter().map(|b| (b - bm) * (b - bm)).sum::<f64>()
                / (batch_means.len() as f64 - 1.0);
            let stderr = (bvar / batch_means.len() as f64).sqrt();
            let bias = (estimate - oracle).abs();
            Ok(BiasPoint {
                gamma,
                estimate,
                stderr,
                oracle,
                bias,
                indistinguishable: bias < 2.0 * stderr,
            })
        })
        .collect();
    points
}

/// Drift-certificate evaluation at one state.
#[derive(Debug, Clone)]
pub struct DriftPoint {
    pub x: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs − rhs`; positive means the certificate is violated.
    pub margin: f64,
}

#[derive(Debug, Clone)]
pub struct DriftReport {
    pub points: Vec<DriftPoint>,
    pub violations: usize,
    /// Largest `lhs − rhs` over the grid (negative when all points hold).
    pub worst_margin: f64,
}

/// Evaluate the exact drift inequality at every grid state. Admissibility
/// errors surface before any evaluation.
pub fn drift_grid(
    model: &PotentialModel,
    theta: &[f64],
    cfg: &KernelConfig,
    grid: &[Vec<f64>],
) -> Result<DriftReport> {
    validate_admissibility(model, cfg)?;
    let mut points = Vec::with_capacity(grid.len());
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for x in grid {
        let (lhs, rhs) = drift_sides(model, theta, cfg, x)?;
        let margin = lhs - rhs;
        if margin > 0.0 {
            violations += 1;
        }
        if margin > worst {
            worst = margin;
        }
        points.push(DriftPoint {
            x: x.clone(),
            lhs,
            rhs,
            margin,
        });
    }
    Ok(DriftReport {
        points,
        violations,
        worst_margin: worst,
    })
}

/// Uniform scalar grid of `count` states on `[-radius, radius]`.
pub fn scalar_grid(radius: f64, count: usize) -> Vec<Vec<f64>> {
    if count <= 1 {
        return vec![vec![0.0]];
    }
    (0..count)
        .map(|i| {
            let t = i as f64 / (count - 1) as f64;
            vec![-radius + 2.0 * radius * t]
        })
        .collect()
}

/// Terminal averaged-objective gap of constant-step runs at one γ₀,
/// summarised over seeds by the median.
#[derive(Debug, Clone)]
pub struct PlateauPoint {
    pub gamma0: f64,
    pub gaps: Vec<f64>,
    pub median_gap: f64,
}

/// Constant-step plateau study: for each γ₀ run the driver with the
/// constant schedule (δ₀, γ₀, m₀) for `iterations` outer iterations per
/// seed, and report the terminal averaged objective gap. Gaps shrink with
/// γ₀.
pub fn plateau_study(
    instance: &ProblemInstance,
    kind: KernelKind,
    kappa: f64,
    gamma0_list: &[f64],
    delta0: f64,
    m0: u64,
    iterations: u64,
    seeds: &[u64],
) -> Result<Vec<PlateauPoint>> {
    if instance.domain.dim() != 1 {
        return Err(Error::Unsupported(
            "plateau studies support scalar parameters only".into(),
        ));
    }
    let theta_star = theta_star_1d(instance)?;
    let f = |t: f64| negative_log_marginal(&instance.model, &[t]).expect("oracle evaluation");
    let f_min = f(theta_star);

    gamma0_list
        .par_iter()
        .map(|&gamma0| {
            let schedule = Schedule::constant(delta0, gamma0, m0)?;
            let gaps: Result<Vec<f64>> = seeds
                .par_iter()
                .map(|&seed| {
                    let res = run(instance, kind, kappa, &schedule, iterations, seed, true)?;
                    let gaps = averaged_objective_gap(&res.trace, &f, f_min)?;
                    Ok(*gaps.last().unwrap())
                })
                .collect();
            let gaps = gaps?;
            let median_gap = median(&gaps);
            Ok(PlateauPoint {
                gamma0,
                gaps,
                median_gap,
            })
        })
        .collect()
}
