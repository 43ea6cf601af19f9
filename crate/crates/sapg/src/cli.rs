//! Subcommand implementations behind the `sapg` binary.
//!
//! Exit codes: 0 success, 1 runtime or invariant failure, 2 invalid
//! config, 3 invalid schedule (from `validate-schedule`).
//!
//! Every run directory is self-describing: it contains the resolved config
//! alongside the CSV artifacts. `trace.csv` holds only deterministic
//! columns so reruns with the same seed are byte-identical; wall-clock
//! timings go to `timing.csv`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::config::ExperimentConfig;
use crate::diagnostics::{
    bias_sweep, coupling_contraction, drift_grid, plateau_study, scalar_grid,
};
use crate::driver::{run, validate_schedule, BatchMode, RunTrace, Schedule};
use crate::model::ProblemInstance;
use crate::oracle::theta_star_1d;
use crate::samplers::{max_step, ChainTarget, KernelConfig};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SCHEDULE: i32 = 3;

fn fmt_f64(v: f64) -> String {
    // Shortest decimal that round-trips; reparsing reproduces the bits.
    format!("{v}")
}

/// Serialise the trace with a fixed column order:
/// `n, theta_*, theta_bar_*, gamma, delta, m, grad_*`.
pub fn trace_to_csv(trace: &RunTrace) -> String {
    let d = trace.records.first().map(|r| r.theta.len()).unwrap_or(0);
    let mut out = String::from("n");
    for i in 0..d {
        let _ = write!(out, ",theta_{i}");
    }
    for i in 0..d {
        let _ = write!(out, ",theta_bar_{i}");
    }
    out.push_str(",gamma,delta,m");
    for i in 0..d {
        let _ = write!(out, ",grad_{i}");
    }
    out.push('\n');
    for r in &trace.records {
        let _ = write!(out, "{}", r.n);
        for v in &r.theta {
            let _ = write!(out, ",{}", fmt_f64(*v));
        }
        for v in &r.theta_bar {
            let _ = write!(out, ",{}", fmt_f64(*v));
        }
        let _ = write!(out, ",{},{},{}", fmt_f64(r.gamma), fmt_f64(r.delta), r.m);
        for v in &r.grad_estimate {
            let _ = write!(out, ",{}", fmt_f64(*v));
        }
        out.push('\n');
    }
    out
}

/// One parsed trace row: `(n, theta, theta_bar, gamma, delta, m, grad)`.
pub type TraceRow = (u64, Vec<f64>, Vec<f64>, f64, f64, u64, Vec<f64>);

/// Parse a trace CSV back into its numeric columns (inverse of
/// [`trace_to_csv`] for the deterministic columns).
pub fn parse_trace_csv(text: &str) -> Result<Vec<TraceRow>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::InvalidArgument("empty trace csv".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    let d = cols
        .iter()
        .filter(|c| c.starts_with("theta_") && !c.starts_with("theta_bar_"))
        .count();
    let mut rows = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 + 3 * d {
            return Err(Error::InvalidArgument(format!(
                "trace row has {} fields, expected {}",
                fields.len(),
                4 + 3 * d
            )));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("bad float '{s}' in trace")))
        };
        let n = fields[0]
            .parse::<u64>()
            .map_err(|_| Error::InvalidArgument("bad iteration index".into()))?;
        let theta: Vec<f64> = fields[1..1 + d]
            .iter()
            .map(|s| parse(s))
            .collect::<Result<_>>()?;
        let theta_bar: Vec<f64> = fields[1 + d..1 + 2 * d]
            .iter()
            .map(|s| parse(s))
            .collect::<Result<_>>()?;
        let gamma = parse(fields[1 + 2 * d])?;
        let delta = parse(fields[2 + 2 * d])?;
        let m = fields[3 + 2 * d]
            .parse::<u64>()
            .map_err(|_| Error::InvalidArgument("bad batch size".into()))?;
        let grad: Vec<f64> = fields[4 + 2 * d..]
            .iter()
            .map(|s| parse(s))
            .collect::<Result<_>>()?;
        rows.push((n, theta, theta_bar, gamma, delta, m, grad));
    }
    Ok(rows)
}

/// Recompute the averaged iterate from a trace CSV's (δ, θ) columns.
pub fn theta_bar_from_csv(text: &str) -> Result<Vec<f64>> {
    let rows = parse_trace_csv(text)?;
    if rows.is_empty() {
        return Err(Error::InvalidArgument("trace csv has no rows".into()));
    }
    let d = rows[0].1.len();
    let mut num = vec![0.0; d];
    let mut den = 0.0;
    for (_, theta, _, _, delta, _, _) in &rows {
        for (acc, t) in num.iter_mut().zip(theta) {
            *acc += delta * t;
        }
        den += delta;
    }
    Ok(num.into_iter().map(|v| v / den).collect())
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    ExperimentConfig::parse(&text)
}

fn prepare_out_dir(cfg: &ExperimentConfig, out_override: Option<&Path>) -> Result<PathBuf> {
    let dir = match out_override {
        Some(p) => p.to_path_buf(),
        None => PathBuf::from(cfg.out_dir.clone().unwrap_or_else(|| "sapg-out".into())),
    };
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Pre-run validation shared by `run` and `diagnose`: instance
/// construction plus kernel admissibility at the schedule's initial step.
fn validate_for_run(cfg: &ExperimentConfig) -> Result<ProblemInstance> {
    let instance = cfg.build_instance()?;
    let kcfg = KernelConfig::new(cfg.kernel_kind, cfg.schedule.gamma0, cfg.kappa)
        .map_err(|e| Error::Config(e.to_string()))?;
    crate::samplers::validate_admissibility(&instance.model, &kcfg)
        .map_err(|e| Error::Config(e.to_string()))?;
    if instance.estimator.needs_prior_chain() {
        crate::samplers::validate_admissibility(&instance.model, &kcfg.for_prior())
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    Ok(instance)
}

/// `sapg run`: execute the driver and write `trace.csv`, `timing.csv`,
/// `summary.txt` and `config.resolved`.
pub fn cmd_run(
    config_path: &Path,
    seed_override: Option<u64>,
    out_override: Option<&Path>,
    allow_constant_step: bool,
) -> i32 {
    let mut cfg = match load_config(config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    if let Some(seed) = seed_override {
        cfg.seed = seed;
    }
    let instance = match validate_for_run(&cfg) {
        Ok(i) => i,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    let report = validate_schedule(&cfg.schedule);
    if !report.valid && !allow_constant_step {
        let which = report
            .first_violation()
            .map(|c| format!("{} (margin {})", c.name, c.margin))
            .unwrap_or_default();
        eprintln!(
            "config error: schedule violates {which}; rerun with --allow-constant-step to override"
        );
        return EXIT_CONFIG;
    }
    let out_dir = match prepare_out_dir(&cfg, out_override) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };

    let started = Instant::now();
    let result = match run(
        &instance,
        cfg.kernel_kind,
        cfg.kappa,
        &cfg.schedule,
        cfg.iterations,
        cfg.seed,
        allow_constant_step,
    ) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("runtime error: {e}");
            return EXIT_RUNTIME;
        }
    };
    let elapsed = started.elapsed().as_secs_f64();

    let mut timing = String::from("n,elapsed_s\n");
    for r in &result.trace.records {
        let _ = writeln!(timing, "{},{}", r.n, fmt_f64(r.elapsed_s));
    }
    let mut summary = String::new();
    for (i, v) in result.theta_bar.iter().enumerate() {
        let _ = writeln!(summary, "theta_bar_{i}: {}", fmt_f64(*v));
    }
    for (i, v) in result.final_theta.iter().enumerate() {
        let _ = writeln!(summary, "theta_final_{i}: {}", fmt_f64(*v));
    }
    let _ = writeln!(summary, "iterations: {}", cfg.iterations);
    let _ = writeln!(summary, "total_kernel_steps: {}", result.total_kernel_steps);
    let _ = writeln!(summary, "elapsed_s: {}", fmt_f64(elapsed));

    let write = |name: &str, content: &str| -> Result<()> {
        fs::write(out_dir.join(name), content)?;
        Ok(())
    };
    if let Err(e) = write("trace.csv", &trace_to_csv(&result.trace))
        .and_then(|_| write("timing.csv", &timing))
        .and_then(|_| write("summary.txt", &summary))
        .and_then(|_| write("config.resolved", &cfg.to_text()))
    {
        eprintln!("runtime error: {e}");
        return EXIT_RUNTIME;
    }
    print!("{summary}");
    EXIT_OK
}

/// `sapg validate-schedule`: print the per-condition report.
pub fn cmd_validate_schedule(a: f64, b: f64, c: f64, mode: &str) -> i32 {
    let batch_mode = match mode {
        "increasing" => BatchMode::Increasing,
        "fixed" => BatchMode::Fixed,
        other => {
            eprintln!("config error: mode must be 'increasing' or 'fixed', got '{other}'");
            return EXIT_CONFIG;
        }
    };
    // δ₀/γ₀/m₀ do not enter the exponent conditions; placeholders suffice.
    let schedule = match Schedule::new(1.0, 1.0, 1, a, b, c, batch_mode) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    let report = validate_schedule(&schedule);
    println!(
        "schedule (a={a}, b={b}, c={c}, mode={}):",
        batch_mode.as_str()
    );
    for cond in &report.conditions {
        println!(
            "  {:<24} {}  (margin {})",
            cond.name,
            if cond.satisfied { "ok" } else { "VIOLATED" },
            fmt_f64(cond.margin)
        );
    }
    if report.valid {
        println!("valid");
        EXIT_OK
    } else {
        println!("invalid");
        EXIT_SCHEDULE
    }
}

/// `sapg diagnose --which {drift|coupling|bias|plateau}`: write the
/// corresponding CSV report; exit 0 only when the study's hard invariants
/// hold.
pub fn cmd_diagnose(config_path: &Path, which: &str, out_override: Option<&Path>) -> i32 {
    if !matches!(which, "drift" | "coupling" | "bias" | "plateau") {
        eprintln!("config error: unknown diagnostic '{which}' (want drift|coupling|bias|plateau)");
        return EXIT_CONFIG;
    }
    let cfg = match load_config(config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    let instance = match validate_for_run(&cfg) {
        Ok(i) => i,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    let out_dir = match prepare_out_dir(&cfg, out_override) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    if let Err(e) = fs::write(out_dir.join("config.resolved"), cfg.to_text()) {
        eprintln!("runtime error: {e}");
        return EXIT_RUNTIME;
    }

    let theta = vec![cfg
        .diag
        .theta
        .unwrap_or_else(|| instance.domain.initial_theta()[0])];

    let outcome = match which {
        "drift" => diagnose_drift(&cfg, &instance, &theta, &out_dir),
        "coupling" => diagnose_coupling(&cfg, &instance, &theta, &out_dir),
        "bias" => diagnose_bias(&cfg, &instance, &theta, &out_dir),
        _ => diagnose_plateau(&cfg, &instance, &out_dir),
    };
    match outcome {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_RUNTIME,
        Err(e) => {
            eprintln!("runtime error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn diagnose_drift(
    cfg: &ExperimentConfig,
    instance: &ProblemInstance,
    theta: &[f64],
    out_dir: &Path,
) -> Result<bool> {
    let grid = scalar_grid(cfg.diag.grid_radius, cfg.diag.grid_points);
    let cap = max_step(
        &instance.model,
        cfg.kernel_kind,
        cfg.kappa,
        ChainTarget::Posterior,
    )?;
    let mut csv = String::from("gamma,x,lhs,rhs,margin,violation\n");
    let mut total_violations = 0usize;
    for frac in [0.9, 0.5, 0.1] {
        let kcfg = KernelConfig::new(cfg.kernel_kind, frac * cap, cfg.kappa)?;
        let report = drift_grid(&instance.model, theta, &kcfg, &grid)?;
        total_violations += report.violations;
        for p in &report.points {
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{}",
                fmt_f64(kcfg.gamma),
                fmt_f64(p.x[0]),
                fmt_f64(p.lhs),
                fmt_f64(p.rhs),
                fmt_f64(p.margin),
                u8::from(p.margin > 0.0)
            );
        }
    }
    fs::write(out_dir.join("drift.csv"), csv)?;
    println!("drift grid: {total_violations} violations");
    Ok(total_violations == 0)
}

fn diagnose_coupling(
    cfg: &ExperimentConfig,
    instance: &ProblemInstance,
    theta: &[f64],
    out_dir: &Path,
) -> Result<bool> {
    let kcfg = KernelConfig::new(cfg.kernel_kind, cfg.schedule.gamma0, cfg.kappa)?;
    let d = instance.model.dim();
    let x0 = vec![5.0; d];
    let y0 = vec![-5.0; d];
    let fit = coupling_contraction(
        &instance.model,
        theta,
        &kcfg,
        &x0,
        &y0,
        cfg.diag.coupling_steps,
        cfg.seed,
    )?;
    let mut csv = String::from("step,distance\n");
    for (k, dist) in fit.distances.iter().enumerate() {
        let _ = writeln!(csv, "{k},{}", fmt_f64(*dist));
    }
    fs::write(out_dir.join("coupling.csv"), csv)?;
    let ok = match fit.factor_bound {
        Some(bound) => {
            println!(
                "coupling: fitted factor {} (bound {})",
                fmt_f64(fit.factor),
                fmt_f64(bound)
            );
            fit.factor <= bound + 1e-9
        }
        None => {
            println!("coupling: fitted factor {}", fmt_f64(fit.factor));
            fit.factor <= 1.0 + 1e-9
        }
    };
    Ok(ok)
}

fn diagnose_bias(
    cfg: &ExperimentConfig,
    instance: &ProblemInstance,
    theta: &[f64],
    out_dir: &Path,
) -> Result<bool> {
    let stat_owner = instance.estimator.clone();
    let th = theta.to_vec();
    let stat = move |x: f64| stat_owner.statistic(&th, &[x])[0];
    let points = bias_sweep(
        &instance.model,
        theta,
        cfg.kernel_kind,
        cfg.kappa,
        &cfg.diag.bias_gammas,
        &stat,
        cfg.diag.bias_budget,
        cfg.seed,
    )?;
    let mut csv = String::from("gamma,estimate,stderr,oracle,bias,indistinguishable\n");
    for p in &points {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            fmt_f64(p.gamma),
            fmt_f64(p.estimate),
            fmt_f64(p.stderr),
            fmt_f64(p.oracle),
            fmt_f64(p.bias),
            u8::from(p.indistinguishable)
        );
    }
    fs::write(out_dir.join("bias.csv"), csv)?;
    for p in &points {
        if p.indistinguishable {
            println!(
                "bias at gamma={}: indistinguishable from zero (bias {} < 2×stderr {})",
                fmt_f64(p.gamma),
                fmt_f64(p.bias),
                fmt_f64(p.stderr)
            );
        } else {
            println!(
                "bias at gamma={}: {} ± {}",
                fmt_f64(p.gamma),
                fmt_f64(p.bias),
                fmt_f64(p.stderr)
            );
        }
    }
    Ok(true)
}

fn diagnose_plateau(
    cfg: &ExperimentConfig,
    instance: &ProblemInstance,
    out_dir: &Path,
) -> Result<bool> {
    let seeds: Vec<u64> = (0..cfg.diag.seeds)
        .map(|i| cfg.seed.wrapping_add(i))
        .collect();
    let points = plateau_study(
        instance,
        cfg.kernel_kind,
        cfg.kappa,
        &cfg.diag.plateau_gammas,
        cfg.diag.plateau_delta0,
        cfg.diag.plateau_m0,
        cfg.diag.plateau_iterations,
        &seeds,
    )?;
    let mut csv = String::from("gamma0,median_gap\n");
    for p in &points {
        let _ = writeln!(csv, "{},{}", fmt_f64(p.gamma0), fmt_f64(p.median_gap));
    }
    fs::write(out_dir.join("plateau.csv"), csv)?;
    let theta_star = theta_star_1d(instance)?;
    println!("plateau (theta* = {}):", fmt_f64(theta_star));
    for p in &points {
        println!(
            "  gamma0 {}: median terminal gap {}",
            fmt_f64(p.gamma0),
            fmt_f64(p.median_gap)
        );
    }
    // Hard invariant: gaps ordered with the step size when the list is
    // given largest-first.
    let mut ok = true;
    for w in points.windows(2) {
        if w[0].gamma0 > w[1].gamma0 && w[0].median_gap < w[1].median_gap {
            ok = false;
        }
    }
    Ok(ok)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::IterationRecord;

    #[test]
    fn trace_csv_round_trip_reproduces_theta_bar() {
        let mut trace = RunTrace::default();
        for n in 0..20u64 {
            let theta = 0.3 + 0.01 * n as f64;
            trace.records.push(IterationRecord {
                n,
                theta: vec![theta],
                theta_bar: vec![0.0],
                gamma: 0.1 / (n + 1) as f64,
                delta: 0.5 / ((n + 1) as f64).sqrt(),
                m: n + 1,
                grad_estimate: vec![-0.2 * theta],
                elapsed_s: 0.0,
            });
        }
        let csv = trace_to_csv(&trace);
        let direct = trace.theta_bar_recomputed().unwrap();
        let reparsed = theta_bar_from_csv(&csv).unwrap();
        for (a, b) in direct.iter().zip(&reparsed) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn trace_csv_rejects_malformed_rows() {
        assert!(parse_trace_csv("").is_err());
        let bad = "n,theta_0,theta_bar_0,gamma,delta,m,grad_0\n0,1.0,1.0,0.1\n";
        assert!(parse_trace_csv(bad).is_err());
    }
}
