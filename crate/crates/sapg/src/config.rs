//! Flat, human-editable experiment configuration.
//!
//! One `key = value` pair per line, `#` comments, nested parameters
//! namespaced by prefix (`model.`, `kernel.`, `schedule.`, `run.`,
//! `diag.`). A config round-trips losslessly through
//! [`ExperimentConfig::to_text`] / [`ExperimentConfig::parse`]: values are
//! written with shortest round-trip float formatting and keys in canonical
//! order.

use crate::driver::{BatchMode, Schedule};
use crate::model::{self, EstimatorSpec, ProblemInstance};
use crate::samplers::KernelKind;
use crate::util::norm_sq;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    GaussianConjugate,
    Laplace,
    GroupLasso,
}

impl ModelKind {
    fn as_str(&self) -> &'static str {
        match self {
            ModelKind::GaussianConjugate => "gaussian_conjugate",
            ModelKind::Laplace => "laplace",
            ModelKind::GroupLasso => "group_lasso",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "gaussian_conjugate" => Ok(ModelKind::GaussianConjugate),
            "laplace" => Ok(ModelKind::Laplace),
            "group_lasso" => Ok(ModelKind::GroupLasso),
            other => Err(Error::Config(format!("unknown model.kind '{other}'"))),
        }
    }
}

/// Parameters consumed by the `diagnose` subcommand; all optional in the
/// file, with defaults matching the shipped verification suites.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagConfig {
    /// θ the kernel-level diagnostics freeze; defaults to the domain's
    /// initial point.
    pub theta: Option<f64>,
    pub grid_radius: f64,
    pub grid_points: usize,
    pub bias_gammas: Vec<f64>,
    pub bias_budget: u64,
    pub plateau_gammas: Vec<f64>,
    pub plateau_iterations: u64,
    pub plateau_delta0: f64,
    pub plateau_m0: u64,
    pub seeds: u64,
    pub coupling_steps: u64,
}

impl Default for DiagConfig {
    fn default() -> Self {
        Self {
            theta: None,
            grid_radius: 10.0,
            grid_points: 101,
            bias_gammas: vec![0.4, 0.1],
            bias_budget: 8_000_000,
            plateau_gammas: vec![0.6, 0.15],
            plateau_iterations: 1000,
            plateau_delta0: 0.05,
            plateau_m0: 400,
            seeds: 5,
            coupling_steps: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model_kind: ModelKind,
    pub y: Vec<f64>,
    pub sigma2: f64,
    /// Group-lasso block structure; empty for scalar models.
    pub blocks: Vec<Vec<usize>>,
    pub domain_lower: f64,
    pub domain_upper: f64,
    /// Replace the model's natural homogeneous estimator by the two-chain
    /// inhomogeneous one.
    pub inhomogeneous: bool,
    pub kernel_kind: KernelKind,
    pub kappa: f64,
    pub schedule: Schedule,
    pub iterations: u64,
    pub seed: u64,
    pub out_dir: Option<String>,
    pub diag: DiagConfig,
}

impl ExperimentConfig {
    /// A runnable default: the conjugate instance under MYULA with the
    /// increasing-batch schedule.
    pub fn example() -> Self {
        Self {
            model_kind: ModelKind::GaussianConjugate,
            y: vec![2.0],
            sigma2: 1.0,
            blocks: Vec::new(),
            domain_lower: 0.05,
            domain_upper: 10.0,
            inhomogeneous: false,
            kernel_kind: KernelKind::Myula,
            kappa: 1.0,
            schedule: Schedule::new(0.3, 0.9, 60, 0.0, 2.5, 3.5, BatchMode::Increasing).unwrap(),
            iterations: 16,
            seed: 1234,
            out_dir: None,
            diag: DiagConfig::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            pairs.push((key.trim().to_string(), value.trim().to_string()));
        }

        let get = |key: &str| -> Option<&str> {
            pairs
                .iter()
                .rev()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
        };
        let known = [
            "model.kind",
            "model.y",
            "model.sigma2",
            "model.blocks",
            "domain.lower",
            "domain.upper",
            "estimator.variant",
            "kernel.kind",
            "kernel.kappa",
            "schedule.delta0",
            "schedule.gamma0",
            "schedule.m0",
            "schedule.a",
            "schedule.b",
            "schedule.c",
            "schedule.batch_mode",
            "run.iterations",
            "run.seed",
            "output.dir",
            "diag.theta",
            "diag.grid_radius",
            "diag.grid_points",
            "diag.bias_gammas",
            "diag.bias_budget",
            "diag.plateau_gammas",
            "diag.plateau_iterations",
            "diag.plateau_delta0",
            "diag.plateau_m0",
            "diag.seeds",
            "diag.coupling_steps",
        ];
        for (k, _) in &pairs {
            if !known.contains(&k.as_str()) {
                return Err(Error::Config(format!("unknown key '{k}'")));
            }
        }

        let require = |key: &str| -> Result<&str> {
            get(key).ok_or_else(|| Error::Config(format!("missing key '{key}'")))
        };
        let parse_f64 = |key: &str, v: &str| -> Result<f64> {
            v.parse::<f64>()
                .map_err(|_| Error::Config(format!("key '{key}': '{v}' is not a number")))
        };
        let parse_u64 = |key: &str, v: &str| -> Result<u64> {
            v.parse::<u64>()
                .map_err(|_| Error::Config(format!("key '{key}': '{v}' is not an integer")))
        };
        let parse_f64_list = |key: &str, v: &str| -> Result<Vec<f64>> {
            v.split(',')
                .map(|p| parse_f64(key, p.trim()))
                .collect::<Result<Vec<f64>>>()
        };

        let model_kind = ModelKind::parse(require("model.kind")?)?;
        let y = parse_f64_list("model.y", require("model.y")?)?;
        let sigma2 = parse_f64("model.sigma2", require("model.sigma2")?)?;
        let blocks = match get("model.blocks") {
            None => Vec::new(),
            Some(v) => v
                .split(';')
                .map(|b| {
                    b.split(',')
                        .map(|i| {
                            i.trim().parse::<usize>().map_err(|_| {
                                Error::Config(format!("model.blocks: '{i}' is not an index"))
                            })
                        })
                        .collect::<Result<Vec<usize>>>()
                })
                .collect::<Result<Vec<Vec<usize>>>>()?,
        };
        let domain_lower = parse_f64("domain.lower", require("domain.lower")?)?;
        let domain_upper = parse_f64("domain.upper", require("domain.upper")?)?;
        let inhomogeneous = match get("estimator.variant") {
            None | Some("default") => false,
            Some("inhomogeneous") => true,
            Some(other) => {
                return Err(Error::Config(format!(
                    "estimator.variant must be 'default' or 'inhomogeneous', got '{other}'"
                )))
            }
        };
        let kernel_kind = match require("kernel.kind")? {
            "ula" => KernelKind::Ula,
            "myula" => KernelKind::Myula,
            "pula" => KernelKind::Pula,
            other => return Err(Error::Config(format!("unknown kernel.kind '{other}'"))),
        };
        let kappa = parse_f64("kernel.kappa", require("kernel.kappa")?)?;
        let batch_mode = match require("schedule.batch_mode")? {
            "increasing" => BatchMode::Increasing,
            "fixed" => BatchMode::Fixed,
            other => {
                return Err(Error::Config(format!(
                    "schedule.batch_mode must be 'increasing' or 'fixed', got '{other}'"
                )))
            }
        };
        let schedule = Schedule::new(
            parse_f64("schedule.delta0", require("schedule.delta0")?)?,
            parse_f64("schedule.gamma0", require("schedule.gamma0")?)?,
            parse_u64("schedule.m0", require("schedule.m0")?)?,
            parse_f64("schedule.a", require("schedule.a")?)?,
            parse_f64("schedule.b", require("schedule.b")?)?,
            parse_f64("schedule.c", require("schedule.c")?)?,
            batch_mode,
        )
        .map_err(|e| Error::Config(e.to_string()))?;
        let iterations = parse_u64("run.iterations", require("run.iterations")?)?;
        let seed = parse_u64("run.seed", require("run.seed")?)?;
        let out_dir = get("output.dir").map(|s| s.to_string());

        let mut diag = DiagConfig::default();
        if let Some(v) = get("diag.theta") {
            diag.theta = Some(parse_f64("diag.theta", v)?);
        }
        if let Some(v) = get("diag.grid_radius") {
            diag.grid_radius = parse_f64("diag.grid_radius", v)?;
        }
        if let Some(v) = get("diag.grid_points") {
            diag.grid_points = parse_u64("diag.grid_points", v)? as usize;
        }
        if let Some(v) = get("diag.bias_gammas") {
            diag.bias_gammas = parse_f64_list("diag.bias_gammas", v)?;
        }
        if let Some(v) = get("diag.bias_budget") {
            diag.bias_budget = parse_u64("diag.bias_budget", v)?;
        }
        if let Some(v) = get("diag.plateau_gammas") {
            diag.plateau_gammas = parse_f64_list("diag.plateau_gammas", v)?;
        }
        if let Some(v) = get("diag.plateau_iterations") {
            diag.plateau_iterations = parse_u64("diag.plateau_iterations", v)?;
        }
        if let Some(v) = get("diag.plateau_delta0") {
            diag.plateau_delta0 = parse_f64("diag.plateau_delta0", v)?;
        }
        if let Some(v) = get("diag.plateau_m0") {
            diag.plateau_m0 = parse_u64("diag.plateau_m0", v)?;
        }
        if let Some(v) = get("diag.seeds") {
            diag.seeds = parse_u64("diag.seeds", v)?;
        }
        if let Some(v) = get("diag.coupling_steps") {
            diag.coupling_steps = parse_u64("diag.coupling_steps", v)?;
        }

        Ok(Self {
            model_kind,
            y,
            sigma2,
            blocks,
            domain_lower,
            domain_upper,
            inhomogeneous,
            kernel_kind,
            kappa,
            schedule,
            iterations,
            seed,
            out_dir,
            diag,
        })
    }

    /// Canonical serialisation; `parse(to_text(c)) == c`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut push = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        push("model.kind", self.model_kind.as_str().to_string());
        push(
            "model.y",
            self.y
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        push("model.sigma2", self.sigma2.to_string());
        if !self.blocks.is_empty() {
            push(
                "model.blocks",
                self.blocks
                    .iter()
                    .map(|b| {
                        b.iter()
                            .map(|i| i.to_string())
                            .collect::<Vec<_>>()
                            .join(",")
                    })
                    .collect::<Vec<_>>()
                    .join(";"),
            );
        }
        push("domain.lower", self.domain_lower.to_string());
        push("domain.upper", self.domain_upper.to_string());
        push(
            "estimator.variant",
            if self.inhomogeneous {
                "inhomogeneous".to_string()
            } else {
                "default".to_string()
            },
        );
        push("kernel.kind", self.kernel_kind.as_str().to_string());
        push("kernel.kappa", self.kappa.to_string());
        push("schedule.delta0", self.schedule.delta0.to_string());
        push("schedule.gamma0", self.schedule.gamma0.to_string());
        push("schedule.m0", self.schedule.m0.to_string());
        push("schedule.a", self.schedule.a.to_string());
        push("schedule.b", self.schedule.b.to_string());
        push("schedule.c", self.schedule.c.to_string());
        push(
            "schedule.batch_mode",
            self.schedule.batch_mode.as_str().to_string(),
        );
        push("run.iterations", self.iterations.to_string());
        push("run.seed", self.seed.to_string());
        if let Some(dir) = &self.out_dir {
            push("output.dir", dir.clone());
        }
        let dd = DiagConfig::default();
        if let Some(t) = self.diag.theta {
            push("diag.theta", t.to_string());
        }
        if self.diag.grid_radius != dd.grid_radius {
            push("diag.grid_radius", self.diag.grid_radius.to_string());
        }
        if self.diag.grid_points != dd.grid_points {
            push("diag.grid_points", self.diag.grid_points.to_string());
        }
        if self.diag.bias_gammas != dd.bias_gammas {
            push(
                "diag.bias_gammas",
                self.diag
                    .bias_gammas
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            );
        }
        if self.diag.bias_budget != dd.bias_budget {
            push("diag.bias_budget", self.diag.bias_budget.to_string());
        }
        if self.diag.plateau_gammas != dd.plateau_gammas {
            push(
                "diag.plateau_gammas",
                self.diag
                    .plateau_gammas
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            );
        }
        if self.diag.plateau_iterations != dd.plateau_iterations {
            push(
                "diag.plateau_iterations",
                self.diag.plateau_iterations.to_string(),
            );
        }
        if self.diag.plateau_delta0 != dd.plateau_delta0 {
            push("diag.plateau_delta0", self.diag.plateau_delta0.to_string());
        }
        if self.diag.plateau_m0 != dd.plateau_m0 {
            push("diag.plateau_m0", self.diag.plateau_m0.to_string());
        }
        if self.diag.seeds != dd.seeds {
            push("diag.seeds", self.diag.seeds.to_string());
        }
        if self.diag.coupling_steps != dd.coupling_steps {
            push("diag.coupling_steps", self.diag.coupling_steps.to_string());
        }
        out
    }

    /// Build the problem instance, validating model parameters against the
    /// declared admissibility requirements.
    pub fn build_instance(&self) -> Result<ProblemInstance> {
        let inst = match self.model_kind {
            ModelKind::GaussianConjugate => {
                if self.y.len() != 1 {
                    return Err(Error::Config(
                        "gaussian_conjugate expects a scalar model.y".into(),
                    ));
                }
                model::gaussian_conjugate_with_domain(
                    self.y[0],
                    self.sigma2,
                    self.domain_lower,
                    self.domain_upper,
                )?
            }
            ModelKind::Laplace => {
                if self.y.len() != 1 {
                    return Err(Error::Config("laplace expects a scalar model.y".into()));
                }
                model::laplace_scalar_with_domain(
                    self.y[0],
                    self.sigma2,
                    self.domain_lower,
                    self.domain_upper,
                )?
            }
            ModelKind::GroupLasso => {
                if self.blocks.is_empty() {
                    return Err(Error::Config("group_lasso requires model.blocks".into()));
                }
                let dim = self.y.len();
                let identity: Vec<Vec<f64>> = (0..dim)
                    .map(|i| {
                        let mut row = vec![0.0; dim];
                        row[i] = 1.0;
                        row
                    })
                    .collect();
                model::group_lasso_with_domain(
                    &identity,
                    &self.y,
                    self.sigma2,
                    &self.blocks,
                    self.domain_lower,
                    self.domain_upper,
                )?
            }
        };
        if !self.inhomogeneous {
            return Ok(inst);
        }
        // Swap in the two-chain estimator, reusing the model's statistic.
        let estimator = match self.model_kind {
            ModelKind::GaussianConjugate => {
                EstimatorSpec::inhomogeneous(1, |_, x| vec![0.5 * norm_sq(x)])
            }
            ModelKind::Laplace => {
                EstimatorSpec::inhomogeneous(1, |_, x| vec![x.iter().map(|v| v.abs()).sum::<f64>()])
            }
            ModelKind::GroupLasso => {
                let blocks = self.blocks.clone();
                EstimatorSpec::inhomogeneous(self.blocks.len(), move |_, x| {
                    blocks
                        .iter()
                        .map(|b| b.iter().map(|&i| x[i].abs()).sum())
                        .collect()
                })
            }
        };
        ProblemInstance::new(inst.model, estimator, inst.domain, inst.observation)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_lossless() {
        let mut cfg = ExperimentConfig::example();
        cfg.seed = 987654321;
        cfg.schedule.gamma0 = 0.12345678901234567;
        cfg.out_dir = Some("runs/a".into());
        cfg.diag.bias_gammas = vec![0.3, 0.075];
        let text = cfg.to_text();
        let back = ExperimentConfig::parse(&text).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(text, back.to_text());
    }

    #[test]
    fn parse_rejects_unknown_keys_and_garbage() {
        assert!(ExperimentConfig::parse("model.knid = laplace").is_err());
        assert!(ExperimentConfig::parse("model.kind laplace").is_err());
        let mut text = ExperimentConfig::example().to_text();
        text.push_str("schedule.gamma0 = fast\n");
        assert!(ExperimentConfig::parse(&text).is_err());
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let mut text = String::from("# experiment\n\n");
        text.push_str(&ExperimentConfig::example().to_text());
        text.push_str("\n# trailing comment\n");
        let cfg = ExperimentConfig::parse(&text).unwrap();
        assert_eq!(cfg, ExperimentConfig::example());
    }

    #[test]
    fn group_lasso_instance_from_config() {
        let mut cfg = ExperimentConfig::example();
        cfg.model_kind = ModelKind::GroupLasso;
        cfg.y = vec![1.0, -2.0, 0.5];
        cfg.blocks = vec![vec![0, 1], vec![2]];
        cfg.domain_lower = 0.1;
        cfg.domain_upper = 5.0;
        let inst = cfg.build_instance().unwrap();
        assert_eq!(inst.domain.dim(), 2);
        assert_eq!(inst.model.dim(), 3);
        let text = cfg.to_text();
        assert_eq!(ExperimentConfig::parse(&text).unwrap(), cfg);
    }

    #[test]
    fn inhomogeneous_override_swaps_estimator() {
        let mut cfg = ExperimentConfig::example();
        cfg.model_kind = ModelKind::Laplace;
        cfg.domain_lower = 0.1;
        cfg.domain_upper = 5.0;
        cfg.inhomogeneous = true;
        let inst = cfg.build_instance().unwrap();
        assert!(inst.estimator.needs_prior_chain());
    }
}
