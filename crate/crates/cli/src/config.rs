//! Experiment configuration: a JSON document plus `--set key=value`
//! overrides.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use vrclt_core::inference::RegionTarget;
use vrclt_core::numerics::{Matrix, RngStream};
use vrclt_core::schedules::default_rho;
use vrclt_core::solvers::{accelerated_beta, heavy_ball_beta};
use vrclt_core::{
    AlgorithmKind, AnyProblem, BaselineStep, BatchSchedule, LinearRegressionProblem, QuadraticGaussianProblem,
    SolverConfig, StochasticProblem,
};

use crate::CliError;

pub const SEED_ENV: &str = "VRCLT_SEED";
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Rates,
    Clt,
    Coverage,
    Compare,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Rates => "rates",
            ExperimentKind::Clt => "clt",
            ExperimentKind::Coverage => "coverage",
            ExperimentKind::Compare => "compare",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rates" => Ok(Self::Rates),
            "clt" => Ok(Self::Clt),
            "coverage" => Ok(Self::Coverage),
            "compare" => Ok(Self::Compare),
            other => Err(format!("unknown experiment `{other}`")),
        }
    }
}

/// Noise covariance of a quadratic problem: a full matrix or a multiple of
/// the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NoiseSpec {
    Scale(f64),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProblemSpec {
    /// `f(x) = ½(x−x*)ᵀH(x−x*)` with additive Gaussian gradient noise.
    Quadratic {
        eigenvalues: Vec<f64>,
        x_star: Vec<f64>,
        noise: NoiseSpec,
        /// Rotate the Hessian by a random orthogonal matrix drawn from this
        /// seed; diagonal when absent.
        #[serde(default)]
        basis_seed: Option<u64>,
    },
    /// Streaming least squares `y = uᵀx* + ν`, `u ~ N(0, R_u)`.
    LinearRegression {
        /// Either a full `R_u` ...
        #[serde(default)]
        r_u: Option<Vec<Vec<f64>>>,
        /// ... or its eigenvalues, rotated by `basis_seed`.
        #[serde(default)]
        r_u_eigenvalues: Option<Vec<f64>>,
        #[serde(default)]
        basis_seed: Option<u64>,
        sigma_nu: f64,
        x_star: Vec<f64>,
    },
}

impl Default for ProblemSpec {
    fn default() -> Self {
        ProblemSpec::Quadratic {
            eigenvalues: vec![1.0, 2.5, 4.0, 7.0, 10.0],
            x_star: vec![1.0, -0.5, 0.25, 2.0, -1.0],
            noise: NoiseSpec::Scale(1.0),
            basis_seed: Some(11),
        }
    }
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<Matrix, CliError> {
    Matrix::from_rows(rows).map_err(|e| CliError::Config(format!("{what}: {e}")))
}

impl ProblemSpec {
    pub fn build(&self) -> Result<AnyProblem, CliError> {
        let invalid = |e: vrclt_core::Error| CliError::Config(format!("problem: {e}"));
        match self {
            ProblemSpec::Quadratic {
                eigenvalues,
                x_star,
                noise,
                basis_seed,
            } => {
                let m = x_star.len();
                let noise_cov = match noise {
                    NoiseSpec::Scale(s) => Matrix::identity(m).scale(*s),
                    NoiseSpec::Matrix(rows) => matrix_from_rows(rows, "problem.noise")?,
                };
                let p = match basis_seed {
                    Some(seed) => QuadraticGaussianProblem::random_basis(
                        eigenvalues,
                        x_star.clone(),
                        noise_cov,
                        &mut RngStream::new(*seed, 0),
                    ),
                    None => QuadraticGaussianProblem::diagonal(eigenvalues, x_star.clone(), noise_cov),
                }
                .map_err(invalid)?;
                Ok(p.into())
            }
            ProblemSpec::LinearRegression {
                r_u,
                r_u_eigenvalues,
                basis_seed,
                sigma_nu,
                x_star,
            } => {
                let r = match (r_u, r_u_eigenvalues) {
                    (Some(rows), None) => matrix_from_rows(rows, "problem.r_u")?,
                    (None, Some(eigs)) => match basis_seed {
                        Some(seed) => vrclt_core::numerics::random_spd_with_spectrum(eigs, &mut RngStream::new(*seed, 0))
                            .map_err(invalid)?
                            .symmetrized(),
                        None => Matrix::from_diag(eigs),
                    },
                    _ => {
                        return Err(CliError::Config(
                            "problem: give exactly one of `r_u` and `r_u_eigenvalues`".into(),
                        ))
                    }
                };
                Ok(LinearRegressionProblem::new(r, *sigma_nu, x_star.clone())
                    .map_err(invalid)?
                    .into())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ScheduleSpec {
    /// `ρ` defaults to the method's own rate.
    Geometric {
        #[serde(default)]
        rho: Option<f64>,
    },
    Polynomial { v: f64 },
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        ScheduleSpec::Geometric { rho: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmOverrides {
    pub kind: AlgorithmKind,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlgorithmSpec {
    Name(AlgorithmKind),
    Detailed(AlgorithmOverrides),
}

impl AlgorithmSpec {
    pub fn kind(&self) -> AlgorithmKind {
        match self {
            AlgorithmSpec::Name(k) => *k,
            AlgorithmSpec::Detailed(o) => o.kind,
        }
    }

    fn overrides(&self) -> (Option<f64>, Option<f64>) {
        match self {
            AlgorithmSpec::Name(_) => (None, None),
            AlgorithmSpec::Detailed(o) => (o.alpha, o.rho),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageSpec {
    #[serde(default = "default_replications")]
    pub n: Vec<usize>,
    #[serde(default = "default_budgets")]
    pub n_max: Vec<u64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_meta_reps")]
    pub meta_reps: usize,
    #[serde(default)]
    pub target: RegionTarget,
}

fn default_replications() -> Vec<usize> {
    vec![6, 8, 10, 15]
}

fn default_budgets() -> Vec<u64> {
    vec![1000]
}

fn default_delta() -> f64 {
    0.05
}

fn default_meta_reps() -> usize {
    200
}

impl Default for CoverageSpec {
    fn default() -> Self {
        Self {
            n: default_replications(),
            n_max: default_budgets(),
            delta: default_delta(),
            meta_reps: default_meta_reps(),
            target: RegionTarget::Primary,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSpec {
    #[serde(default = "default_compare_budget")]
    pub n_max: u64,
}

fn default_compare_budget() -> u64 {
    100_000
}

impl Default for CompareSpec {
    fn default() -> Self {
        Self {
            n_max: default_compare_budget(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CltSpec {
    /// Relative tolerance of the limiting-covariance computation.
    #[serde(default = "default_sigma_tol")]
    pub sigma_tol: f64,
}

fn default_sigma_tol() -> f64 {
    1e-10
}

impl Default for CltSpec {
    fn default() -> Self {
        Self {
            sigma_tol: default_sigma_tol(),
        }
    }
}

fn default_algorithms() -> Vec<AlgorithmSpec> {
    AlgorithmKind::VARIANCE_REDUCED.iter().copied().map(AlgorithmSpec::Name).collect()
}

fn default_trajectories() -> usize {
    100
}

fn default_steps() -> u64 {
    30
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Must match the subcommand when present.
    #[serde(default)]
    pub experiment: Option<ExperimentKind>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub problem: ProblemSpec,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<AlgorithmSpec>,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub batch_cap: Option<u64>,
    /// Defaults to the origin.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default = "default_trajectories")]
    pub trajectories: usize,
    #[serde(default = "default_steps")]
    pub steps: u64,
    #[serde(default)]
    pub baseline: Option<BaselineStep>,
    #[serde(default)]
    pub coverage: CoverageSpec,
    #[serde(default)]
    pub compare: CompareSpec,
    #[serde(default)]
    pub clt: CltSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_value(Value::Object(Default::default())).expect("every field has a default")
    }
}

/// Reads the document at `path` (or starts from an empty object), applies
/// the overrides in order and deserializes.
pub fn load(path: Option<&Path>, sets: &[String]) -> Result<ExperimentConfig, CliError> {
    let mut doc = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str::<Value>(&text).map_err(|e| {
                CliError::Config(format!("{}: line {} column {}: {e}", p.display(), e.line(), e.column()))
            })?
        }
        None => Value::Object(Default::default()),
    };
    for s in sets {
        apply_set(&mut doc, s)?;
    }
    parse_value(doc)
}

pub fn parse_value(doc: Value) -> Result<ExperimentConfig, CliError> {
    serde_path_to_error::deserialize(doc).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("at `{path}`: {}", e.into_inner()))
    })
}

/// Applies one `dotted.key=value` override. The value is parsed as JSON and
/// falls back to a plain string.
pub fn apply_set(doc: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--set expects key=value, got `{assignment}`")))?;
    let value = serde_json::from_str::<Value>(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("--set: malformed key `{key}`")));
    }
    // sections missing from the document start from their defaults
    let defaults = serde_json::to_value(ExperimentConfig::default()).expect("defaults serialize");
    let mut fallback = Some(&defaults);
    let mut node = doc;
    for part in &parts[..parts.len() - 1] {
        if !node.is_object() {
            return Err(CliError::Config(format!("--set: `{key}` crosses a non-object value")));
        }
        fallback = fallback.and_then(|d| d.get(part));
        let seed = fallback
            .filter(|d| d.is_object())
            .cloned()
            .unwrap_or_else(|| Value::Object(Default::default()));
        node = node
            .as_object_mut()
            .expect("checked above")
            .entry(part.to_string())
            .or_insert(seed);
    }
    match node.as_object_mut() {
        Some(obj) => {
            let last = parts[parts.len() - 1];
            // switching a tagged section's variant drops the old variant's fields
            if last == "kind" && obj.get("kind").is_some_and(|k| *k != value) {
                obj.clear();
            }
            obj.insert(last.to_string(), value);
            Ok(())
        }
        None => Err(CliError::Config(format!("--set: `{key}` crosses a non-object value"))),
    }
}

/// `--seed`, then the config, then `VRCLT_SEED`, then [`DEFAULT_SEED`].
pub fn resolve_seed(flag: Option<u64>, config: Option<u64>, env: Option<&str>) -> Result<u64, CliError> {
    if let Some(s) = flag.or(config) {
        return Ok(s);
    }
    match env {
        Some(raw) => raw
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("{SEED_ENV} must be an unsigned integer, got `{raw}`"))),
        None => Ok(DEFAULT_SEED),
    }
}

/// A validated configuration with its problem and per-algorithm solver
/// settings built.
pub struct Prepared {
    pub config: ExperimentConfig,
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub problem: AnyProblem,
    pub solvers: Vec<SolverConfig>,
}

impl ExperimentConfig {
    fn schedule_for(&self, spec: &AlgorithmSpec, eta: f64, lip: f64) -> Result<BatchSchedule, CliError> {
        let kind = spec.kind();
        let (_, rho_override) = spec.overrides();
        let sched = match self.schedule {
            ScheduleSpec::Geometric { rho } => {
                let rho = match rho_override.or(rho) {
                    Some(r) => r,
                    None => default_rho(kind, eta, lip).map_err(|e| CliError::Config(format!("{kind}: {e}")))?,
                };
                BatchSchedule::geometric(rho)
            }
            ScheduleSpec::Polynomial { v } => {
                if rho_override.is_some() {
                    return Err(CliError::Config(format!("{kind}: `rho` given with a polynomial schedule")));
                }
                BatchSchedule::polynomial(v)
            }
        };
        sched
            .and_then(|s| s.with_cap(self.batch_cap))
            .map_err(|e| CliError::Config(format!("{kind}: schedule: {e}")))
    }

    fn solver_for(&self, spec: &AlgorithmSpec, p: &AnyProblem, x0: &[f64], steps: u64) -> Result<SolverConfig, CliError> {
        let kind = spec.kind();
        let err = |e: vrclt_core::Error| CliError::Config(format!("{kind}: {e}"));
        let mut cfg = SolverConfig::defaults(kind, p, x0.to_vec(), steps).map_err(err)?;
        if kind == AlgorithmKind::BaselineSgd {
            if let Some(rule) = self.baseline {
                cfg.baseline_step = Some(rule);
            }
            if spec.overrides() != (None, None) {
                return Err(CliError::Config("baseline-sgd takes no alpha or rho override".into()));
            }
        } else {
            if let (Some(alpha), _) = spec.overrides() {
                cfg.alpha = alpha;
                cfg.beta = match kind {
                    AlgorithmKind::VrAccelerated => accelerated_beta(alpha, p.eta()),
                    AlgorithmKind::VrHeavyBall => heavy_ball_beta(alpha, p.eta(), p.lip()),
                    _ => 0.0,
                };
            }
            cfg.schedule = Some(self.schedule_for(spec, p.eta(), p.lip())?);
        }
        cfg.validate(p).map_err(err)?;
        if let (Some(sched), true) = (&cfg.schedule, kind != AlgorithmKind::BaselineSgd) {
            sched.sizes(steps).map_err(err)?;
        }
        Ok(cfg)
    }

    /// Checks the configuration for `experiment` and builds everything that
    /// can fail before any simulation starts.
    pub fn prepare(self, experiment: ExperimentKind, seed: u64) -> Result<Prepared, CliError> {
        if let Some(declared) = self.experiment {
            if declared != experiment {
                return Err(CliError::Config(format!(
                    "config declares experiment `{declared}` but `{experiment}` was requested"
                )));
            }
        }
        if self.algorithms.is_empty() {
            return Err(CliError::Config("`algorithms` must not be empty".into()));
        }
        let mut seen = Vec::new();
        for a in &self.algorithms {
            if seen.contains(&a.kind()) {
                return Err(CliError::Config(format!("algorithm `{}` listed twice", a.kind())));
            }
            seen.push(a.kind());
        }
        if self.trajectories == 0 {
            return Err(CliError::Config("`trajectories` must be positive".into()));
        }
        let problem = self.problem.build()?;
        let m = problem.dim();
        let x0 = self.x0.clone().unwrap_or_else(|| vec![0.0; m]);
        if x0.len() != m {
            return Err(CliError::Config(format!("`x0` has length {}, problem dimension is {m}", x0.len())));
        }
        match experiment {
            ExperimentKind::Rates => {}
            ExperimentKind::Clt => {
                if self.trajectories < 100 {
                    return Err(CliError::Config(format!(
                        "clt needs at least 100 trajectories, got {}",
                        self.trajectories
                    )));
                }
                if seen.contains(&AlgorithmKind::BaselineSgd) {
                    return Err(CliError::Config("clt does not support baseline-sgd".into()));
                }
            }
            ExperimentKind::Coverage => {
                let c = &self.coverage;
                if c.n.is_empty() || c.n_max.is_empty() {
                    return Err(CliError::Config("coverage: `n` and `n_max` must not be empty".into()));
                }
                if !(c.delta > 0.0 && c.delta < 1.0) {
                    return Err(CliError::Config(format!("coverage: `delta` must lie in (0, 1), got {}", c.delta)));
                }
                if c.meta_reps == 0 {
                    return Err(CliError::Config("coverage: `meta_reps` must be positive".into()));
                }
                let dim = match c.target {
                    RegionTarget::Primary => m,
                    RegionTarget::Stacked => 2 * m,
                };
                if let Some(&n) = c.n.iter().find(|&&n| n <= dim) {
                    return Err(CliError::Config(format!("coverage: n = {n} must exceed the region dimension {dim}")));
                }
                if c.n.iter().any(|&n| n >= 1 << 16) || c.meta_reps >= 1 << 24 {
                    return Err(CliError::Config("coverage: n must be below 65536 and meta_reps below 2^24".into()));
                }
                if c.n_max.contains(&0) {
                    return Err(CliError::Config("coverage: budgets must be positive".into()));
                }
            }
            ExperimentKind::Compare => {
                if self.compare.n_max == 0 {
                    return Err(CliError::Config("compare: `n_max` must be positive".into()));
                }
            }
        }
        let mut specs = self.algorithms.clone();
        if experiment == ExperimentKind::Compare && !seen.contains(&AlgorithmKind::BaselineSgd) {
            specs.push(AlgorithmSpec::Name(AlgorithmKind::BaselineSgd));
        }
        let solvers = specs
            .iter()
            .map(|a| self.solver_for(a, &problem, &x0, self.steps))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Prepared {
            config: self,
            experiment,
            seed,
            problem,
            solvers,
        })
    }
}
