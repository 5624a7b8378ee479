//! Replication ensembles, Hotelling confidence regions, coverage experiments
//! and CLT diagnostics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::numerics::{cholesky, f_quantile, mvn_sample, Matrix, RngStream, SpdFactor};
use crate::problems::StochasticProblem;
use crate::solvers::{run, AlgorithmKind, SolverConfig, Storage};

/// Asymptotic 1% critical value of the Kolmogorov distribution.
pub const KS_CRITICAL_1PCT: f64 = 1.6276;

/// Normalization applied to terminal errors before comparing them with a
/// limiting covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Scaling {
    /// `α^{−1} ρ^{−k/2}`
    Geometric { rho: f64, alpha: f64 },
    /// `α^{−1} k^{v/2}`
    Polynomial { v: f64, alpha: f64 },
}

impl Scaling {
    pub fn factor(&self, k: u64) -> f64 {
        match *self {
            Scaling::Geometric { rho, alpha } => rho.powf(-0.5 * k as f64) / alpha,
            Scaling::Polynomial { v, alpha } => (k as f64).powf(0.5 * v) / alpha,
        }
    }
}

/// Terminal iterates of `n` independent replications at step `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationEnsemble {
    pub k: u64,
    pub iterates: Vec<Vec<f64>>,
    /// Iterates at step `k − 1`, for stacked rescaled errors.
    pub previous: Option<Vec<Vec<f64>>>,
    pub scaling: Option<Scaling>,
}

impl ReplicationEnsemble {
    pub fn new(k: u64, iterates: Vec<Vec<f64>>) -> Result<Self> {
        if iterates.len() < 2 {
            return Err(Error::TooFewReplicates {
                n: iterates.len(),
                dim: 1,
            });
        }
        let m = iterates[0].len();
        if let Some(bad) = iterates.iter().find(|x| x.len() != m) {
            return Err(Error::DimensionMismatch {
                context: "ReplicationEnsemble::new",
                expected: m,
                actual: bad.len(),
            });
        }
        Ok(Self {
            k,
            iterates,
            previous: None,
            scaling: None,
        })
    }

    pub fn with_scaling(mut self, scaling: Scaling) -> Self {
        self.scaling = Some(scaling);
        self
    }

    pub fn with_previous(mut self, previous: Vec<Vec<f64>>) -> Result<Self> {
        if previous.len() != self.n() || previous.iter().any(|x| x.len() != self.dim()) {
            return Err(Error::DimensionMismatch {
                context: "ReplicationEnsemble::with_previous",
                expected: self.n(),
                actual: previous.len(),
            });
        }
        self.previous = Some(previous);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.iterates.len()
    }

    pub fn dim(&self) -> usize {
        self.iterates[0].len()
    }
}

/// Sample mean and unbiased sample covariance of equally sized vectors.
pub fn mean_cov(samples: &[Vec<f64>]) -> (Vec<f64>, Matrix) {
    let n = samples.len();
    let m = samples.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; m];
    for s in samples {
        for (a, b) in mean.iter_mut().zip(s) {
            *a += b;
        }
    }
    mean.iter_mut().for_each(|a| *a /= n as f64);
    let mut cov = Matrix::zeros(m, m);
    let mut d = vec![0.0; m];
    for s in samples {
        for i in 0..m {
            d[i] = s[i] - mean[i];
        }
        for i in 0..m {
            for j in i..m {
                cov[(i, j)] += d[i] * d[j];
            }
        }
    }
    let denom = (n.max(2) - 1) as f64;
    for i in 0..m {
        for j in i..m {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    (mean, cov)
}

pub fn ensemble_mean_cov(ensemble: &ReplicationEnsemble) -> (Vec<f64>, Matrix) {
    mean_cov(&ensemble.iterates)
}

fn factor_covariance(s: &Matrix) -> Result<SpdFactor> {
    if !s.is_finite() || s.max_abs() == 0.0 {
        return Err(Error::SingularCovariance);
    }
    cholesky(s).map_err(|e| match e {
        Error::NotPositiveDefinite { .. } => Error::SingularCovariance,
        other => other,
    })
}

fn hotelling_with_factor(xbar: &[f64], f: &SpdFactor, n: usize, x: &[f64]) -> f64 {
    let d: Vec<f64> = xbar.iter().zip(x).map(|(a, b)| a - b).collect();
    let w = f.forward(&d);
    n as f64 * w.iter().map(|v| v * v).sum::<f64>()
}

/// `n (x̄ − x)ᵀ S^{−1} (x̄ − x)` through the Cholesky factor of `S`.
pub fn hotelling_statistic(xbar: &[f64], s: &Matrix, n: usize, x: &[f64]) -> Result<f64> {
    if xbar.len() != s.rows() || x.len() != s.rows() {
        return Err(Error::DimensionMismatch {
            context: "hotelling_statistic",
            expected: s.rows(),
            actual: x.len(),
        });
    }
    let f = factor_covariance(s)?;
    Ok(hotelling_with_factor(xbar, &f, n, x))
}

/// `{x : n(x̄−x)ᵀS^{−1}(x̄−x) ≤ m(n−1)/(n−m)·z}` with `z` the `1−δ` quantile
/// of `F(m, n−m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceRegion {
    pub center: Vec<f64>,
    pub shape: Matrix,
    pub n: usize,
    pub m: usize,
    pub threshold: f64,
    pub z: f64,
    pub delta: f64,
    #[serde(skip)]
    factor: Option<SpdFactor>,
}

impl ConfidenceRegion {
    pub fn from_samples(samples: &[Vec<f64>], delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidParameter(format!("delta must lie in (0, 1), got {delta}")));
        }
        let n = samples.len();
        let m = samples.first().map_or(0, Vec::len);
        if n <= m || n < 2 {
            return Err(Error::TooFewReplicates { n, dim: m });
        }
        let (center, shape) = mean_cov(samples);
        let factor = factor_covariance(&shape)?;
        let z = f_quantile(m as u32, (n - m) as u32, 1.0 - delta);
        let threshold = (m * (n - 1)) as f64 / (n - m) as f64 * z;
        Ok(Self {
            center,
            shape,
            n,
            m,
            threshold,
            z,
            delta,
            factor: Some(factor),
        })
    }

    fn factor(&self) -> SpdFactor {
        match &self.factor {
            Some(f) => f.clone(),
            None => cholesky(&self.shape).expect("region shape was factorized at construction"),
        }
    }

    pub fn statistic(&self, x: &[f64]) -> f64 {
        match &self.factor {
            Some(f) => hotelling_with_factor(&self.center, f, self.n, x),
            None => hotelling_with_factor(&self.center, &self.factor(), self.n, x),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.statistic(x) <= self.threshold
    }

    /// Lebesgue volume of the ellipsoid.
    pub fn volume(&self) -> f64 {
        self.log_volume().exp()
    }

    pub fn log_volume(&self) -> f64 {
        let m = self.m as f64;
        let log_unit_ball = 0.5 * m * std::f64::consts::PI.ln() - ln_gamma(0.5 * m + 1.0);
        log_unit_ball + 0.5 * m * (self.threshold / self.n as f64).ln() + 0.5 * self.factor().log_det()
    }
}

pub fn confidence_region(ensemble: &ReplicationEnsemble, delta: f64) -> Result<ConfidenceRegion> {
    ConfidenceRegion::from_samples(&ensemble.iterates, delta)
}

/// Rescaled errors `s(k)·(x_i − x*)`, or `s(k)·(x_i − x*, x_i' − x*)` with
/// the step-`(k−1)` iterates when the ensemble stores them.
pub fn rescaled_errors(ensemble: &ReplicationEnsemble, x_star: &[f64]) -> Result<Vec<Vec<f64>>> {
    let scaling = ensemble
        .scaling
        .ok_or_else(|| Error::InvalidParameter("ensemble carries no scaling".into()))?;
    if x_star.len() != ensemble.dim() {
        return Err(Error::DimensionMismatch {
            context: "rescaled_errors",
            expected: ensemble.dim(),
            actual: x_star.len(),
        });
    }
    let c = scaling.factor(ensemble.k);
    let rescale = |x: &[f64], out: &mut Vec<f64>| out.extend(x.iter().zip(x_star).map(|(a, b)| c * (a - b)));
    Ok(ensemble
        .iterates
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let mut e = Vec::with_capacity(2 * x.len());
            rescale(x, &mut e);
            if let Some(prev) = &ensemble.previous {
                rescale(&prev[i], &mut e);
            }
            e
        })
        .collect())
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// One-sample Kolmogorov–Smirnov distance to `N(0, sd²)`.
pub fn ks_statistic(values: &[f64], sd: f64) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    if sd == 0.0 {
        return if v.iter().all(|&x| x == 0.0) { 0.0 } else { 1.0 };
    }
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = std_normal_cdf(x / sd);
            (((i + 1) as f64 / n) - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapDiagnostic {
    pub mean: f64,
    pub std_err: f64,
    /// `½ tr(HΣ)`
    pub theory: f64,
}

impl GapDiagnostic {
    pub fn from_values(values: &[f64], theory: f64) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        Self {
            mean,
            std_err: (var / n).sqrt(),
            theory,
        }
    }

    /// `|mean − theory|` in standard errors.
    pub fn z_score(&self) -> f64 {
        (self.mean - self.theory).abs() / self.std_err
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltReport {
    pub samples: usize,
    pub mean: Vec<f64>,
    pub skewness: Vec<f64>,
    pub excess_kurtosis: Vec<f64>,
    pub covariance: Matrix,
    /// `‖Ĉ − Σ‖_F / ‖Σ‖_F`
    pub covariance_distance: f64,
    pub ks: Vec<f64>,
    pub ks_critical: f64,
    pub gap: Option<GapDiagnostic>,
}

impl CltReport {
    /// Thresholds: covariance distance 0.3, |skewness| 0.25, |excess
    /// kurtosis| 0.5, KS below the 1% critical value.
    pub fn looks_normal(&self) -> bool {
        self.covariance_distance < 0.3
            && self.skewness.iter().all(|s| s.abs() < 0.25)
            && self.excess_kurtosis.iter().all(|k| k.abs() < 0.5)
            && self.ks.iter().all(|&d| d < self.ks_critical)
    }

    pub fn with_gap(mut self, gap: GapDiagnostic) -> Self {
        self.gap = Some(gap);
        self
    }
}

/// Moment, covariance and KS comparison of rescaled-error samples against a
/// centred normal limit with covariance `sigma`.
pub fn clt_diagnostics(samples: &[Vec<f64>], sigma: &Matrix) -> Result<CltReport> {
    let n = samples.len();
    if n < 100 {
        return Err(Error::InvalidParameter(format!("CLT diagnostics need at least 100 samples, got {n}")));
    }
    let m = sigma.rows();
    if samples.iter().any(|s| s.len() != m) {
        return Err(Error::DimensionMismatch {
            context: "clt_diagnostics",
            expected: m,
            actual: samples.iter().map(Vec::len).find(|&l| l != m).unwrap_or(m),
        });
    }
    let (mean, covariance) = mean_cov(samples);
    let mut skewness = Vec::with_capacity(m);
    let mut excess_kurtosis = Vec::with_capacity(m);
    let mut ks = Vec::with_capacity(m);
    for j in 0..m {
        let col: Vec<f64> = samples.iter().map(|s| s[j]).collect();
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for &x in &col {
            let d = x - mean[j];
            let d2 = d * d;
            m2 += d2;
            m3 += d2 * d;
            m4 += d2 * d2;
        }
        let nf = n as f64;
        let (m2, m3, m4) = (m2 / nf, m3 / nf, m4 / nf);
        skewness.push(m3 / m2.powf(1.5));
        excess_kurtosis.push(m4 / (m2 * m2) - 3.0);
        ks.push(ks_statistic(&col, sigma[(j, j)].max(0.0).sqrt()));
    }
    let covariance_distance =
        covariance.sub(sigma)?.frobenius_norm() / sigma.frobenius_norm().max(f64::MIN_POSITIVE);
    Ok(CltReport {
        samples: n,
        mean,
        skewness,
        excess_kurtosis,
        covariance,
        covariance_distance,
        ks,
        ks_critical: KS_CRITICAL_1PCT / (n as f64).sqrt(),
        gap: None,
    })
}

/// When each replication stops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Termination {
    /// First step at which cumulative oracle calls reach the budget.
    Budget { n_max: u64 },
    Steps { k: u64 },
}

/// Which vector the region is built on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionTarget {
    /// `y_k` for the accelerated method, `x_k` otherwise (dimension `m`).
    #[default]
    Primary,
    /// The stacked `(·_k, ·_{k−1})` state (dimension `2m`).
    Stacked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageSettings {
    pub n: usize,
    pub termination: Termination,
    pub delta: f64,
    pub meta_reps: usize,
    pub seed: u64,
    /// High bits of every stream id; replication `r` of meta-replication
    /// `j` draws from stream `stream_base | j << 16 | r`.
    pub stream_base: u64,
    pub target: RegionTarget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageResult {
    pub coverage: f64,
    /// Half-width of the normal-approximation 95% binomial interval.
    pub half_width: f64,
    pub meta_reps: usize,
    pub steps: u64,
    pub oracle_calls_per_replication: u64,
    pub covered: Vec<bool>,
    pub volumes: Vec<f64>,
}

pub fn binomial_half_width(p: f64, trials: usize) -> f64 {
    1.96 * (p * (1.0 - p) / trials as f64).sqrt()
}

/// Stream id of replication `rep` within meta-replication `meta`.
pub fn replication_stream(base: u64, meta: usize, rep: usize) -> u64 {
    base | ((meta as u64) << 16) | rep as u64
}

/// Steps a replication of `config` runs under `termination`.
pub fn steps_for(config: &SolverConfig, termination: Termination) -> Result<u64> {
    match termination {
        Termination::Steps { k } => Ok(k),
        Termination::Budget { n_max } => match config.kind {
            AlgorithmKind::BaselineSgd => Ok(n_max),
            _ => config
                .schedule
                .as_ref()
                .ok_or_else(|| Error::InvalidParameter("variance-reduced methods need a batch schedule".into()))?
                .steps_for_budget(n_max),
        },
    }
}

fn summarize(covered: Vec<bool>, volumes: Vec<f64>, steps: u64, calls: u64) -> CoverageResult {
    let meta_reps = covered.len();
    let coverage = covered.iter().filter(|&&c| c).count() as f64 / meta_reps as f64;
    CoverageResult {
        coverage,
        half_width: binomial_half_width(coverage, meta_reps),
        meta_reps,
        steps,
        oracle_calls_per_replication: calls,
        covered,
        volumes,
    }
}

/// Runs `meta_reps` independent experiments, each with `n` solver
/// replications, and reports how often the region contains `x*`.
///
/// Meta-replications run on the current rayon pool; results are gathered in
/// index order so the output does not depend on scheduling.
pub fn coverage_experiment<P: StochasticProblem + ?Sized>(
    problem: &P,
    config: &SolverConfig,
    settings: &CoverageSettings,
) -> Result<CoverageResult> {
    let m = problem.dim();
    let dim = match settings.target {
        RegionTarget::Primary => m,
        RegionTarget::Stacked => 2 * m,
    };
    if settings.n <= dim {
        return Err(Error::TooFewReplicates { n: settings.n, dim });
    }
    if settings.meta_reps == 0 {
        return Err(Error::InvalidParameter("meta_reps must be positive".into()));
    }
    let steps = steps_for(config, settings.termination)?;
    let mut cfg = config.clone();
    cfg.steps = steps;
    cfg.storage = Storage::Terminal;
    cfg.validate(problem)?;
    let mut target = problem.x_star().to_vec();
    if settings.target == RegionTarget::Stacked {
        target.extend_from_slice(problem.x_star());
    }

    let per_meta: Vec<Result<(bool, f64, u64)>> = (0..settings.meta_reps)
        .into_par_iter()
        .map(|meta| {
            let mut calls = 0;
            let samples = (0..settings.n)
                .map(|rep| {
                    let mut rng = RngStream::new(settings.seed, replication_stream(settings.stream_base, meta, rep));
                    let traj = run(&cfg, problem, &mut rng)?;
                    calls = traj.oracle_calls();
                    Ok(match settings.target {
                        RegionTarget::Primary => traj.primary_terminal().to_vec(),
                        RegionTarget::Stacked => traj.stacked_terminal(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let region = ConfidenceRegion::from_samples(&samples, settings.delta)?;
            Ok((region.contains(&target), region.volume(), calls))
        })
        .collect();

    let mut covered = Vec::with_capacity(settings.meta_reps);
    let mut volumes = Vec::with_capacity(settings.meta_reps);
    let mut calls = 0;
    for r in per_meta {
        let (c, v, k) = r?;
        covered.push(c);
        volumes.push(v);
        calls = k;
    }
    Ok(summarize(covered, volumes, steps, calls))
}

/// Coverage of regions built from `n` exact draws of `N(mean, sigma)`.
pub fn gaussian_replicate_coverage(
    mean: &[f64],
    sigma: &Matrix,
    n: usize,
    delta: f64,
    meta_reps: usize,
    seed: u64,
) -> Result<CoverageResult> {
    let factor = SpdFactor::psd(sigma)?;
    let per_meta: Vec<Result<(bool, f64)>> = (0..meta_reps)
        .into_par_iter()
        .map(|meta| {
            let mut rng = RngStream::new(seed, meta as u64);
            let samples: Vec<Vec<f64>> = (0..n).map(|_| mvn_sample(mean, &factor, &mut rng)).collect();
            let region = ConfidenceRegion::from_samples(&samples, delta)?;
            Ok((region.contains(mean), region.volume()))
        })
        .collect();
    let (covered, volumes): (Vec<bool>, Vec<f64>) = per_meta.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();
    Ok(summarize(covered, volumes, 0, 0))
}
