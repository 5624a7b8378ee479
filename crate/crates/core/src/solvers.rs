//! Variance-reduced SGD, its Nesterov-accelerated and heavy-ball variants,
//! and a decreasing-step single-sample SGD baseline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{cholesky, norm_sq, RngStream};
use crate::problems::StochasticProblem;
use crate::schedules::{default_rho, BatchSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgorithmKind {
    VrSgd,
    VrAccelerated,
    VrHeavyBall,
    BaselineSgd,
}

impl AlgorithmKind {
    pub const VARIANCE_REDUCED: [AlgorithmKind; 3] =
        [AlgorithmKind::VrSgd, AlgorithmKind::VrAccelerated, AlgorithmKind::VrHeavyBall];

    pub fn name(self) -> &'static str {
        match self {
            AlgorithmKind::VrSgd => "vr-sgd",
            AlgorithmKind::VrAccelerated => "vr-accelerated",
            AlgorithmKind::VrHeavyBall => "vr-heavy-ball",
            AlgorithmKind::BaselineSgd => "baseline-sgd",
        }
    }

    pub fn has_momentum(self) -> bool {
        matches!(self, AlgorithmKind::VrAccelerated | AlgorithmKind::VrHeavyBall)
    }
}

impl fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AlgorithmKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            AlgorithmKind::VrSgd,
            AlgorithmKind::VrAccelerated,
            AlgorithmKind::VrHeavyBall,
            AlgorithmKind::BaselineSgd,
        ]
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| Error::InvalidParameter(format!("unknown algorithm '{s}'")))
    }
}

/// Step rule of the SGD baseline at step index `k` (0-based): `c/(k+1)` or
/// `H^{−1}/(k+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum BaselineStep {
    Scalar { c: f64 },
    InverseHessian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Storage {
    /// Last two iterates plus per-step error summaries.
    #[default]
    Terminal,
    /// Every iterate.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparameters {
    pub alpha: f64,
    pub beta: f64,
    pub rho: f64,
}

/// Default `(α, β, ρ)` for a variance-reduced method.
pub fn default_hyperparameters(kind: AlgorithmKind, eta: f64, lip: f64) -> Result<Hyperparameters> {
    let rho = default_rho(kind, eta, lip)?;
    let kappa = lip / eta;
    let sk = kappa.sqrt();
    let (alpha, beta) = match kind {
        AlgorithmKind::VrSgd => (2.0 / (eta + lip), 0.0),
        AlgorithmKind::VrAccelerated => {
            let alpha = 1.0 / lip;
            (alpha, accelerated_beta(alpha, eta))
        }
        AlgorithmKind::VrHeavyBall => {
            let alpha = 4.0 / (eta.sqrt() + lip.sqrt()).powi(2);
            (alpha, ((sk - 1.0) / (sk + 1.0)).powi(2))
        }
        AlgorithmKind::BaselineSgd => unreachable!("default_rho rejects the baseline"),
    };
    Ok(Hyperparameters { alpha, beta, rho })
}

/// `β = (1−γ)/(1+γ)` with `γ = √(αη)`.
pub fn accelerated_beta(alpha: f64, eta: f64) -> f64 {
    let gamma = (alpha * eta).sqrt();
    (1.0 - gamma) / (1.0 + gamma)
}

/// `β = max{(1−√(αη))², (1−√(αL))²}`.
pub fn heavy_ball_beta(alpha: f64, eta: f64, lip: f64) -> f64 {
    (1.0 - (alpha * eta).sqrt()).powi(2).max((1.0 - (alpha * lip).sqrt()).powi(2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub kind: AlgorithmKind,
    pub alpha: f64,
    pub beta: f64,
    /// Unused by the baseline, which draws one sample per step.
    pub schedule: Option<BatchSchedule>,
    pub x0: Vec<f64>,
    pub steps: u64,
    pub baseline_step: Option<BaselineStep>,
    #[serde(default)]
    pub storage: Storage,
}

impl SolverConfig {
    /// Default hyperparameters and geometric schedule for `kind` on `p`.
    ///
    /// The baseline defaults to the inverse-Hessian step rule.
    pub fn defaults<P: StochasticProblem + ?Sized>(
        kind: AlgorithmKind,
        p: &P,
        x0: Vec<f64>,
        steps: u64,
    ) -> Result<Self> {
        if kind == AlgorithmKind::BaselineSgd {
            return Ok(Self {
                kind,
                alpha: 0.0,
                beta: 0.0,
                schedule: None,
                x0,
                steps,
                baseline_step: Some(BaselineStep::InverseHessian),
                storage: Storage::Terminal,
            });
        }
        let hp = default_hyperparameters(kind, p.eta(), p.lip())?;
        Ok(Self {
            kind,
            alpha: hp.alpha,
            beta: hp.beta,
            schedule: Some(BatchSchedule::geometric(hp.rho)?),
            x0,
            steps,
            baseline_step: None,
            storage: Storage::Terminal,
        })
    }

    pub fn with_schedule(mut self, schedule: BatchSchedule) -> Self {
        self.schedule = Some(schedule);
        self
    }

    pub fn with_steps(mut self, steps: u64) -> Self {
        self.steps = steps;
        self
    }

    pub fn with_storage(mut self, storage: Storage) -> Self {
        self.storage = storage;
        self
    }

    /// Checks step size, momentum and schedule against the problem constants.
    pub fn validate<P: StochasticProblem + ?Sized>(&self, p: &P) -> Result<()> {
        if self.x0.len() != p.dim() {
            return Err(Error::DimensionMismatch {
                context: "SolverConfig: x0",
                expected: p.dim(),
                actual: self.x0.len(),
            });
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("x0 must be finite".into()));
        }
        let (eta, lip, a) = (p.eta(), p.lip(), self.alpha);
        let slack = 1.0 + 1e-12;
        let beta_close = |want: f64| (self.beta - want).abs() <= 1e-9 * want.abs().max(1.0);
        match self.kind {
            AlgorithmKind::VrSgd => {
                let hi = 2.0 / (eta + lip);
                if !(a > 0.0 && a <= hi * slack) {
                    return Err(Error::InadmissibleAlpha {
                        alpha: a,
                        reason: format!("must lie in (0, 2/(eta+L)] = (0, {hi}]"),
                    });
                }
            }
            AlgorithmKind::VrAccelerated => {
                let hi = 1.0 / lip;
                if !(a > 0.0 && a <= hi * slack) {
                    return Err(Error::InadmissibleAlpha {
                        alpha: a,
                        reason: format!("must lie in (0, 1/L] = (0, {hi}]"),
                    });
                }
                let want = accelerated_beta(a, eta);
                if !beta_close(want) {
                    return Err(Error::InadmissibleBeta {
                        beta: self.beta,
                        reason: format!("must equal (1-gamma)/(1+gamma) = {want}"),
                    });
                }
            }
            AlgorithmKind::VrHeavyBall => {
                let hi = 4.0 / lip;
                if !(a > 0.0 && a < hi) {
                    return Err(Error::InadmissibleAlpha {
                        alpha: a,
                        reason: format!("must lie in (0, 4/L) = (0, {hi})"),
                    });
                }
                let want = heavy_ball_beta(a, eta, lip);
                if !beta_close(want) || want >= 1.0 {
                    return Err(Error::InadmissibleBeta {
                        beta: self.beta,
                        reason: format!("must equal max{{|1-sqrt(a eta)|^2, |1-sqrt(a L)|^2}} = {want} < 1"),
                    });
                }
            }
            AlgorithmKind::BaselineSgd => match self.baseline_step {
                None => {
                    return Err(Error::InvalidParameter("baseline SGD needs a step rule".into()));
                }
                Some(BaselineStep::Scalar { c }) if !(c >= 0.0 && c.is_finite()) => {
                    return Err(Error::InvalidParameter(format!("baseline step constant must be >= 0, got {c}")));
                }
                Some(BaselineStep::InverseHessian) if p.closed_form_hessian().is_none() => {
                    return Err(Error::MatrixStepUnavailable);
                }
                _ => {}
            },
        }
        if self.kind != AlgorithmKind::BaselineSgd {
            self.schedule
                .as_ref()
                .ok_or_else(|| Error::InvalidParameter("variance-reduced methods need a batch schedule".into()))?
                .validate()?;
        }
        Ok(())
    }
}

/// Iterates and oracle usage of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub kind: AlgorithmKind,
    pub steps: u64,
    pub storage: Storage,
    /// `x_0..x_K` in full mode, otherwise the last (up to) two.
    pub xs: Vec<Vec<f64>>,
    /// `y` iterates of the accelerated method, stored like `xs`.
    pub ys: Option<Vec<Vec<f64>>>,
    /// `‖x_k − x*‖²` for `k = 0..=K`.
    pub err_sq: Vec<f64>,
    /// `‖y_k − x*‖²` for the accelerated method.
    pub y_err_sq: Option<Vec<f64>>,
    /// `N_k` used at step `k`.
    pub batch_sizes: Vec<u64>,
    /// Cumulative oracle calls after step `k`.
    pub cumulative_calls: Vec<u64>,
    pub seed: u64,
    pub stream_id: u64,
}

impl Trajectory {
    pub fn terminal(&self) -> &[f64] {
        self.xs.last().expect("trajectory holds x_0")
    }

    /// `x_{K−1}` (equal to `x_0` when `K = 0`).
    pub fn previous(&self) -> &[f64] {
        let n = self.xs.len();
        &self.xs[n.saturating_sub(2)]
    }

    pub fn terminal_y(&self) -> Option<&[f64]> {
        self.ys.as_ref().map(|ys| ys.last().expect("y_0").as_slice())
    }

    /// The iterate confidence regions are built from: `y_K` for the
    /// accelerated method, `x_K` otherwise.
    pub fn primary_terminal(&self) -> &[f64] {
        self.terminal_y().unwrap_or_else(|| self.terminal())
    }

    /// `(y_K, y_{K−1})` for the accelerated method, `(x_K, x_{K−1})`
    /// otherwise.
    pub fn stacked_terminal(&self) -> Vec<f64> {
        let src = self.ys.as_ref().unwrap_or(&self.xs);
        let n = src.len();
        let mut v = src[n - 1].clone();
        v.extend_from_slice(&src[n.saturating_sub(2)]);
        v
    }

    pub fn oracle_calls(&self) -> u64 {
        self.cumulative_calls.last().copied().unwrap_or(0)
    }
}

struct Recorder {
    storage: Storage,
    xs: Vec<Vec<f64>>,
}

impl Recorder {
    fn new(storage: Storage, x0: &[f64]) -> Self {
        Self {
            storage,
            xs: vec![x0.to_vec()],
        }
    }

    fn push(&mut self, x: &[f64]) {
        if self.storage == Storage::Terminal && self.xs.len() == 2 {
            self.xs.remove(0);
        }
        self.xs.push(x.to_vec());
    }
}

fn dist_sq(x: &[f64], xs: &[f64]) -> f64 {
    x.iter().zip(xs).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `x_{k+1} = x_k − α·(batch gradient of size N)`.
pub fn vr_sgd_step<P: StochasticProblem + ?Sized>(p: &P, x: &[f64], alpha: f64, n: u64, rng: &mut RngStream) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    p.batch_gradient_into(x, n, rng, &mut g);
    x.iter().zip(&g).map(|(xi, gi)| xi - alpha * gi).collect()
}

/// `y_{k+1} = x_k − α g`, `x_{k+1} = y_{k+1} + β(y_{k+1} − y_k)`.
pub fn vr_accel_step<P: StochasticProblem + ?Sized>(
    p: &P,
    x: &[f64],
    y: &[f64],
    alpha: f64,
    beta: f64,
    n: u64,
    rng: &mut RngStream,
) -> (Vec<f64>, Vec<f64>) {
    let y_next = vr_sgd_step(p, x, alpha, n, rng);
    let x_next = y_next
        .iter()
        .zip(y)
        .map(|(yn, yo)| yn + beta * (yn - yo))
        .collect();
    (x_next, y_next)
}

/// `x_{k+1} = x_k − α g + β(x_k − x_{k−1})`.
pub fn vr_heavy_ball_step<P: StochasticProblem + ?Sized>(
    p: &P,
    x: &[f64],
    x_prev: &[f64],
    alpha: f64,
    beta: f64,
    n: u64,
    rng: &mut RngStream,
) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    p.batch_gradient_into(x, n, rng, &mut g);
    x.iter()
        .zip(&g)
        .zip(x_prev)
        .map(|((xi, gi), xp)| xi - alpha * gi + beta * (xi - xp))
        .collect()
}

/// Runs `config.steps` iterations of the configured method.
pub fn run<P: StochasticProblem + ?Sized>(config: &SolverConfig, p: &P, rng: &mut RngStream) -> Result<Trajectory> {
    config.validate(p)?;
    if config.kind == AlgorithmKind::BaselineSgd {
        return baseline_sgd_run(config, p, rng);
    }
    let schedule = config.schedule.as_ref().expect("validated");
    let sizes = schedule.sizes(config.steps)?;
    let xs_star = p.x_star();
    let (alpha, beta) = (config.alpha, config.beta);

    let mut x = config.x0.clone();
    let mut aux = config.x0.clone(); // y_k or x_{k−1}
    let mut rec_x = Recorder::new(config.storage, &x);
    let mut rec_y = Recorder::new(config.storage, &x);
    let mut err_sq = Vec::with_capacity(sizes.len() + 1);
    let mut y_err_sq = Vec::new();
    err_sq.push(dist_sq(&x, xs_star));
    if config.kind == AlgorithmKind::VrAccelerated {
        y_err_sq.push(err_sq[0]);
    }
    let mut cumulative = Vec::with_capacity(sizes.len());
    let mut total: u64 = 0;

    for (k, &n) in sizes.iter().enumerate() {
        match config.kind {
            AlgorithmKind::VrSgd => {
                x = vr_sgd_step(p, &x, alpha, n, rng);
            }
            AlgorithmKind::VrAccelerated => {
                let (xn, yn) = vr_accel_step(p, &x, &aux, alpha, beta, n, rng);
                x = xn;
                aux = yn;
                y_err_sq.push(dist_sq(&aux, xs_star));
                rec_y.push(&aux);
            }
            AlgorithmKind::VrHeavyBall => {
                let xn = vr_heavy_ball_step(p, &x, &aux, alpha, beta, n, rng);
                aux = std::mem::replace(&mut x, xn);
            }
            AlgorithmKind::BaselineSgd => unreachable!(),
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("iterate diverged at step {k}")));
        }
        rec_x.push(&x);
        err_sq.push(dist_sq(&x, xs_star));
        total = total.checked_add(n).ok_or(Error::Overflow { step: k as u64 })?;
        cumulative.push(total);
    }

    let accel = config.kind == AlgorithmKind::VrAccelerated;
    Ok(Trajectory {
        kind: config.kind,
        steps: config.steps,
        storage: config.storage,
        xs: rec_x.xs,
        ys: accel.then_some(rec_y.xs),
        err_sq,
        y_err_sq: accel.then_some(y_err_sq),
        batch_sizes: sizes,
        cumulative_calls: cumulative,
        seed: rng.seed(),
        stream_id: rng.stream_id(),
    })
}

/// Single-sample SGD with step `c/(k+1)` or `H^{−1}/(k+1)` at step index `k`.
pub fn baseline_sgd_run<P: StochasticProblem + ?Sized>(
    config: &SolverConfig,
    p: &P,
    rng: &mut RngStream,
) -> Result<Trajectory> {
    let rule = config
        .baseline_step
        .ok_or_else(|| Error::InvalidParameter("baseline SGD needs a step rule".into()))?;
    let h_factor = match rule {
        BaselineStep::InverseHessian => {
            let h = p.closed_form_hessian().ok_or(Error::MatrixStepUnavailable)?;
            Some(cholesky(h)?)
        }
        BaselineStep::Scalar { .. } => None,
    };
    let xs_star = p.x_star();
    let mut x = config.x0.clone();
    let mut rec = Recorder::new(config.storage, &x);
    let mut err_sq = vec![dist_sq(&x, xs_star)];
    let steps = usize::try_from(config.steps).map_err(|_| Error::Overflow { step: config.steps })?;
    let mut cumulative = Vec::with_capacity(steps);
    for k in 0..config.steps {
        let g = p.sample_gradient(&x, rng);
        let scale = 1.0 / (k + 1) as f64;
        let dir = match (&h_factor, rule) {
            (Some(f), _) => f.solve(&g),
            (None, BaselineStep::Scalar { c }) => g.iter().map(|v| c * v).collect(),
            (None, BaselineStep::InverseHessian) => unreachable!(),
        };
        for (xi, di) in x.iter_mut().zip(&dir) {
            *xi -= scale * di;
        }
        rec.push(&x);
        err_sq.push(dist_sq(&x, xs_star));
        cumulative.push(k + 1);
    }
    Ok(Trajectory {
        kind: AlgorithmKind::BaselineSgd,
        steps: config.steps,
        storage: config.storage,
        xs: rec.xs,
        ys: None,
        err_sq,
        y_err_sq: None,
        batch_sizes: vec![1; steps],
        cumulative_calls: cumulative,
        seed: rng.seed(),
        stream_id: rng.stream_id(),
    })
}

/// `‖x − x*‖²`
pub fn error_sq<P: StochasticProblem + ?Sized>(p: &P, x: &[f64]) -> f64 {
    norm_sq(&crate::numerics::sub(x, p.x_star()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Matrix;
    use crate::problems::QuadraticGaussianProblem;

    fn quad(eigs: &[f64], noise: f64) -> QuadraticGaussianProblem {
        let m = eigs.len();
        QuadraticGaussianProblem::diagonal(eigs, vec![0.0; m], Matrix::identity(m).scale(noise)).unwrap()
    }

    #[test]
    fn default_hyperparameter_examples() {
        for kind in AlgorithmKind::VARIANCE_REDUCED {
            let hp = default_hyperparameters(kind, 1.0, 1.0).unwrap();
            assert_eq!(hp.alpha, 1.0);
            assert_eq!(hp.beta, 0.0);
        }
        let a = default_hyperparameters(AlgorithmKind::VrAccelerated, 1.0, 4.0).unwrap();
        assert_eq!(a.alpha, 0.25);
        assert!((a.beta - 1.0 / 3.0).abs() < 1e-15);
        let h = default_hyperparameters(AlgorithmKind::VrHeavyBall, 1.0, 9.0).unwrap();
        assert_eq!(h.alpha, 0.25);
        assert_eq!(h.beta, 0.25);
        assert_eq!(heavy_ball_beta(0.25, 1.0, 9.0), 0.25);
    }

    #[test]
    fn names_round_trip() {
        for k in [
            AlgorithmKind::VrSgd,
            AlgorithmKind::VrAccelerated,
            AlgorithmKind::VrHeavyBall,
            AlgorithmKind::BaselineSgd,
        ] {
            assert_eq!(k.name().parse::<AlgorithmKind>().unwrap(), k);
        }
        assert!("sgd".parse::<AlgorithmKind>().is_err());
    }

    #[test]
    fn vr_sgd_single_step_examples() {
        let p = quad(&[3.0, 3.0], 0.0);
        let mut rng = RngStream::new(0, 0);
        let x1 = vr_sgd_step(&p, &[1.0, -2.0], 2.0 / 6.0, 4, &mut rng);
        assert!(x1.iter().all(|v| v.abs() < 1e-15));
        let s = quad(&[2.0], 0.0);
        assert_eq!(vr_sgd_step(&s, &[1.0], 0.5, 1, &mut rng), vec![0.0]);
        let noisy = quad(&[2.0], 0.0);
        assert_eq!(vr_sgd_step(&noisy, &[0.0], 0.5, 3, &mut rng), vec![0.0]);
    }

    #[test]
    fn momentum_first_steps_noise_free() {
        let p = quad(&[2.0, 2.0], 0.0);
        let mut rng = RngStream::new(0, 0);
        let (x1, y1) = vr_accel_step(&p, &[1.0, 1.0], &[1.0, 1.0], 0.5, 0.0, 1, &mut rng);
        assert_eq!(x1, vec![0.0, 0.0]);
        assert_eq!(y1, vec![0.0, 0.0]);
        let x1 = vr_heavy_ball_step(&p, &[1.0, 1.0], &[1.0, 1.0], 0.5, 0.0, 1, &mut rng);
        assert_eq!(x1, vec![0.0, 0.0]);
        // with x_{-1} = x_0 the momentum term vanishes
        let a = vr_heavy_ball_step(&p, &[1.0, 0.5], &[1.0, 0.5], 0.2, 0.7, 1, &mut rng);
        let b = vr_sgd_step(&p, &[1.0, 0.5], 0.2, 1, &mut rng);
        assert_eq!(a, b);
    }

    #[test]
    fn hand_recursion_oracle() {
        let (h1, h2) = (1.0, 6.0);
        let p = QuadraticGaussianProblem::diagonal(&[h1, h2], vec![0.5, -0.25], Matrix::zeros(2, 2)).unwrap();
        let x0 = vec![2.0, 1.0];
        let mut cfg = SolverConfig::defaults(AlgorithmKind::VrAccelerated, &p, x0.clone(), 10).unwrap();
        cfg.storage = Storage::Full;
        let t = run(&cfg, &p, &mut RngStream::new(1, 1)).unwrap();
        let (a, b) = (cfg.alpha, cfg.beta);
        let (mut x, mut y) = ([2.0 - 0.5, 1.0 + 0.25], [2.0 - 0.5, 1.0 + 0.25]);
        for k in 0..10 {
            let yn = [x[0] - a * h1 * x[0], x[1] - a * h2 * x[1]];
            x = [yn[0] + b * (yn[0] - y[0]), yn[1] + b * (yn[1] - y[1])];
            y = yn;
            let got = &t.xs[k + 1];
            assert!((got[0] - 0.5 - x[0]).abs() < 1e-12 && (got[1] + 0.25 - x[1]).abs() < 1e-12);
        }

        let mut cfg = SolverConfig::defaults(AlgorithmKind::VrHeavyBall, &p, x0, 10).unwrap();
        cfg.storage = Storage::Full;
        let t = run(&cfg, &p, &mut RngStream::new(1, 1)).unwrap();
        let (a, b) = (cfg.alpha, cfg.beta);
        let (mut x, mut xp) = ([1.5, 1.25], [1.5, 1.25]);
        for k in 0..10 {
            let xn = [
                x[0] - a * h1 * x[0] + b * (x[0] - xp[0]),
                x[1] - a * h2 * x[1] + b * (x[1] - xp[1]),
            ];
            xp = x;
            x = xn;
            let got = &t.xs[k + 1];
            assert!((got[0] - 0.5 - x[0]).abs() < 1e-12 && (got[1] + 0.25 - x[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_momentum_reduces_to_vr_sgd_bitwise() {
        let p = quad(&[2.0, 2.0], 1.0);
        let x0 = vec![1.0, -1.0];
        let base = SolverConfig::defaults(AlgorithmKind::VrSgd, &p, x0.clone(), 12).unwrap();
        let t0 = run(&base, &p, &mut RngStream::new(3, 9)).unwrap();
        for kind in [AlgorithmKind::VrAccelerated, AlgorithmKind::VrHeavyBall] {
            let mut cfg = SolverConfig::defaults(kind, &p, x0.clone(), 12).unwrap();
            assert_eq!(cfg.beta, 0.0);
            cfg.alpha = base.alpha;
            cfg.schedule = base.schedule;
            let t = run(&cfg, &p, &mut RngStream::new(3, 9)).unwrap();
            assert_eq!(t.err_sq, t0.err_sq);
            assert_eq!(t.terminal(), t0.terminal());
        }
    }

    #[test]
    fn zero_steps_and_determinism() {
        let p = quad(&[1.0, 4.0], 0.5);
        let cfg = SolverConfig::defaults(AlgorithmKind::VrHeavyBall, &p, vec![1.0, 1.0], 0).unwrap();
        let t = run(&cfg, &p, &mut RngStream::new(0, 0)).unwrap();
        assert_eq!(t.xs, vec![vec![1.0, 1.0]]);
        assert_eq!(t.oracle_calls(), 0);
        assert_eq!(t.previous(), t.terminal());

        let cfg = cfg.with_steps(15);
        let a = run(&cfg, &p, &mut RngStream::new(5, 1)).unwrap();
        let b = run(&cfg, &p, &mut RngStream::new(5, 1)).unwrap();
        assert_eq!(a, b);
        let c = run(&cfg, &p, &mut RngStream::new(5, 2)).unwrap();
        assert_ne!(a.terminal(), c.terminal());
        assert_eq!(a.xs.len(), 2);
        assert_eq!(a.err_sq.len(), 16);
        assert_eq!(a.oracle_calls(), cfg.schedule.unwrap().cumulative_oracle_calls(15).unwrap());
    }

    #[test]
    fn noise_free_vr_sgd_monotone() {
        let p = quad(&[1.0, 5.0, 10.0], 0.0);
        let cfg = SolverConfig::defaults(AlgorithmKind::VrSgd, &p, vec![1.0, 2.0, 3.0], 25).unwrap();
        let t = run(&cfg, &p, &mut RngStream::new(0, 0)).unwrap();
        assert!(t.err_sq.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn stacked_and_primary_terminals() {
        let p = quad(&[1.0, 2.0], 1.0);
        let cfg = SolverConfig::defaults(AlgorithmKind::VrAccelerated, &p, vec![1.0, 1.0], 5).unwrap();
        let t = run(&cfg, &p, &mut RngStream::new(0, 0)).unwrap();
        let ys = t.ys.as_ref().unwrap();
        assert_eq!(t.primary_terminal(), ys[1].as_slice());
        assert_eq!(t.stacked_terminal(), [ys[1].clone(), ys[0].clone()].concat());
        assert_eq!(t.y_err_sq.as_ref().unwrap().len(), 6);
    }

    #[test]
    fn validation_rejects_inadmissible() {
        let p = quad(&[1.0, 4.0], 1.0);
        let mut cfg = SolverConfig::defaults(AlgorithmKind::VrSgd, &p, vec![0.0; 2], 3).unwrap();
        cfg.alpha = 0.5;
        assert!(matches!(run(&cfg, &p, &mut RngStream::new(0, 0)), Err(Error::InadmissibleAlpha { .. })));
        let mut cfg = SolverConfig::defaults(AlgorithmKind::VrAccelerated, &p, vec![0.0; 2], 3).unwrap();
        cfg.beta = 0.9;
        assert!(matches!(cfg.validate(&p), Err(Error::InadmissibleBeta { .. })));
        let mut cfg = SolverConfig::defaults(AlgorithmKind::VrHeavyBall, &p, vec![0.0; 2], 3).unwrap();
        cfg.alpha = 1.0;
        assert!(matches!(cfg.validate(&p), Err(Error::InadmissibleAlpha { .. })));
        let cfg = SolverConfig::defaults(AlgorithmKind::VrSgd, &p, vec![0.0; 3], 3).unwrap();
        assert!(matches!(cfg.validate(&p), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn baseline_examples() {
        let p = QuadraticGaussianProblem::diagonal(&[2.0, 5.0], vec![1.0, -1.0], Matrix::zeros(2, 2)).unwrap();
        let cfg = SolverConfig::defaults(AlgorithmKind::BaselineSgd, &p, vec![3.0, 3.0], 1).unwrap();
        let t = run(&cfg, &p, &mut RngStream::new(0, 0)).unwrap();
        assert!(t.err_sq[1] < 1e-28);
        let mut cfg = cfg.with_steps(5);
        cfg.baseline_step = Some(BaselineStep::Scalar { c: 0.0 });
        let t = run(&cfg, &p, &mut RngStream::new(0, 0)).unwrap();
        assert!(t.err_sq.iter().all(|&e| e == t.err_sq[0]));
        assert_eq!(t.oracle_calls(), 5);
    }
}
