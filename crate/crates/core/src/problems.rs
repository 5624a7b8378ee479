//! Stochastic first-order oracles with a known optimum.
//!
//! Two families are provided: a quadratic with additive Gaussian gradient
//! noise, and linear parameter estimation from noisy regressions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, mvn_sample, sub, sym_eig, Matrix, RngStream, SpdFactor};

/// A stochastic first-order oracle for a strongly convex smooth objective.
pub trait StochasticProblem: Sync {
    fn dim(&self) -> usize;

    fn x_star(&self) -> &[f64];

    /// Strong convexity modulus `η`.
    fn eta(&self) -> f64;

    /// Gradient Lipschitz constant `L`.
    fn lip(&self) -> f64;

    fn hessian_at_opt(&self) -> &Matrix;

    /// Hessian usable for a matrix step rule, when the objective has one in
    /// closed form everywhere.
    fn closed_form_hessian(&self) -> Option<&Matrix> {
        None
    }

    fn f_value(&self, x: &[f64]) -> f64;

    fn exact_gradient(&self, x: &[f64]) -> Vec<f64>;

    fn sample_gradient(&self, x: &[f64], rng: &mut RngStream) -> Vec<f64>;

    /// Per-sample gradient-noise covariance at `x`.
    fn noise_covariance_at(&self, x: &[f64]) -> Matrix;

    /// Writes the average of `n` sampled gradients at `x` into `out`.
    fn batch_gradient_into(&self, x: &[f64], n: u64, rng: &mut RngStream, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for _ in 0..n {
            let g = self.sample_gradient(x, rng);
            for (o, gi) in out.iter_mut().zip(&g) {
                *o += gi;
            }
        }
        let inv = 1.0 / n as f64;
        out.iter_mut().for_each(|v| *v *= inv);
    }

    /// `S₀`, the per-sample noise covariance at the optimum.
    fn noise_cov_at_opt(&self) -> Matrix {
        self.noise_covariance_at(self.x_star())
    }

    fn f_star(&self) -> f64 {
        self.f_value(self.x_star())
    }

    fn kappa(&self) -> f64 {
        self.lip() / self.eta()
    }
}

/// Average of `n` sampled gradients and its deviation from the exact gradient.
pub fn batch_gradient<P: StochasticProblem + ?Sized>(
    p: &P,
    x: &[f64],
    n: u64,
    rng: &mut RngStream,
) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "batch size must be positive");
    let mut g = vec![0.0; p.dim()];
    p.batch_gradient_into(x, n, rng, &mut g);
    let noise = sub(&g, &p.exact_gradient(x));
    (g, noise)
}

/// Uniform noise-variance surrogate `ν² = tr(noise_covariance_at(x_ref))`.
pub fn nu_sq_surrogate<P: StochasticProblem + ?Sized>(p: &P, x_ref: &[f64]) -> f64 {
    p.noise_covariance_at(x_ref).trace()
}

fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        })
    }
}

/// Extreme eigenvalues of a symmetric positive definite matrix.
fn spd_extremes(a: &Matrix, what: &str) -> Result<(f64, f64)> {
    if !a.is_square() || !a.is_symmetric(1e-12) {
        return Err(Error::InvalidParameter(format!("{what} must be a symmetric square matrix")));
    }
    let (vals, _) = sym_eig(a)?;
    let (hi, lo) = (vals[0], vals[vals.len() - 1]);
    if !(lo > 0.0) {
        return Err(Error::NotPositiveDefinite {
            index: vals.len() - 1,
            pivot: lo,
        });
    }
    Ok((lo, hi))
}

/// `f(x) = ½(x−x*)ᵀH(x−x*)` with sampled gradient `H(x−x*) + ε`,
/// `ε ~ N(0, noise_cov)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadraticGaussianProblem {
    h: Matrix,
    x_star: Vec<f64>,
    noise_cov: Matrix,
    noise_factor: SpdFactor,
    eta: f64,
    lip: f64,
}

impl QuadraticGaussianProblem {
    pub fn new(h: Matrix, x_star: Vec<f64>, noise_cov: Matrix) -> Result<Self> {
        let m = x_star.len();
        check_dim("QuadraticGaussianProblem: hessian", m, h.rows())?;
        check_dim("QuadraticGaussianProblem: noise_cov", m, noise_cov.rows())?;
        let (eta, lip) = spd_extremes(&h, "hessian")?;
        if !noise_cov.is_symmetric(1e-12) {
            return Err(Error::InvalidParameter("noise covariance must be symmetric".into()));
        }
        let noise_factor = SpdFactor::psd(&noise_cov)?;
        Ok(Self {
            h: h.symmetrized(),
            x_star,
            noise_cov,
            noise_factor,
            eta,
            lip,
        })
    }

    /// Diagonal Hessian with the given eigenvalues.
    pub fn diagonal(eigenvalues: &[f64], x_star: Vec<f64>, noise_cov: Matrix) -> Result<Self> {
        Self::new(Matrix::from_diag(eigenvalues), x_star, noise_cov)
    }

    /// Hessian `Qᵀ diag(eigenvalues) Q` with a random orthogonal `Q`.
    pub fn random_basis(
        eigenvalues: &[f64],
        x_star: Vec<f64>,
        noise_cov: Matrix,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let h = crate::numerics::random_spd_with_spectrum(eigenvalues, rng)?.symmetrized();
        Self::new(h, x_star, noise_cov)
    }

    pub fn hessian(&self) -> &Matrix {
        &self.h
    }

    pub fn noise_cov(&self) -> &Matrix {
        &self.noise_cov
    }
}

impl StochasticProblem for QuadraticGaussianProblem {
    fn dim(&self) -> usize {
        self.x_star.len()
    }

    fn x_star(&self) -> &[f64] {
        &self.x_star
    }

    fn eta(&self) -> f64 {
        self.eta
    }

    fn lip(&self) -> f64 {
        self.lip
    }

    fn hessian_at_opt(&self) -> &Matrix {
        &self.h
    }

    fn closed_form_hessian(&self) -> Option<&Matrix> {
        Some(&self.h)
    }

    fn f_value(&self, x: &[f64]) -> f64 {
        let d = sub(x, &self.x_star);
        0.5 * dot(&d, &self.h.mat_vec(&d))
    }

    fn exact_gradient(&self, x: &[f64]) -> Vec<f64> {
        self.h.mat_vec(&sub(x, &self.x_star))
    }

    fn sample_gradient(&self, x: &[f64], rng: &mut RngStream) -> Vec<f64> {
        let g = self.exact_gradient(x);
        mvn_sample(&g, &self.noise_factor, rng)
    }

    fn noise_covariance_at(&self, _x: &[f64]) -> Matrix {
        self.noise_cov.clone()
    }

    /// The mean of `n` i.i.d. `N(0, S)` draws is exactly `N(0, S/n)`, so the
    /// batch average is drawn in one shot.
    fn batch_gradient_into(&self, x: &[f64], n: u64, rng: &mut RngStream, out: &mut [f64]) {
        let m = self.dim();
        let mut d = vec![0.0; m];
        for (di, (xi, si)) in d.iter_mut().zip(x.iter().zip(&self.x_star)) {
            *di = xi - si;
        }
        self.h.mat_vec_into(&d, out);
        let mut z = vec![0.0; m];
        rng.fill_standard_normal(&mut z);
        let scale = 1.0 / (n as f64).sqrt();
        let l = self.noise_factor.matrix();
        for (i, o) in out.iter_mut().enumerate() {
            *o += scale * dot(l.row(i), &z);
        }
    }
}

/// Linear parameter estimation: regressors `u ~ N(0, R_u)`, observations
/// `d = uᵀx* + ν` with `ν ~ N(0, σ_ν²)`.
///
/// The objective is `f(x) = (x−x*)ᵀR_u(x−x*) + σ_ν²`, so `∇f = 2R_u(x−x*)`
/// and the Hessian is `2R_u`. The sampled gradient is `2(uuᵀx − du)`,
/// which is unbiased for that `∇f`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearRegressionProblem {
    r_u: Matrix,
    r_factor: SpdFactor,
    sigma_nu: f64,
    x_star: Vec<f64>,
    h: Matrix,
    eta: f64,
    lip: f64,
}

impl LinearRegressionProblem {
    pub fn new(r_u: Matrix, sigma_nu: f64, x_star: Vec<f64>) -> Result<Self> {
        check_dim("LinearRegressionProblem: R_u", x_star.len(), r_u.rows())?;
        if !(sigma_nu >= 0.0) || !sigma_nu.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "sigma_nu must be finite and nonnegative, got {sigma_nu}"
            )));
        }
        let (lo, hi) = spd_extremes(&r_u, "R_u")?;
        let r_u = r_u.symmetrized();
        let r_factor = crate::numerics::cholesky(&r_u)?;
        Ok(Self {
            h: r_u.scale(2.0),
            r_u,
            r_factor,
            sigma_nu,
            x_star,
            eta: 2.0 * lo,
            lip: 2.0 * hi,
        })
    }

    pub fn r_u(&self) -> &Matrix {
        &self.r_u
    }

    pub fn sigma_nu(&self) -> f64 {
        self.sigma_nu
    }

    /// Batch mean drawn in one shot: `Σuᵢuᵢᵀ = W ~ Wishart(n, R)` by the
    /// Bartlett decomposition `W = (LA)(LA)ᵀ`, and `Σuᵢνᵢ | W ~ N(0, σ²W)`.
    fn wishart_batch_into(&self, delta: &[f64], n: u64, rng: &mut RngStream, out: &mut [f64]) {
        let m = delta.len();
        let mut a = Matrix::zeros(m, m);
        for i in 0..m {
            a[(i, i)] = rng.chi_square((n - i as u64) as f64).sqrt();
            for j in 0..i {
                a[(i, j)] = rng.standard_normal();
            }
        }
        let b = self.r_factor.matrix().matmul(&a).expect("square factors");
        let bt_delta = b.transpose().mat_vec(delta);
        let mut z = vec![0.0; m];
        rng.fill_standard_normal(&mut z);
        let combo: Vec<f64> = bt_delta.iter().zip(&z).map(|(d, zi)| d - self.sigma_nu * zi).collect();
        let sum = b.mat_vec(&combo);
        let scale = 2.0 / n as f64;
        for (o, s) in out.iter_mut().zip(sum) {
            *o = scale * s;
        }
    }

    fn accumulate_sample(&self, delta: &[f64], rng: &mut RngStream, z: &mut [f64], u: &mut [f64], out: &mut [f64]) {
        rng.fill_standard_normal(z);
        self.r_factor.matrix().mat_vec_into(z, u);
        let nu = self.sigma_nu * rng.standard_normal();
        let resid = 2.0 * (dot(u, delta) - nu);
        for (o, ui) in out.iter_mut().zip(u.iter()) {
            *o += resid * ui;
        }
    }
}

impl StochasticProblem for LinearRegressionProblem {
    fn dim(&self) -> usize {
        self.x_star.len()
    }

    fn x_star(&self) -> &[f64] {
        &self.x_star
    }

    fn eta(&self) -> f64 {
        self.eta
    }

    fn lip(&self) -> f64 {
        self.lip
    }

    fn hessian_at_opt(&self) -> &Matrix {
        &self.h
    }

    fn closed_form_hessian(&self) -> Option<&Matrix> {
        Some(&self.h)
    }

    fn f_value(&self, x: &[f64]) -> f64 {
        let d = sub(x, &self.x_star);
        dot(&d, &self.r_u.mat_vec(&d)) + self.sigma_nu * self.sigma_nu
    }

    fn exact_gradient(&self, x: &[f64]) -> Vec<f64> {
        self.h.mat_vec(&sub(x, &self.x_star))
    }

    fn sample_gradient(&self, x: &[f64], rng: &mut RngStream) -> Vec<f64> {
        let m = self.dim();
        let delta = sub(x, &self.x_star);
        let (mut z, mut u, mut out) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
        self.accumulate_sample(&delta, rng, &mut z, &mut u, &mut out);
        out
    }

    /// `4[RΔΔᵀR + (ΔᵀRΔ)R + σ²R]` with `Δ = x − x*`, from the Gaussian
    /// fourth-moment identity `E[uuᵀMuuᵀ] = 2RMR + tr(RM)R`.
    fn noise_covariance_at(&self, x: &[f64]) -> Matrix {
        let delta = sub(x, &self.x_star);
        let rd = self.r_u.mat_vec(&delta);
        let quad = dot(&delta, &rd);
        let mut c = Matrix::outer(&rd, &rd);
        c.add_assign_scaled(&self.r_u, quad + self.sigma_nu * self.sigma_nu);
        c.scale(4.0)
    }

    fn batch_gradient_into(&self, x: &[f64], n: u64, rng: &mut RngStream, out: &mut [f64]) {
        let m = self.dim();
        let delta = sub(x, &self.x_star);
        if n > WISHART_THRESHOLD.max(m as u64) {
            self.wishart_batch_into(&delta, n, rng, out);
            return;
        }
        let (mut z, mut u) = (vec![0.0; m], vec![0.0; m]);
        out.iter_mut().for_each(|v| *v = 0.0);
        for _ in 0..n {
            self.accumulate_sample(&delta, rng, &mut z, &mut u, out);
        }
        let inv = 1.0 / n as f64;
        out.iter_mut().for_each(|v| *v *= inv);
    }
}

/// Batches larger than this use the one-shot Wishart draw.
const WISHART_THRESHOLD: u64 = 64;

/// Either shipped problem family behind one concrete type.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum AnyProblem {
    Quadratic(QuadraticGaussianProblem),
    LinearRegression(LinearRegressionProblem),
}

macro_rules! delegate {
    ($self:ident, $p:ident => $e:expr) => {
        match $self {
            AnyProblem::Quadratic($p) => $e,
            AnyProblem::LinearRegression($p) => $e,
        }
    };
}

impl StochasticProblem for AnyProblem {
    fn dim(&self) -> usize {
        delegate!(self, p => p.dim())
    }

    fn x_star(&self) -> &[f64] {
        delegate!(self, p => p.x_star())
    }

    fn eta(&self) -> f64 {
        delegate!(self, p => p.eta())
    }

    fn lip(&self) -> f64 {
        delegate!(self, p => p.lip())
    }

    fn hessian_at_opt(&self) -> &Matrix {
        delegate!(self, p => p.hessian_at_opt())
    }

    fn closed_form_hessian(&self) -> Option<&Matrix> {
        delegate!(self, p => p.closed_form_hessian())
    }

    fn f_value(&self, x: &[f64]) -> f64 {
        delegate!(self, p => p.f_value(x))
    }

    fn exact_gradient(&self, x: &[f64]) -> Vec<f64> {
        delegate!(self, p => p.exact_gradient(x))
    }

    fn sample_gradient(&self, x: &[f64], rng: &mut RngStream) -> Vec<f64> {
        delegate!(self, p => p.sample_gradient(x, rng))
    }

    fn noise_covariance_at(&self, x: &[f64]) -> Matrix {
        delegate!(self, p => p.noise_covariance_at(x))
    }

    fn batch_gradient_into(&self, x: &[f64], n: u64, rng: &mut RngStream, out: &mut [f64]) {
        delegate!(self, p => p.batch_gradient_into(x, n, rng, out))
    }
}

impl From<QuadraticGaussianProblem> for AnyProblem {
    fn from(p: QuadraticGaussianProblem) -> Self {
        AnyProblem::Quadratic(p)
    }
}

impl From<LinearRegressionProblem> for AnyProblem {
    fn from(p: LinearRegressionProblem) -> Self {
        AnyProblem::LinearRegression(p)
    }
}
