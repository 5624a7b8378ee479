use serde::{Deserialize, Serialize};

use super::matrix::{dot, norm, Matrix};
use super::rng::RngStream;
use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-12;
const PIVOT_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;
const POWER_MAX_ITERS: usize = 100_000;

/// Square-root factor `F` of a covariance with `F Fᵀ = A`.
///
/// Produced by [`cholesky`] (lower triangular, positive diagonal), or by
/// [`SpdFactor::psd`] for semidefinite inputs where a triangular factor
/// need not exist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpdFactor {
    factor: Matrix,
}

impl SpdFactor {
    /// The zero factor; sampling with it returns the mean.
    pub fn zero(n: usize) -> Self {
        Self {
            factor: Matrix::zeros(n, n),
        }
    }

    /// Factor of a symmetric positive semidefinite matrix.
    ///
    /// Tries Cholesky first, then falls back to `V diag(√λ₊)`.
    pub fn psd(a: &Matrix) -> Result<Self> {
        if a.max_abs() == 0.0 {
            return Ok(Self::zero(a.rows()));
        }
        if let Ok(f) = cholesky(a) {
            return Ok(f);
        }
        let (vals, vecs) = sym_eig(a)?;
        let scale = vals.first().copied().unwrap_or(0.0).abs();
        let n = a.rows();
        let mut f = Matrix::zeros(n, n);
        for (j, &lam) in vals.iter().enumerate() {
            if lam < -1e-9 * scale {
                return Err(Error::NotPositiveDefinite { index: j, pivot: lam });
            }
            let s = lam.max(0.0).sqrt();
            for i in 0..n {
                f[(i, j)] = vecs[(i, j)] * s;
            }
        }
        Ok(Self { factor: f })
    }

    pub fn dim(&self) -> usize {
        self.factor.rows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.factor
    }

    pub fn reconstruct(&self) -> Matrix {
        self.factor
            .matmul(&self.factor.transpose())
            .expect("square factor")
    }

    /// `F z`
    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        self.factor.mat_vec(z)
    }

    /// `log det(F Fᵀ)`; only meaningful for triangular factors.
    pub fn log_det(&self) -> f64 {
        2.0 * self.factor.diag().iter().map(|d| d.abs().ln()).sum::<f64>()
    }

    /// Solves `F Fᵀ x = b` for a lower-triangular factor.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let y = self.forward(b);
        self.backward(&y)
    }

    /// Solves `F y = b`.
    pub fn forward(&self, b: &[f64]) -> Vec<f64> {
        let l = &self.factor;
        let n = l.rows();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let s = b[i] - dot(&l.row(i)[..i], &y[..i]);
            y[i] = s / l[(i, i)];
        }
        y
    }

    /// Solves `Fᵀ x = y`.
    pub fn backward(&self, y: &[f64]) -> Vec<f64> {
        let l = &self.factor;
        let n = l.rows();
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= l[(k, i)] * x[k];
            }
            x[i] = s / l[(i, i)];
        }
        x
    }
}

fn check_square(a: &Matrix, context: &'static str) -> Result<()> {
    if a.is_square() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected: a.rows(),
            actual: a.cols(),
        })
    }
}

/// Cholesky factorization `A = L Lᵀ`.
pub fn cholesky(a: &Matrix) -> Result<SpdFactor> {
    check_square(a, "cholesky")?;
    if !a.is_symmetric(SYMMETRY_TOL) {
        return Err(Error::InvalidParameter("cholesky: matrix is not symmetric".into()));
    }
    let n = a.rows();
    let max_diag = a.diag().iter().fold(0.0_f64, |m, d| m.max(d.abs()));
    let tol = PIVOT_TOL * max_diag;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let s = a[(j, j)] - dot(&l.row(j)[..j], &l.row(j)[..j]);
        if !(s > tol) {
            return Err(Error::NotPositiveDefinite { index: j, pivot: s });
        }
        let d = s.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let s = a[(i, j)] - dot(&l.row(i)[..j], &l.row(j)[..j]);
            l[(i, j)] = s / d;
        }
    }
    Ok(SpdFactor { factor: l })
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Eigenvalues are returned in descending order; column `j` of the matrix
/// is the eigenvector for eigenvalue `j`.
pub fn sym_eig(a: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    check_square(a, "sym_eig")?;
    let n = a.rows();
    let mut m = a.symmetrized();
    let mut v = Matrix::identity(n);
    let scale = m.frobenius_norm();
    if scale == 0.0 {
        return Ok((vec![0.0; n], v));
    }
    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        if off.sqrt() <= 1e-15 * scale {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            routine: "sym_eig",
            iterations: JACOBI_MAX_SWEEPS,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]));
    let vals = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vecs = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            vecs[(k, dst)] = v[(k, src)];
        }
    }
    Ok((vals, vecs))
}

/// Largest singular value by power iteration on `AᵀA`.
pub fn spectral_norm(a: &Matrix, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("spectral_norm: tol must be positive, got {tol}")));
    }
    if a.max_abs() == 0.0 {
        return Ok(0.0);
    }
    let n = a.cols();
    let mut rng = RngStream::new(0x5e_ed0f_5bec, 0);
    let mut x: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
    let nx = norm(&x);
    x.iter_mut().for_each(|v| *v /= nx);
    let at = a.transpose();
    let mut ax = vec![0.0; a.rows()];
    let mut y = vec![0.0; n];
    let mut prev = 0.0;
    for _ in 0..POWER_MAX_ITERS {
        a.mat_vec_into(&x, &mut ax);
        // Rayleigh quotient of AᵀA at the unit vector x
        let lam = dot(&ax, &ax);
        at.mat_vec_into(&ax, &mut y);
        let ny = norm(&y);
        if ny == 0.0 {
            return Ok(0.0);
        }
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / ny;
        }
        if (lam - prev).abs() <= tol * lam {
            return Ok(lam.sqrt());
        }
        prev = lam;
    }
    Err(Error::NoConvergence {
        routine: "spectral_norm",
        iterations: POWER_MAX_ITERS,
    })
}

/// Spectral radius via Gelfand's formula `lim ‖A^{2^j}‖^{1/2^j}`.
///
/// Repeated squaring with renormalization; the Frobenius norm is used for
/// the iterates, and the estimate is accepted once successive values agree
/// to `tol` relative.
pub fn spectral_radius(a: &Matrix, tol: f64) -> Result<f64> {
    check_square(a, "spectral_radius")?;
    let n = a.rows() as f64;
    let mut p = a.clone();
    // log of the scale factored out of p so far, and current exponent 2^j
    let mut log_scale = 0.0_f64;
    let mut exponent = 1.0_f64;
    let mut prev = f64::INFINITY;
    for _ in 0..60 {
        let fro = p.frobenius_norm();
        if fro == 0.0 {
            return Ok(0.0);
        }
        // ‖A^k‖₂ ≤ ‖A^k‖_F ≤ √n ‖A^k‖₂, so the √n factor washes out as k grows
        let est_hi = ((fro.ln() + log_scale) / exponent).exp();
        let est_lo = ((fro.ln() - 0.5 * n.ln() + log_scale) / exponent).exp();
        if (est_hi - est_lo) <= tol * est_hi && (est_hi - prev).abs() <= tol * est_hi {
            return Ok(est_hi);
        }
        prev = est_hi;
        let q = p.scale(1.0 / fro);
        log_scale += fro.ln();
        p = q.matmul(&q)?;
        log_scale *= 2.0;
        exponent *= 2.0;
    }
    let fro = p.frobenius_norm();
    if fro == 0.0 {
        return Ok(0.0);
    }
    Ok(((fro.ln() + log_scale) / exponent).exp())
}

/// Orthogonal factor of a thin QR decomposition by modified Gram–Schmidt.
pub fn orthonormalize(a: &Matrix) -> Result<Matrix> {
    let (r, c) = (a.rows(), a.cols());
    let mut cols: Vec<Vec<f64>> = (0..c).map(|j| (0..r).map(|i| a[(i, j)]).collect()).collect();
    for j in 0..c {
        for k in 0..j {
            let (done, rest) = cols.split_at_mut(j);
            let proj = dot(&done[k], &rest[0]);
            for (x, q) in rest[0].iter_mut().zip(&done[k]) {
                *x -= proj * q;
            }
        }
        let nj = norm(&cols[j]);
        if nj <= 1e-300 {
            return Err(Error::InvalidParameter("orthonormalize: rank deficient input".into()));
        }
        cols[j].iter_mut().for_each(|x| *x /= nj);
    }
    let mut q = Matrix::zeros(r, c);
    for (j, col) in cols.iter().enumerate() {
        for i in 0..r {
            q[(i, j)] = col[i];
        }
    }
    Ok(q)
}

/// `Qᵀ diag(spectrum) Q` for a Haar-like random orthogonal `Q`.
pub fn random_spd_with_spectrum(spectrum: &[f64], rng: &mut RngStream) -> Result<Matrix> {
    let n = spectrum.len();
    let q = random_orthogonal(n, rng)?;
    q.transpose().matmul(&Matrix::from_diag(spectrum))?.matmul(&q)
}

pub fn random_orthogonal(n: usize, rng: &mut RngStream) -> Result<Matrix> {
    let g = Matrix::from_vec(n, n, (0..n * n).map(|_| rng.standard_normal()).collect())?;
    orthonormalize(&g)
}
