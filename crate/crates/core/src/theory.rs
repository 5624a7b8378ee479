//! Rate constants, mean-squared-error bounds, the linear maps governing the
//! rescaled errors, and their limiting covariances.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{spectral_norm, spectral_radius, sym_eig, Matrix};
use crate::schedules::{BatchSchedule, ScheduleKind};
use crate::solvers::{accelerated_beta, heavy_ball_beta, AlgorithmKind};

const STABILITY_MARGIN: f64 = 1e-10;
const RADIUS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateConstants {
    /// `1 − 2αηL/(η+L)`
    pub q: f64,
    /// `√(αη)`
    pub gamma: f64,
    /// `max{(1−√(αη))², (1−√(αL))²}`
    pub beta_hb: f64,
    pub kappa: f64,
    /// Per-step contraction of the chosen method: `q`, `1−γ` or `β_hb`.
    pub contraction: f64,
    /// `e^{−v}(v / ln(1/contraction))^v`, when `v` is given.
    pub c_qv: Option<f64>,
}

/// `c_{q,v} = e^{−v}(v/ln(1/q))^v`, the smallest `c` with `q^x ≤ c x^{−v}`
/// for all `x > 0`.
pub fn c_qv(q: f64, v: f64) -> f64 {
    if q == 0.0 {
        return 0.0;
    }
    (-v).exp() * (v / (1.0 / q).ln()).powf(v)
}

fn check_eta_lip(eta: f64, lip: f64) -> Result<()> {
    if eta > 0.0 && eta <= lip && lip.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("need 0 < eta <= L, got eta={eta}, L={lip}")))
    }
}

fn check_alpha(kind: AlgorithmKind, alpha: f64, eta: f64, lip: f64) -> Result<()> {
    let slack = 1.0 + 1e-12;
    let (ok, range) = match kind {
        AlgorithmKind::VrSgd => (alpha > 0.0 && alpha <= 2.0 / (eta + lip) * slack, "(0, 2/(eta+L)]"),
        AlgorithmKind::VrAccelerated => (alpha > 0.0 && alpha <= slack / lip, "(0, 1/L]"),
        AlgorithmKind::VrHeavyBall => (alpha > 0.0 && alpha < 4.0 / lip, "(0, 4/L)"),
        AlgorithmKind::BaselineSgd => {
            return Err(Error::InvalidParameter("the SGD baseline has no rate constants".into()));
        }
    };
    if ok {
        Ok(())
    } else {
        Err(Error::InadmissibleAlpha {
            alpha,
            reason: format!("{kind} needs alpha in {range}"),
        })
    }
}

pub fn rate_constants(kind: AlgorithmKind, alpha: f64, eta: f64, lip: f64, v: Option<f64>) -> Result<RateConstants> {
    check_eta_lip(eta, lip)?;
    check_alpha(kind, alpha, eta, lip)?;
    let q = (1.0 - 2.0 * alpha * eta * lip / (eta + lip)).max(0.0);
    let gamma = (alpha * eta).sqrt();
    let beta_hb = heavy_ball_beta(alpha, eta, lip);
    let contraction = match kind {
        AlgorithmKind::VrSgd => q,
        AlgorithmKind::VrAccelerated => 1.0 - gamma,
        _ => beta_hb,
    };
    Ok(RateConstants {
        q,
        gamma,
        beta_hb,
        kappa: lip / eta,
        contraction,
        c_qv: v.map(|v| c_qv(contraction, v)),
    })
}

/// Inputs of [`mse_upper_bound`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    pub eta: f64,
    pub lip: f64,
    pub alpha: f64,
    /// Uniform per-sample noise variance `ν²`.
    pub nu_sq: f64,
    /// `E‖x_0 − x*‖²`
    pub e0_sq: f64,
}

/// Theoretical upper bound on `E‖x_k − x*‖²`.
///
/// Momentum parameters are implied by `α` (`β = (1−γ)/(1+γ)` for the
/// accelerated method, `β = β_hb` for heavy ball). At `k = 0` the bound is
/// `E‖x_0 − x*‖²` itself.
pub fn mse_upper_bound(kind: AlgorithmKind, schedule: &BatchSchedule, k: u64, b: &BoundInputs) -> Result<f64> {
    let rc = rate_constants(kind, b.alpha, b.eta, b.lip, None)?;
    let BoundInputs {
        eta,
        lip,
        alpha,
        nu_sq,
        e0_sq,
    } = *b;
    let kf = k as f64;
    let a2n2 = alpha * alpha * nu_sq;
    match schedule.kind {
        ScheduleKind::Geometric { rho } => {
            if !(rho > rc.contraction && rho < 1.0) {
                return Err(Error::InadmissibleRho {
                    rho,
                    floor: rc.contraction,
                });
            }
            let rk = rho.powf(kf);
            match kind {
                AlgorithmKind::VrSgd => Ok(rk * (e0_sq + a2n2 / (1.0 - rc.q / rho))),
                AlgorithmKind::VrAccelerated => {
                    if k == 0 {
                        return Ok(e0_sq);
                    }
                    let g = rc.gamma;
                    let beta = accelerated_beta(alpha, eta);
                    let c = 2.0 / eta
                        * (0.5 * (eta + lip) * e0_sq + rho * nu_sq / (rho - (1.0 - g)) * (alpha + (1.0 - g) * g / (2.0 * eta)));
                    Ok(c * (2.0 * (1.0 + beta).powi(2) + 2.0 * beta * beta / rho) * rk)
                }
                _ => {
                    if k == 0 {
                        return Ok(e0_sq);
                    }
                    Ok((2.0 * e0_sq + a2n2 / (1.0 - rc.beta_hb / rho)) * rk)
                }
            }
        }
        ScheduleKind::Polynomial { v } => {
            if k == 0 {
                return Ok(e0_sq);
            }
            let cq = rc.contraction;
            if !(cq > 0.0 && cq < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "polynomial bounds need a contraction factor in (0, 1), got {cq}"
                )));
            }
            let c = c_qv(cq, v);
            let e2v = (2.0 * v).exp();
            // Σ_{t=1}^k q^{k−t} t^{−v} ≤ q^k (e^{2v}/q − 1)/(1−q) + 2k^{−v}/(q ln(1/q)),
            // with q^k ≤ c k^{−v}
            let series = c * (e2v / cq - 1.0) / (1.0 - cq) + 2.0 / (cq * (1.0 / cq).ln());
            match kind {
                AlgorithmKind::VrSgd => Ok((c * e0_sq + a2n2 * series) * kf.powf(-v)),
                AlgorithmKind::VrAccelerated => {
                    let g = rc.gamma;
                    let beta = accelerated_beta(alpha, eta);
                    let gap_const = c * 0.5 * (eta + lip) * e0_sq + nu_sq * (alpha + (1.0 - g) * g / (2.0 * eta)) * series;
                    let y_bound = |j: u64| {
                        if j == 0 {
                            e0_sq
                        } else {
                            2.0 / eta * gap_const * (j as f64).powf(-v)
                        }
                    };
                    Ok(2.0 * (1.0 + beta).powi(2) * y_bound(k) + 2.0 * beta * beta * y_bound(k - 1))
                }
                _ => Ok((2.0 * c * e0_sq + a2n2 * series) * kf.powf(-v)),
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompanionLabel {
    /// `ρ^{−1/2}(I − αH)`
    P1,
    /// `ρ^{−1/2} H2`
    P2,
    /// `[(1+β)(I−αH), −β(I−αH); I, 0]`
    H2,
    /// `ρ^{−1/2} H3`
    P3,
    /// `[(1+β)I − αH, −βI; I, 0]`
    H3,
    /// `I − αH`
    A,
}

/// Which quantity a closed-form bound controls.
///
/// The block companions are not normal, so their operator norms can exceed
/// one even when every eigenvalue is small; their bounds hold for the
/// spectral radius.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundMeasure {
    SpectralNorm,
    SpectralRadius,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompanionMatrix {
    pub label: CompanionLabel,
    pub matrix: Matrix,
    pub norm_bound: f64,
    pub measure: BoundMeasure,
}

impl CompanionMatrix {
    /// The measured quantity the bound refers to.
    pub fn measured(&self) -> Result<f64> {
        match self.measure {
            BoundMeasure::SpectralNorm => spectral_norm(&self.matrix, 1e-13),
            BoundMeasure::SpectralRadius => match block_companion_radius(&self.matrix)? {
                Some(r) => Ok(r),
                None => spectral_radius(&self.matrix, RADIUS_TOL),
            },
        }
    }
}

/// Spectral radius of `[T, B; C, D]` whose blocks commute with the symmetric
/// block `T`: diagonalizes all four blocks in the eigenbasis of `T` and solves
/// the resulting 2×2 problems. Returns `None` if the blocks are not
/// simultaneously diagonalized.
fn block_companion_radius(mat: &Matrix) -> Result<Option<f64>> {
    if !mat.rows().is_multiple_of(2) || !mat.is_square() {
        return Ok(None);
    }
    let m = mat.rows() / 2;
    let block = |r0: usize, c0: usize| {
        let mut out = Matrix::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                out[(i, j)] = mat[(r0 + i, c0 + j)];
            }
        }
        out
    };
    let t = block(0, 0);
    if !t.is_symmetric(1e-12) {
        return Ok(None);
    }
    let (_, v) = sym_eig(&t)?;
    let vt = v.transpose();
    let mut diags = Vec::with_capacity(4);
    let scale = mat.max_abs().max(f64::MIN_POSITIVE);
    for (r0, c0) in [(0, 0), (0, m), (m, 0), (m, m)] {
        let d = vt.matmul(&block(r0, c0))?.matmul(&v)?;
        for i in 0..m {
            for j in 0..m {
                if i != j && d[(i, j)].abs() > 1e-10 * scale {
                    return Ok(None);
                }
            }
        }
        diags.push(d.diag());
    }
    let mut radius: f64 = 0.0;
    for i in 0..m {
        let (a, b, c, d) = (diags[0][i], diags[1][i], diags[2][i], diags[3][i]);
        let half_tr = 0.5 * (a + d);
        let det = a * d - b * c;
        let disc = half_tr * half_tr - det;
        let r = if disc >= 0.0 {
            half_tr.abs() + disc.sqrt()
        } else {
            det.max(0.0).sqrt()
        };
        radius = radius.max(r);
    }
    Ok(Some(radius))
}

/// Assembles one of the companion matrices and its closed-form bound.
///
/// `beta` is ignored by `P1` and `A`; `rho` is ignored by the unscaled ones.
pub fn companion_matrix(label: CompanionLabel, alpha: f64, beta: f64, rho: f64, h: &Matrix) -> Result<CompanionMatrix> {
    if !h.is_square() {
        return Err(Error::DimensionMismatch {
            context: "companion_matrix: H",
            expected: h.rows(),
            actual: h.cols(),
        });
    }
    let m = h.rows();
    let (vals, _) = sym_eig(h)?;
    let (lip, eta) = (vals[0], vals[m - 1]);
    let id = Matrix::identity(m);
    let a = id.sub(&h.scale(alpha))?;
    let zero = Matrix::zeros(m, m);
    let q = (1.0 - 2.0 * alpha * eta * lip / (eta + lip)).max(0.0);
    let gamma = (alpha * eta).sqrt();
    let scale = 1.0 / rho.sqrt();
    let h2 = || Matrix::block2x2(&a.scale(1.0 + beta), &a.scale(-beta), &id, &zero);
    let h3 = || {
        let top = id.scale(1.0 + beta).sub(&h.scale(alpha))?;
        Matrix::block2x2(&top, &id.scale(-beta), &id, &zero)
    };
    let (matrix, norm_bound, measure) = match label {
        CompanionLabel::P1 => (a.scale(scale), (q / rho).sqrt(), BoundMeasure::SpectralNorm),
        CompanionLabel::A => (a, q.sqrt(), BoundMeasure::SpectralNorm),
        CompanionLabel::H2 => (h2()?, 1.0 - gamma, BoundMeasure::SpectralRadius),
        CompanionLabel::P2 => (h2()?.scale(scale), (1.0 - gamma) * scale, BoundMeasure::SpectralRadius),
        CompanionLabel::H3 => (h3()?, beta.sqrt(), BoundMeasure::SpectralRadius),
        CompanionLabel::P3 => (h3()?.scale(scale), (beta / rho).sqrt(), BoundMeasure::SpectralRadius),
    };
    Ok(CompanionMatrix {
        label,
        matrix,
        norm_bound,
        measure,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Construction {
    Lyapunov,
    TruncatedPolynomial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitCovariance {
    pub sigma: Matrix,
    /// Lyapunov residual, or the `k` vs `2k` difference for the polynomial
    /// series.
    pub residual: f64,
    pub terms_used: u64,
    pub construction: Construction,
}

impl LimitCovariance {
    /// Leading `m × m` block (the marginal of the first stacked component).
    pub fn marginal(&self, m: usize) -> Matrix {
        self.sigma.top_left(m)
    }
}

fn ensure_stable(p: &Matrix) -> Result<f64> {
    let r = spectral_radius(p, RADIUS_TOL)?;
    if r >= 1.0 - STABILITY_MARGIN {
        Err(Error::Unstable { radius: r })
    } else {
        Ok(r)
    }
}

fn injected_noise(g: &Matrix, s0: &Matrix) -> Result<Matrix> {
    Ok(g.congruence(s0)?.symmetrized())
}

/// `Σ = Σ_{t≥0} Pᵗ G S₀ Gᵀ (Pᵗ)ᵀ`, the solution of `Σ = G S₀ Gᵀ + P Σ Pᵀ`,
/// by the doubling iteration `Σ ← Σ + PΣPᵀ`, `P ← P²`.
///
/// Iterates until the update is below `tol` relative to `‖Σ‖_F`.
pub fn limit_covariance_geometric(p: &Matrix, g: &Matrix, s0: &Matrix, tol: f64) -> Result<LimitCovariance> {
    ensure_stable(p)?;
    let q = injected_noise(g, s0)?;
    let mut sigma = q.clone();
    let mut pk = p.clone();
    let mut terms: u64 = 1;
    let mut converged = false;
    for _ in 0..64 {
        let update = pk.congruence(&sigma)?;
        sigma = sigma.add(&update)?;
        terms = terms.saturating_mul(2);
        let scale = sigma.frobenius_norm().max(f64::MIN_POSITIVE);
        if update.frobenius_norm() <= tol * scale {
            converged = true;
            break;
        }
        pk = pk.matmul(&pk)?;
    }
    if !converged {
        return Err(Error::NoConvergence {
            routine: "limit_covariance_geometric",
            iterations: 64,
        });
    }
    let sigma = sigma.symmetrized();
    let residual = sigma.sub(&q)?.sub(&p.congruence(&sigma)?)?.frobenius_norm();
    Ok(LimitCovariance {
        sigma,
        residual,
        terms_used: terms,
        construction: Construction::Lyapunov,
    })
}

/// Weight `(k/(k−j))^v`, computed stably for `j ≪ k`.
fn poly_weight(k: u64, j: u64, v: f64) -> f64 {
    (-v * (-(j as f64) / k as f64).ln_1p()).exp()
}

/// `Σ_{t=1}^{k} (k/t)^v A^{k−t} Q (A^{k−t})ᵀ` with `Q = G S₀ Gᵀ`.
///
/// Terms are summed in order of increasing `j = k − t`; the sum stops once
/// the remaining tail is provably below `tol` (the weights never exceed
/// `k^v`). Returns the sum and the number of terms used.
pub fn polynomial_partial_sum(a: &Matrix, g: &Matrix, s0: &Matrix, v: f64, k: u64, tol: f64) -> Result<(Matrix, u64)> {
    let r = ensure_stable(a)?;
    let q = injected_noise(g, s0)?;
    let q_norm = spectral_norm(&q, 1e-10)?.max(q.max_abs());
    // Σ_i ‖A^i‖_F² = tr(Σ_i A^i (A^i)ᵀ)
    let id_sum = limit_covariance_geometric(a, &Matrix::identity(a.rows()), &Matrix::identity(a.rows()), 1e-14)?
        .sigma
        .trace();
    let kv = (k as f64).powf(v);
    let mut sum = Matrix::zeros(q.rows(), q.cols());
    let mut aj = Matrix::identity(a.rows());
    let mut j: u64 = 0;
    while j < k {
        let term = aj.congruence(&q)?;
        sum.add_assign_scaled(&term, poly_weight(k, j, v));
        j += 1;
        aj = a.matmul(&aj)?;
        // ‖A^{j+i}‖_F ≤ ‖A^j‖_F ‖A^i‖_F bounds the tail by k^v ‖Q‖ ‖A^j‖_F² Σ_i ‖A^i‖_F²
        let fro = aj.frobenius_norm();
        let tail = kv * q_norm * fro * fro * id_sum;
        if tail <= tol * 1e-2 || (fro == 0.0) {
            break;
        }
        if r == 0.0 && fro == 0.0 {
            break;
        }
    }
    Ok((sum.symmetrized(), j))
}

/// Limit of the polynomial-schedule covariance series.
///
/// Evaluates the partial sum at `k` and `2k`, starting from `k_trunc` and
/// doubling `k` up to `2^40` until the two agree within `tol` (Frobenius).
pub fn limit_covariance_polynomial(
    a: &Matrix,
    g: &Matrix,
    s0: &Matrix,
    v: f64,
    k_trunc: u64,
    tol: f64,
) -> Result<LimitCovariance> {
    if !(v >= 0.0) {
        return Err(Error::InvalidParameter(format!("polynomial exponent must be >= 0, got {v}")));
    }
    const K_CAP: u64 = 1 << 40;
    let mut k = k_trunc.max(1);
    let (mut prev, _) = polynomial_partial_sum(a, g, s0, v, k, tol)?;
    loop {
        let k2 = k.checked_mul(2).ok_or(Error::Overflow { step: k })?;
        let (next, terms) = polynomial_partial_sum(a, g, s0, v, k2, tol)?;
        let diff = next.sub(&prev)?.frobenius_norm();
        if diff < tol {
            return Ok(LimitCovariance {
                sigma: next,
                residual: diff,
                terms_used: terms,
                construction: Construction::TruncatedPolynomial,
            });
        }
        if k2 >= K_CAP {
            return Err(Error::TruncationNotConverged {
                k_trunc: k2,
                difference: diff,
            });
        }
        prev = next;
        k = k2;
    }
}

/// `(HΣH, ½ tr(HΣ))`: covariance of the rescaled gradient and mean of the
/// rescaled suboptimality gap in the limit.
pub fn delta_method_covariances(h: &Matrix, sigma: &Matrix) -> Result<(Matrix, f64)> {
    let hs = h.matmul(sigma)?;
    let grad_cov = hs.matmul(h)?.symmetrized();
    Ok((grad_cov, 0.5 * hs.trace()))
}

/// Limiting covariance of the rescaled error of `kind` under `schedule`.
///
/// The result is `m × m` for VR-SGD and the stacked `2m × 2m` covariance for
/// the momentum methods; [`LimitCovariance::marginal`] extracts the block
/// of the primary iterate.
pub fn limit_covariance_for(
    kind: AlgorithmKind,
    schedule: &BatchSchedule,
    alpha: f64,
    beta: f64,
    h: &Matrix,
    s0: &Matrix,
    tol: f64,
) -> Result<(LimitCovariance, CompanionMatrix)> {
    let m = h.rows();
    let g = match kind {
        AlgorithmKind::VrSgd => Matrix::identity(m),
        AlgorithmKind::VrAccelerated | AlgorithmKind::VrHeavyBall => Matrix::upper_injection(m),
        AlgorithmKind::BaselineSgd => {
            return Err(Error::InvalidParameter("no limiting covariance is computed for the baseline".into()));
        }
    };
    match schedule.kind {
        ScheduleKind::Geometric { rho } => {
            let label = match kind {
                AlgorithmKind::VrSgd => CompanionLabel::P1,
                AlgorithmKind::VrAccelerated => CompanionLabel::P2,
                _ => CompanionLabel::P3,
            };
            let cm = companion_matrix(label, alpha, beta, rho, h)?;
            Ok((limit_covariance_geometric(&cm.matrix, &g, s0, tol)?, cm))
        }
        ScheduleKind::Polynomial { v } => {
            let label = match kind {
                AlgorithmKind::VrSgd => CompanionLabel::A,
                AlgorithmKind::VrAccelerated => CompanionLabel::H2,
                _ => CompanionLabel::H3,
            };
            let cm = companion_matrix(label, alpha, beta, 1.0, h)?;
            Ok((limit_covariance_polynomial(&cm.matrix, &g, s0, v, 1024, tol)?, cm))
        }
    }
}
