//! Batch-size rules `N_k` and their cumulative oracle cost.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solvers::AlgorithmKind;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScheduleKind {
    /// `N_k = ⌈ρ^{−(k+1)}⌉`
    Geometric { rho: f64 },
    /// `N_k = ⌈(k+1)^v⌉`
    Polynomial { v: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchSchedule {
    pub kind: ScheduleKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<u64>,
}

impl BatchSchedule {
    pub fn geometric(rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::InvalidParameter(format!("geometric rho must lie in (0, 1), got {rho}")));
        }
        Ok(Self {
            kind: ScheduleKind::Geometric { rho },
            cap: None,
        })
    }

    pub fn polynomial(v: f64) -> Result<Self> {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidParameter(format!("polynomial exponent must be positive, got {v}")));
        }
        Ok(Self {
            kind: ScheduleKind::Polynomial { v },
            cap: None,
        })
    }

    pub fn with_cap(mut self, cap: Option<u64>) -> Result<Self> {
        if cap == Some(0) {
            return Err(Error::InvalidParameter("batch cap must be positive".into()));
        }
        self.cap = cap;
        Ok(self)
    }

    /// Checks the parameters of a deserialized schedule.
    pub fn validate(&self) -> Result<()> {
        let base = match self.kind {
            ScheduleKind::Geometric { rho } => Self::geometric(rho)?,
            ScheduleKind::Polynomial { v } => Self::polynomial(v)?,
        };
        base.with_cap(self.cap).map(|_| ())
    }

    /// `N_k`, clipped at the cap when one is set.
    pub fn batch_size(&self, k: u64) -> Result<u64> {
        let raw = match self.kind {
            ScheduleKind::Geometric { rho } => geometric_ceil(rho, k + 1, self.cap),
            ScheduleKind::Polynomial { v } => polynomial_ceil(k + 1, v, self.cap),
        };
        match (raw, self.cap) {
            (Some(n), Some(c)) => Ok(n.min(c)),
            (Some(n), None) => Ok(n),
            (None, Some(c)) => Ok(c),
            (None, None) => Err(Error::Overflow { step: k }),
        }
    }

    /// Whether the cap is active at step `k`.
    pub fn cap_binds(&self, k: u64) -> bool {
        match self.cap {
            None => false,
            Some(c) => {
                let uncapped = Self { cap: None, ..*self };
                uncapped.batch_size(k).map_or(true, |n| n > c)
            }
        }
    }

    /// `N_0, …, N_{K−1}`
    pub fn sizes(&self, steps: u64) -> Result<Vec<u64>> {
        (0..steps).map(|k| self.batch_size(k)).collect()
    }

    /// `Σ_{k<K} N_k`
    pub fn cumulative_oracle_calls(&self, steps: u64) -> Result<u64> {
        let mut total: u64 = 0;
        for k in 0..steps {
            total = total
                .checked_add(self.batch_size(k)?)
                .ok_or(Error::Overflow { step: k })?;
        }
        Ok(total)
    }

    /// Smallest `K` whose cumulative oracle cost reaches `budget`.
    pub fn steps_for_budget(&self, budget: u64) -> Result<u64> {
        let mut total: u64 = 0;
        let mut k = 0;
        while total < budget {
            total = total
                .checked_add(self.batch_size(k)?)
                .ok_or(Error::Overflow { step: k })?;
            k += 1;
        }
        Ok(k)
    }
}

/// Default `ρ` for each variance-reduced method, `κ = L/η`.
pub fn default_rho(kind: AlgorithmKind, eta: f64, lip: f64) -> Result<f64> {
    if !(eta > 0.0 && eta <= lip) {
        return Err(Error::InvalidParameter(format!("need 0 < eta <= L, got eta={eta}, L={lip}")));
    }
    let kappa = lip / eta;
    match kind {
        AlgorithmKind::VrSgd => Ok((kappa / (kappa + 1.0)).powi(2)),
        AlgorithmKind::VrAccelerated => Ok(1.0 - 1.0 / (2.0 * kappa.sqrt())),
        AlgorithmKind::VrHeavyBall => Ok((1.0 - 1.0 / (kappa.sqrt() + 1.0)).powi(2)),
        AlgorithmKind::BaselineSgd => Err(Error::InvalidParameter(
            "the SGD baseline draws one sample per step and has no batch schedule".into(),
        )),
    }
}

/// Relative gap from the nearest integer below which the floating-point
/// ceiling is not trusted.
const NEAR_INTEGER: f64 = 1e-9;

/// `⌈ρ^{−e}⌉`, or `None` past `u64::MAX` (or past `cap`, when set).
fn geometric_ceil(rho: f64, e: u64, cap: Option<u64>) -> Option<u64> {
    let approx = (-(e as f64) * rho.ln()).exp();
    let limit = cap.map_or(u64::MAX as f64, |c| c as f64);
    if approx > 2.0 * limit {
        return None;
    }
    let nearest = approx.round();
    if approx < 2f64.powi(52) && (approx - nearest).abs() > NEAR_INTEGER * approx.max(1.0) {
        return Some(approx.ceil() as u64);
    }
    geometric_ceil_exact(rho, e)
}

/// Exact `⌈ρ^{−e}⌉` on the binary value of `ρ`.
///
/// With `ρ = m·2^p` (`m` odd), `ρ^{−e} = 2^{−pe} / m^e`.
fn geometric_ceil_exact(rho: f64, e: u64) -> Option<u64> {
    let (mantissa, exp) = decompose(rho);
    let shift = u64::try_from(-exp).ok()?.checked_mul(e)?;
    let den = BigUint::from(mantissa).pow(u32::try_from(e).ok()?);
    let num = BigUint::one() << shift;
    let (q, r) = (&num / &den, &num % &den);
    let q = if r.is_zero() { q } else { q + 1u32 };
    q.to_u64()
}

/// `x = m·2^p` with `m` odd, for finite positive `x`.
fn decompose(x: f64) -> (u64, i64) {
    let bits = x.to_bits();
    let raw_exp = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    let (mut m, mut p) = if raw_exp == 0 {
        (frac, -1074)
    } else {
        (frac | (1u64 << 52), raw_exp - 1075)
    };
    let tz = m.trailing_zeros();
    m >>= tz;
    p += i64::from(tz);
    (m, p)
}

/// `⌈n^v⌉`, or `None` past `u64::MAX` (or past `cap`, when set).
fn polynomial_ceil(n: u64, v: f64, cap: Option<u64>) -> Option<u64> {
    if v.fract() == 0.0 && v <= 64.0 {
        return n.checked_pow(v as u32);
    }
    let approx = (n as f64).powf(v);
    let limit = cap.map_or(u64::MAX as f64, |c| c as f64);
    if approx > 2.0 * limit || approx >= 2f64.powi(63) {
        return None;
    }
    let nearest = approx.round();
    if (approx - nearest).abs() <= NEAR_INTEGER * approx.max(1.0) {
        Some(nearest as u64)
    } else {
        Some(approx.ceil() as u64)
    }
}
