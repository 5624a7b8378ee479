use statrs::function::beta::{checked_beta_reg, ln_beta};

/// Regularized incomplete beta `I_x(a, b)`.
///
/// Delegates to the continued-fraction evaluation in `statrs`, which
/// switches to `1 - I_{1-x}(b, a)` above `x = (a+1)/(a+b+2)`.
///
/// # Panics
/// If `a` or `b` is not positive or `x` lies outside `[0, 1]`.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    checked_beta_reg(a, b, x)
        .unwrap_or_else(|e| panic!("regularized_incomplete_beta({a}, {b}, {x}): {e}"))
}

/// CDF of the F distribution with `(d1, d2)` degrees of freedom.
pub fn f_cdf(d1: u32, d2: u32, x: f64) -> f64 {
    assert!(d1 > 0 && d2 > 0, "F degrees of freedom must be positive");
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    let (d1, d2) = (f64::from(d1), f64::from(d2));
    let z = d1 * x / (d1 * x + d2);
    regularized_incomplete_beta(d1 / 2.0, d2 / 2.0, z)
}

/// Density of the F distribution.
pub fn f_pdf(d1: u32, d2: u32, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let (d1, d2) = (f64::from(d1), f64::from(d2));
    let ln = 0.5 * d1 * (d1 / d2).ln() + (0.5 * d1 - 1.0) * x.ln()
        - 0.5 * (d1 + d2) * (1.0 + d1 * x / d2).ln()
        - ln_beta(d1 / 2.0, d2 / 2.0);
    ln.exp()
}

/// Quantile of the F distribution: the `q` with `f_cdf(d1, d2, q) = p`.
///
/// Brackets by doubling from `[0, 1]`, then refines with Newton steps that
/// fall back to bisection whenever they leave the bracket.
pub fn f_quantile(d1: u32, d2: u32, p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "f_quantile: p must lie in (0, 1), got {p}");
    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    while f_cdf(d1, d2, hi) <= p {
        lo = hi;
        hi *= 2.0;
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..500 {
        let g = f_cdf(d1, d2, x) - p;
        if g.abs() <= 1e-13 {
            return x;
        }
        if g > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let d = f_pdf(d1, d2, x);
        let newton = x - g / d;
        x = if d > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    x
}
