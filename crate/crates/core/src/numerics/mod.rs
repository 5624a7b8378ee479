//! Dense linear algebra, seeded random streams and the special functions
//! needed for F-distribution confidence regions.

mod linalg;
mod matrix;
mod rng;
mod special;

pub use linalg::{
    cholesky, orthonormalize, random_orthogonal, random_spd_with_spectrum, spectral_norm,
    spectral_radius, sym_eig, SpdFactor,
};
pub use matrix::{axpy, dot, norm, norm_sq, sub, Matrix};
pub use rng::{mvn_sample, standard_normal, RngStream};
pub use special::{f_cdf, f_pdf, f_quantile, regularized_incomplete_beta};
