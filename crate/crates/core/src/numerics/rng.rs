use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::linalg::SpdFactor;

/// Reproducible random stream keyed by `(seed, stream_id)`.
///
/// Streams with different ids share the seed-derived key but use distinct
/// ChaCha stream nonces, so they never overlap.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
    spare: Option<f64>,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            inner,
            spare: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// A fresh stream with the same seed and another id.
    pub fn sibling(&self, stream_id: u64) -> Self {
        Self::new(self.seed, stream_id)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal by the Box–Muller transform.
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn fill_standard_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.standard_normal();
        }
    }

    /// Chi-square variate with `df` degrees of freedom.
    pub fn chi_square(&mut self, df: f64) -> f64 {
        use rand_distr::Distribution;
        rand_distr::ChiSquared::new(df)
            .expect("positive degrees of freedom")
            .sample(&mut self.inner)
    }
}

pub fn standard_normal(rng: &mut RngStream) -> f64 {
    rng.standard_normal()
}

/// `mean + F z` with `z` i.i.d. standard normal.
pub fn mvn_sample(mean: &[f64], cov_factor: &SpdFactor, rng: &mut RngStream) -> Vec<f64> {
    debug_assert_eq!(mean.len(), cov_factor.dim());
    let mut z = vec![0.0; mean.len()];
    rng.fill_standard_normal(&mut z);
    let mut out = cov_factor.apply(&z);
    for (o, m) in out.iter_mut().zip(mean) {
        *o += m;
    }
    out
}
