//! Random-variate generators and log-density evaluators.
//!
//! Every sampler draws through an [`RngStream`], a ChaCha8 generator keyed by
//! a master seed and a stream id. Streams derived from one master seed are
//! independent, so chains and replicates can each own one.

mod polya_gamma;

pub use polya_gamma::{polya_gamma_mean, polya_gamma_sample};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Exp1, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Seeded, splittable random stream.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, stream, inner }
    }

    /// Independent child stream. The child is a pure function of
    /// `(seed, stream, key)` and does not advance `self`.
    pub fn derive(&self, key: u64) -> Self {
        let child_seed = splitmix64(self.seed ^ splitmix64(self.stream.wrapping_add(0x9E37_79B9)));
        Self::with_stream(child_seed, key)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn std_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn normal(&mut self, mean: f64, sd: f64) -> f64 {
        mean + sd * self.std_normal()
    }

    pub fn exp1(&mut self) -> f64 {
        Exp1.sample(&mut self.inner)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

/// Gamma(shape, rate) draw, mean `shape / rate`.
pub fn gamma_sample(shape: f64, rate: f64, rng: &mut RngStream) -> Result<f64> {
    check_positive("gamma shape", shape)?;
    check_positive("gamma rate", rate)?;
    let g = Gamma::new(shape, 1.0).map_err(|e| Error::invalid(e.to_string()))?;
    let x: f64 = g.sample(rng);
    Ok(x.max(f64::MIN_POSITIVE) / rate)
}

/// Inverse-Gamma(shape, rate) draw: the reciprocal of a Gamma(shape, rate).
pub fn inverse_gamma_sample(shape: f64, rate: f64, rng: &mut RngStream) -> Result<f64> {
    check_positive("inverse-gamma shape", shape)?;
    check_positive("inverse-gamma rate", rate)?;
    let g = Gamma::new(shape, 1.0).map_err(|e| Error::invalid(e.to_string()))?;
    let x: f64 = g.sample(rng);
    Ok((rate / x.max(f64::MIN_POSITIVE)).min(f64::MAX))
}

/// Multivariate normal draw `mean + L z` with `cov = L Lᵀ`.
pub fn mvn_sample(mean: &DVector<f64>, cov: &DMatrix<f64>, rng: &mut RngStream) -> Result<DVector<f64>> {
    if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
        return Err(Error::invalid("covariance shape does not match mean"));
    }
    let ch = linalg::cholesky(cov, "MVN covariance")?;
    let z = DVector::from_fn(mean.len(), |_, _| rng.std_normal());
    Ok(mean + ch.l() * z)
}

/// Draw from `N(Q⁻¹ b, Q⁻¹)` given the precision `Q` and canonical vector `b`.
///
/// This is the form every conjugate Gaussian full conditional takes.
pub fn mvn_canonical_sample(
    precision: &DMatrix<f64>,
    b: &DVector<f64>,
    rng: &mut RngStream,
    what: &str,
) -> Result<DVector<f64>> {
    let (mean, ch) = linalg::canonical_mean(precision, b, what)?;
    let z = DVector::from_fn(b.len(), |_, _| rng.std_normal());
    Ok(mean + linalg::back_substitute_transpose(&ch, &z))
}

/// Wishart draw by Bartlett decomposition, parameterized so `E[W] = df · scale`.
pub fn wishart_sample(df: f64, scale: &DMatrix<f64>, rng: &mut RngStream) -> Result<DMatrix<f64>> {
    let k = scale.nrows();
    if scale.ncols() != k || k == 0 {
        return Err(Error::invalid("Wishart scale must be square and non-empty"));
    }
    if !(df.is_finite() && df >= k as f64) {
        return Err(Error::invalid(format!("Wishart df {df} must be at least the dimension {k}")));
    }
    let ch = linalg::cholesky(scale, "Wishart scale")?;
    let mut a = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        let chi = ChiSquared::new(df - i as f64).map_err(|e| Error::invalid(e.to_string()))?;
        let c: f64 = chi.sample(rng);
        a[(i, i)] = c.sqrt();
        for j in 0..i {
            a[(i, j)] = rng.std_normal();
        }
    }
    let la = ch.l() * a;
    let mut w = &la * la.transpose();
    linalg::symmetrize(&mut w);
    Ok(w)
}

pub fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (LN_2PI + var.ln() + (x - mean).powi(2) / var)
}

pub fn gamma_logpdf(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - statrs::function::gamma::ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

pub fn inverse_gamma_logpdf(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - statrs::function::gamma::ln_gamma(shape) - (shape + 1.0) * x.ln() - rate / x
}

/// Dense multivariate-normal log density.
pub fn mvn_logpdf(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    let ch = linalg::cholesky(cov, "MVN covariance")?;
    let d = x - mean;
    Ok(-0.5 * (x.len() as f64 * LN_2PI + linalg::log_det(&ch) + linalg::inv_quad(&ch, &d)))
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[allow(dead_code)]
pub(crate) fn uniform_in<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}
