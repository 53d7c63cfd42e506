#![allow(dead_code)]

pub mod conjugacy;

use dyadgp::mcmc::InvGammaPrior;
use dyadgp::{DyadDataset, Individual, ModelSpec, OutcomeKind, PairRecord, Priors, RngStream, Variant};
use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

/// Six individuals on five locations (the last two share a point).
pub const POINTS6: [[f64; 2]; 6] = [[0.0, 0.0], [1.0, 0.2], [0.3, 0.9], [0.8, 0.7], [0.5, 0.4], [0.5, 0.4]];

fn individuals(points: &[[f64; 2]], rng: &mut RngStream) -> Vec<Individual> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| Individual {
            id: format!("p{i}"),
            location: *p,
            covariates: vec![rng.std_normal()],
        })
        .collect()
}

pub fn patristic_data(points: &[[f64; 2]], seed: u64) -> DyadDataset {
    let mut rng = RngStream::new(seed);
    let inds = individuals(points, &mut rng);
    let n = points.len();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let x = vec![1.0, rng.uniform()];
            let outcome = (-2.0 + 0.5 * x[1] + 0.3 * rng.std_normal()).exp();
            pairs.push(PairRecord { i, j, x, outcome });
        }
    }
    DyadDataset::new(inds, vec!["age".into()], vec!["intercept".into(), "u".into()], OutcomeKind::Patristic, pairs).unwrap()
}

/// All ordered pairs; roughly half the outcomes are exactly zero.
pub fn transmission_data(points: &[[f64; 2]], seed: u64) -> DyadDataset {
    let mut rng = RngStream::new(seed);
    let inds = individuals(points, &mut rng);
    let n = points.len();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let x = vec![1.0, rng.uniform()];
            let outcome = if rng.bernoulli(0.5) {
                0.0
            } else {
                1.0 / (1.0 + (1.0 - 0.8 * rng.std_normal()).exp())
            };
            pairs.push(PairRecord { i, j, x, outcome });
        }
    }
    DyadDataset::new(inds, vec!["age".into()], vec!["intercept".into(), "u".into()], OutcomeKind::Transmission, pairs).unwrap()
}

/// Priors with shape 6 everywhere, so inverse-gamma full conditionals have
/// finite eighth moments and sample variances have a usable standard error.
pub fn test_spec(kind: OutcomeKind, variant: Variant) -> ModelSpec {
    let ig = InvGammaPrior { shape: 6.0, rate: 1.0 };
    let mut spec = ModelSpec::new(kind, variant);
    spec.priors = Priors {
        regression_var: 25.0,
        sigma2_eps: ig,
        sigma2_zeta: ig,
        tau2: ig,
        sigma2_nu_z: ig,
        sigma2_nu_w: ig,
        ..Priors::default()
    };
    spec
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample mean and variance within `k` standard errors of the targets. The
/// standard error of the variance uses the empirical fourth central moment.
pub fn check_moments(label: &str, xs: &[f64], target_mean: f64, target_var: f64, k: f64) -> Result<(), String> {
    let n = xs.len() as f64;
    let m = mean(xs);
    let c2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let c4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    let var = c2 * n / (n - 1.0);
    let se_mean = (target_var / n).sqrt();
    let se_var = ((c4 - c2 * c2).max(0.0) / n).sqrt();
    let mut errs = Vec::new();
    if (m - target_mean).abs() > k * se_mean {
        errs.push(format!("{label}: mean {m:.6} vs {target_mean:.6} (se {se_mean:.2e})"));
    }
    if (var - target_var).abs() > k * se_var {
        errs.push(format!("{label}: var {var:.6} vs {target_var:.6} (se {se_var:.2e})"));
    }
    if errs.is_empty() {
        Ok(())
    } else {
        Err(errs.join("; "))
    }
}

/// Two-sided tolerance, in standard errors, that keeps the false-alarm rate
/// of a `k`-SE check when it is split over `coords` coordinates.
pub fn block_tolerance(k: f64, coords: usize) -> f64 {
    let std = Normal::new(0.0, 1.0).unwrap();
    let tail = std.cdf(-k) / coords as f64;
    -std.inverse_cdf(tail)
}

/// Coordinate-wise moment check of vector draws against N(mean, cov), at a
/// block-level `k`-SE false-alarm rate.
pub fn check_vector(label: &str, draws: &[DVector<f64>], mean: &DVector<f64>, cov: &DMatrix<f64>, k: f64) -> Vec<String> {
    let k = block_tolerance(k, mean.len());
    (0..mean.len())
        .filter_map(|c| {
            let xs: Vec<f64> = draws.iter().map(|d| d[c]).collect();
            check_moments(&format!("{label}[{c}]"), &xs, mean[c], cov[(c, c)], k).err()
        })
        .collect()
}

/// Inverse-Gamma(a, b) mean and variance.
pub fn inv_gamma_moments(a: f64, b: f64) -> (f64, f64) {
    (b / (a - 1.0), b * b / ((a - 1.0).powi(2) * (a - 2.0)))
}

/// Mean and covariance of N(Q⁻¹b, Q⁻¹), by dense inversion.
pub fn canonical(q: &DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let cov = q.clone().try_inverse().expect("invertible precision");
    (&cov * b, cov)
}

pub fn centring(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64)
}

/// exp(−φ d) on raw distances divided by `scale`.
pub fn dense_corr(points: &[[f64; 2]], phi: f64, scale: f64) -> DMatrix<f64> {
    let m = points.len();
    DMatrix::from_fn(m, m, |a, b| {
        let d = ((points[a][0] - points[b][0]).powi(2) + (points[a][1] - points[b][1]).powi(2)).sqrt();
        (-phi * d / scale).exp()
    })
}

/// Variance of PG(1, z): (sinh z − z) / (4 z³ cosh²(z/2)), 1/24 at zero.
pub fn pg_var(z: f64) -> f64 {
    let z = z.abs();
    if z < 1e-3 {
        1.0 / 24.0 - z * z / 240.0
    } else {
        (z.sinh() - z) / (4.0 * z.powi(3) * (0.5 * z).cosh().powi(2))
    }
}

/// E[PG(1, z)] from the first terms of its infinite-convolution representation
/// Σ_k 1 / (2π²((k − ½)² + z²/(4π²))), an oracle independent of tanh.
pub fn pg_mean_series(z: f64) -> f64 {
    let c = z * z / (4.0 * std::f64::consts::PI.powi(2));
    let mut s = 0.0;
    for k in 1..=2_000_000u64 {
        let kh = k as f64 - 0.5;
        s += 1.0 / (kh * kh + c);
    }
    // tail Σ_{k>K} 1/(k−½)² ≈ 1/K
    s += 1.0 / 2_000_000.0;
    s / (2.0 * std::f64::consts::PI.powi(2))
}

/// One-sample Kolmogorov-Smirnov statistic.
pub fn ks_stat(xs: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, x)| {
            let f = cdf(*x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// 1% critical value of the KS statistic.
pub fn ks_critical(n: usize) -> f64 {
    1.63 / (n as f64).sqrt()
}

/// Hand-built spatial patristic draws: columns of `eta` are per location;
/// each draw row of `params` is (τ², σ²_ζ, φ).
pub fn patristic_kriging_samples(eta: &[Vec<f64>], params: &[[f64; 3]]) -> dyadgp::PosteriorSamples {
    use dyadgp::SampleBlock;
    let m = eta[0].len();
    let mut variance = SampleBlock::new("variance", vec!["sigma2_eps".into(), "sigma2_zeta".into(), "tau2".into(), "phi".into()]);
    let mut eta_block = SampleBlock::new("eta", (1..=m).map(|l| format!("eta[{l}]")).collect());
    let mut loglik = SampleBlock::new("loglik", vec!["obs".into()]);
    for (e, p) in eta.iter().zip(params) {
        variance.push(&[0.1, p[1], p[0], p[2]]);
        eta_block.push(e);
        loglik.push(&[0.0]);
    }
    dyadgp::PosteriorSamples {
        model: OutcomeKind::Patristic,
        variant: Variant::Spatial,
        blocks: vec![variance, eta_block],
        loglik,
        chain_lengths: vec![eta.len()],
        acceptance: Default::default(),
        warnings: Vec::new(),
    }
}

/// Hand-built spatial transmission draws. `eta[d]` is block-major (4 × m),
/// `omega[d]` the 4×4 cross-covariance, `phi[d]` the decay.
pub fn transmission_kriging_samples(eta: &[Vec<f64>], omega: &[DMatrix<f64>], zeta: [f64; 4], phi: &[f64]) -> dyadgp::PosteriorSamples {
    use dyadgp::transmission::{omega_column_names, EFFECT_BLOCKS};
    use dyadgp::SampleBlock;
    let m = eta[0].len() / 4;
    let mut names = vec!["sigma2_eps".to_string()];
    names.extend(EFFECT_BLOCKS.iter().map(|b| format!("sigma2_zeta_{b}")));
    names.push("phi".into());
    let mut variance = SampleBlock::new("variance", names);
    let mut om = SampleBlock::new("omega", omega_column_names());
    let mut eta_blocks: Vec<SampleBlock> = EFFECT_BLOCKS
        .iter()
        .map(|b| SampleBlock::new(format!("eta_{b}"), (1..=m).map(|l| format!("eta_{b}[{l}]")).collect()))
        .collect();
    let mut loglik = SampleBlock::new("loglik", vec!["obs".into()]);
    for d in 0..eta.len() {
        let mut row = vec![0.5];
        row.extend_from_slice(&zeta);
        row.push(phi[d]);
        variance.push(&row);
        let mut o = Vec::new();
        for a in 0..4 {
            for b in a..4 {
                o.push(omega[d][(a, b)]);
            }
        }
        om.push(&o);
        for (b, blk) in eta_blocks.iter_mut().enumerate() {
            blk.push(&eta[d][b * m..(b + 1) * m]);
        }
        loglik.push(&[0.0]);
    }
    let mut blocks = vec![variance, om];
    blocks.extend(eta_blocks);
    dyadgp::PosteriorSamples {
        model: OutcomeKind::Transmission,
        variant: Variant::Spatial,
        blocks,
        loglik,
        chain_lengths: vec![eta.len()],
        acceptance: Default::default(),
        warnings: Vec::new(),
    }
}

/// Conditional of the first `k` coordinates of N(0, cov) given the rest equal `rest`.
pub fn gaussian_conditional(cov: &DMatrix<f64>, k: usize, rest: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = cov.nrows();
    let a = cov.view((0, 0), (k, k)).into_owned();
    let b = cov.view((0, k), (k, n - k)).into_owned();
    let c_inv = cov.view((k, k), (n - k, n - k)).into_owned().try_inverse().unwrap();
    (&b * &c_inv * rest, &a - &b * &c_inv * b.transpose())
}

/// Points followed by `new`; `scale` divides raw distances.
pub fn corr_with(points: &[[f64; 2]], new: [f64; 2], phi: f64, scale: f64) -> DMatrix<f64> {
    let mut all = vec![new];
    all.extend_from_slice(points);
    dense_corr(&all, phi, scale)
}
