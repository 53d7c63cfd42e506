//! Model comparison and convergence diagnostics over stored draws.

use serde::{Deserialize, Serialize};

use crate::dyad::{DyadDataset, OutcomeKind};
use crate::error::{Error, Result};
use crate::geometry::{euclid, Point};
use crate::linalg;
use crate::mcmc::{PosteriorSamples, SampleBlock};
use crate::transmission::EFFECT_BLOCKS;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waic {
    pub waic: f64,
    pub p_waic: f64,
    pub lppd: f64,
}

impl std::fmt::Display for Waic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.2} ({:.2})", self.waic, self.p_waic)
    }
}

/// WAIC from a draws × observations log-density matrix. p_waic uses the
/// sample variance with divisor S − 1.
pub fn waic(loglik: &SampleBlock) -> Result<Waic> {
    let s = loglik.n_draws();
    if s < 2 {
        return Err(Error::invalid("WAIC needs at least two draws"));
    }
    if loglik.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("log-density matrix has non-finite entries"));
    }
    let mut lppd = 0.0;
    let mut p_waic = 0.0;
    for c in 0..loglik.width() {
        let col = loglik.column(c);
        let max = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = col.iter().map(|v| (v - max).exp()).sum();
        lppd += max + (sum / s as f64).ln();
        p_waic += linalg::sample_var(&col);
    }
    Ok(Waic {
        waic: -2.0 * (lppd - p_waic),
        p_waic,
        lppd,
    })
}

fn autocov(x: &[f64], mean: f64, lag: usize) -> f64 {
    let n = x.len();
    let mut s = 0.0;
    for t in 0..n - lag {
        s += (x[t] - mean) * (x[t + lag] - mean);
    }
    s / n as f64
}

/// Spectral density at zero, Bartlett window of width ⌊N^½⌋.
pub fn spectral_variance(x: &[f64]) -> f64 {
    let n = x.len();
    let m = linalg::mean(x);
    let window = (n as f64).sqrt().floor() as usize;
    let mut s = autocov(x, m, 0);
    for k in 1..=window.min(n - 1) {
        s += 2.0 * (1.0 - k as f64 / (window as f64 + 1.0)) * autocov(x, m, k);
    }
    s
}

pub const GEWEKE_FIRST: f64 = 0.1;
pub const GEWEKE_LAST: f64 = 0.5;

/// Geweke z-score comparing the first `frac_a` and last `frac_b` of a chain.
pub fn geweke(chain: &[f64], frac_a: f64, frac_b: f64) -> Result<f64> {
    if !(frac_a > 0.0 && frac_b > 0.0 && frac_a + frac_b <= 1.0) {
        return Err(Error::invalid("Geweke fractions must be positive and sum to at most 1"));
    }
    let n = chain.len();
    let na = (frac_a * n as f64).floor() as usize;
    let nb = (frac_b * n as f64).floor() as usize;
    if na < 2 || nb < 2 {
        return Err(Error::invalid("chain too short for the Geweke diagnostic"));
    }
    let a = &chain[..na];
    let b = &chain[n - nb..];
    let var = spectral_variance(a) / na as f64 + spectral_variance(b) / nb as f64;
    if !(var > 0.0) {
        return Err(Error::invalid("Geweke diagnostic undefined for a constant chain"));
    }
    Ok((linalg::mean(a) - linalg::mean(b)) / var.sqrt())
}

/// Effective sample size with Geyer's initial positive (monotone) sequence.
/// Not capped at N; antithetic chains can exceed it.
pub fn ess(chain: &[f64]) -> Result<f64> {
    let n = chain.len();
    if n < 4 {
        return Err(Error::invalid("chain too short for ESS"));
    }
    let m = linalg::mean(chain);
    let c0 = autocov(chain, m, 0);
    if !(c0 > 0.0) {
        return Err(Error::invalid("ESS undefined for a constant chain"));
    }
    let rho = |k: usize| autocov(chain, m, k) / c0;
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < n {
        let gamma = rho(2 * k) + rho(2 * k + 1);
        if gamma <= 0.0 {
            break;
        }
        let gamma = gamma.min(prev);
        sum += gamma;
        prev = gamma;
        k += 1;
    }
    let tau = (-1.0 + 2.0 * sum).max(1.0 / (n as f64).log10());
    Ok(n as f64 / tau)
}

/// Quantile by linear interpolation between order statistics
/// (position (N − 1)p, zero-based).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn equal_tailed_interval(draws: &[f64], level: f64) -> (f64, f64) {
    let mut s = draws.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let alpha = (1.0 - level) / 2.0;
    (quantile_sorted(&s, alpha), quantile_sorted(&s, 1.0 - alpha))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
    pub excludes_zero: bool,
    pub ess: Option<f64>,
    /// ESS larger than the number of draws (antithetic chain).
    pub ess_exceeds_n: bool,
    /// Geweke z of the first chain.
    pub geweke_z: Option<f64>,
}

/// Summary of one parameter's draws; `chains` splits them for diagnostics.
pub fn summarize_draws(name: &str, draws: &[f64], chains: &[Vec<f64>], level: f64) -> ParamSummary {
    let (lower, upper) = equal_tailed_interval(draws, level);
    let mut ess_total = 0.0;
    let mut ess_ok = true;
    for c in chains {
        match ess(c) {
            Ok(e) => ess_total += e,
            Err(_) => ess_ok = false,
        }
    }
    let ess_value = ess_ok.then_some(ess_total);
    ParamSummary {
        name: name.to_string(),
        mean: linalg::mean(draws),
        sd: if draws.len() > 1 { linalg::sample_var(draws).sqrt() } else { 0.0 },
        lower,
        upper,
        excludes_zero: lower > 0.0 || upper < 0.0,
        ess: ess_value,
        ess_exceeds_n: ess_value.is_some_and(|e| e > draws.len() as f64),
        geweke_z: chains.first().and_then(|c| geweke(c, GEWEKE_FIRST, GEWEKE_LAST).ok()),
    }
}

/// Summaries of every stored column, optionally exponentiated before
/// quantiles (for ratio and odds-ratio tables).
pub fn summarize(samples: &PosteriorSamples, level: f64, exponentiate: bool) -> Vec<ParamSummary> {
    let mut out = Vec::new();
    for block in &samples.blocks {
        for (c, name) in block.columns.iter().enumerate() {
            let mut draws = block.column(c);
            if exponentiate {
                draws.iter_mut().for_each(|v| *v = v.exp());
            }
            let chains = samples.chain_segments(&draws);
            out.push(summarize_draws(name, &draws, &chains, level));
        }
    }
    out
}

/// Covariance and correlation of ln P for two pairs under the patristic
/// model, from the closed forms for the same pair, one shared individual
/// and no shared individual. Distances are those used with `phi`.
pub fn induced_covariance_patristic(
    pair_a: (usize, usize),
    pair_b: (usize, usize),
    points: &[Point],
    tau2: f64,
    sigma2_zeta: f64,
    sigma2_eps: f64,
    phi: f64,
) -> Result<(f64, f64)> {
    let n = points.len();
    for &(i, j) in &[pair_a, pair_b] {
        if i >= n || j >= n || i == j {
            return Err(Error::invalid(format!("invalid pair ({i}, {j})")));
        }
    }
    let e = |a: usize, b: usize| (-phi * euclid(points[a], points[b])).exp();
    let var = |(i, j): (usize, usize)| 2.0 * tau2 * (1.0 + e(i, j)) + 2.0 * sigma2_zeta + sigma2_eps;
    let norm = |p: (usize, usize)| if p.0 < p.1 { p } else { (p.1, p.0) };
    let (a, b) = (norm(pair_a), norm(pair_b));
    let cov = if a == b {
        var(a)
    } else {
        let shared: Vec<usize> = [a.0, a.1].into_iter().filter(|x| *x == b.0 || *x == b.1).collect();
        match shared.as_slice() {
            [s] => {
                let j = if a.0 == *s { a.1 } else { a.0 };
                let k = if b.0 == *s { b.1 } else { b.0 };
                tau2 * (1.0 + e(*s, j) + e(*s, k) + e(j, k)) + sigma2_zeta
            }
            _ => tau2 * (e(a.0, b.0) + e(a.0, b.1) + e(a.1, b.0) + e(a.1, b.1)),
        }
    };
    Ok((cov, cov / (var(a) * var(b)).sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectGroup {
    pub block: String,
    pub positive: usize,
    pub negative: usize,
    pub null: usize,
    /// Mean outcome over pairs involving an individual of each group.
    pub mean_outcome_positive: Option<f64>,
    pub mean_outcome_negative: Option<f64>,
    pub mean_outcome_null: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomEffectReport {
    pub groups: Vec<EffectGroup>,
    /// Posterior of the spatial share of random-effect variance.
    pub spatial_shares: Vec<ParamSummary>,
}

/// Significant random effects per block with stratified outcome means, and
/// spatial variance shares τ²/(τ²+σ²_ζ) or Ω_bb/(Ω_bb+σ²_ζb).
pub fn random_effect_report(samples: &PosteriorSamples, data: &DyadDataset, level: f64) -> Result<RandomEffectReport> {
    let mut groups = Vec::new();
    let blocks: Vec<&str> = match samples.model {
        OutcomeKind::Patristic => vec!["theta"],
        OutcomeKind::Transmission => vec!["theta_zg", "theta_zr", "theta_wg", "theta_wr"],
    };
    for name in blocks {
        let Some(block) = samples.block(name) else { continue };
        if block.width() != data.n() {
            return Err(Error::invalid(format!("block `{name}` does not match the dataset size")));
        }
        let (mut pos, mut neg, mut null) = (Vec::new(), Vec::new(), Vec::new());
        for i in 0..block.width() {
            let (lo, hi) = equal_tailed_interval(&block.column(i), level);
            if lo > 0.0 {
                pos.push(i);
            } else if hi < 0.0 {
                neg.push(i);
            } else {
                null.push(i);
            }
        }
        groups.push(EffectGroup {
            block: name.to_string(),
            positive: pos.len(),
            negative: neg.len(),
            null: null.len(),
            mean_outcome_positive: data.mean_outcome_involving(&pos),
            mean_outcome_negative: data.mean_outcome_involving(&neg),
            mean_outcome_null: data.mean_outcome_involving(&null),
        });
    }
    let mut spatial_shares = Vec::new();
    match samples.model {
        OutcomeKind::Patristic => {
            if let (Some(t), Some(z)) = (samples.column("tau2"), samples.column("sigma2_zeta")) {
                let share: Vec<f64> = t.iter().zip(&z).map(|(a, b)| a / (a + b)).collect();
                let chains = samples.chain_segments(&share);
                spatial_shares.push(summarize_draws("spatial_share", &share, &chains, level));
            }
        }
        OutcomeKind::Transmission => {
            for b in EFFECT_BLOCKS {
                let om = samples.column(&format!("omega[{b},{b}]"));
                let z = samples.column(&format!("sigma2_zeta_{b}"));
                if let (Some(om), Some(z)) = (om, z) {
                    let share: Vec<f64> = om.iter().zip(&z).map(|(a, c)| a / (a + c)).collect();
                    let chains = samples.chain_segments(&share);
                    spatial_shares.push(summarize_draws(&format!("spatial_share_{b}"), &share, &chains, level));
                }
            }
        }
    }
    Ok(RandomEffectReport { groups, spatial_shares })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn block(rows: &[&[f64]]) -> SampleBlock {
        let mut b = SampleBlock::new("loglik", (0..rows[0].len()).map(|i| i.to_string()).collect());
        for r in rows {
            b.push(r);
        }
        b
    }

    #[test]
    fn waic_constant_loglik() {
        let w = waic(&block(&[&[-1.5, -1.5, -1.5], &[-1.5, -1.5, -1.5]])).unwrap();
        assert_eq!(w.p_waic, 0.0);
        assert!((w.waic - 9.0).abs() < 1e-12);
        assert!(waic(&block(&[&[0.0]])).is_err());
    }

    #[test]
    fn waic_hand_example() {
        let w = waic(&block(&[&[0.0], &[-2.0]])).unwrap();
        let lppd = ((1.0 + (-2f64).exp()) / 2.0).ln();
        assert!((w.lppd - lppd).abs() < 1e-12);
        assert!((w.p_waic - 2.0).abs() < 1e-12);
        assert!((w.waic + 2.0 * (w.lppd - w.p_waic)).abs() < 1e-12);
    }

    #[test]
    fn quantiles_of_one_to_hundred() {
        let xs: Vec<f64> = (1..=100).map(|v| v as f64).collect();
        let (lo, hi) = equal_tailed_interval(&xs, 0.95);
        assert!((lo - 3.475).abs() < 1e-12);
        assert!((hi - 97.525).abs() < 1e-12);
        let (lo90, hi90) = equal_tailed_interval(&xs, 0.90);
        assert!(lo90 >= lo && hi90 <= hi);
    }

    #[test]
    fn geweke_detects_level_shift() {
        let mut rng = RngStream::new(1);
        let chain: Vec<f64> = (0..10_000).map(|t| rng.std_normal() + if t < 5000 { 0.0 } else { 1.0 }).collect();
        assert!(geweke(&chain, 0.1, 0.5).unwrap().abs() > 4.0);
        assert!(geweke(&[1.0; 100], 0.1, 0.5).is_err());
    }

    #[test]
    fn ess_of_iid_and_alternating_chains() {
        let mut rng = RngStream::new(2);
        let iid: Vec<f64> = (0..10_000).map(|_| rng.std_normal()).collect();
        let e = ess(&iid).unwrap();
        assert!((e / 10_000.0 - 1.0).abs() < 0.15, "{e}");
        let alt: Vec<f64> = (0..1000).map(|t| if t % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!(ess(&alt).unwrap() > 1000.0);
    }

    #[test]
    fn induced_covariance_forms() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [0.0, 2.0], [3.0, 1.0]];
        let (t2, z2, e2, phi) = (0.7, 0.4, 0.3, 0.8);
        // oracle: sum over members of shared-effect covariances
        let oracle = |a: (usize, usize), b: (usize, usize)| {
            let mut c = 0.0;
            for p in [a.0, a.1] {
                for q in [b.0, b.1] {
                    c += t2 * (-phi * euclid(pts[p], pts[q])).exp() + if p == q { z2 } else { 0.0 };
                }
            }
            if (a.0.min(a.1), a.0.max(a.1)) == (b.0.min(b.1), b.0.max(b.1)) {
                c += e2;
            }
            c
        };
        for (a, b) in [((0, 1), (0, 1)), ((0, 1), (0, 2)), ((1, 0), (2, 1)), ((0, 1), (2, 3))] {
            let (cov, corr) = induced_covariance_patristic(a, b, &pts, t2, z2, e2, phi).unwrap();
            assert!((cov - oracle(a, b)).abs() < 1e-12);
            assert!((0.0..=1.0).contains(&corr));
        }
    }

    #[test]
    fn induced_correlation_limits() {
        let same = [[0.0, 0.0]; 4];
        let (_, c) = induced_covariance_patristic((0, 1), (0, 2), &same, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert!((c - 5.0 / 7.0).abs() < 1e-12);
        let far = [[0.0, 0.0], [1e4, 0.0], [0.0, 1e4], [1e4, 1e4]];
        let (_, c) = induced_covariance_patristic((0, 1), (2, 3), &far, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert!(c.abs() < 1e-12);
    }
}
