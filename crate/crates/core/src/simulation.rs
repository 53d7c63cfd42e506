//! Synthetic datasets under the three correlation settings, and Monte-Carlo
//! correlation experiments.
//!
//! Setting 1 has no random effects, Setting 2 independent non-spatial
//! effects, and Setting 3 purely spatial effects whose correlation falls to
//! 0.05 at the largest observed distance.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dyad::{DyadDataset, Individual, OutcomeKind, PairRecord};
use crate::error::{Error, Result};
use crate::geometry::{self, euclid, DistanceScale, Point, DEFAULT_DEDUP_TOL};
use crate::linalg;
use crate::rng::{logistic, RngStream};
use crate::transmission::EFFECT_BLOCKS;

/// Binary individual attributes; 1 marks the non-reference level.
pub const TRAITS: [&str; 4] = ["male", "urban", "employed", "below_secondary"];

pub const PATRISTIC_PAIR_COVARIATES: [&str; 13] = [
    "intercept",
    "distance",
    "same_village",
    "diagnosis_diff",
    "age_diff",
    "male_mixed",
    "male_both",
    "urban_mixed",
    "urban_both",
    "employed_mixed",
    "employed_both",
    "below_secondary_mixed",
    "below_secondary_both",
];
pub const PATRISTIC_INDIVIDUAL_COVARIATES: [&str; 1] = ["age"];
pub const TRANSMISSION_PAIR_COVARIATES: [&str; 5] = ["intercept", "distance", "same_village", "diagnosis_diff", "age_diff"];
pub const TRANSMISSION_INDIVIDUAL_COVARIATES: [&str; 5] = ["age", "male", "urban", "employed", "below_secondary"];

/// Number of villages individuals are spread over in generated covariates.
pub const VILLAGES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Setting(u8);

impl Setting {
    pub fn new(s: u8) -> Result<Self> {
        if (1..=3).contains(&s) {
            Ok(Self(s))
        } else {
            Err(Error::invalid(format!("simulation setting must be 1, 2 or 3, got {s}")))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

/// True parameters for the patristic model, ordered like the design columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatristicTruth {
    pub delta: Vec<f64>,
    pub sigma2_eps: f64,
    /// τ² + σ²_ζ.
    pub re_var: f64,
}

impl Default for PatristicTruth {
    fn default() -> Self {
        Self {
            // pair covariates in PATRISTIC_PAIR_COVARIATES order, then age
            delta: vec![
                -8.1265, 0.0026, -0.5921, 0.0039, 0.0003, -0.0171, -0.0215, -0.0224, -0.0348, -0.0216, -0.0170, 0.0503,
                0.1058, -0.0088,
            ],
            sigma2_eps: 0.0548,
            re_var: 0.0784,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmissionTruth {
    pub delta_z: Vec<f64>,
    pub delta_w: Vec<f64>,
    pub sigma2_eps: f64,
    pub sigma2_nu_z: f64,
    pub sigma2_nu_w: f64,
    /// Ω + diag(σ²_ζ) in block order zg, zr, wg, wr (row-major 4×4).
    pub re_cov: Vec<f64>,
}

impl Default for TransmissionTruth {
    fn default() -> Self {
        let diag = [10.6231, 14.9655, 0.2945, 0.2958];
        let off = [(0, 1, 12.3052), (0, 2, -0.7456), (0, 3, -0.1850), (1, 2, -0.8779), (1, 3, -0.2136), (2, 3, 0.1324)];
        let mut c = vec![0.0; 16];
        for b in 0..4 {
            c[b * 4 + b] = diag[b];
        }
        for (a, b, v) in off {
            c[a * 4 + b] = v;
            c[b * 4 + a] = v;
        }
        Self {
            // pair covariates, then giver and receiver individual covariates
            delta_z: vec![
                -5.1612, -0.0153, 1.6007, -0.2310, 0.0237, 0.2840, -0.2443, -1.1754, 1.3725, 1.0456, 0.2875, -0.4785,
                -1.5636, 1.5920, 1.2273,
            ],
            delta_w: vec![
                -7.6490, -0.0785, 2.3335, -0.2468, -0.0697, -0.0707, 0.1283, 0.1929, 0.0264, 0.0684, -0.0058, 0.1726,
                0.2231, 0.1653, 0.1255,
            ],
            sigma2_eps: 2.3799,
            sigma2_nu_z: 7.4912,
            sigma2_nu_w: 1.5168,
            re_cov: c,
        }
    }
}

impl TransmissionTruth {
    pub fn re_cov_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(4, 4, &self.re_cov)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Truth {
    Patristic(PatristicTruth),
    Transmission(TransmissionTruth),
}

impl Truth {
    pub fn default_for(kind: OutcomeKind) -> Self {
        match kind {
            OutcomeKind::Patristic => Truth::Patristic(PatristicTruth::default()),
            OutcomeKind::Transmission => Truth::Transmission(TransmissionTruth::default()),
        }
    }

    pub fn kind(&self) -> OutcomeKind {
        match self {
            Truth::Patristic(_) => OutcomeKind::Patristic,
            Truth::Transmission(_) => OutcomeKind::Transmission,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub setting: Setting,
    pub n: usize,
    pub truth: Truth,
}

impl SimulationSpec {
    pub fn new(kind: OutcomeKind, setting: u8, n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::invalid("simulation needs at least three individuals"));
        }
        Ok(Self {
            setting: Setting::new(setting)?,
            n,
            truth: Truth::default_for(kind),
        })
    }
}

/// Per-individual raw covariates used to build both designs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimCovariates {
    pub locations: Vec<Point>,
    pub age: Vec<f64>,
    pub date: Vec<f64>,
    pub village: Vec<usize>,
    /// One 0/1 column per entry of [`TRAITS`].
    pub traits: [Vec<f64>; 4],
}

impl SimCovariates {
    /// Locations uniform on the unit square, age and diagnosis date standard
    /// normal, each trait Bernoulli(0.5), village uniform over [`VILLAGES`].
    pub fn generate(n: usize, rng: &mut RngStream) -> Self {
        let locations = (0..n).map(|_| [rng.uniform(), rng.uniform()]).collect();
        let age = (0..n).map(|_| rng.std_normal()).collect();
        let date = (0..n).map(|_| rng.std_normal()).collect();
        let village = (0..n).map(|_| ((rng.uniform() * VILLAGES as f64) as usize).min(VILLAGES - 1)).collect();
        let traits = std::array::from_fn(|_| (0..n).map(|_| rng.bernoulli(0.5) as u8 as f64).collect());
        Self { locations, age, date, village, traits }
    }

    pub fn n(&self) -> usize {
        self.locations.len()
    }

    fn pair_base(&self, i: usize, j: usize) -> [f64; 5] {
        [
            1.0,
            euclid(self.locations[i], self.locations[j]),
            (self.village[i] == self.village[j]) as u8 as f64,
            (self.date[i] - self.date[j]).abs(),
            (self.age[i] - self.age[j]).abs(),
        ]
    }

    /// Mixed-pair and both-non-reference indicators for each trait.
    fn pair_traits(&self, i: usize, j: usize) -> [f64; 8] {
        let mut out = [0.0; 8];
        for (t, col) in self.traits.iter().enumerate() {
            out[2 * t] = (col[i] != col[j]) as u8 as f64;
            out[2 * t + 1] = (col[i] == 1.0 && col[j] == 1.0) as u8 as f64;
        }
        out
    }

    fn individual(&self, i: usize) -> [f64; 5] {
        [self.age[i], self.traits[0][i], self.traits[1][i], self.traits[2][i], self.traits[3][i]]
    }
}

/// A simulated dataset with the random effects that generated it.
#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub data: DyadDataset,
    pub setting: Setting,
    pub truth: Truth,
    /// θ (patristic) or θ_zg, θ_zr, θ_wg, θ_wr (transmission).
    pub theta: Vec<Vec<f64>>,
    pub nu: Vec<Vec<f64>>,
    /// Decay used in Setting 3 (scaled distance units), otherwise `None`.
    pub phi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub setting: u8,
    pub truth: Truth,
    pub regression_names: Vec<String>,
    pub regression: Vec<f64>,
    pub theta: Vec<Vec<f64>>,
    pub nu: Vec<Vec<f64>>,
    pub phi: Option<f64>,
}

impl SimulatedData {
    /// Truth sidecar for coverage scoring.
    pub fn truth_record(&self) -> Result<TruthRecord> {
        let design = self.data.design()?;
        let (regression_names, regression) = match &self.truth {
            Truth::Patristic(t) => (design.column_names.clone(), t.delta.clone()),
            Truth::Transmission(t) => {
                let mut names: Vec<String> = design.column_names.iter().map(|c| format!("z:{c}")).collect();
                names.extend(design.column_names.iter().map(|c| format!("w:{c}")));
                let mut values = t.delta_z.clone();
                values.extend_from_slice(&t.delta_w);
                (names, values)
            }
        };
        Ok(TruthRecord {
            setting: self.setting.get(),
            truth: self.truth.clone(),
            regression_names,
            regression,
            theta: self.theta.clone(),
            nu: self.nu.clone(),
            phi: self.phi,
        })
    }
}

/// Draw a mean-zero Gaussian field over unique locations with covariance
/// `var · Σ(φ)` and expand it to individuals.
fn spatial_effects(points: &[Point], var: f64, rng: &mut RngStream) -> Result<(DVector<f64>, f64)> {
    let (loc, map) = geometry::build_location_set(points, DEFAULT_DEDUP_TOL, DistanceScale::MaxPairwise)?;
    let max = loc.max_dist();
    let phi = geometry::effective_range_phi(if max > 0.0 { max } else { 1.0 });
    let corr = geometry::exp_corr(&loc, phi)?;
    let z = DVector::from_fn(loc.len(), |_, _| rng.std_normal());
    let eta = corr.chol().l() * z * var.sqrt();
    Ok((map.expand(&eta), phi))
}

fn individuals(cov: &SimCovariates, p_d: usize) -> Vec<Individual> {
    (0..cov.n())
        .map(|i| Individual {
            id: format!("s{:03}", i + 1),
            location: cov.locations[i],
            covariates: cov.individual(i)[..p_d].to_vec(),
        })
        .collect()
}

fn names(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

pub fn simulate_patristic(spec: &SimulationSpec, cov: &SimCovariates, rng: &mut RngStream) -> Result<SimulatedData> {
    let Truth::Patristic(truth) = &spec.truth else {
        return Err(Error::invalid("patristic simulation needs a patristic truth"));
    };
    let n = cov.n();
    let p = PATRISTIC_PAIR_COVARIATES.len();
    if truth.delta.len() != p + PATRISTIC_INDIVIDUAL_COVARIATES.len() {
        return Err(Error::invalid("patristic truth has the wrong number of coefficients"));
    }
    if !(truth.sigma2_eps >= 0.0 && truth.re_var >= 0.0) {
        return Err(Error::invalid("truth variances must be non-negative"));
    }
    let (theta, phi) = match spec.setting.get() {
        1 => (DVector::zeros(n), None),
        2 => (DVector::from_fn(n, |_, _| truth.re_var.sqrt() * rng.std_normal()), None),
        _ => {
            let (t, phi) = spatial_effects(&cov.locations, truth.re_var, rng)?;
            (t, Some(phi))
        }
    };
    let sd = truth.sigma2_eps.sqrt();
    let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let mut x = cov.pair_base(i, j).to_vec();
            x.extend_from_slice(&cov.pair_traits(i, j));
            let d = cov.age[i] + cov.age[j];
            let mean = x.iter().zip(&truth.delta).map(|(a, b)| a * b).sum::<f64>() + truth.delta[p] * d + theta[i] + theta[j];
            let ln_p = mean + sd * rng.std_normal();
            pairs.push(PairRecord { i, j, x, outcome: ln_p.exp().max(f64::MIN_POSITIVE) });
        }
    }
    let data = DyadDataset::new(
        individuals(cov, PATRISTIC_INDIVIDUAL_COVARIATES.len()),
        names(&PATRISTIC_INDIVIDUAL_COVARIATES),
        names(&PATRISTIC_PAIR_COVARIATES),
        OutcomeKind::Patristic,
        pairs,
    )?;
    Ok(SimulatedData {
        data,
        setting: spec.setting,
        truth: spec.truth.clone(),
        theta: vec![theta.as_slice().to_vec()],
        nu: Vec::new(),
        phi,
    })
}

/// Largest simulated transmission probability; keeps logit T finite.
pub const T_MAX: f64 = 1.0 - 1e-12;

pub fn simulate_transmission(spec: &SimulationSpec, cov: &SimCovariates, rng: &mut RngStream) -> Result<SimulatedData> {
    let Truth::Transmission(truth) = &spec.truth else {
        return Err(Error::invalid("transmission simulation needs a transmission truth"));
    };
    let n = cov.n();
    let q = TRANSMISSION_PAIR_COVARIATES.len() + 2 * TRANSMISSION_INDIVIDUAL_COVARIATES.len();
    if truth.delta_z.len() != q || truth.delta_w.len() != q || truth.re_cov.len() != 16 {
        return Err(Error::invalid("transmission truth has the wrong number of coefficients"));
    }
    let c = truth.re_cov_matrix();
    let mut theta: Vec<DVector<f64>> = vec![DVector::zeros(n); 4];
    let mut nu_z = DVector::zeros(n);
    let mut nu_w = DVector::zeros(n);
    let mut phi = None;
    match spec.setting.get() {
        1 => {}
        2 => {
            for (b, t) in theta.iter_mut().enumerate() {
                *t = DVector::from_fn(n, |_, _| c[(b, b)].sqrt() * rng.std_normal());
            }
        }
        _ => {
            let (loc, map) = geometry::build_location_set(&cov.locations, DEFAULT_DEDUP_TOL, DistanceScale::MaxPairwise)?;
            let max = loc.max_dist();
            let p = geometry::effective_range_phi(if max > 0.0 { max } else { 1.0 });
            let corr = geometry::exp_corr(&loc, p)?;
            let lc = linalg::cholesky(&c, "random-effect covariance")?.l();
            let m = loc.len();
            // H = L_Σ Z L_Cᵀ gives block b the field Σ_k L_C[b,k] L_Σ z_k
            let z = DMatrix::from_fn(m, 4, |_, _| rng.std_normal());
            let h = corr.chol().l() * z * lc.transpose();
            for (b, t) in theta.iter_mut().enumerate() {
                *t = map.expand(&h.column(b).into_owned());
            }
            phi = Some(p);
        }
    }
    if spec.setting.get() > 1 {
        nu_z = DVector::from_fn(n, |_, _| truth.sigma2_nu_z.sqrt() * rng.std_normal());
        nu_w = DVector::from_fn(n, |_, _| truth.sigma2_nu_w.sqrt() * rng.std_normal());
    }
    let sd = truth.sigma2_eps.sqrt();
    let mut pairs = Vec::with_capacity(n * (n - 1));
    for recv in 0..n {
        for giver in 0..n {
            if recv == giver {
                continue;
            }
            let x = cov.pair_base(recv, giver).to_vec();
            let mut row = x.clone();
            row.extend_from_slice(&cov.individual(giver));
            row.extend_from_slice(&cov.individual(recv));
            let dot = |beta: &[f64]| row.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>();
            let psi = dot(&truth.delta_z) + theta[0][giver] + theta[1][recv] + nu_z[giver] * nu_z[recv];
            let outcome = if rng.bernoulli(logistic(psi)) {
                let w = dot(&truth.delta_w) + theta[2][giver] + theta[3][recv] + nu_w[giver] * nu_w[recv] + sd * rng.std_normal();
                logistic(w).clamp(f64::MIN_POSITIVE, T_MAX)
            } else {
                0.0
            };
            pairs.push(PairRecord { i: recv, j: giver, x, outcome });
        }
    }
    let data = DyadDataset::new(
        individuals(cov, TRANSMISSION_INDIVIDUAL_COVARIATES.len()),
        names(&TRANSMISSION_INDIVIDUAL_COVARIATES),
        names(&TRANSMISSION_PAIR_COVARIATES),
        OutcomeKind::Transmission,
        pairs,
    )?;
    Ok(SimulatedData {
        data,
        setting: spec.setting,
        truth: spec.truth.clone(),
        theta: theta.iter().map(|t| t.as_slice().to_vec()).collect(),
        nu: vec![nu_z.as_slice().to_vec(), nu_w.as_slice().to_vec()],
        phi,
    })
}

/// Simulate one replicate with freshly generated covariates and locations.
pub fn simulate(spec: &SimulationSpec, rng: &mut RngStream) -> Result<SimulatedData> {
    let cov = SimCovariates::generate(spec.n, rng);
    match spec.truth.kind() {
        OutcomeKind::Patristic => simulate_patristic(spec, &cov, rng),
        OutcomeKind::Transmission => simulate_transmission(spec, &cov, rng),
    }
}

/// Parameters of the random-effect structure behind induced correlations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InducedParams {
    pub tau2: f64,
    pub sigma2_zeta: f64,
    pub sigma2_eps: f64,
    pub phi: f64,
}

/// Monte-Carlo moments of log patristic distances among four individuals
/// at `points` (raw distances), for pairs (0,1), (0,2) and (2,3).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InducedMoments {
    pub var: f64,
    pub corr_one_shared: f64,
    pub corr_none_shared: f64,
}

pub fn patristic_correlation_mc(points: &[Point; 4], p: InducedParams, replicates: usize, rng: &mut RngStream) -> Result<InducedMoments> {
    if replicates < 2 {
        return Err(Error::invalid("need at least two replicates"));
    }
    let dist = DMatrix::from_fn(4, 4, |a, b| euclid(points[a], points[b]));
    let sigma = dist.map(|d| (-p.phi * d).exp());
    let (ch, _) = linalg::cholesky_jittered(&sigma, "induced-correlation Σ(φ)")?;
    let l = ch.l();
    let (tau, sz, se) = (p.tau2.sqrt(), p.sigma2_zeta.sqrt(), p.sigma2_eps.sqrt());
    let mut y01 = Vec::with_capacity(replicates);
    let mut y02 = Vec::with_capacity(replicates);
    let mut y23 = Vec::with_capacity(replicates);
    for _ in 0..replicates {
        let z = DVector::from_fn(4, |_, _| rng.std_normal());
        let eta = &l * z * tau;
        let theta: Vec<f64> = (0..4).map(|a| eta[a] + sz * rng.std_normal()).collect();
        y01.push(theta[0] + theta[1] + se * rng.std_normal());
        y02.push(theta[0] + theta[2] + se * rng.std_normal());
        y23.push(theta[2] + theta[3] + se * rng.std_normal());
    }
    Ok(InducedMoments {
        var: linalg::sample_var(&y01),
        corr_one_shared: linalg::sample_corr(&y01, &y02),
        corr_none_shared: linalg::sample_corr(&y01, &y23),
    })
}

/// Correlations between zero-part probabilities π for four pair patterns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub phi: f64,
    pub omega_scale: f64,
    /// corr(π_ij, π_ji): both individuals shared, roles swapped.
    pub swapped_roles: f64,
    /// corr(π_ij, π_ik): shared receiver.
    pub shared_receiver: f64,
    /// corr(π_ij, π_ki): i is receiver in one pair and giver in the other.
    pub shared_mixed_roles: f64,
    /// corr(π_ij, π_kl): no shared individual.
    pub none_shared: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceConfig {
    pub phi_grid: Vec<f64>,
    pub omega_scale_grid: Vec<f64>,
    pub replicates: usize,
    /// Four individuals i, j, k, l.
    pub points: [Point; 4],
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        let grid: Vec<f64> = (0..100).map(|k| 0.0001 + 0.1 * k as f64).collect();
        Self {
            phi_grid: grid.clone(),
            omega_scale_grid: grid,
            replicates: 1000,
            points: [[0.2, 0.2], [0.4, 0.3], [0.7, 0.6], [0.9, 0.8]],
        }
    }
}

/// For each (φ, Ω multiplier), simulate the zero-part probabilities of the
/// transmission model at fixed covariates and estimate their correlations.
pub fn correlation_surface(cfg: &SurfaceConfig, truth: &TransmissionTruth, rng: &mut RngStream) -> Result<Vec<SurfacePoint>> {
    if cfg.replicates < 2 {
        return Err(Error::invalid("correlation surface needs at least two replicates"));
    }
    // The truth only fixes Ω + diag(σ²_ζ); the whole of it is treated as
    // spatial, as in Setting 3, and scaled by the Ω multiplier.
    let omega = truth.re_cov_matrix();
    let dist = DMatrix::from_fn(4, 4, |a, b| euclid(cfg.points[a], cfg.points[b]));
    let intercept = truth.delta_z[0];
    let mut out = Vec::with_capacity(cfg.phi_grid.len() * cfg.omega_scale_grid.len());
    for &phi in &cfg.phi_grid {
        let sigma = dist.map(|d| (-phi * d).exp());
        let ls = lower_factor(&sigma, "surface Σ(φ)")?;
        for &scale in &cfg.omega_scale_grid {
            let lo = lower_factor(&(&omega * scale), "scaled Ω")?;
            let mut pis: [Vec<f64>; 6] = Default::default();
            for _ in 0..cfg.replicates {
                let z = DMatrix::from_fn(4, 4, |_, _| rng.std_normal());
                // rows: individuals; columns: effect blocks
                let eta = &ls * z * lo.transpose();
                let theta = eta;
                let nu: Vec<f64> = (0..4).map(|_| truth.sigma2_nu_z.sqrt() * rng.std_normal()).collect();
                // π for receiver a infected by giver b
                let pi = |a: usize, b: usize| logistic(intercept + theta[(b, 0)] + theta[(a, 1)] + nu[a] * nu[b]);
                pis[0].push(pi(0, 1));
                pis[1].push(pi(1, 0));
                pis[2].push(pi(0, 2));
                pis[3].push(pi(2, 0));
                pis[4].push(pi(2, 3));
                pis[5].push(pi(0, 1));
            }
            // a constant series has no defined correlation; report 0
            let constant = |a: &[f64]| a.iter().all(|&v| v == a[0]);
            let corr = |a: &[f64], b: &[f64]| {
                if constant(a) || constant(b) {
                    0.0
                } else {
                    linalg::sample_corr(a, b)
                }
            };
            out.push(SurfacePoint {
                phi,
                omega_scale: scale,
                swapped_roles: corr(&pis[0], &pis[1]),
                shared_receiver: corr(&pis[0], &pis[2]),
                shared_mixed_roles: corr(&pis[0], &pis[3]),
                none_shared: corr(&pis[5], &pis[4]),
            });
        }
    }
    Ok(out)
}

/// Cholesky factor, or zeros for an all-zero matrix.
fn lower_factor(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if m.iter().all(|&v| v == 0.0) {
        return Ok(DMatrix::zeros(m.nrows(), m.ncols()));
    }
    Ok(linalg::cholesky_jittered(m, what)?.0.l())
}

/// Names of the four transmission effect blocks, for truth files.
pub fn effect_block_names() -> Vec<String> {
    EFFECT_BLOCKS.iter().map(|b| format!("theta_{b}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyad::build_patristic_design;

    #[test]
    fn truth_defaults() {
        let t = PatristicTruth::default();
        assert_eq!(t.delta[0], -8.1265);
        assert_eq!(t.delta[2], -0.5921);
        assert_eq!(t.sigma2_eps, 0.0548);
        assert_eq!(t.re_var, 0.0784);
        let tt = TransmissionTruth::default();
        assert_eq!(tt.sigma2_nu_z, 7.4912);
        assert_eq!(tt.re_cov_matrix()[(0, 1)], 12.3052);
        assert!(tt.re_cov_matrix().cholesky().is_some());
        assert!(Setting::new(4).is_err());
    }

    #[test]
    fn setting_one_without_noise_is_the_linear_predictor() {
        let mut spec = SimulationSpec::new(OutcomeKind::Patristic, 1, 6).unwrap();
        if let Truth::Patristic(t) = &mut spec.truth {
            t.sigma2_eps = 0.0;
        }
        let mut rng = RngStream::new(1);
        let sim = simulate(&spec, &mut rng).unwrap();
        let des = build_patristic_design(&sim.data).unwrap();
        let Truth::Patristic(t) = &sim.truth else { unreachable!() };
        let lin = &des.x * DVector::from_vec(t.delta.clone());
        for (r, p) in sim.data.pairs().iter().enumerate() {
            assert!((p.outcome.ln() - lin[r]).abs() < 1e-12);
        }
    }

    #[test]
    fn co_located_individuals_share_spatial_effects() {
        let spec = SimulationSpec::new(OutcomeKind::Patristic, 3, 5).unwrap();
        let mut rng = RngStream::new(2);
        let mut cov = SimCovariates::generate(5, &mut rng);
        cov.locations[3] = cov.locations[1];
        let sim = simulate_patristic(&spec, &cov, &mut rng).unwrap();
        assert_eq!(sim.theta[0][1], sim.theta[0][3]);
        assert!((sim.phi.unwrap() - 20f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn very_negative_intercept_gives_all_zeros() {
        let mut spec = SimulationSpec::new(OutcomeKind::Transmission, 1, 6).unwrap();
        if let Truth::Transmission(t) = &mut spec.truth {
            t.delta_z[0] = -50.0;
        }
        let sim = simulate(&spec, &mut RngStream::new(3)).unwrap();
        assert!(sim.data.outcomes().iter().all(|&t| t == 0.0));
    }

    #[test]
    fn zero_share_rises_as_intercept_falls() {
        let mut shares = Vec::new();
        for b0 in [0.0, -2.0, -4.0] {
            let mut spec = SimulationSpec::new(OutcomeKind::Transmission, 1, 20).unwrap();
            if let Truth::Transmission(t) = &mut spec.truth {
                t.delta_z[0] = b0;
            }
            let mut zeros = 0usize;
            let mut total = 0usize;
            for rep in 0..5 {
                let sim = simulate(&spec, &mut RngStream::with_stream(4, rep)).unwrap();
                let ts = sim.data.outcomes();
                assert!(ts.iter().all(|&t| (0.0..1.0).contains(&t)));
                zeros += ts.iter().filter(|&&t| t == 0.0).count();
                total += ts.len();
            }
            shares.push(zeros as f64 / total as f64);
        }
        assert!(shares[0] < shares[1] && shares[1] < shares[2], "{shares:?}");
    }

    #[test]
    fn setting_two_theta_variance_matches_total() {
        let spec = SimulationSpec::new(OutcomeKind::Patristic, 2, 50).unwrap();
        let mut all = Vec::new();
        for rep in 0..80 {
            let sim = simulate(&spec, &mut RngStream::with_stream(5, rep)).unwrap();
            all.extend_from_slice(&sim.theta[0]);
        }
        let v = linalg::sample_var(&all);
        assert!((v / 0.0784 - 1.0).abs() < 0.05, "{v}");
    }

    #[test]
    fn surface_vanishes_without_random_effects() {
        let mut truth = TransmissionTruth::default();
        truth.re_cov = vec![0.0; 16];
        truth.sigma2_nu_z = 0.0;
        let cfg = SurfaceConfig { phi_grid: vec![1.0], omega_scale_grid: vec![0.0], replicates: 100, ..Default::default() };
        let s = correlation_surface(&cfg, &truth, &mut RngStream::new(6)).unwrap();
        for c in [s[0].swapped_roles, s[0].shared_receiver, s[0].shared_mixed_roles, s[0].none_shared] {
            assert_eq!(c, 0.0);
        }
    }

    #[test]
    fn shared_individuals_correlate_more() {
        let cfg = SurfaceConfig {
            phi_grid: vec![0.5, 5.0],
            omega_scale_grid: vec![0.1, 1.0, 3.0],
            replicates: 2000,
            ..Default::default()
        };
        let s = correlation_surface(&cfg, &TransmissionTruth::default(), &mut RngStream::new(7)).unwrap();
        for p in s {
            assert!(p.swapped_roles > p.none_shared, "{p:?}");
        }
    }
}
