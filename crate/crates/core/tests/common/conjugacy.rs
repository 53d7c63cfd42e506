//! Every Gibbs block of both samplers against its dense analytic full
//! conditional: other blocks fixed, 10⁴ independent draws, 3 standard errors
//! (split over the coordinates of vector blocks). Each check panics on failure.

use super::*;
use dyadgp::geometry::DistanceScale;
use dyadgp::patristic::{PatristicModel, PatristicSampler, PatristicState};
use dyadgp::transmission::{TransmissionModel, TransmissionSampler, TransmissionState};
use dyadgp::{McmcSchedule, OutcomeKind, RngStream, Variant};
use nalgebra::{DMatrix, DVector};

const DRAWS: usize = 10_000;
const K: f64 = 3.0;

fn report(errors: Vec<String>) {
    assert!(errors.is_empty(), "{}", errors.join("\n"));
}

fn scale_of(points: &[[f64; 2]]) -> f64 {
    let mut max = 0.0f64;
    for a in points {
        for b in points {
            max = max.max(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt());
        }
    }
    max
}

/// Unique locations in first-appearance order.
fn unique(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut out: Vec<[f64; 2]> = Vec::new();
    for p in points {
        if !out.contains(p) {
            out.push(*p);
        }
    }
    out
}

fn patristic_setup() -> (PatristicModel, PatristicState) {
    let data = patristic_data(&POINTS6, 11);
    let model = PatristicModel::new(&data, &test_spec(OutcomeKind::Patristic, Variant::Spatial)).unwrap();
    let n = model.n();
    let m = model.m();
    assert_eq!((n, m), (6, 5));
    let theta = DVector::from_vec(vec![0.3, -0.2, 0.1, -0.4, 0.15, 0.05]);
    let state = PatristicState {
        delta: DVector::from_fn(model.design.q(), |i, _| [-2.0, 0.4, 0.1][i]),
        theta,
        eta: DVector::from_fn(m, |l, _| 0.2 * (l as f64) - 0.3),
        sigma2_eps: 0.09,
        sigma2_zeta: 0.05,
        tau2: 0.2,
        phi: 2.0,
    };
    (model, state)
}

fn draw_patristic<F>(model: &PatristicModel, state: &PatristicState, seed: u64, update: F) -> Vec<PatristicState>
where
    F: Fn(&mut PatristicSampler) -> dyadgp::Result<()>,
{
    let schedule = McmcSchedule::new(10, 1, 1);
    let mut s = PatristicSampler::new(model, state.clone(), &schedule, RngStream::new(seed)).unwrap();
    (0..DRAWS)
        .map(|_| {
            s.state = state.clone();
            update(&mut s).unwrap();
            s.state.clone()
        })
        .collect()
}

pub fn patristic_sigma2_eps() {
    let (model, st) = patristic_setup();
    let z = model.design.z_dense().unwrap();
    let mu = &model.design.x * &st.delta + &z * &st.theta;
    let rss = (&model.y - mu).norm_squared();
    let (m, v) = inv_gamma_moments(model.n_pairs() as f64 / 2.0 + 6.0, rss / 2.0 + 1.0);
    let xs: Vec<f64> = draw_patristic(&model, &st, 1, |s| s.update_sigma2_eps()).iter().map(|s| s.sigma2_eps).collect();
    check_moments("sigma2_eps", &xs, m, v, K).unwrap();
}

pub fn patristic_delta() {
    let (model, st) = patristic_setup();
    let x = &model.design.x;
    let z = model.design.z_dense().unwrap();
    let q = x.transpose() * x / st.sigma2_eps + DMatrix::identity(x.ncols(), x.ncols()) / 25.0;
    let b = x.transpose() * (&model.y - &z * &st.theta) / st.sigma2_eps;
    let (mean, cov) = canonical(&q, &b);
    let draws: Vec<_> = draw_patristic(&model, &st, 2, |s| s.update_delta()).into_iter().map(|s| s.delta).collect();
    report(check_vector("delta", &draws, &mean, &cov, K));
}

pub fn patristic_theta_is_centred_conditional() {
    let (model, st) = patristic_setup();
    let n = model.n();
    let z = model.design.z_dense().unwrap();
    let v = model.map.incidence();
    let q = z.transpose() * &z / st.sigma2_eps + DMatrix::identity(n, n) / st.sigma2_zeta;
    let b = z.transpose() * (&model.y - &model.design.x * &st.delta) / st.sigma2_eps + &v * &st.eta / st.sigma2_zeta;
    let (mean, cov) = canonical(&q, &b);
    let c = centring(n);
    let draws: Vec<_> = draw_patristic(&model, &st, 3, |s| s.update_theta()).into_iter().map(|s| s.theta).collect();
    report(check_vector("theta", &draws, &(&c * mean), &(&c * cov * &c), K));
}

pub fn patristic_sigma2_zeta() {
    let (model, st) = patristic_setup();
    let v = model.map.incidence();
    let ss = (&st.theta - &v * &st.eta).norm_squared();
    let (m, var) = inv_gamma_moments(model.n() as f64 / 2.0 + 6.0, ss / 2.0 + 1.0);
    let xs: Vec<f64> = draw_patristic(&model, &st, 4, |s| s.update_sigma2_zeta()).iter().map(|s| s.sigma2_zeta).collect();
    check_moments("sigma2_zeta", &xs, m, var, K).unwrap();
}

pub fn patristic_eta() {
    let (model, st) = patristic_setup();
    let locs = unique(&POINTS6);
    let sigma = dense_corr(&locs, st.phi, scale_of(&POINTS6));
    let v = model.map.incidence();
    let q = sigma.try_inverse().unwrap() / st.tau2 + v.transpose() * &v / st.sigma2_zeta;
    let b = v.transpose() * &st.theta / st.sigma2_zeta;
    let (mean, cov) = canonical(&q, &b);
    let draws: Vec<_> = draw_patristic(&model, &st, 5, |s| s.update_eta()).into_iter().map(|s| s.eta).collect();
    report(check_vector("eta", &draws, &mean, &cov, K));
}

pub fn patristic_tau2() {
    let (model, st) = patristic_setup();
    let locs = unique(&POINTS6);
    let sigma = dense_corr(&locs, st.phi, scale_of(&POINTS6));
    let quad = (st.eta.transpose() * sigma.try_inverse().unwrap() * &st.eta)[(0, 0)];
    let (m, v) = inv_gamma_moments(model.m() as f64 / 2.0 + 6.0, quad / 2.0 + 1.0);
    let xs: Vec<f64> = draw_patristic(&model, &st, 6, |s| s.update_tau2()).iter().map(|s| s.tau2).collect();
    check_moments("tau2", &xs, m, v, K).unwrap();
}

fn transmission_setup() -> (TransmissionModel, TransmissionState) {
    let data = transmission_data(&POINTS6, 21);
    let model = TransmissionModel::new(&data, &test_spec(OutcomeKind::Transmission, Variant::Spatial)).unwrap();
    let n = model.n();
    let m = model.m();
    let q = model.design.q();
    let n_pairs = model.n_pairs();
    let theta = std::array::from_fn(|b| {
        let mut t = DVector::from_fn(n, |i, _| ((i * 7 + b * 3) % 5) as f64 * 0.1 - 0.2);
        let c = t.mean();
        t.add_scalar_mut(-c);
        t
    });
    let omega = DMatrix::from_fn(4, 4, |a, b| if a == b { 0.5 } else { 0.15 });
    let mut w = model.w_obs.clone();
    for r in 0..n_pairs {
        if !model.positive[r] {
            w[r] = -1.0 + 0.05 * r as f64;
        }
    }
    let state = TransmissionState {
        delta_z: DVector::from_fn(q, |i, _| [0.2, -0.5, 0.3, -0.1][i]),
        delta_w: DVector::from_fn(q, |i, _| [-1.0, 0.4, 0.2, 0.1][i]),
        theta,
        sigma2_zeta: [0.3, 0.4, 0.2, 0.25],
        nu_z: DVector::from_fn(n, |i, _| 0.3 - 0.1 * i as f64),
        nu_w: DVector::from_fn(n, |i, _| 0.1 * i as f64 - 0.2),
        sigma2_nu_z: 0.5,
        sigma2_nu_w: 0.7,
        eta: DVector::from_fn(4 * m, |k, _| ((k * 5) % 7) as f64 * 0.1 - 0.3),
        omega_inv: omega.try_inverse().unwrap(),
        sigma2_eps: 0.6,
        phi: 1.5,
        w,
        omega_star: DVector::from_fn(n_pairs, |r, _| 0.1 + 0.01 * r as f64),
    };
    (model, state)
}

fn draw_transmission<F>(model: &TransmissionModel, state: &TransmissionState, seed: u64, update: F) -> Vec<TransmissionState>
where
    F: Fn(&mut TransmissionSampler) -> dyadgp::Result<()>,
{
    let schedule = McmcSchedule::new(10, 1, 1);
    let mut s = TransmissionSampler::new(model, state.clone(), &schedule, RngStream::new(seed)).unwrap();
    (0..DRAWS)
        .map(|_| {
            s.state = state.clone();
            update(&mut s).unwrap();
            s.state.clone()
        })
        .collect()
}

/// Dense pieces of the transmission predictor, built from Z_g and Z_r.
struct Dense {
    x: DMatrix<f64>,
    zg: DMatrix<f64>,
    zr: DMatrix<f64>,
}

impl Dense {
    fn new(model: &TransmissionModel) -> Self {
        let (zg, zr) = model.design.z_directed_dense().unwrap();
        Self { x: model.design.x.clone(), zg, zr }
    }

    /// Z_g θ_g + Z_r θ_r + (Z_g ν) ∘ (Z_r ν).
    fn effects(&self, tg: &DVector<f64>, tr: &DVector<f64>, nu: &DVector<f64>) -> DVector<f64> {
        &self.zg * tg + &self.zr * tr + (&self.zg * nu).component_mul(&(&self.zr * nu))
    }

    fn psi(&self, s: &TransmissionState) -> DVector<f64> {
        &self.x * &s.delta_z + self.effects(&s.theta[0], &s.theta[1], &s.nu_z)
    }

    fn mu(&self, s: &TransmissionState) -> DVector<f64> {
        &self.x * &s.delta_w + self.effects(&s.theta[2], &s.theta[3], &s.nu_w)
    }
}

pub fn transmission_omega_star_is_polya_gamma() {
    let (model, st) = transmission_setup();
    let psi = Dense::new(&model).psi(&st);
    let draws: Vec<_> = draw_transmission(&model, &st, 31, |s| {
        s.update_omega_star();
        Ok(())
    })
    .into_iter()
    .map(|s| s.omega_star)
    .collect();
    let mean = psi.map(|z| (0.5 * z).tanh() / (2.0 * z));
    let cov = DMatrix::from_diagonal(&psi.map(pg_var));
    report(check_vector("omega_star", &draws, &mean, &cov, K));
}

pub fn transmission_delta_z() {
    let (model, st) = transmission_setup();
    let d = Dense::new(&model);
    let om = DMatrix::from_diagonal(&st.omega_star);
    let offset = d.effects(&st.theta[0], &st.theta[1], &st.nu_z);
    let q = d.x.transpose() * &om * &d.x + DMatrix::identity(d.x.ncols(), d.x.ncols()) / 25.0;
    let b = d.x.transpose() * (&model.kappa - &om * offset);
    let (mean, cov) = canonical(&q, &b);
    let draws: Vec<_> = draw_transmission(&model, &st, 32, |s| s.update_delta_z()).into_iter().map(|s| s.delta_z).collect();
    report(check_vector("delta_z", &draws, &mean, &cov, K));
}

pub fn transmission_delta_w() {
    let (model, st) = transmission_setup();
    let d = Dense::new(&model);
    let offset = d.effects(&st.theta[2], &st.theta[3], &st.nu_w);
    let q = d.x.transpose() * &d.x / st.sigma2_eps + DMatrix::identity(d.x.ncols(), d.x.ncols()) / 25.0;
    let b = d.x.transpose() * (&st.w - offset) / st.sigma2_eps;
    let (mean, cov) = canonical(&q, &b);
    let draws: Vec<_> = draw_transmission(&model, &st, 33, |s| s.update_delta_w()).into_iter().map(|s| s.delta_w).collect();
    report(check_vector("delta_w", &draws, &mean, &cov, K));
}

pub fn transmission_theta_blocks_are_centred_conditionals() {
    let (model, st) = transmission_setup();
    let d = Dense::new(&model);
    let v = model.map.incidence();
    let n = model.n();
    let c = centring(n);
    let mut errors = Vec::new();
    for b in 0..4 {
        let (za, zo) = if b % 2 == 0 { (&d.zg, &d.zr) } else { (&d.zr, &d.zg) };
        let s2z = st.sigma2_zeta[b];
        let prior = &v * st.eta.rows(b * model.m(), model.m());
        let other = &st.theta[b ^ 1];
        let (q, rhs) = if b < 2 {
            let om = DMatrix::from_diagonal(&st.omega_star);
            let off = &d.x * &st.delta_z + zo * other + (&d.zg * &st.nu_z).component_mul(&(&d.zr * &st.nu_z));
            (
                za.transpose() * &om * za + DMatrix::identity(n, n) / s2z,
                za.transpose() * (&model.kappa - &om * off) + &prior / s2z,
            )
        } else {
            let off = &d.x * &st.delta_w + zo * other + (&d.zg * &st.nu_w).component_mul(&(&d.zr * &st.nu_w));
            (
                za.transpose() * za / st.sigma2_eps + DMatrix::identity(n, n) / s2z,
                za.transpose() * (&st.w - off) / st.sigma2_eps + &prior / s2z,
            )
        };
        let (mean, cov) = canonical(&q, &rhs);
        let draws: Vec<_> = draw_transmission(&model, &st, 40 + b as u64, |s| {
            s.update_theta(b);
            Ok(())
        })
        .into_iter()
        .map(|s| s.theta[b].clone())
        .collect();
        errors.extend(check_vector(&format!("theta[{b}]"), &draws, &(&c * mean), &(&c * cov * &c), K));
    }
    report(errors);
}

pub fn transmission_sigma2_zeta() {
    let (model, st) = transmission_setup();
    let v = model.map.incidence();
    let m = model.m();
    let draws = draw_transmission(&model, &st, 50, |s| s.update_sigma2_zeta());
    let mut errors = Vec::new();
    for b in 0..4 {
        let ss = (&st.theta[b] - &v * st.eta.rows(b * m, m)).norm_squared();
        let (mu, var) = inv_gamma_moments(model.n() as f64 / 2.0 + 6.0, ss / 2.0 + 1.0);
        let xs: Vec<f64> = draws.iter().map(|s| s.sigma2_zeta[b]).collect();
        if let Err(e) = check_moments(&format!("sigma2_zeta[{b}]"), &xs, mu, var, block_tolerance(K, 4)) {
            errors.push(e);
        }
    }
    report(errors);
}

pub fn transmission_sigma2_nu() {
    let (model, st) = transmission_setup();
    let a = model.n() as f64 / 2.0 + 6.0;
    let (mz, vz) = inv_gamma_moments(a, st.nu_z.norm_squared() / 2.0 + 1.0);
    let xs: Vec<f64> = draw_transmission(&model, &st, 51, |s| s.update_sigma2_nu(dyadgp::transmission::Part::Z))
        .iter()
        .map(|s| s.sigma2_nu_z)
        .collect();
    check_moments("sigma2_nu_z", &xs, mz, vz, K).unwrap();
    let (mw, vw) = inv_gamma_moments(a, st.nu_w.norm_squared() / 2.0 + 1.0);
    let xs: Vec<f64> = draw_transmission(&model, &st, 52, |s| s.update_sigma2_nu(dyadgp::transmission::Part::W))
        .iter()
        .map(|s| s.sigma2_nu_w)
        .collect();
    check_moments("sigma2_nu_w", &xs, mw, vw, K).unwrap();
}

/// η_b given everything else, from the Schur complement of the full
/// 4m-dimensional prior Ω ⊗ Σ(φ) combined with θ_b ~ N(V η_b, σ²_ζ I).
fn eta_block_oracle(model: &TransmissionModel, st: &TransmissionState, b: usize) -> (DVector<f64>, DMatrix<f64>) {
    let m = model.m();
    let sigma = dense_corr(&unique(&POINTS6), st.phi, scale_of(&POINTS6));
    let omega = st.omega_inv.clone().try_inverse().unwrap();
    let full = DMatrix::from_fn(4 * m, 4 * m, |r, c| omega[(r / m, c / m)] * sigma[(r % m, c % m)]);
    let rest: Vec<usize> = (0..4 * m).filter(|k| k / m != b).collect();
    let own: Vec<usize> = (b * m..(b + 1) * m).collect();
    let pick = |rows: &[usize], cols: &[usize]| DMatrix::from_fn(rows.len(), cols.len(), |i, j| full[(rows[i], cols[j])]);
    let k_bb = pick(&own, &own);
    let k_br = pick(&own, &rest);
    let k_rr_inv = pick(&rest, &rest).try_inverse().unwrap();
    let eta_rest = DVector::from_iterator(rest.len(), rest.iter().map(|&k| st.eta[k]));
    let cond_mean = &k_br * &k_rr_inv * eta_rest;
    let cond_cov = &k_bb - &k_br * &k_rr_inv * k_br.transpose();
    let cond_prec = cond_cov.try_inverse().unwrap();
    let v = model.map.incidence();
    let s2z = st.sigma2_zeta[b];
    let q = &cond_prec + v.transpose() * &v / s2z;
    let rhs = &cond_prec * cond_mean + v.transpose() * &st.theta[b] / s2z;
    canonical(&q, &rhs)
}

pub fn transmission_eta_blocks_match_schur_oracle() {
    let (model, st) = transmission_setup();
    let m = model.m();
    let mut errors = Vec::new();
    for b in 0..4 {
        let (mean, cov) = eta_block_oracle(&model, &st, b);
        let draws: Vec<_> = draw_transmission(&model, &st, 60 + b as u64, |s| s.update_eta_block(b))
            .into_iter()
            .map(|s| s.eta.rows(b * m, m).into_owned())
            .collect();
        errors.extend(check_vector(&format!("eta[{b}]"), &draws, &mean, &cov, K));
    }
    report(errors);
}

pub fn transmission_eta_block_prior_is_exact_schur_complement() {
    let (model, st) = transmission_setup();
    let schedule = McmcSchedule::new(10, 1, 1);
    let s = TransmissionSampler::new(&model, st.clone(), &schedule, RngStream::new(1)).unwrap();
    let m = model.m();
    let omega = st.omega_inv.clone().try_inverse().unwrap();
    for b in 0..4 {
        let (mean, p_bb) = s.eta_block_prior(b);
        // ω-level Schur: Ω_b,−b Ω_−b,−b⁻¹ applied block-wise
        let rest: Vec<usize> = (0..4).filter(|&k| k != b).collect();
        let o_br = DMatrix::from_fn(1, 3, |_, j| omega[(b, rest[j])]);
        let o_rr = DMatrix::from_fn(3, 3, |i, j| omega[(rest[i], rest[j])]);
        let coef = &o_br * o_rr.clone().try_inverse().unwrap();
        let mut expect = DVector::zeros(m);
        for (j, &k) in rest.iter().enumerate() {
            expect += st.eta.rows(k * m, m) * coef[(0, j)];
        }
        let var = omega[(b, b)] - (&coef * o_br.transpose())[(0, 0)];
        assert!((mean - expect).amax() < 1e-10);
        assert!((1.0 / p_bb - var).abs() < 1e-10);
    }
}

pub fn transmission_impute_w() {
    let (model, st) = transmission_setup();
    let mu = Dense::new(&model).mu(&st);
    let draws: Vec<_> = draw_transmission(&model, &st, 70, |s| {
        s.impute_w();
        Ok(())
    })
    .into_iter()
    .map(|s| s.w)
    .collect();
    let zeros = model.positive.iter().filter(|p| !**p).count();
    let mut errors = Vec::new();
    for r in 0..model.n_pairs() {
        let xs: Vec<f64> = draws.iter().map(|w| w[r]).collect();
        if model.positive[r] {
            assert!(xs.iter().all(|x| *x == model.w_obs[r]));
        } else if let Err(e) = check_moments(&format!("w[{r}]"), &xs, mu[r], st.sigma2_eps, block_tolerance(K, zeros)) {
            errors.push(e);
        }
    }
    report(errors);
}

pub fn transmission_sigma2_eps() {
    let (model, st) = transmission_setup();
    let ss = (&st.w - Dense::new(&model).mu(&st)).norm_squared();
    let (m, v) = inv_gamma_moments(model.n_pairs() as f64 / 2.0 + 6.0, ss / 2.0 + 1.0);
    let xs: Vec<f64> = draw_transmission(&model, &st, 71, |s| s.update_sigma2_eps()).iter().map(|s| s.sigma2_eps).collect();
    check_moments("sigma2_eps", &xs, m, v, K).unwrap();
}

pub fn transmission_omega_inverse_is_wishart() {
    let (model, st) = transmission_setup();
    let m = model.m();
    let sigma_inv = dense_corr(&unique(&POINTS6), st.phi, scale_of(&POINTS6)).try_inverse().unwrap();
    let h = DMatrix::from_fn(4, m, |b, l| st.eta[b * m + l]);
    let scale = (&h * sigma_inv * h.transpose() + DMatrix::identity(4, 4)).try_inverse().unwrap();
    let df = m as f64 + model.priors.wishart_df;
    let draws = draw_transmission(&model, &st, 72, |s| s.update_omega());
    let mut errors = Vec::new();
    for a in 0..4 {
        for b in a..4 {
            let xs: Vec<f64> = draws.iter().map(|s| s.omega_inv[(a, b)]).collect();
            let mean = df * scale[(a, b)];
            let var = df * (scale[(a, b)].powi(2) + scale[(a, a)] * scale[(b, b)]);
            if let Err(e) = check_moments(&format!("omega_inv[{a},{b}]"), &xs, mean, var, block_tolerance(K, 10)) {
                errors.push(e);
            }
        }
    }
    report(errors);
}

pub fn distance_scaling_matches_test_oracle() {
    let data = patristic_data(&POINTS6, 11);
    let (locs, _) = data.locations(1e-9, DistanceScale::MaxPairwise).unwrap();
    assert!((locs.scale_factor() - scale_of(&POINTS6)).abs() < 1e-15);
}

/// Every block check, by name.
pub const CHECKS: &[(&str, fn())] = &[
    ("patristic_sigma2_eps", patristic_sigma2_eps),
    ("patristic_delta", patristic_delta),
    ("patristic_theta_is_centred_conditional", patristic_theta_is_centred_conditional),
    ("patristic_sigma2_zeta", patristic_sigma2_zeta),
    ("patristic_eta", patristic_eta),
    ("patristic_tau2", patristic_tau2),
    ("transmission_omega_star_is_polya_gamma", transmission_omega_star_is_polya_gamma),
    ("transmission_delta_z", transmission_delta_z),
    ("transmission_delta_w", transmission_delta_w),
    ("transmission_theta_blocks_are_centred_conditionals", transmission_theta_blocks_are_centred_conditionals),
    ("transmission_sigma2_zeta", transmission_sigma2_zeta),
    ("transmission_sigma2_nu", transmission_sigma2_nu),
    ("transmission_eta_blocks_match_schur_oracle", transmission_eta_blocks_match_schur_oracle),
    ("transmission_eta_block_prior_is_exact_schur_complement", transmission_eta_block_prior_is_exact_schur_complement),
    ("transmission_impute_w", transmission_impute_w),
    ("transmission_sigma2_eps", transmission_sigma2_eps),
    ("transmission_omega_inverse_is_wishart", transmission_omega_inverse_is_wishart),
    ("distance_scaling_matches_test_oracle", distance_scaling_matches_test_oracle),
];
