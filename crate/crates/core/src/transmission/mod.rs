//! Sampler for zero-inflated transmission probabilities.
//!
//! The zero part is a logistic regression handled by Pólya-Gamma
//! augmentation, the positive part a normal regression on logit T with the
//! zeros imputed. Each part has giver and receiver effects θ and a
//! multiplicative pair term ν_i ν_j; the four θ vectors are centred on a
//! 4-variate spatial process with covariance Ω ⊗ Σ(φ).

mod density;

pub use density::mixed_logdensity;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::dyad::{DesignMatrices, DyadDataset, OutcomeKind, PairIncidence};
use crate::error::{Error, Result};
use crate::geometry::{self, IndividualLocationMap, LocationSet, SpatialCorrelation};
use crate::linalg;
use crate::mcmc::{indexed_names, metropolis_accept, McmcSchedule, ModelSpec, PosteriorSamples, Priors, RwScale, SampleBlock, Variant};
use crate::rng::{self, logit, polya_gamma_mean, polya_gamma_sample, RngStream};

/// Effect blocks, in the stacking order of η and Ω.
pub const EFFECT_BLOCKS: [&str; 4] = ["zg", "zr", "wg", "wr"];
const ZG: usize = 0;
const ZR: usize = 1;
const WG: usize = 2;
const WR: usize = 3;

/// |ν| beyond which the ν_z trace is considered divergent.
pub const NU_DIVERGENCE: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Z,
    W,
}

#[derive(Debug, Clone)]
pub struct TransmissionModel {
    pub design: DesignMatrices,
    pub giver: Vec<usize>,
    pub receiver: Vec<usize>,
    pub t: DVector<f64>,
    /// logit T where T > 0, 0 elsewhere.
    pub w_obs: DVector<f64>,
    pub positive: Vec<bool>,
    /// κ = 1(T > 0) − ½.
    pub kappa: DVector<f64>,
    pub ids: Vec<String>,
    pub locations: LocationSet,
    pub map: IndividualLocationMap,
    pub variant: Variant,
    pub priors: Priors,
    xtx: DMatrix<f64>,
    giver_rows: Vec<Vec<usize>>,
    receiver_rows: Vec<Vec<usize>>,
    counts: DVector<f64>,
}

impl TransmissionModel {
    pub fn new(data: &DyadDataset, spec: &ModelSpec) -> Result<Self> {
        if data.kind() != OutcomeKind::Transmission {
            return Err(Error::data("transmission model needs transmission outcomes"));
        }
        let design = data.design()?;
        let t = DVector::from_vec(data.outcomes());
        let (locations, map) = data.locations(spec.dedup_tol, spec.distance_scale)?;
        let ids = data.individuals().iter().map(|i| i.id.clone()).collect();
        Self::from_parts(design, t, ids, locations, map, spec)
    }

    pub fn from_parts(
        design: DesignMatrices,
        t: DVector<f64>,
        ids: Vec<String>,
        locations: LocationSet,
        map: IndividualLocationMap,
        spec: &ModelSpec,
    ) -> Result<Self> {
        spec.priors.validate()?;
        let (giver, receiver) = match &design.incidence {
            PairIncidence::Directed { giver, receiver } => (giver.clone(), receiver.clone()),
            PairIncidence::Symmetric { .. } => return Err(Error::data("transmission model needs directed pair incidence")),
        };
        let n = design.n;
        if t.len() != giver.len() || map.n() != n || ids.len() != n {
            return Err(Error::data("design, outcome and location dimensions disagree"));
        }
        if t.iter().any(|v| !(0.0..1.0).contains(v)) {
            return Err(Error::data("transmission outcomes must lie in [0, 1)"));
        }
        let positive: Vec<bool> = t.iter().map(|&v| v > 0.0).collect();
        let w_obs = DVector::from_iterator(t.len(), t.iter().map(|&v| if v > 0.0 { logit(v) } else { 0.0 }));
        let kappa = DVector::from_iterator(t.len(), positive.iter().map(|&p| if p { 0.5 } else { -0.5 }));
        let mut giver_rows = vec![Vec::new(); n];
        let mut receiver_rows = vec![Vec::new(); n];
        for r in 0..giver.len() {
            giver_rows[giver[r]].push(r);
            receiver_rows[receiver[r]].push(r);
        }
        let xtx = design.x.transpose() * &design.x;
        let counts = DVector::from_vec(map.counts());
        Ok(Self {
            design,
            giver,
            receiver,
            t,
            w_obs,
            positive,
            kappa,
            ids,
            locations,
            map,
            variant: spec.variant,
            priors: spec.priors.clone(),
            xtx,
            giver_rows,
            receiver_rows,
            counts,
        })
    }

    pub fn n(&self) -> usize {
        self.design.n
    }

    pub fn m(&self) -> usize {
        self.map.m()
    }

    pub fn n_pairs(&self) -> usize {
        self.giver.len()
    }

    /// Rows in which individual `i` plays the giver (`g`) or receiver role.
    pub fn rows_of(&self, i: usize, block: usize) -> &[usize] {
        if block % 2 == 0 {
            &self.giver_rows[i]
        } else {
            &self.receiver_rows[i]
        }
    }

    fn role_of(&self, r: usize, block: usize) -> usize {
        if block % 2 == 0 {
            self.giver[r]
        } else {
            self.receiver[r]
        }
    }

    /// Linear predictor of the zero part (logit π) or the positive part (mean of w).
    pub fn predictor(&self, s: &TransmissionState, part: Part) -> DVector<f64> {
        let (delta, tg, tr, nu) = match part {
            Part::Z => (&s.delta_z, &s.theta[ZG], &s.theta[ZR], &s.nu_z),
            Part::W => (&s.delta_w, &s.theta[WG], &s.theta[WR], &s.nu_w),
        };
        let mut lp = &self.design.x * delta;
        for r in 0..lp.len() {
            let (g, v) = (self.giver[r], self.receiver[r]);
            lp[r] += tg[g] + tr[v] + nu[g] * nu[v];
        }
        lp
    }

    pub fn pointwise_loglik(&self, s: &TransmissionState) -> DVector<f64> {
        let psi = self.predictor(s, Part::Z);
        let mu = self.predictor(s, Part::W);
        DVector::from_fn(self.n_pairs(), |r, _| {
            density::mixed_logdensity_logit(self.t[r], self.w_obs[r], psi[r], mu[r], s.sigma2_eps)
        })
    }

    fn theta_prior_mean(&self, s: &TransmissionState, block: usize) -> DVector<f64> {
        if self.variant.is_spatial() {
            self.map.expand(&s.eta_block(block))
        } else {
            DVector::zeros(self.n())
        }
    }

    pub fn initial_state(&self, rng: &mut RngStream) -> TransmissionState {
        let n = self.n();
        let q = self.design.q();
        let m = self.m();
        let re = self.variant.has_random_effects();
        // least squares on the observed logits for δ_w
        let mut a = DMatrix::<f64>::identity(q, q) * 1e-6;
        let mut b = DVector::zeros(q);
        let mut n_pos = 0usize;
        for r in 0..self.n_pairs() {
            if self.positive[r] {
                let x = self.design.x.row(r).transpose();
                a += &x * x.transpose();
                b += x * self.w_obs[r];
                n_pos += 1;
            }
        }
        let delta_w = a.cholesky().map(|c| c.solve(&b)).unwrap_or_else(|| DVector::zeros(q));
        let sigma2_eps = if n_pos > 1 {
            let mut ss = 0.0;
            for r in 0..self.n_pairs() {
                if self.positive[r] {
                    ss += (self.w_obs[r] - self.design.x.row(r).dot(&delta_w.transpose())).powi(2);
                }
            }
            (ss / n_pos as f64).max(1e-2)
        } else {
            1.0
        };
        let jitter = |rng: &mut RngStream| DVector::from_fn(n, |_, _| if re { 0.1 * rng.std_normal() } else { 0.0 });
        let nu_z = jitter(rng);
        let nu_w = jitter(rng);
        let mut s = TransmissionState {
            delta_z: DVector::zeros(q),
            delta_w,
            theta: std::array::from_fn(|_| DVector::zeros(n)),
            sigma2_zeta: [1.0; 4],
            nu_z,
            nu_w,
            sigma2_nu_z: 1.0,
            sigma2_nu_w: 1.0,
            eta: DVector::zeros(4 * m),
            omega_inv: DMatrix::identity(4, 4),
            sigma2_eps,
            phi: geometry::effective_range_phi(1.0),
            w: self.w_obs.clone(),
            omega_star: DVector::zeros(self.n_pairs()),
        };
        let psi = self.predictor(&s, Part::Z);
        s.omega_star = psi.map(polya_gamma_mean);
        let mu = self.predictor(&s, Part::W);
        for r in 0..self.n_pairs() {
            if !self.positive[r] {
                s.w[r] = mu[r];
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionState {
    pub delta_z: DVector<f64>,
    pub delta_w: DVector<f64>,
    /// θ_zg, θ_zr, θ_wg, θ_wr.
    pub theta: [DVector<f64>; 4],
    pub sigma2_zeta: [f64; 4],
    pub nu_z: DVector<f64>,
    pub nu_w: DVector<f64>,
    pub sigma2_nu_z: f64,
    pub sigma2_nu_w: f64,
    /// Block-major: η_zg over all locations, then η_zr, η_wg, η_wr.
    pub eta: DVector<f64>,
    pub omega_inv: DMatrix<f64>,
    pub sigma2_eps: f64,
    pub phi: f64,
    pub w: DVector<f64>,
    pub omega_star: DVector<f64>,
}

impl TransmissionState {
    pub fn m(&self) -> usize {
        self.eta.len() / 4
    }

    pub fn eta_block(&self, b: usize) -> DVector<f64> {
        let m = self.m();
        self.eta.rows(b * m, m).into_owned()
    }

    /// 4×m matrix H whose rows are the η blocks.
    pub fn eta_matrix(&self) -> DMatrix<f64> {
        let m = self.m();
        DMatrix::from_fn(4, m, |b, l| self.eta[b * m + l])
    }

    pub fn omega(&self) -> Result<DMatrix<f64>> {
        self.omega_inv
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::cholesky("Ω⁻¹ inversion"))
    }

    fn check(&self, block: &'static str, iteration: usize) -> Result<()> {
        let vecs = [&self.delta_z, &self.delta_w, &self.nu_z, &self.nu_w, &self.eta, &self.w, &self.omega_star];
        let finite = vecs.iter().all(|v| v.iter().all(|x| x.is_finite()))
            && self.theta.iter().all(|v| v.iter().all(|x| x.is_finite()))
            && self.omega_inv.iter().all(|x| x.is_finite());
        let positive = [self.sigma2_eps, self.sigma2_nu_z, self.sigma2_nu_w, self.phi]
            .iter()
            .chain(self.sigma2_zeta.iter())
            .all(|v| v.is_finite() && *v > 0.0);
        if finite && positive {
            Ok(())
        } else {
            Err(Error::NonFinite { block, iteration })
        }
    }
}

pub struct TransmissionSampler<'a> {
    model: &'a TransmissionModel,
    pub state: TransmissionState,
    corr: Option<SpatialCorrelation>,
    sigma_inv: Option<DMatrix<f64>>,
    phi_rw: RwScale,
    nu_z_rw: RwScale,
    nu_w_rw: RwScale,
    pub rng: RngStream,
    iteration: usize,
    warnings: Vec<String>,
}

impl<'a> TransmissionSampler<'a> {
    pub fn new(model: &'a TransmissionModel, state: TransmissionState, schedule: &McmcSchedule, rng: RngStream) -> Result<Self> {
        let mut s = Self {
            model,
            state,
            corr: None,
            sigma_inv: None,
            phi_rw: RwScale::new(schedule.proposal_sd_logphi),
            nu_z_rw: RwScale::new(schedule.proposal_sd_nu),
            nu_w_rw: RwScale::new(schedule.proposal_sd_nu),
            rng,
            iteration: 0,
            warnings: Vec::new(),
        };
        if model.variant.is_spatial() {
            s.set_corr(geometry::exp_corr(&model.locations, s.state.phi)?);
        }
        Ok(s)
    }

    fn set_corr(&mut self, corr: SpatialCorrelation) {
        self.sigma_inv = Some(corr.inverse());
        self.corr = Some(corr);
    }

    pub fn acceptance(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        if self.model.variant.has_random_effects() {
            out.insert("nu_z".to_string(), self.nu_z_rw.acceptance_rate());
            out.insert("nu_w".to_string(), self.nu_w_rw.acceptance_rate());
        }
        if self.model.variant.is_spatial() {
            out.insert("phi".to_string(), self.phi_rw.acceptance_rate());
        }
        out
    }

    pub fn update_omega_star(&mut self) {
        let psi = self.model.predictor(&self.state, Part::Z);
        for r in 0..psi.len() {
            self.state.omega_star[r] = polya_gamma_sample(psi[r], &mut self.rng);
        }
    }

    /// δ_z given ω*: precision XᵀΩ*X + I/σ²_δ, canonical vector
    /// Xᵀ(κ − Ω* offset), i.e. Ω*(λ − offset) with λ = κ/ω*.
    pub fn update_delta_z(&mut self) -> Result<()> {
        let m = self.model;
        let s = &self.state;
        let offset = m.predictor(s, Part::Z) - &m.design.x * &s.delta_z;
        let q = m.design.q();
        let mut precision = DMatrix::zeros(q, q);
        let mut b = DVector::zeros(q);
        for r in 0..m.n_pairs() {
            let x = m.design.x.row(r);
            let om = s.omega_star[r];
            precision.ger(om, &x.transpose(), &x.transpose(), 1.0);
            b.axpy(m.kappa[r] - om * offset[r], &x.transpose(), 1.0);
        }
        for i in 0..q {
            precision[(i, i)] += 1.0 / m.priors.regression_var;
        }
        self.state.delta_z = rng::mvn_canonical_sample(&precision, &b, &mut self.rng, "δ_z full conditional")?;
        Ok(())
    }

    pub fn update_delta_w(&mut self) -> Result<()> {
        let m = self.model;
        let s = &self.state;
        let offset = m.predictor(s, Part::W) - &m.design.x * &s.delta_w;
        let mut precision = &m.xtx / s.sigma2_eps;
        for i in 0..precision.nrows() {
            precision[(i, i)] += 1.0 / m.priors.regression_var;
        }
        let b = m.design.x.transpose() * (&s.w - offset) / s.sigma2_eps;
        self.state.delta_w = rng::mvn_canonical_sample(&precision, &b, &mut self.rng, "δ_w full conditional")?;
        Ok(())
    }

    /// Per-coordinate random-walk Metropolis on ν. The zero part uses the
    /// Pólya-Gamma complete-data likelihood κψ − ω*ψ²/2, the positive part
    /// the normal likelihood of w.
    pub fn update_nu(&mut self, part: Part, schedule: &McmcSchedule) {
        let m = self.model;
        let n = m.n();
        let mut lp = m.predictor(&self.state, part);
        let sigma2_nu = match part {
            Part::Z => self.state.sigma2_nu_z,
            Part::W => self.state.sigma2_nu_w,
        };
        let row_ll = |state: &TransmissionState, r: usize, lp_r: f64| -> f64 {
            match part {
                Part::Z => m.kappa[r] * lp_r - 0.5 * state.omega_star[r] * lp_r * lp_r,
                Part::W => -(state.w[r] - lp_r).powi(2) / (2.0 * state.sigma2_eps),
            }
        };
        for i in 0..n {
            let sd = match part {
                Part::Z => self.nu_z_rw.sd(),
                Part::W => self.nu_w_rw.sd(),
            };
            let nu = match part {
                Part::Z => &self.state.nu_z,
                Part::W => &self.state.nu_w,
            };
            let old = nu[i];
            let new = old + sd * self.rng.std_normal();
            let mut ratio = -(new * new - old * old) / (2.0 * sigma2_nu);
            for &r in m.giver_rows[i].iter().chain(m.receiver_rows[i].iter()) {
                let other = if m.giver[r] == i { m.receiver[r] } else { m.giver[r] };
                let shifted = lp[r] + (new - old) * nu[other];
                ratio += row_ll(&self.state, r, shifted) - row_ll(&self.state, r, lp[r]);
            }
            let accepted = metropolis_accept(ratio, &mut self.rng);
            if accepted {
                let nu = match part {
                    Part::Z => &mut self.state.nu_z,
                    Part::W => &mut self.state.nu_w,
                };
                for &r in m.giver_rows[i].iter().chain(m.receiver_rows[i].iter()) {
                    let other = if m.giver[r] == i { m.receiver[r] } else { m.giver[r] };
                    lp[r] += (new - old) * nu[other];
                }
                nu[i] = new;
            }
            match part {
                Part::Z => self.nu_z_rw.record(accepted, self.iteration, schedule),
                Part::W => self.nu_w_rw.record(accepted, self.iteration, schedule),
            }
        }
    }

    pub fn update_sigma2_nu(&mut self, part: Part) -> Result<()> {
        let m = self.model;
        let n = m.n() as f64;
        match part {
            Part::Z => {
                let p = m.priors.sigma2_nu_z;
                let ss = self.state.nu_z.norm_squared();
                self.state.sigma2_nu_z = rng::inverse_gamma_sample(n / 2.0 + p.shape, ss / 2.0 + p.rate, &mut self.rng)?;
                if self.state.nu_z.amax() > NU_DIVERGENCE && self.warnings.is_empty() {
                    let msg = format!(
                        "ν_z exceeded |{NU_DIVERGENCE}| at iteration {}; consider the stabilizing IG(100, 100) prior on σ²_νz",
                        self.iteration
                    );
                    log::warn!("{msg}");
                    self.warnings.push(msg);
                }
            }
            Part::W => {
                let p = m.priors.sigma2_nu_w;
                let ss = self.state.nu_w.norm_squared();
                self.state.sigma2_nu_w = rng::inverse_gamma_sample(n / 2.0 + p.shape, ss / 2.0 + p.rate, &mut self.rng)?;
            }
        }
        Ok(())
    }

    /// θ for one effect block. Each individual appears exactly once per row
    /// in its role, so the precision is diagonal.
    pub fn update_theta(&mut self, block: usize) {
        let m = self.model;
        let part = if block < 2 { Part::Z } else { Part::W };
        let lp = m.predictor(&self.state, part);
        let prior_mean = m.theta_prior_mean(&self.state, block);
        let s2z = self.state.sigma2_zeta[block];
        let current = self.state.theta[block].clone();
        let mut theta = DVector::zeros(m.n());
        for i in 0..m.n() {
            let mut prec = 1.0 / s2z;
            let mut b = prior_mean[i] / s2z;
            for &r in m.rows_of(i, block) {
                debug_assert_eq!(m.role_of(r, block), i);
                let offset = lp[r] - current[i];
                match part {
                    Part::Z => {
                        let om = self.state.omega_star[r];
                        prec += om;
                        b += m.kappa[r] - om * offset;
                    }
                    Part::W => {
                        prec += 1.0 / self.state.sigma2_eps;
                        b += (self.state.w[r] - offset) / self.state.sigma2_eps;
                    }
                }
            }
            theta[i] = b / prec + self.rng.std_normal() / prec.sqrt();
        }
        let centre = theta.mean();
        theta.add_scalar_mut(-centre);
        self.state.theta[block] = theta;
    }

    pub fn update_sigma2_zeta(&mut self) -> Result<()> {
        let m = self.model;
        let p = m.priors.sigma2_zeta;
        for b in 0..4 {
            let ss = (&self.state.theta[b] - m.theta_prior_mean(&self.state, b)).norm_squared();
            self.state.sigma2_zeta[b] = rng::inverse_gamma_sample(m.n() as f64 / 2.0 + p.shape, ss / 2.0 + p.rate, &mut self.rng)?;
        }
        Ok(())
    }

    /// Conditional prior of η_b given the other blocks under Ω ⊗ Σ(φ):
    /// mean Σ_k a_bk η_k with a_bk = −(Ω⁻¹)_bk / (Ω⁻¹)_bb, covariance
    /// Σ(φ) / (Ω⁻¹)_bb.
    pub fn eta_block_prior(&self, b: usize) -> (DVector<f64>, f64) {
        let p = &self.state.omega_inv;
        let m = self.model.m();
        let mut mean = DVector::zeros(m);
        for k in (0..4).filter(|&k| k != b) {
            mean.axpy(-p[(b, k)] / p[(b, b)], &self.state.eta_block(k), 1.0);
        }
        (mean, p[(b, b)])
    }

    pub fn update_eta_block(&mut self, b: usize) -> Result<()> {
        let m = self.model;
        let sigma_inv = self.sigma_inv.as_ref().ok_or_else(|| Error::invalid("η update needs the spatial variant"))?;
        let (prior_mean, p_bb) = self.eta_block_prior(b);
        let s2z = self.state.sigma2_zeta[b];
        let mut precision = sigma_inv * p_bb;
        for l in 0..m.m() {
            precision[(l, l)] += m.counts[l] / s2z;
        }
        let rhs = m.map.collapse(&self.state.theta[b]) / s2z + (sigma_inv * &prior_mean) * p_bb;
        let draw = rng::mvn_canonical_sample(&precision, &rhs, &mut self.rng, "η block full conditional")?;
        let mm = m.m();
        self.state.eta.rows_mut(b * mm, mm).copy_from(&draw);
        Ok(())
    }

    pub fn impute_w(&mut self) {
        let m = self.model;
        let mu = m.predictor(&self.state, Part::W);
        let sd = self.state.sigma2_eps.sqrt();
        for r in 0..m.n_pairs() {
            self.state.w[r] = if m.positive[r] {
                m.w_obs[r]
            } else {
                mu[r] + sd * self.rng.std_normal()
            };
        }
    }

    pub fn update_sigma2_eps(&mut self) -> Result<()> {
        let m = self.model;
        let ss = (&self.state.w - m.predictor(&self.state, Part::W)).norm_squared();
        let p = m.priors.sigma2_eps;
        self.state.sigma2_eps = rng::inverse_gamma_sample(m.n_pairs() as f64 / 2.0 + p.shape, ss / 2.0 + p.rate, &mut self.rng)?;
        Ok(())
    }

    /// Ω⁻¹ ~ Wishart(m + ν₀, (H Σ⁻¹ Hᵀ + I)⁻¹).
    pub fn update_omega(&mut self) -> Result<()> {
        let m = self.model;
        let corr = self.corr.as_ref().ok_or_else(|| Error::invalid("Ω update needs the spatial variant"))?;
        let mut scale_inv = eta_gram(corr, &self.state.eta_matrix()) + DMatrix::identity(4, 4);
        linalg::symmetrize(&mut scale_inv);
        let scale = linalg::cholesky(&scale_inv, "Ω⁻¹ posterior scale")?.inverse();
        self.state.omega_inv = rng::wishart_sample(m.m() as f64 + m.priors.wishart_df, &scale, &mut self.rng)?;
        Ok(())
    }

    fn log_phi_target(&self, corr: &SpatialCorrelation) -> f64 {
        let p = &self.model.priors;
        let phi = corr.phi();
        let gram = eta_gram(corr, &self.state.eta_matrix());
        let trace = (&self.state.omega_inv * gram).trace();
        -2.0 * corr.log_det() - 0.5 * trace + rng::gamma_logpdf(phi, p.phi_shape, p.phi_rate) + phi.ln()
    }

    /// Log target of ln φ at `phi` for the current η and Ω (Jacobian included).
    pub fn phi_log_target(&self, phi: f64) -> Result<f64> {
        Ok(self.log_phi_target(&geometry::exp_corr(&self.model.locations, phi)?))
    }

    pub fn update_phi(&mut self, schedule: &McmcSchedule) {
        let Some(current) = self.corr.as_ref() else { return };
        let log_phi = current.phi().ln() + self.phi_rw.sd() * self.rng.std_normal();
        let accepted = match geometry::exp_corr(&self.model.locations, log_phi.exp()) {
            Ok(prop) => {
                let ratio = self.log_phi_target(&prop) - self.log_phi_target(current);
                if metropolis_accept(ratio, &mut self.rng) {
                    self.state.phi = prop.phi();
                    self.set_corr(prop);
                    true
                } else {
                    false
                }
            }
            Err(_) => false,
        };
        self.phi_rw.record(accepted, self.iteration, schedule);
    }

    pub fn sweep(&mut self, schedule: &McmcSchedule) -> Result<()> {
        let it = self.iteration;
        let v = self.model.variant;
        let re = v.has_random_effects();
        let sp = v.is_spatial();

        self.update_omega_star();
        self.state.check("omega_star", it)?;
        self.update_delta_z()?;
        self.state.check("delta_z", it)?;
        if re {
            self.update_nu(Part::Z, schedule);
            self.update_sigma2_nu(Part::Z)?;
            self.state.check("nu_z", it)?;
            self.update_theta(ZG);
            self.update_theta(ZR);
            self.state.check("theta_z", it)?;
            self.update_sigma2_zeta()?;
            self.state.check("sigma2_zeta", it)?;
        }
        if sp {
            for b in 0..4 {
                self.update_eta_block(b)?;
            }
            self.state.check("eta", it)?;
        }
        self.impute_w();
        self.update_delta_w()?;
        self.state.check("delta_w", it)?;
        self.update_sigma2_eps()?;
        self.state.check("sigma2_eps", it)?;
        if re {
            self.update_nu(Part::W, schedule);
            self.update_sigma2_nu(Part::W)?;
            self.state.check("nu_w", it)?;
            self.update_theta(WG);
            self.update_theta(WR);
            self.state.check("theta_w", it)?;
        }
        if sp {
            self.update_omega()?;
            self.state.check("omega", it)?;
            self.update_phi(schedule);
            self.state.check("phi", it)?;
        }
        self.iteration += 1;
        Ok(())
    }
}

/// H Σ(φ)⁻¹ Hᵀ for the 4×m block matrix H.
pub fn eta_gram(corr: &SpatialCorrelation, h: &DMatrix<f64>) -> DMatrix<f64> {
    let y = corr
        .chol()
        .l()
        .solve_lower_triangular(&h.transpose())
        .expect("Cholesky factor has a nonzero diagonal");
    y.transpose() * y
}

pub fn omega_column_names() -> Vec<String> {
    let mut out = Vec::new();
    for a in 0..4 {
        for b in a..4 {
            out.push(format!("omega[{},{}]", EFFECT_BLOCKS[a], EFFECT_BLOCKS[b]));
        }
    }
    out
}

fn empty_blocks(model: &TransmissionModel) -> Vec<SampleBlock> {
    let v = model.variant;
    let names = &model.design.column_names;
    let mut blocks = vec![
        SampleBlock::new("delta_z", names.iter().map(|c| format!("z:{c}")).collect()),
        SampleBlock::new("delta_w", names.iter().map(|c| format!("w:{c}")).collect()),
    ];
    let mut variances = vec!["sigma2_eps".to_string()];
    if v.has_random_effects() {
        variances.push("sigma2_nu_z".into());
        variances.push("sigma2_nu_w".into());
        variances.extend(EFFECT_BLOCKS.iter().map(|b| format!("sigma2_zeta_{b}")));
    }
    if v.is_spatial() {
        variances.push("phi".into());
    }
    blocks.push(SampleBlock::new("variance", variances));
    if v.is_spatial() {
        blocks.push(SampleBlock::new("omega", omega_column_names()));
    }
    if v.has_random_effects() {
        for b in EFFECT_BLOCKS {
            blocks.push(SampleBlock::new(format!("theta_{b}"), indexed_names(&format!("theta_{b}"), &model.ids)));
        }
        blocks.push(SampleBlock::new("nu_z", indexed_names("nu_z", &model.ids)));
        blocks.push(SampleBlock::new("nu_w", indexed_names("nu_w", &model.ids)));
    }
    if v.is_spatial() {
        let locs: Vec<String> = (1..=model.m()).map(|l| l.to_string()).collect();
        for b in EFFECT_BLOCKS {
            blocks.push(SampleBlock::new(format!("eta_{b}"), indexed_names(&format!("eta_{b}"), &locs)));
        }
    }
    blocks
}

fn record(model: &TransmissionModel, s: &TransmissionState, blocks: &mut [SampleBlock]) -> Result<()> {
    let v = model.variant;
    blocks[0].push(s.delta_z.as_slice());
    blocks[1].push(s.delta_w.as_slice());
    let mut variances = vec![s.sigma2_eps];
    if v.has_random_effects() {
        variances.push(s.sigma2_nu_z);
        variances.push(s.sigma2_nu_w);
        variances.extend_from_slice(&s.sigma2_zeta);
    }
    if v.is_spatial() {
        variances.push(s.phi);
    }
    blocks[2].push(&variances);
    let mut k = 3;
    if v.is_spatial() {
        let omega = s.omega()?;
        let mut row = Vec::with_capacity(10);
        for a in 0..4 {
            for b in a..4 {
                row.push(omega[(a, b)]);
            }
        }
        blocks[k].push(&row);
        k += 1;
    }
    if v.has_random_effects() {
        for b in 0..4 {
            blocks[k].push(s.theta[b].as_slice());
            k += 1;
        }
        blocks[k].push(s.nu_z.as_slice());
        blocks[k + 1].push(s.nu_w.as_slice());
        k += 2;
    }
    if v.is_spatial() {
        for b in 0..4 {
            blocks[k].push(s.eta_block(b).as_slice());
            k += 1;
        }
    }
    Ok(())
}

pub fn run_transmission_model(model: &TransmissionModel, schedule: &McmcSchedule, mut rng: RngStream) -> Result<PosteriorSamples> {
    schedule.validate()?;
    let init = model.initial_state(&mut rng);
    let mut sampler = TransmissionSampler::new(model, init, schedule, rng)?;
    let mut blocks = empty_blocks(model);
    let obs: Vec<String> = (0..model.n_pairs())
        .map(|r| format!("{}<-{}", model.ids[model.receiver[r]], model.ids[model.giver[r]]))
        .collect();
    let mut loglik = SampleBlock::new("loglik", obs);
    for iter in 0..schedule.total_iterations {
        sampler.sweep(schedule)?;
        if schedule.keeps(iter) {
            record(model, &sampler.state, &mut blocks)?;
            loglik.push(model.pointwise_loglik(&sampler.state).as_slice());
        }
    }
    let n = loglik.n_draws();
    Ok(PosteriorSamples {
        model: OutcomeKind::Transmission,
        variant: model.variant,
        blocks,
        loglik,
        chain_lengths: vec![n],
        acceptance: sampler.acceptance(),
        warnings: sampler.warnings,
    })
}

pub fn run_transmission(data: &DyadDataset, spec: &ModelSpec, schedule: &McmcSchedule, rng: RngStream) -> Result<PosteriorSamples> {
    let model = TransmissionModel::new(data, spec)?;
    run_transmission_model(&model, schedule, rng)
}
