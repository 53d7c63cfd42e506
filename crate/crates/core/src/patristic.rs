//! Gibbs / Metropolis-within-Gibbs sampler for log patristic distances.
//!
//! ln P = Xδ + Zθ + ε, θ ~ N(Vη, σ²_ζ I), η ~ N(0, τ² Σ(φ)).

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::dyad::{DesignMatrices, DyadDataset, OutcomeKind, PairIncidence};
use crate::error::{Error, Result};
use crate::geometry::{self, IndividualLocationMap, LocationSet, SpatialCorrelation};
use crate::mcmc::{indexed_names, metropolis_accept, McmcSchedule, ModelSpec, PosteriorSamples, Priors, RwScale, SampleBlock, Variant};
use crate::rng::{self, RngStream};

/// Immutable model data shared by every chain.
#[derive(Debug, Clone)]
pub struct PatristicModel {
    pub design: DesignMatrices,
    pub pairs: Vec<(usize, usize)>,
    pub y: DVector<f64>,
    pub ids: Vec<String>,
    pub locations: LocationSet,
    pub map: IndividualLocationMap,
    pub variant: Variant,
    pub priors: Priors,
    xtx: DMatrix<f64>,
    ztz: DMatrix<f64>,
    counts: DVector<f64>,
}

impl PatristicModel {
    pub fn new(data: &DyadDataset, spec: &ModelSpec) -> Result<Self> {
        if data.kind() != OutcomeKind::Patristic {
            return Err(Error::data("patristic model needs patristic outcomes"));
        }
        let design = data.design()?;
        let y = DVector::from_iterator(data.n_pairs(), data.pairs().iter().map(|p| p.outcome.ln()));
        let (locations, map) = data.locations(spec.dedup_tol, spec.distance_scale)?;
        let ids = data.individuals().iter().map(|i| i.id.clone()).collect();
        Self::from_parts(design, y, ids, locations, map, spec)
    }

    pub fn from_parts(
        design: DesignMatrices,
        y: DVector<f64>,
        ids: Vec<String>,
        locations: LocationSet,
        map: IndividualLocationMap,
        spec: &ModelSpec,
    ) -> Result<Self> {
        spec.priors.validate()?;
        let pairs = match &design.incidence {
            PairIncidence::Symmetric { pairs } => pairs.clone(),
            PairIncidence::Directed { .. } => return Err(Error::data("patristic model needs symmetric pair incidence")),
        };
        if y.len() != pairs.len() || map.n() != design.n || ids.len() != design.n {
            return Err(Error::data("design, outcome and location dimensions disagree"));
        }
        let n = design.n;
        let xtx = design.x.transpose() * &design.x;
        let mut ztz = DMatrix::zeros(n, n);
        for &(a, b) in &pairs {
            ztz[(a, a)] += 1.0;
            ztz[(b, b)] += 1.0;
            ztz[(a, b)] += 1.0;
            ztz[(b, a)] += 1.0;
        }
        let counts = DVector::from_vec(map.counts());
        Ok(Self {
            design,
            pairs,
            y,
            ids,
            locations,
            map,
            variant: spec.variant,
            priors: spec.priors.clone(),
            xtx,
            ztz,
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
        self.pairs.len()
    }

    /// Zθ: θ_j + θ_k for each pair.
    pub fn z_times(&self, theta: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.pairs.len(), self.pairs.iter().map(|&(a, b)| theta[a] + theta[b]))
    }

    /// Zᵀr.
    pub fn zt_times(&self, r: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n());
        for (k, &(a, b)) in self.pairs.iter().enumerate() {
            out[a] += r[k];
            out[b] += r[k];
        }
        out
    }

    pub fn mean(&self, s: &PatristicState) -> DVector<f64> {
        let mut mu = &self.design.x * &s.delta;
        if self.variant.has_random_effects() {
            mu += self.z_times(&s.theta);
        }
        mu
    }

    pub fn pointwise_loglik(&self, s: &PatristicState) -> DVector<f64> {
        let mu = self.mean(s);
        DVector::from_iterator(
            self.y.len(),
            self.y.iter().zip(mu.iter()).map(|(y, m)| rng::normal_logpdf(*y, *m, s.sigma2_eps)),
        )
    }

    /// Unnormalized log posterior of the active parameters.
    pub fn log_posterior(&self, s: &PatristicState) -> Result<f64> {
        let p = &self.priors;
        let mut lp = self.pointwise_loglik(s).sum();
        lp += s.delta.iter().map(|d| rng::normal_logpdf(*d, 0.0, p.regression_var)).sum::<f64>();
        lp += rng::inverse_gamma_logpdf(s.sigma2_eps, p.sigma2_eps.shape, p.sigma2_eps.rate);
        if self.variant.has_random_effects() {
            let centre = self.theta_prior_mean(s);
            lp += s
                .theta
                .iter()
                .zip(centre.iter())
                .map(|(t, c)| rng::normal_logpdf(*t, *c, s.sigma2_zeta))
                .sum::<f64>();
            lp += rng::inverse_gamma_logpdf(s.sigma2_zeta, p.sigma2_zeta.shape, p.sigma2_zeta.rate);
        }
        if self.variant.is_spatial() {
            let corr = geometry::exp_corr(&self.locations, s.phi)?;
            let m = self.m() as f64;
            lp += -0.5 * (m * (2.0 * std::f64::consts::PI * s.tau2).ln() + corr.log_det()) - corr.quad(&s.eta) / (2.0 * s.tau2);
            lp += rng::inverse_gamma_logpdf(s.tau2, p.tau2.shape, p.tau2.rate);
            lp += rng::gamma_logpdf(s.phi, p.phi_shape, p.phi_rate);
        }
        Ok(lp)
    }

    fn theta_prior_mean(&self, s: &PatristicState) -> DVector<f64> {
        if self.variant.is_spatial() {
            self.map.expand(&s.eta)
        } else {
            DVector::zeros(self.n())
        }
    }

    /// Ridge least-squares start for δ, residual variance for σ²_ε.
    pub fn initial_state(&self) -> PatristicState {
        let q = self.design.q();
        let mut a = self.xtx.clone();
        for i in 0..q {
            a[(i, i)] += 1e-6;
        }
        let xty = self.design.x.transpose() * &self.y;
        let delta = a.cholesky().map(|c| c.solve(&xty)).unwrap_or_else(|| DVector::zeros(q));
        let resid = &self.y - &self.design.x * &delta;
        let sigma2_eps = (resid.norm_squared() / self.y.len() as f64).max(1e-4);
        PatristicState {
            delta,
            theta: DVector::zeros(self.n()),
            eta: DVector::zeros(self.m()),
            sigma2_eps,
            sigma2_zeta: 0.5 * sigma2_eps,
            tau2: 0.5 * sigma2_eps,
            phi: geometry::effective_range_phi(1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatristicState {
    pub delta: DVector<f64>,
    pub theta: DVector<f64>,
    pub eta: DVector<f64>,
    pub sigma2_eps: f64,
    pub sigma2_zeta: f64,
    pub tau2: f64,
    pub phi: f64,
}

impl PatristicState {
    fn check(&self, block: &'static str, iteration: usize) -> Result<()> {
        let ok = self.delta.iter().chain(self.theta.iter()).chain(self.eta.iter()).all(|v| v.is_finite())
            && [self.sigma2_eps, self.sigma2_zeta, self.tau2, self.phi].iter().all(|v| v.is_finite() && *v > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::NonFinite { block, iteration })
        }
    }
}

/// One chain: the current state, the cached Σ(φ) factorization and its RNG.
pub struct PatristicSampler<'a> {
    model: &'a PatristicModel,
    pub state: PatristicState,
    corr: Option<SpatialCorrelation>,
    sigma_inv: Option<DMatrix<f64>>,
    phi_rw: RwScale,
    pub rng: RngStream,
    iteration: usize,
}

impl<'a> PatristicSampler<'a> {
    pub fn new(model: &'a PatristicModel, state: PatristicState, schedule: &McmcSchedule, rng: RngStream) -> Result<Self> {
        let mut s = Self {
            model,
            state,
            corr: None,
            sigma_inv: None,
            phi_rw: RwScale::new(schedule.proposal_sd_logphi),
            rng,
            iteration: 0,
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

    pub fn phi_acceptance(&self) -> f64 {
        self.phi_rw.acceptance_rate()
    }

    pub fn phi_proposal_sd(&self) -> f64 {
        self.phi_rw.sd()
    }

    pub fn update_sigma2_eps(&mut self) -> Result<()> {
        let m = self.model;
        let rss = (&m.y - m.mean(&self.state)).norm_squared();
        let p = m.priors.sigma2_eps;
        self.state.sigma2_eps = rng::inverse_gamma_sample(m.n_pairs() as f64 / 2.0 + p.shape, rss / 2.0 + p.rate, &mut self.rng)?;
        Ok(())
    }

    pub fn update_delta(&mut self) -> Result<()> {
        let m = self.model;
        let s = &self.state;
        let mut precision = &m.xtx / s.sigma2_eps;
        for i in 0..precision.nrows() {
            precision[(i, i)] += 1.0 / m.priors.regression_var;
        }
        let mut r = m.y.clone();
        if m.variant.has_random_effects() {
            r -= m.z_times(&s.theta);
        }
        let b = m.design.x.transpose() * r / s.sigma2_eps;
        self.state.delta = rng::mvn_canonical_sample(&precision, &b, &mut self.rng, "δ full conditional")?;
        Ok(())
    }

    pub fn update_theta(&mut self) -> Result<()> {
        let m = self.model;
        let s = &self.state;
        let mut precision = &m.ztz / s.sigma2_eps;
        for i in 0..m.n() {
            precision[(i, i)] += 1.0 / s.sigma2_zeta;
        }
        let r = &m.y - &m.design.x * &s.delta;
        let b = m.zt_times(&r) / s.sigma2_eps + m.theta_prior_mean(s) / s.sigma2_zeta;
        let mut theta = rng::mvn_canonical_sample(&precision, &b, &mut self.rng, "θ full conditional")?;
        let centre = theta.mean();
        theta.add_scalar_mut(-centre);
        self.state.theta = theta;
        Ok(())
    }

    pub fn update_sigma2_zeta(&mut self) -> Result<()> {
        let m = self.model;
        let ss = (&self.state.theta - m.theta_prior_mean(&self.state)).norm_squared();
        let p = m.priors.sigma2_zeta;
        self.state.sigma2_zeta = rng::inverse_gamma_sample(m.n() as f64 / 2.0 + p.shape, ss / 2.0 + p.rate, &mut self.rng)?;
        Ok(())
    }

    pub fn update_eta(&mut self) -> Result<()> {
        let m = self.model;
        let s = &self.state;
        let sigma_inv = self.sigma_inv.as_ref().ok_or_else(|| Error::invalid("η update needs the spatial variant"))?;
        let mut precision = sigma_inv / s.tau2;
        for l in 0..m.m() {
            precision[(l, l)] += m.counts[l] / s.sigma2_zeta;
        }
        let b = m.map.collapse(&s.theta) / s.sigma2_zeta;
        self.state.eta = rng::mvn_canonical_sample(&precision, &b, &mut self.rng, "η full conditional")?;
        Ok(())
    }

    pub fn update_tau2(&mut self) -> Result<()> {
        let m = self.model;
        let corr = self.corr.as_ref().ok_or_else(|| Error::invalid("τ² update needs the spatial variant"))?;
        let q = corr.quad(&self.state.eta);
        let p = m.priors.tau2;
        self.state.tau2 = rng::inverse_gamma_sample(m.m() as f64 / 2.0 + p.shape, q / 2.0 + p.rate, &mut self.rng)?;
        Ok(())
    }

    /// Log target of ln φ, including the Jacobian φ.
    fn log_phi_target(&self, corr: &SpatialCorrelation) -> f64 {
        let p = &self.model.priors;
        let phi = corr.phi();
        -0.5 * corr.log_det() - corr.quad(&self.state.eta) / (2.0 * self.state.tau2)
            + rng::gamma_logpdf(phi, p.phi_shape, p.phi_rate)
            + phi.ln()
    }

    pub fn update_phi(&mut self, schedule: &McmcSchedule) -> Result<()> {
        let current = self.corr.as_ref().ok_or_else(|| Error::invalid("φ update needs the spatial variant"))?;
        let log_phi = current.phi().ln() + self.phi_rw.sd() * self.rng.std_normal();
        let proposal = geometry::exp_corr(&self.model.locations, log_phi.exp()).ok();
        let accepted = match proposal {
            Some(prop) => {
                let ratio = self.log_phi_target(&prop) - self.log_phi_target(current);
                if metropolis_accept(ratio, &mut self.rng) {
                    self.state.phi = prop.phi();
                    self.set_corr(prop);
                    true
                } else {
                    false
                }
            }
            None => false,
        };
        self.phi_rw.record(accepted, self.iteration, schedule);
        Ok(())
    }

    /// One full sweep in the fixed scan order.
    pub fn sweep(&mut self, schedule: &McmcSchedule) -> Result<()> {
        let it = self.iteration;
        let variant = self.model.variant;
        self.update_sigma2_eps()?;
        self.state.check("sigma2_eps", it)?;
        self.update_delta()?;
        self.state.check("delta", it)?;
        if variant.has_random_effects() {
            self.update_theta()?;
            self.state.check("theta", it)?;
            self.update_sigma2_zeta()?;
            self.state.check("sigma2_zeta", it)?;
        }
        if variant.is_spatial() {
            self.update_eta()?;
            self.state.check("eta", it)?;
            self.update_tau2()?;
            self.state.check("tau2", it)?;
            self.update_phi(schedule)?;
            self.state.check("phi", it)?;
        }
        self.iteration += 1;
        Ok(())
    }
}

fn empty_blocks(model: &PatristicModel) -> Vec<SampleBlock> {
    let v = model.variant;
    let mut blocks = vec![SampleBlock::new("delta", model.design.column_names.clone())];
    let mut variances = vec!["sigma2_eps".to_string()];
    if v.has_random_effects() {
        variances.push("sigma2_zeta".into());
    }
    if v.is_spatial() {
        variances.push("tau2".into());
        variances.push("phi".into());
    }
    blocks.push(SampleBlock::new("variance", variances));
    if v.has_random_effects() {
        blocks.push(SampleBlock::new("theta", indexed_names("theta", &model.ids)));
    }
    if v.is_spatial() {
        let locs: Vec<String> = (1..=model.m()).map(|l| l.to_string()).collect();
        blocks.push(SampleBlock::new("eta", indexed_names("eta", &locs)));
    }
    blocks
}

fn record(model: &PatristicModel, s: &PatristicState, blocks: &mut [SampleBlock]) {
    let v = model.variant;
    blocks[0].push(s.delta.as_slice());
    let mut variances = vec![s.sigma2_eps];
    if v.has_random_effects() {
        variances.push(s.sigma2_zeta);
    }
    if v.is_spatial() {
        variances.push(s.tau2);
        variances.push(s.phi);
    }
    blocks[1].push(&variances);
    if v.has_random_effects() {
        blocks[2].push(s.theta.as_slice());
    }
    if v.is_spatial() {
        blocks[3].push(s.eta.as_slice());
    }
}

/// Run one chain from the default initial state.
pub fn run_patristic_model(model: &PatristicModel, schedule: &McmcSchedule, rng: RngStream) -> Result<PosteriorSamples> {
    schedule.validate()?;
    let mut sampler = PatristicSampler::new(model, model.initial_state(), schedule, rng)?;
    let mut blocks = empty_blocks(model);
    let obs: Vec<String> = model
        .pairs
        .iter()
        .map(|&(a, b)| format!("{}|{}", model.ids[a], model.ids[b]))
        .collect();
    let mut loglik = SampleBlock::new("loglik", obs);
    for iter in 0..schedule.total_iterations {
        sampler.sweep(schedule)?;
        if schedule.keeps(iter) {
            record(model, &sampler.state, &mut blocks);
            loglik.push(model.pointwise_loglik(&sampler.state).as_slice());
        }
    }
    let mut acceptance = BTreeMap::new();
    if model.variant.is_spatial() {
        acceptance.insert("phi".to_string(), sampler.phi_acceptance());
    }
    let n = loglik.n_draws();
    Ok(PosteriorSamples {
        model: OutcomeKind::Patristic,
        variant: model.variant,
        blocks,
        loglik,
        chain_lengths: vec![n],
        acceptance,
        warnings: Vec::new(),
    })
}

pub fn run_patristic(data: &DyadDataset, spec: &ModelSpec, schedule: &McmcSchedule, rng: RngStream) -> Result<PosteriorSamples> {
    let model = PatristicModel::new(data, spec)?;
    run_patristic_model(&model, schedule, rng)
}
