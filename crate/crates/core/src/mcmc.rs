//! Shared MCMC plumbing: model variants, priors, schedules, proposal
//! adaptation and posterior-sample storage.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dyad::OutcomeKind;
use crate::error::{Error, Result};
use crate::geometry::{DistanceScale, DEFAULT_DEDUP_TOL};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// No random effects.
    Fixed,
    /// Individual random effects without the spatial process.
    #[serde(alias = "non_spatial", alias = "non-spatial")]
    Nonspatial,
    /// Individual effects centred on a spatial Gaussian process.
    Spatial,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Fixed, Variant::Nonspatial, Variant::Spatial];

    pub fn has_random_effects(self) -> bool {
        self != Variant::Fixed
    }

    pub fn is_spatial(self) -> bool {
        self == Variant::Spatial
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Fixed => "fixed",
            Variant::Nonspatial => "nonspatial",
            Variant::Spatial => "spatial",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fixed" | "standard" => Ok(Variant::Fixed),
            "nonspatial" | "non-spatial" | "non_spatial" => Ok(Variant::Nonspatial),
            "spatial" => Ok(Variant::Spatial),
            other => Err(Error::Config(format!("unknown variant `{other}`"))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Inverse-Gamma(shape, rate) prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvGammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl Default for InvGammaPrior {
    fn default() -> Self {
        Self { shape: 0.01, rate: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Priors {
    /// Prior variance of every regression coefficient.
    pub regression_var: f64,
    pub sigma2_eps: InvGammaPrior,
    pub sigma2_zeta: InvGammaPrior,
    pub tau2: InvGammaPrior,
    pub sigma2_nu_z: InvGammaPrior,
    pub sigma2_nu_w: InvGammaPrior,
    /// Gamma(shape, rate) prior on the spatial decay.
    pub phi_shape: f64,
    pub phi_rate: f64,
    /// Ω⁻¹ ~ Wishart(df, I₄) with E[Ω⁻¹] = df · I₄.
    pub wishart_df: f64,
}

impl Default for Priors {
    fn default() -> Self {
        Self {
            regression_var: 100.0 * 100.0,
            sigma2_eps: InvGammaPrior::default(),
            sigma2_zeta: InvGammaPrior::default(),
            tau2: InvGammaPrior::default(),
            sigma2_nu_z: InvGammaPrior::default(),
            sigma2_nu_w: InvGammaPrior::default(),
            phi_shape: 1.0,
            phi_rate: 1.0,
            wishart_df: 5.0,
        }
    }
}

impl Priors {
    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("prior hyperparameter {name} must be positive, got {v}")))
            }
        };
        pos("regression_var", self.regression_var)?;
        for (name, p) in [
            ("sigma2_eps", self.sigma2_eps),
            ("sigma2_zeta", self.sigma2_zeta),
            ("tau2", self.tau2),
            ("sigma2_nu_z", self.sigma2_nu_z),
            ("sigma2_nu_w", self.sigma2_nu_w),
        ] {
            pos(&format!("{name}.shape"), p.shape)?;
            pos(&format!("{name}.rate"), p.rate)?;
        }
        pos("phi_shape", self.phi_shape)?;
        pos("phi_rate", self.phi_rate)?;
        if !(self.wishart_df >= 4.0) {
            return Err(Error::Config("wishart_df must be at least 4".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcSchedule {
    pub total_iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Random-walk sd on ln φ.
    pub proposal_sd_logphi: f64,
    /// Random-walk sd for each ν coordinate.
    pub proposal_sd_nu: f64,
    /// Robbins–Monro tuning of the proposal sds during burn-in.
    pub adapt: bool,
}

impl Default for McmcSchedule {
    fn default() -> Self {
        Self {
            total_iterations: 250_000,
            burn_in: 50_000,
            thin: 20,
            proposal_sd_logphi: 0.5,
            proposal_sd_nu: 0.2,
            adapt: true,
        }
    }
}

impl McmcSchedule {
    pub fn new(total_iterations: usize, burn_in: usize, thin: usize) -> Self {
        Self {
            total_iterations,
            burn_in,
            thin,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_iterations == 0 || self.thin == 0 {
            return Err(Error::Config("iterations and thin must be positive".into()));
        }
        if self.burn_in >= self.total_iterations {
            return Err(Error::Config(format!(
                "burn-in {} must be smaller than total iterations {}",
                self.burn_in, self.total_iterations
            )));
        }
        if !(self.proposal_sd_logphi > 0.0 && self.proposal_sd_nu > 0.0) {
            return Err(Error::Config("proposal sds must be positive".into()));
        }
        Ok(())
    }

    /// Whether iteration `iter` (0-based) is stored.
    pub fn keeps(&self, iter: usize) -> bool {
        iter >= self.burn_in && (iter - self.burn_in + 1) % self.thin == 0
    }

    pub fn n_kept(&self) -> usize {
        (self.total_iterations - self.burn_in) / self.thin
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSpec {
    pub model: OutcomeKind,
    pub variant: Variant,
    pub priors: Priors,
    pub dedup_tol: f64,
    pub distance_scale: DistanceScale,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            model: OutcomeKind::Patristic,
            variant: Variant::Spatial,
            priors: Priors::default(),
            dedup_tol: DEFAULT_DEDUP_TOL,
            distance_scale: DistanceScale::MaxPairwise,
        }
    }
}

impl ModelSpec {
    pub fn new(model: OutcomeKind, variant: Variant) -> Self {
        Self {
            model,
            variant,
            ..Self::default()
        }
    }
}

/// `true` if the Metropolis proposal with log acceptance ratio `log_ratio` is accepted.
pub fn metropolis_accept(log_ratio: f64, rng: &mut RngStream) -> bool {
    if log_ratio.is_nan() {
        return false;
    }
    log_ratio >= 0.0 || rng.uniform().ln() < log_ratio
}

/// Random-walk scale with burn-in-only Robbins–Monro adaptation.
#[derive(Debug, Clone)]
pub struct RwScale {
    log_sd: f64,
    target: f64,
    proposed: u64,
    accepted: u64,
    proposed_post: u64,
    accepted_post: u64,
}

impl RwScale {
    pub const TARGET_ACCEPTANCE: f64 = 0.43;

    pub fn new(sd: f64) -> Self {
        Self {
            log_sd: sd.ln(),
            target: Self::TARGET_ACCEPTANCE,
            proposed: 0,
            accepted: 0,
            proposed_post: 0,
            accepted_post: 0,
        }
    }

    pub fn sd(&self) -> f64 {
        self.log_sd.exp()
    }

    pub fn record(&mut self, accepted: bool, iter: usize, schedule: &McmcSchedule) {
        self.proposed += 1;
        self.accepted += accepted as u64;
        if iter < schedule.burn_in {
            if schedule.adapt {
                let gain = 1.0 / ((iter + 1) as f64).powf(0.6);
                let hit = if accepted { 1.0 } else { 0.0 };
                self.log_sd = (self.log_sd + gain * (hit - self.target)).clamp(-12.0, 5.0);
            }
        } else {
            self.proposed_post += 1;
            self.accepted_post += accepted as u64;
        }
    }

    /// Post-burn-in acceptance rate (overall if no post-burn-in proposals yet).
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed_post > 0 {
            self.accepted_post as f64 / self.proposed_post as f64
        } else if self.proposed > 0 {
            self.accepted as f64 / self.proposed as f64
        } else {
            0.0
        }
    }
}

/// Stored draws of one parameter block, row-major (draw × column).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBlock {
    pub name: String,
    pub columns: Vec<String>,
    pub data: Vec<f64>,
}

impl SampleBlock {
    pub fn new(name: impl Into<String>, columns: Vec<String>) -> Self {
        Self {
            name: name.into(),
            columns,
            data: Vec::new(),
        }
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn n_draws(&self) -> usize {
        if self.columns.is_empty() {
            0
        } else {
            self.data.len() / self.columns.len()
        }
    }

    pub fn push(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.data.extend_from_slice(row);
    }

    pub fn row(&self, d: usize) -> &[f64] {
        let w = self.width();
        &self.data[d * w..(d + 1) * w]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        let w = self.width();
        self.data.iter().skip(c).step_by(w).copied().collect()
    }

    pub fn column_by_name(&self, name: &str) -> Option<Vec<f64>> {
        self.columns.iter().position(|c| c == name).map(|c| self.column(c))
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.width().max(1))
    }
}

/// Thinned post-burn-in draws from one or more chains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSamples {
    pub model: OutcomeKind,
    pub variant: Variant,
    pub blocks: Vec<SampleBlock>,
    /// Pointwise log density, draws × observations.
    pub loglik: SampleBlock,
    /// Draws contributed by each chain, in order.
    pub chain_lengths: Vec<usize>,
    /// Post-burn-in Metropolis acceptance rates.
    pub acceptance: BTreeMap<String, f64>,
    /// Divergence warnings raised during the run.
    pub warnings: Vec<String>,
}

impl PosteriorSamples {
    pub fn block(&self, name: &str) -> Option<&SampleBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn n_draws(&self) -> usize {
        self.loglik.n_draws()
    }

    /// Draws of a named column from whichever block holds it.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        self.blocks.iter().find_map(|b| b.column_by_name(name))
    }

    pub fn column_names(&self) -> Vec<String> {
        self.blocks.iter().flat_map(|b| b.columns.iter().cloned()).collect()
    }

    /// Concatenate chains run on the same model.
    pub fn merge(mut parts: Vec<PosteriorSamples>) -> Result<PosteriorSamples> {
        if parts.is_empty() {
            return Err(Error::invalid("no chains to merge"));
        }
        let mut out = parts.remove(0);
        for (k, p) in parts.into_iter().enumerate() {
            if p.blocks.len() != out.blocks.len() {
                return Err(Error::invalid("chains have different parameter blocks"));
            }
            for (a, b) in out.blocks.iter_mut().zip(p.blocks) {
                a.data.extend(b.data);
            }
            out.loglik.data.extend(p.loglik.data);
            out.chain_lengths.extend(p.chain_lengths);
            for (key, v) in p.acceptance {
                out.acceptance.insert(format!("{key}[chain{}]", k + 1), v);
            }
            out.warnings.extend(p.warnings);
        }
        Ok(out)
    }

    /// Split a block's column into per-chain segments.
    pub fn chain_segments(&self, values: &[f64]) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        let mut start = 0;
        for &len in &self.chain_lengths {
            out.push(values[start..start + len].to_vec());
            start += len;
        }
        out
    }
}

/// Run `chains` independent chains in parallel, chain `c` on stream `c` of
/// `seed`, and concatenate them in chain order.
pub fn run_chains<F>(chains: usize, seed: u64, run: F) -> Result<PosteriorSamples>
where
    F: Fn(RngStream) -> Result<PosteriorSamples> + Sync,
{
    use rayon::prelude::*;
    if chains == 0 {
        return Err(Error::Config("need at least one chain".into()));
    }
    let parts = (0..chains)
        .into_par_iter()
        .map(|c| run(RngStream::with_stream(seed, c as u64)))
        .collect::<Result<Vec<_>>>()?;
    PosteriorSamples::merge(parts)
}

pub(crate) fn indexed_names(prefix: &str, ids: &[String]) -> Vec<String> {
    ids.iter().map(|id| format!("{prefix}[{id}]")).collect()
}
