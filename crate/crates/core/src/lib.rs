//! Bayesian models for spatially referenced dyadic genetic-relatedness data.

pub mod config;
pub mod diagnostics;
pub mod dyad;
pub mod error;
pub mod geometry;
pub mod io;
pub mod kriging;
pub mod linalg;
pub mod mcmc;
pub mod patristic;
pub mod rng;
pub mod simulation;
pub mod study;
pub mod transmission;

pub use dyad::{DyadDataset, Individual, OutcomeKind, PairRecord};
pub use error::{Error, ErrorClass, Result};
pub use mcmc::{McmcSchedule, ModelSpec, PosteriorSamples, Priors, SampleBlock, Variant};
pub use rng::RngStream;

/// Fit `spec` to `data` with `chains` independent chains; chain `c` uses
/// stream `c` of `seed`, so results do not depend on thread scheduling.
pub fn fit(data: &DyadDataset, spec: &ModelSpec, schedule: &McmcSchedule, chains: usize, seed: u64) -> Result<PosteriorSamples> {
    spec.priors.validate()?;
    schedule.validate()?;
    match spec.model {
        OutcomeKind::Patristic => {
            let model = patristic::PatristicModel::new(data, spec)?;
            mcmc::run_chains(chains, seed, |rng| patristic::run_patristic_model(&model, schedule, rng))
        }
        OutcomeKind::Transmission => {
            let model = transmission::TransmissionModel::new(data, spec)?;
            mcmc::run_chains(chains, seed, |rng| transmission::run_transmission_model(&model, schedule, rng))
        }
    }
}
