//! Dyadic datasets: individuals, pair covariates, outcomes and the design
//! matrices both models consume.

mod derive;
mod design;

pub use derive::{derive_pair_covariates, encode_individuals, Column, IndividualEncoding, IndividualTable, PairCovariateTable, PairRule};
pub use design::{build_patristic_design, build_transmission_design, DesignMatrices, PairIncidence};

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, DistanceScale, IndividualLocationMap, LocationSet, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    /// Symmetric, strictly positive; one record per unordered pair.
    Patristic,
    /// Asymmetric, in [0, 1); one record per ordered pair.
    Transmission,
}

impl OutcomeKind {
    pub fn pair_count(self, n: usize) -> usize {
        match self {
            OutcomeKind::Patristic => n * n.saturating_sub(1) / 2,
            OutcomeKind::Transmission => n * n.saturating_sub(1),
        }
    }
}

impl std::fmt::Display for OutcomeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OutcomeKind::Patristic => "patristic",
            OutcomeKind::Transmission => "transmission",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub id: String,
    pub location: Point,
    pub covariates: Vec<f64>,
}

/// One dyadic outcome.
///
/// For transmission outcomes `i` is the receiver and `j` the giver, so the
/// record holds the probability that `j` infected `i`. Patristic records
/// always have `i < j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairRecord {
    pub i: usize,
    pub j: usize,
    pub x: Vec<f64>,
    pub outcome: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DyadDataset {
    individuals: Vec<Individual>,
    individual_covariate_names: Vec<String>,
    pair_covariate_names: Vec<String>,
    kind: OutcomeKind,
    pairs: Vec<PairRecord>,
}

impl DyadDataset {
    /// Validate and put pairs into canonical order: lexicographic `(i, j)`,
    /// `i < j` for patristic and `i ≠ j` for transmission outcomes.
    pub fn new(
        individuals: Vec<Individual>,
        individual_covariate_names: Vec<String>,
        pair_covariate_names: Vec<String>,
        kind: OutcomeKind,
        mut pairs: Vec<PairRecord>,
    ) -> Result<Self> {
        let n = individuals.len();
        if n < 2 {
            return Err(Error::data("need at least two individuals"));
        }
        let p_d = individual_covariate_names.len();
        let mut ids = HashSet::new();
        for ind in &individuals {
            if !ids.insert(ind.id.as_str()) {
                return Err(Error::data(format!("duplicate individual id `{}`", ind.id)));
            }
            if ind.covariates.len() != p_d {
                return Err(Error::data(format!(
                    "individual `{}` has {} covariates, expected {p_d}",
                    ind.id,
                    ind.covariates.len()
                )));
            }
            if ind.covariates.iter().any(|v| !v.is_finite()) {
                return Err(Error::data(format!("individual `{}` has a non-finite covariate", ind.id)));
            }
            if !(ind.location[0].is_finite() && ind.location[1].is_finite()) {
                return Err(Error::data(format!("individual `{}` has a non-finite location", ind.id)));
            }
        }
        let p_x = pair_covariate_names.len();
        for rec in pairs.iter_mut() {
            if rec.i >= n || rec.j >= n || rec.i == rec.j {
                return Err(Error::data(format!("invalid pair ({}, {})", rec.i, rec.j)));
            }
            if rec.x.len() != p_x {
                return Err(Error::data(format!(
                    "pair ({}, {}) has {} covariates, expected {p_x}",
                    individuals[rec.i].id,
                    individuals[rec.j].id,
                    rec.x.len()
                )));
            }
            if rec.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::data(format!(
                    "pair ({}, {}) has a non-finite covariate",
                    individuals[rec.i].id, individuals[rec.j].id
                )));
            }
            match kind {
                OutcomeKind::Patristic => {
                    if !(rec.outcome.is_finite() && rec.outcome > 0.0) {
                        return Err(Error::data(format!(
                            "patristic outcome for ({}, {}) must be > 0, got {}",
                            individuals[rec.i].id, individuals[rec.j].id, rec.outcome
                        )));
                    }
                    if rec.i > rec.j {
                        std::mem::swap(&mut rec.i, &mut rec.j);
                    }
                }
                OutcomeKind::Transmission => {
                    if rec.outcome == 1.0 {
                        return Err(Error::data(format!(
                            "transmission outcome for ({}, {}) equals 1; logit is undefined",
                            individuals[rec.i].id, individuals[rec.j].id
                        )));
                    }
                    if !(rec.outcome >= 0.0 && rec.outcome < 1.0) {
                        return Err(Error::data(format!(
                            "transmission outcome for ({}, {}) must lie in [0, 1), got {}",
                            individuals[rec.i].id, individuals[rec.j].id, rec.outcome
                        )));
                    }
                }
            }
        }
        pairs.sort_by_key(|r| (r.i, r.j));
        for w in pairs.windows(2) {
            if (w[0].i, w[0].j) == (w[1].i, w[1].j) {
                return Err(Error::data(format!(
                    "duplicate pair ({}, {})",
                    individuals[w[0].i].id, individuals[w[0].j].id
                )));
            }
        }
        let expected = kind.pair_count(n);
        if pairs.len() != expected {
            return Err(Error::data(format!(
                "incomplete pair set: {} {kind} outcomes for {n} individuals, expected {expected}",
                pairs.len()
            )));
        }
        Ok(Self {
            individuals,
            individual_covariate_names,
            pair_covariate_names,
            kind,
            pairs,
        })
    }

    pub fn individuals(&self) -> &[Individual] {
        &self.individuals
    }

    pub fn pairs(&self) -> &[PairRecord] {
        &self.pairs
    }

    pub fn kind(&self) -> OutcomeKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.individuals.len()
    }

    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn individual_covariate_names(&self) -> &[String] {
        &self.individual_covariate_names
    }

    pub fn pair_covariate_names(&self) -> &[String] {
        &self.pair_covariate_names
    }

    pub fn outcomes(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.outcome).collect()
    }

    pub fn points(&self) -> Vec<Point> {
        self.individuals.iter().map(|i| i.location).collect()
    }

    pub fn locations(&self, dedup_tol: f64, scale: DistanceScale) -> Result<(LocationSet, IndividualLocationMap)> {
        geometry::build_location_set(&self.points(), dedup_tol, scale)
    }

    pub fn design(&self) -> Result<DesignMatrices> {
        match self.kind {
            OutcomeKind::Patristic => build_patristic_design(self),
            OutcomeKind::Transmission => build_transmission_design(self),
        }
    }

    /// Mean outcome over all pairs that include any of `members`.
    pub fn mean_outcome_involving(&self, members: &[usize]) -> Option<f64> {
        let set: HashSet<usize> = members.iter().copied().collect();
        let vals: Vec<f64> = self
            .pairs
            .iter()
            .filter(|p| set.contains(&p.i) || set.contains(&p.j))
            .map(|p| p.outcome)
            .collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    }
}
