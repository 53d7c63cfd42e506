//! Run configuration, read from TOML. Every key has a default, so an empty
//! file is a valid configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dyad::{IndividualEncoding, OutcomeKind, PairRule};
use crate::error::{Error, Result};
use crate::kriging::{Bounds, DEFAULT_GRID_COUNT};
use crate::mcmc::{McmcSchedule, ModelSpec, Variant};
use crate::simulation::Truth;

pub const SEED_ENV: &str = "DYADGP_SEED";
pub const FALLBACK_SEED: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub chains: usize,
    pub output: PathBuf,
    pub data: Option<DataConfig>,
    pub model: ModelSpec,
    pub mcmc: McmcSchedule,
    pub simulate: SimulateConfig,
    pub study: StudyConfig,
    pub predict: PredictConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            chains: 1,
            output: PathBuf::from("dyadgp-out"),
            data: None,
            model: ModelSpec::default(),
            mcmc: McmcSchedule::default(),
            simulate: SimulateConfig::default(),
            study: StudyConfig::default(),
            predict: PredictConfig::default(),
        }
    }
}

/// Where the individuals and dyads tables live and how to turn them into
/// covariates.
///
/// The individuals file has columns `id, x, y` followed by covariates; the
/// dyads file has `id_i, id_j, outcome` followed by pass-through pair
/// covariates. For transmission outcomes `id_j` is the giver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub individuals: PathBuf,
    pub dyads: PathBuf,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    /// Defaults to every individual column, all of which must be numeric.
    #[serde(default)]
    pub encoding: Option<IndividualEncoding>,
    /// Derived pair covariates, placed before the pass-through columns.
    #[serde(default)]
    pub derive: Vec<PairRule>,
}

fn default_delimiter() -> char {
    ','
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub setting: u8,
    pub n: usize,
    pub replicates: usize,
    /// Overrides the default truth for `model.model`.
    pub truth: Option<Truth>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            setting: 1,
            n: 30,
            replicates: 1,
            truth: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub settings: Vec<u8>,
    pub n: usize,
    pub replicates: usize,
    pub variants: Vec<Variant>,
    pub level: f64,
    /// Report patristic MAE multiplied by 100.
    pub scale_mae: bool,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            settings: vec![1, 2, 3],
            n: 30,
            replicates: 50,
            variants: Variant::ALL.to_vec(),
            level: 0.95,
            scale_mae: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictConfig {
    /// Output directory of an earlier fit.
    pub fit: Option<PathBuf>,
    pub grid_count: usize,
    pub bounds: Option<Bounds>,
}

impl Default for PredictConfig {
    fn default() -> Self {
        Self {
            fit: None,
            grid_count: DEFAULT_GRID_COUNT,
            bounds: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<RunConfig> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parse a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(d) = self.data.as_mut() {
            fix(&mut d.individuals);
            fix(&mut d.dyads);
        }
        if let Some(f) = self.predict.fit.as_mut() {
            fix(f);
        }
        fix(&mut self.output);
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Explicit seed, else the environment default, else a fixed constant.
    pub fn effective_seed(&self) -> Result<u64> {
        if let Some(s) = self.seed {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}=`{v}` is not an unsigned integer"))),
            Err(_) => Ok(FALLBACK_SEED),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.priors.validate()?;
        self.mcmc.validate()?;
        if self.chains == 0 {
            return Err(Error::Config("chains must be at least 1".into()));
        }
        if !(1..=3).contains(&self.simulate.setting) {
            return Err(Error::Config(format!("setting must be 1, 2 or 3, got {}", self.simulate.setting)));
        }
        if let Some(t) = &self.simulate.truth {
            if t.kind() != self.model.model {
                return Err(Error::Config(format!(
                    "simulation truth is for the {} model but model.model is {}",
                    t.kind(),
                    self.model.model
                )));
            }
        }
        if self.study.settings.iter().any(|s| !(1..=3).contains(s)) {
            return Err(Error::Config("study settings must be 1, 2 or 3".into()));
        }
        if !(self.study.level > 0.0 && self.study.level < 1.0) {
            return Err(Error::Config("study level must lie in (0, 1)".into()));
        }
        if self.predict.grid_count == 0 {
            return Err(Error::Config("grid_count must be positive".into()));
        }
        Ok(())
    }

    /// Check that input files of a read command exist.
    pub fn require_data(&self) -> Result<&DataConfig> {
        let d = self
            .data
            .as_ref()
            .ok_or_else(|| Error::Config("no [data] section: individuals and dyads paths are required".into()))?;
        for p in [&d.individuals, &d.dyads] {
            if !p.exists() {
                return Err(Error::Config(format!("input file {} does not exist", p.display())));
            }
        }
        Ok(d)
    }

    pub fn kind(&self) -> OutcomeKind {
        self.model.model
    }
}
