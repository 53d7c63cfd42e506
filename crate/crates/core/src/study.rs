//! Repeated simulate → fit → score, summarised in the shape of a
//! simulation-study table.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{equal_tailed_interval, waic};
use crate::dyad::OutcomeKind;
use crate::error::{Error, Result};
use crate::linalg;
use crate::mcmc::{McmcSchedule, ModelSpec, PosteriorSamples, Variant};
use crate::rng::RngStream;
use crate::simulation::{simulate, SimulatedData, SimulationSpec, Truth};

#[derive(Debug, Clone, PartialEq)]
pub struct StudyPlan {
    pub spec: ModelSpec,
    pub schedule: McmcSchedule,
    pub settings: Vec<u8>,
    pub n: usize,
    pub replicates: usize,
    pub variants: Vec<Variant>,
    pub level: f64,
    pub truth: Option<Truth>,
}

impl StudyPlan {
    pub fn new(model: OutcomeKind, schedule: McmcSchedule, n: usize, replicates: usize) -> Self {
        Self {
            spec: ModelSpec::new(model, Variant::Spatial),
            schedule,
            settings: vec![1, 2, 3],
            n,
            replicates,
            variants: Variant::ALL.to_vec(),
            level: 0.95,
            truth: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateScore {
    pub setting: u8,
    pub replicate: usize,
    pub variant: Variant,
    pub mae: f64,
    pub ec: f64,
    pub ci_length: f64,
    pub waic: f64,
    pub p_waic: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Standard error across replicates.
    pub se: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Option<Stat> {
        match xs.len() {
            0 => None,
            1 => Some(Stat { mean: xs[0], se: f64::NAN }),
            n => Some(Stat {
                mean: linalg::mean(xs),
                se: (linalg::sample_var(xs) / n as f64).sqrt(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub setting: u8,
    pub variant: Variant,
    pub fits: usize,
    pub mae: Option<Stat>,
    pub ec: Option<Stat>,
    pub ci_length: Option<Stat>,
    /// WAIC(variant) − WAIC(spatial) on the same replicates.
    pub delta_waic: Option<Stat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub model: OutcomeKind,
    pub rows: Vec<StudyRow>,
    pub scores: Vec<ReplicateScore>,
    /// (setting, replicate, variant, message) for fits that failed.
    pub failures: Vec<(u8, usize, Variant, String)>,
}

/// True regression coefficients with each intercept shifted by the mean of
/// the true random effects entering its predictor. The samplers hold θ to a
/// zero sum, so that mean is carried by the intercept.
pub fn centred_truth(sim: &SimulatedData) -> Result<(Vec<String>, Vec<f64>)> {
    let rec = sim.truth_record()?;
    let mean = |v: &Vec<f64>| linalg::mean(v);
    let mut values = rec.regression.clone();
    let shift = |values: &mut Vec<f64>, name: &str, by: f64| {
        if let Some(k) = rec.regression_names.iter().position(|c| c == name) {
            values[k] += by;
        }
    };
    match sim.data.kind() {
        OutcomeKind::Patristic => shift(&mut values, "intercept", 2.0 * mean(&rec.theta[0])),
        OutcomeKind::Transmission => {
            shift(&mut values, "z:intercept", mean(&rec.theta[0]) + mean(&rec.theta[1]));
            shift(&mut values, "w:intercept", mean(&rec.theta[2]) + mean(&rec.theta[3]));
        }
    }
    Ok((rec.regression_names, values))
}

/// Posterior draws of the regression coefficients, in truth-record order.
fn regression_draws(samples: &PosteriorSamples) -> Vec<Vec<f64>> {
    let names: &[&str] = match samples.model {
        OutcomeKind::Patristic => &["delta"],
        OutcomeKind::Transmission => &["delta_z", "delta_w"],
    };
    names
        .iter()
        .filter_map(|b| samples.block(b))
        .flat_map(|b| (0..b.width()).map(move |c| b.column(c)))
        .collect()
}

pub fn score_fit(samples: &PosteriorSamples, truth: &[f64], level: f64) -> Result<(f64, f64, f64)> {
    let draws = regression_draws(samples);
    if draws.len() != truth.len() {
        return Err(Error::invalid(format!("{} fitted coefficients but {} true values", draws.len(), truth.len())));
    }
    let (mut mae, mut ec, mut len) = (0.0, 0.0, 0.0);
    for (d, t) in draws.iter().zip(truth) {
        let (lo, hi) = equal_tailed_interval(d, level);
        mae += (linalg::mean(d) - t).abs();
        ec += ((lo..=hi).contains(t) as u8) as f64;
        len += hi - lo;
    }
    let k = truth.len() as f64;
    Ok((mae / k, ec / k, len / k))
}

type ReplicateOutcome = (Vec<ReplicateScore>, Vec<(u8, usize, Variant, String)>);

fn run_replicate(plan: &StudyPlan, setting: u8, replicate: usize, seed: u64) -> Result<ReplicateOutcome> {
    let mut sim_spec = SimulationSpec::new(plan.spec.model, setting, plan.n)?;
    if let Some(t) = &plan.truth {
        sim_spec.truth = t.clone();
    }
    let job = RngStream::with_stream(seed, ((setting as u64) << 32) | replicate as u64);
    let mut sim_rng = job.derive(0);
    let sim = simulate(&sim_spec, &mut sim_rng)?;
    let (_, truth) = centred_truth(&sim)?;
    let mut scores = Vec::new();
    let mut failures = Vec::new();
    for (k, &variant) in plan.variants.iter().enumerate() {
        let spec = ModelSpec { variant, ..plan.spec.clone() };
        let fit_seed = job.derive(1 + k as u64).seed();
        let result = crate::fit(&sim.data, &spec, &plan.schedule, 1, fit_seed).and_then(|s| {
            let (mae, ec, ci_length) = score_fit(&s, &truth, plan.level)?;
            let w = waic(&s.loglik)?;
            Ok(ReplicateScore {
                setting,
                replicate,
                variant,
                mae,
                ec,
                ci_length,
                waic: w.waic,
                p_waic: w.p_waic,
            })
        });
        match result {
            Ok(s) => scores.push(s),
            Err(e) => {
                log::warn!("setting {setting} replicate {replicate} {variant}: {e}");
                failures.push((setting, replicate, variant, e.to_string()));
            }
        }
    }
    log::info!("setting {setting} replicate {} of {} done", replicate + 1, plan.replicates);
    Ok((scores, failures))
}

/// Run every (setting, replicate) job in parallel. Each job draws from its
/// own stream of `seed`, so the report does not depend on scheduling.
pub fn run_study(plan: &StudyPlan, seed: u64) -> Result<StudyReport> {
    if plan.replicates == 0 || plan.variants.is_empty() || plan.settings.is_empty() {
        return Err(Error::Config("study needs settings, variants and at least one replicate".into()));
    }
    let jobs: Vec<(u8, usize)> = plan
        .settings
        .iter()
        .flat_map(|&s| (0..plan.replicates).map(move |r| (s, r)))
        .collect();
    let outcomes = jobs
        .par_iter()
        .map(|&(s, r)| run_replicate(plan, s, r, seed))
        .collect::<Result<Vec<_>>>()?;
    let mut scores = Vec::new();
    let mut failures = Vec::new();
    for (s, f) in outcomes {
        scores.extend(s);
        failures.extend(f);
    }
    let rows = tabulate(plan, &scores);
    Ok(StudyReport {
        model: plan.spec.model,
        rows,
        scores,
        failures,
    })
}

fn tabulate(plan: &StudyPlan, scores: &[ReplicateScore]) -> Vec<StudyRow> {
    let mut rows = Vec::new();
    for &setting in &plan.settings {
        let spatial_waic = |r: usize| {
            scores
                .iter()
                .find(|s| s.setting == setting && s.replicate == r && s.variant == Variant::Spatial)
                .map(|s| s.waic)
        };
        for &variant in &plan.variants {
            let these: Vec<&ReplicateScore> = scores.iter().filter(|s| s.setting == setting && s.variant == variant).collect();
            let col = |f: fn(&ReplicateScore) -> f64| Stat::of(&these.iter().map(|s| f(s)).collect::<Vec<_>>());
            let deltas: Vec<f64> = these.iter().filter_map(|s| spatial_waic(s.replicate).map(|w| s.waic - w)).collect();
            rows.push(StudyRow {
                setting,
                variant,
                fits: these.len(),
                mae: col(|s| s.mae),
                ec: col(|s| s.ec),
                ci_length: col(|s| s.ci_length),
                delta_waic: Stat::of(&deltas),
            });
        }
    }
    rows
}

impl StudyReport {
    pub fn row(&self, setting: u8, variant: Variant) -> Option<&StudyRow> {
        self.rows.iter().find(|r| r.setting == setting && r.variant == variant)
    }

    /// Plain-text table: one line per metric and setting, one column per
    /// variant, entries "mean (se)". `mae_factor` rescales MAE for display.
    pub fn render(&self, mae_factor: f64) -> String {
        let variants: Vec<Variant> = {
            let mut v: Vec<Variant> = Vec::new();
            for r in &self.rows {
                if !v.contains(&r.variant) {
                    v.push(r.variant);
                }
            }
            v
        };
        let mut settings: Vec<u8> = self.rows.iter().map(|r| r.setting).collect();
        settings.dedup();
        let mut out = format!("{:<12}{:<9}", "metric", "setting");
        for v in &variants {
            out.push_str(&format!("{:>22}", v.name()));
        }
        out.push('\n');
        let metrics: [(&str, fn(&StudyRow) -> Option<Stat>, f64); 4] = [
            ("MAE", |r| r.mae, mae_factor),
            ("EC", |r| r.ec, 1.0),
            ("CI length", |r| r.ci_length, 1.0),
            ("dWAIC", |r| r.delta_waic, 1.0),
        ];
        for (name, get, factor) in metrics {
            for &s in &settings {
                out.push_str(&format!("{name:<12}{s:<9}"));
                for &v in &variants {
                    let cell = match self.row(s, v).and_then(get) {
                        Some(st) => format!("{:.2} ({:.2})", st.mean * factor, st.se * factor),
                        None => "-".to_string(),
                    };
                    out.push_str(&format!("{cell:>22}"));
                }
                out.push('\n');
            }
        }
        out
    }
}
