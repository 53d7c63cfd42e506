use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use dyadgp::config::RunConfig;
use dyadgp::io::{file_hash, read_dataset, read_samples, write_dataset, write_samples, InputHash, Manifest};
use dyadgp::kriging::{make_grid, predict_grid, Bounds};
use dyadgp::simulation::{simulate as simulate_data, SimulationSpec, Truth};
use dyadgp::study::{run_study, StudyPlan};
use dyadgp::{DyadDataset, Error, OutcomeKind, Result, RngStream};
use log::{info, warn};

use crate::summary::Summary;

pub const SAMPLES_DIR: &str = "samples";
pub const MANIFEST: &str = "manifest.json";
pub const CONFIG_ECHO: &str = "config.toml";

/// Print a report; a closed stdout (e.g. piped into `head`) is not an error.
fn emit(text: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn hashes(paths: &[&Path]) -> Result<Vec<InputHash>> {
    paths
        .iter()
        .map(|p| Ok(InputHash { path: p.to_path_buf(), hash: file_hash(p)? }))
        .collect()
}

/// Echo the effective config with its seed pinned, then the manifest.
fn finish(command: &str, cfg: &RunConfig, seed: u64, inputs: Vec<InputHash>, mut outputs: Vec<PathBuf>, start: Instant) -> Result<()> {
    let mut echo = cfg.clone();
    echo.seed = Some(seed);
    let config = echo.to_toml()?;
    let echo_path = cfg.output.join(CONFIG_ECHO);
    fs::write(&echo_path, &config)?;
    outputs.push(echo_path);
    let outputs = outputs
        .into_iter()
        .map(|p| p.strip_prefix(&cfg.output).map(Path::to_path_buf).unwrap_or(p))
        .collect();
    Manifest {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        config,
        inputs,
        outputs,
        wall_time_secs: start.elapsed().as_secs_f64(),
    }
    .write(&cfg.output.join(MANIFEST))
}

pub fn fit(cfg: &RunConfig, seed: u64) -> Result<()> {
    let start = Instant::now();
    let data_cfg = cfg.require_data()?;
    let data = read_dataset(data_cfg, cfg.kind())?;
    info!("{} individuals, {} pairs; {} chain(s), seed {seed}", data.n(), data.n_pairs(), cfg.chains);
    let samples = dyadgp::fit(&data, &cfg.model, &cfg.mcmc, cfg.chains, seed)?;
    for w in &samples.warnings {
        warn!("{w}");
    }
    fs::create_dir_all(&cfg.output)?;
    let mut outputs = write_samples(&samples, &cfg.output.join(SAMPLES_DIR))?;
    let summary = Summary::new(&samples, Some(&data))?;
    outputs.extend(summary.write(&cfg.output)?);
    emit(&summary.render());
    let inputs = hashes(&[&data_cfg.individuals, &data_cfg.dyads])?;
    finish("fit", cfg, seed, inputs, outputs, start)
}

pub fn simulate(cfg: &RunConfig, seed: u64) -> Result<()> {
    let start = Instant::now();
    let s = &cfg.simulate;
    if s.replicates == 0 {
        return Err(Error::Config("replicates must be at least 1".into()));
    }
    let mut spec = SimulationSpec::new(cfg.kind(), s.setting, s.n)?;
    spec.truth = s.truth.clone().unwrap_or_else(|| Truth::default_for(cfg.kind()));
    fs::create_dir_all(&cfg.output)?;
    let mut outputs = Vec::new();
    for r in 0..s.replicates {
        let sim = simulate_data(&spec, &mut RngStream::with_stream(seed, r as u64))?;
        let dir = cfg.output.join(format!("replicate_{:03}", r + 1));
        fs::create_dir_all(&dir)?;
        let (ind, dy, truth) = (dir.join("individuals.csv"), dir.join("dyads.csv"), dir.join("truth.json"));
        write_dataset(&sim.data, &ind, &dy)?;
        fs::write(&truth, serde_json::to_string_pretty(&sim.truth_record()?)?)?;
        outputs.extend([ind, dy, truth]);
    }
    info!("wrote {} replicate(s) to {}", s.replicates, cfg.output.display());
    finish("simulate", cfg, seed, Vec::new(), outputs, start)
}

pub fn study(cfg: &RunConfig, seed: u64) -> Result<()> {
    let start = Instant::now();
    let st = &cfg.study;
    let plan = StudyPlan {
        spec: cfg.model.clone(),
        schedule: cfg.mcmc.clone(),
        settings: st.settings.clone(),
        n: st.n,
        replicates: st.replicates,
        variants: st.variants.clone(),
        level: st.level,
        truth: cfg.simulate.truth.clone(),
    };
    let report = run_study(&plan, seed)?;
    for (s, r, v, msg) in &report.failures {
        warn!("setting {s} replicate {r} {v}: {msg}");
    }
    let factor = if cfg.kind() == OutcomeKind::Patristic && st.scale_mae { 100.0 } else { 1.0 };
    let table = report.render(factor);
    emit(&table);
    fs::create_dir_all(&cfg.output)?;
    let (txt, json, scores) = (cfg.output.join("study.txt"), cfg.output.join("study.json"), cfg.output.join("scores.csv"));
    fs::write(&txt, &table)?;
    fs::write(&json, serde_json::to_string_pretty(&report)?)?;
    let mut w = csv::Writer::from_path(&scores)?;
    for s in &report.scores {
        w.serialize(s)?;
    }
    w.flush()?;
    finish("study", cfg, seed, Vec::new(), vec![txt, json, scores], start)
}

/// The fit's own config and dataset, recovered from its manifest.
fn load_fit(dir: &Path) -> Result<(RunConfig, DyadDataset, dyadgp::PosteriorSamples)> {
    let manifest = Manifest::read(&dir.join(MANIFEST))?;
    if manifest.command != "fit" {
        return Err(Error::Config(format!("{} is the output of `{}`, not of a fit", dir.display(), manifest.command)));
    }
    let fit_cfg = RunConfig::from_toml_str(&manifest.config)?;
    let data = read_dataset(fit_cfg.require_data()?, fit_cfg.kind())?;
    let samples = read_samples(&dir.join(SAMPLES_DIR))?;
    Ok((fit_cfg, data, samples))
}

pub fn predict(cfg: &RunConfig, seed: u64) -> Result<()> {
    let start = Instant::now();
    let dir = cfg
        .predict
        .fit
        .as_ref()
        .ok_or_else(|| Error::Config("predict needs --fit or predict.fit".into()))?;
    let (fit_cfg, data, samples) = load_fit(dir)?;
    let (locs, _) = data.locations(fit_cfg.model.dedup_tol, fit_cfg.model.distance_scale)?;
    let bounds = match cfg.predict.bounds {
        Some(b) => b,
        None => Bounds::from_points(&data.points())?,
    };
    let grid = make_grid(bounds, cfg.predict.grid_count)?;
    let rows = predict_grid(&samples, &locs, &grid, &RngStream::new(seed))?;
    fs::create_dir_all(&cfg.output)?;
    let path = cfg.output.join("predictions.csv");
    let mut w = csv::Writer::from_path(&path)?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    info!("{} grid points, {} rows", grid.len(), rows.len());
    finish("predict", cfg, seed, hashes(&[&dir.join(MANIFEST)])?, vec![path], start)
}

pub fn diagnose(dir: &Path) -> Result<()> {
    // the dataset only feeds the random-effect table, so carry on without it
    let (samples, data) = match load_fit(dir) {
        Ok((_, d, s)) => (s, Some(d)),
        Err(e) => {
            warn!("dataset unavailable ({e}); random-effect table skipped");
            (read_samples(&dir.join(SAMPLES_DIR))?, None)
        }
    };
    emit(&Summary::new(&samples, data.as_ref())?.render());
    Ok(())
}
