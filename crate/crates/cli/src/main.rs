//! `dyadgp` command-line tool.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numerical failure.

mod commands;
mod summary;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dyadgp::config::{DataConfig, RunConfig};
use dyadgp::{Error, OutcomeKind, Variant};

#[derive(Parser)]
#[command(name = "dyadgp", version, about = "Bayesian models for spatially referenced dyadic relatedness data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration. Flags override its keys.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    /// Master seed; defaults to $DYADGP_SEED, then 1.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    chains: Option<usize>,
    /// patristic or transmission
    #[arg(long, global = true, value_parser = parse_kind)]
    model: Option<OutcomeKind>,
    /// fixed, nonspatial or spatial
    #[arg(long, global = true, value_parser = parse_variant)]
    variant: Option<Variant>,
    #[arg(long, global = true)]
    iterations: Option<usize>,
    #[arg(long, global = true)]
    burn_in: Option<usize>,
    #[arg(long, global = true)]
    thin: Option<usize>,
    /// Log progress to stderr.
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model to an individuals table and a dyads table.
    Fit {
        #[arg(long)]
        individuals: Option<PathBuf>,
        #[arg(long)]
        dyads: Option<PathBuf>,
    },
    /// Simulate datasets with truth sidecars.
    Simulate {
        #[arg(long)]
        setting: Option<u8>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// Simulate, fit every variant and score, per setting.
    Study {
        #[arg(long, value_delimiter = ',')]
        settings: Option<Vec<u8>>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// Krige the spatial random effects of a fit over a grid.
    Predict {
        /// Output directory of an earlier fit.
        #[arg(long)]
        fit: Option<PathBuf>,
        #[arg(long)]
        grid_count: Option<usize>,
    },
    /// Print the summary and diagnostics of an earlier fit.
    Diagnose {
        /// Output directory of an earlier fit.
        #[arg(long)]
        fit: PathBuf,
    },
}

fn parse_kind(s: &str) -> Result<OutcomeKind, String> {
    match s.to_ascii_lowercase().as_str() {
        "patristic" => Ok(OutcomeKind::Patristic),
        "transmission" => Ok(OutcomeKind::Transmission),
        _ => Err(format!("unknown model `{s}` (patristic or transmission)")),
    }
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn absolute(p: PathBuf) -> dyadgp::Result<PathBuf> {
    Ok(std::path::absolute(p)?)
}

/// Config file (or defaults), then flags on top.
fn build_config(cli: &Cli) -> dyadgp::Result<RunConfig> {
    let c = &cli.common;
    let mut cfg = match &c.config {
        Some(p) => RunConfig::from_file(&absolute(p.clone())?)?,
        None => RunConfig::default(),
    };
    if let Some(o) = &c.output {
        cfg.output = o.clone();
    }
    cfg.output = absolute(cfg.output)?;
    cfg.seed = c.seed.or(cfg.seed);
    if let Some(v) = c.chains {
        cfg.chains = v;
    }
    if let Some(v) = c.model {
        cfg.model.model = v;
    }
    if let Some(v) = c.variant {
        cfg.model.variant = v;
    }
    if let Some(v) = c.iterations {
        cfg.mcmc.total_iterations = v;
    }
    if let Some(v) = c.burn_in {
        cfg.mcmc.burn_in = v;
    }
    if let Some(v) = c.thin {
        cfg.mcmc.thin = v;
    }
    match &cli.command {
        Command::Fit { individuals, dyads } => {
            if individuals.is_some() || dyads.is_some() {
                let (Some(i), Some(d)) = (individuals, dyads) else {
                    return Err(Error::Config("--individuals and --dyads go together".into()));
                };
                let (i, d) = (absolute(i.clone())?, absolute(d.clone())?);
                match cfg.data.as_mut() {
                    Some(data) => {
                        data.individuals = i;
                        data.dyads = d;
                    }
                    None => {
                        cfg.data = Some(DataConfig { individuals: i, dyads: d, delimiter: ',', encoding: None, derive: Vec::new() })
                    }
                }
            }
        }
        Command::Simulate { setting, n, replicates } => {
            if let Some(v) = setting {
                cfg.simulate.setting = *v;
            }
            if let Some(v) = n {
                cfg.simulate.n = *v;
            }
            if let Some(v) = replicates {
                cfg.simulate.replicates = *v;
            }
        }
        Command::Study { settings, n, replicates } => {
            if let Some(v) = settings {
                cfg.study.settings = v.clone();
            }
            if let Some(v) = n {
                cfg.study.n = *v;
            }
            if let Some(v) = replicates {
                cfg.study.replicates = *v;
            }
        }
        Command::Predict { fit, grid_count } => {
            if let Some(f) = fit {
                cfg.predict.fit = Some(absolute(f.clone())?);
            }
            if let Some(g) = grid_count {
                cfg.predict.grid_count = *g;
            }
        }
        Command::Diagnose { .. } => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> dyadgp::Result<()> {
    let cfg = build_config(cli)?;
    let seed = cfg.effective_seed()?;
    match &cli.command {
        Command::Fit { .. } => commands::fit(&cfg, seed),
        Command::Simulate { .. } => commands::simulate(&cfg, seed),
        Command::Study { .. } => commands::study(&cfg, seed),
        Command::Predict { .. } => commands::predict(&cfg, seed),
        Command::Diagnose { fit } => commands::diagnose(fit),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = if cli.common.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
