use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use dyadgp::diagnostics::{random_effect_report, summarize, waic, ParamSummary, RandomEffectReport, Waic};
use dyadgp::{DyadDataset, OutcomeKind, PosteriorSamples, Result, Variant};
use serde::Serialize;

pub const LEVEL: f64 = 0.95;

#[derive(Debug, Serialize)]
pub struct Summary {
    pub model: OutcomeKind,
    pub variant: Variant,
    pub draws: usize,
    pub chains: usize,
    pub waic: Waic,
    pub parameters: Vec<ParamSummary>,
    /// exp of the regression coefficients: ratios for patristic distance,
    /// odds ratios for transmission.
    pub exponentiated: Vec<ParamSummary>,
    pub acceptance: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
    pub random_effects: Option<RandomEffectReport>,
}

impl Summary {
    pub fn new(samples: &PosteriorSamples, data: Option<&DyadDataset>) -> Result<Summary> {
        let regression = PosteriorSamples {
            blocks: samples.blocks.iter().filter(|b| b.name.starts_with("delta")).cloned().collect(),
            ..samples.clone()
        };
        let random_effects = match data {
            Some(d) if samples.variant.has_random_effects() => Some(random_effect_report(samples, d, LEVEL)?),
            _ => None,
        };
        Ok(Summary {
            model: samples.model,
            variant: samples.variant,
            draws: samples.n_draws(),
            chains: samples.chain_lengths.len(),
            waic: waic(&samples.loglik)?,
            parameters: summarize(samples, LEVEL, false),
            exponentiated: summarize(&regression, LEVEL, true),
            acceptance: samples.acceptance.clone(),
            warnings: samples.warnings.clone(),
            random_effects,
        })
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} model, {} variant", self.model, self.variant);
        let _ = writeln!(out, "{} draws from {} chain(s)", self.draws, self.chains);
        let _ = writeln!(out, "WAIC (p_waic): {}", self.waic);
        let _ = writeln!(out, "lppd: {:.2}\n", self.waic.lppd);
        table(&mut out, &self.parameters);
        let label = match self.model {
            OutcomeKind::Patristic => "ratio",
            OutcomeKind::Transmission => "odds ratio",
        };
        let _ = writeln!(out, "\nexponentiated coefficients ({label} scale)");
        table(&mut out, &self.exponentiated);
        if !self.acceptance.is_empty() {
            let _ = writeln!(out, "\nMetropolis acceptance");
            for (k, v) in &self.acceptance {
                let _ = writeln!(out, "  {k:<24}{v:.3}");
            }
        }
        if let Some(r) = &self.random_effects {
            let _ = writeln!(out, "\nrandom effects with a {:.0}% interval excluding zero", LEVEL * 100.0);
            let _ = writeln!(out, "  {:<12}{:>6}{:>6}{:>6}{:>12}{:>12}{:>12}", "block", "pos", "neg", "null", "mean|pos", "mean|neg", "mean|null");
            let cell = |v: Option<f64>| v.map_or("-".into(), |x| format!("{x:.4}"));
            for g in &r.groups {
                let _ = writeln!(
                    out,
                    "  {:<12}{:>6}{:>6}{:>6}{:>12}{:>12}{:>12}",
                    g.block,
                    g.positive,
                    g.negative,
                    g.null,
                    cell(g.mean_outcome_positive),
                    cell(g.mean_outcome_negative),
                    cell(g.mean_outcome_null)
                );
            }
            if !r.spatial_shares.is_empty() {
                let _ = writeln!(out, "\nspatial share of random-effect variance");
                table(&mut out, &r.spatial_shares);
            }
        }
        if !self.warnings.is_empty() {
            let _ = writeln!(out, "\nwarnings");
            for w in &self.warnings {
                let _ = writeln!(out, "  {w}");
            }
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
        let txt = dir.join("summary.txt");
        let json = dir.join("summary.json");
        let csv_path = dir.join("summary.csv");
        std::fs::write(&txt, self.render())?;
        std::fs::write(&json, serde_json::to_string_pretty(self)?)?;
        let mut w = csv::Writer::from_path(&csv_path)?;
        w.write_record(["parameter", "scale", "mean", "sd", "lower", "upper", "ess", "geweke_z"])?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        for (scale, rows) in [("identity", &self.parameters), ("exp", &self.exponentiated)] {
            for p in rows {
                w.write_record([
                    p.name.clone(),
                    scale.to_string(),
                    p.mean.to_string(),
                    p.sd.to_string(),
                    p.lower.to_string(),
                    p.upper.to_string(),
                    opt(p.ess),
                    opt(p.geweke_z),
                ])?;
            }
        }
        w.flush()?;
        Ok(vec![txt, json, csv_path])
    }
}

fn table(out: &mut String, rows: &[ParamSummary]) {
    let _ = writeln!(out, "  {:<28}{:>12}{:>11}{:>12}{:>12}{:>9}{:>10}", "parameter", "mean", "sd", "2.5%", "97.5%", "ESS", "Geweke z");
    for p in rows {
        let ess = p.ess.map_or("-".into(), |e| format!("{e:.0}{}", if p.ess_exceeds_n { "*" } else { "" }));
        let z = p.geweke_z.map_or("-".into(), |z| format!("{z:.2}"));
        let _ = writeln!(out, "  {:<28}{:>12.4}{:>11.4}{:>12.4}{:>12.4}{:>9}{:>10}", p.name, p.mean, p.sd, p.lower, p.upper, ess, z);
    }
}
