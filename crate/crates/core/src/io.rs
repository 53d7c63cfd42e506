//! Delimited-text ingestion and the on-disk artifacts of a run.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::DataConfig;
use crate::dyad::{derive_pair_covariates, encode_individuals, Column, DyadDataset, IndividualEncoding, IndividualTable, OutcomeKind, PairRecord};
use crate::error::{Error, Result};
use crate::mcmc::{PosteriorSamples, SampleBlock, Variant};

const MISSING: [&str; 3] = ["", "NA", "NaN"];

fn input_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Input {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn reader(path: &Path, delimiter: char) -> Result<csv::Reader<fs::File>> {
    if !delimiter.is_ascii() {
        return Err(Error::Config(format!("delimiter `{delimiter}` must be a single ASCII character")));
    }
    let file = fs::File::open(path).map_err(|e| input_err(path, 0, e.to_string()))?;
    Ok(csv::ReaderBuilder::new()
        .delimiter(delimiter as u8)
        .trim(csv::Trim::All)
        .from_reader(file))
}

type Rows = (Vec<String>, Vec<(usize, Vec<String>)>);

fn read_rows(path: &Path, delimiter: char, leading: &[&str]) -> Result<Rows> {
    let mut rdr = reader(path, delimiter)?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| input_err(path, 1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() < leading.len() || header.iter().zip(leading).any(|(h, l)| h != l) {
        return Err(input_err(path, 1, format!("header must start with {}", leading.join(", "))));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            input_err(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let fields: Vec<String> = rec.iter().map(str::to_string).collect();
        if let Some(k) = fields.iter().position(|f| MISSING.contains(&f.as_str())) {
            return Err(input_err(path, line, format!("missing value in column `{}`; rows with missing covariates are rejected", header[k])));
        }
        rows.push((line, fields));
    }
    Ok((header, rows))
}

fn parse_num(path: &Path, line: usize, column: &str, s: &str) -> Result<f64> {
    let v: f64 = s
        .parse()
        .map_err(|_| input_err(path, line, format!("`{s}` in column `{column}` is not a number")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(input_err(path, line, format!("non-finite value in column `{column}`")))
    }
}

/// Individuals file: `id, x, y`, then covariates. A column is numeric when
/// every entry parses as a number, otherwise categorical.
pub fn read_individual_table(path: &Path, delimiter: char) -> Result<IndividualTable> {
    let (header, rows) = read_rows(path, delimiter, &["id", "x", "y"])?;
    let mut ids = Vec::with_capacity(rows.len());
    let mut locations = Vec::with_capacity(rows.len());
    for (line, f) in &rows {
        ids.push(f[0].clone());
        locations.push([parse_num(path, *line, "x", &f[1])?, parse_num(path, *line, "y", &f[2])?]);
    }
    let mut columns = Vec::new();
    for (c, name) in header.iter().enumerate().skip(3) {
        let raw: Vec<&str> = rows.iter().map(|(_, f)| f[c].as_str()).collect();
        let nums: Option<Vec<f64>> = raw.iter().map(|s| s.parse::<f64>().ok().filter(|v| v.is_finite())).collect();
        columns.push((
            name.clone(),
            match nums {
                Some(v) => Column::Numeric(v),
                None => Column::Categorical(raw.iter().map(|s| s.to_string()).collect()),
            },
        ));
    }
    Ok(IndividualTable { ids, locations, columns })
}

fn default_encoding(table: &IndividualTable) -> Result<IndividualEncoding> {
    let mut numeric = Vec::new();
    for (name, col) in &table.columns {
        match col {
            Column::Numeric(_) => numeric.push(name.clone()),
            Column::Categorical(_) => {
                return Err(Error::Config(format!(
                    "individual column `{name}` is categorical; declare it with a reference level under [data.encoding]"
                )))
            }
        }
    }
    Ok(IndividualEncoding { numeric, categorical: Vec::new() })
}

/// Read both tables, derive pair covariates and validate the dataset.
pub fn read_dataset(cfg: &DataConfig, kind: OutcomeKind) -> Result<DyadDataset> {
    let table = read_individual_table(&cfg.individuals, cfg.delimiter)?;
    let enc = match &cfg.encoding {
        Some(e) => e.clone(),
        None => default_encoding(&table)?,
    };
    let (individuals, ind_names) = encode_individuals(&table, &enc)?;
    let derived = derive_pair_covariates(&table, &cfg.derive)?;
    let index: HashMap<&str, usize> = table.ids.iter().enumerate().map(|(k, id)| (id.as_str(), k)).collect();

    let path = &cfg.dyads;
    let (header, rows) = read_rows(path, cfg.delimiter, &["id_i", "id_j", "outcome"])?;
    let mut pair_names = derived.names.clone();
    pair_names.extend(header.iter().skip(3).cloned());
    let mut pairs = Vec::with_capacity(rows.len());
    for (line, f) in &rows {
        let lookup = |s: &str| {
            index
                .get(s)
                .copied()
                .ok_or_else(|| input_err(path, *line, format!("unknown individual `{s}`")))
        };
        let (i, j) = (lookup(&f[0])?, lookup(&f[1])?);
        if i == j {
            return Err(input_err(path, *line, "a pair needs two different individuals"));
        }
        let outcome = parse_num(path, *line, "outcome", &f[2])?;
        let mut x = derived.get(i, j).to_vec();
        for (c, name) in header.iter().enumerate().skip(3) {
            x.push(parse_num(path, *line, name, &f[c])?);
        }
        pairs.push(PairRecord { i, j, x, outcome });
    }
    DyadDataset::new(individuals, ind_names, pair_names, kind, pairs)
}

fn fmt(v: f64) -> String {
    // shortest representation that parses back to the same f64
    format!("{v}")
}

/// Write a dataset so that reading it back with no derivation rules and the
/// default encoding reproduces it exactly.
pub fn write_dataset(data: &DyadDataset, individuals: &Path, dyads: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(individuals)?;
    let mut header = vec!["id".to_string(), "x".into(), "y".into()];
    header.extend(data.individual_covariate_names().iter().cloned());
    w.write_record(&header)?;
    for ind in data.individuals() {
        let mut row = vec![ind.id.clone(), fmt(ind.location[0]), fmt(ind.location[1])];
        row.extend(ind.covariates.iter().map(|v| fmt(*v)));
        w.write_record(&row)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dyads)?;
    let mut header = vec!["id_i".to_string(), "id_j".into(), "outcome".into()];
    header.extend(data.pair_covariate_names().iter().cloned());
    w.write_record(&header)?;
    let inds = data.individuals();
    for p in data.pairs() {
        let mut row = vec![inds[p.i].id.clone(), inds[p.j].id.clone(), fmt(p.outcome)];
        row.extend(p.x.iter().map(|v| fmt(*v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Block draws as rows under a one-line header of parameter names.
pub fn write_block(block: &SampleBlock, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&block.columns)?;
    for row in block.rows() {
        w.write_record(row.iter().map(|v| fmt(*v)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_block(name: &str, path: &Path) -> Result<SampleBlock> {
    let (header, rows) = read_rows(path, ',', &[])?;
    let mut block = SampleBlock::new(name, header.clone());
    for (line, f) in &rows {
        let vals = f
            .iter()
            .zip(&header)
            .map(|(s, c)| parse_num(path, *line, c, s))
            .collect::<Result<Vec<_>>>()?;
        block.push(&vals);
    }
    Ok(block)
}

/// Sidecar describing a samples directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplesMeta {
    pub model: OutcomeKind,
    pub variant: Variant,
    pub blocks: Vec<String>,
    pub chain_lengths: Vec<usize>,
    pub acceptance: std::collections::BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

pub const LOGLIK_FILE: &str = "loglik.csv";
pub const SAMPLES_META: &str = "samples.json";

/// One CSV per parameter block plus the pointwise log-density matrix.
pub fn write_samples(samples: &PosteriorSamples, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for b in &samples.blocks {
        let p = dir.join(format!("{}.csv", b.name));
        write_block(b, &p)?;
        written.push(p);
    }
    let p = dir.join(LOGLIK_FILE);
    write_block(&samples.loglik, &p)?;
    written.push(p);
    let meta = SamplesMeta {
        model: samples.model,
        variant: samples.variant,
        blocks: samples.blocks.iter().map(|b| b.name.clone()).collect(),
        chain_lengths: samples.chain_lengths.clone(),
        acceptance: samples.acceptance.clone(),
        warnings: samples.warnings.clone(),
    };
    let p = dir.join(SAMPLES_META);
    fs::write(&p, serde_json::to_string_pretty(&meta)?)?;
    written.push(p);
    Ok(written)
}

pub fn read_samples(dir: &Path) -> Result<PosteriorSamples> {
    let meta_path = dir.join(SAMPLES_META);
    let text = fs::read_to_string(&meta_path).map_err(|e| input_err(&meta_path, 0, e.to_string()))?;
    let meta: SamplesMeta = serde_json::from_str(&text)?;
    let blocks = meta
        .blocks
        .iter()
        .map(|b| read_block(b, &dir.join(format!("{b}.csv"))))
        .collect::<Result<Vec<_>>>()?;
    let loglik = read_block("loglik", &dir.join(LOGLIK_FILE))?;
    let total: usize = meta.chain_lengths.iter().sum();
    if blocks.iter().any(|b| b.n_draws() != total) || loglik.n_draws() != total {
        return Err(Error::data(format!("sample files in {} disagree on the number of draws", dir.display())));
    }
    Ok(PosteriorSamples {
        model: meta.model,
        variant: meta.variant,
        blocks,
        loglik,
        chain_lengths: meta.chain_lengths,
        acceptance: meta.acceptance,
        warnings: meta.warnings,
    })
}

/// Content hash in the style of git's SHA-256 object format:
/// sha256("blob <len>\0" ‖ content).
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| input_err(path, 0, e.to_string()))?;
    Ok(content_hash(&bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputHash {
    pub path: PathBuf,
    pub hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    /// The effective configuration, as TOML, with absolute paths.
    pub config: String,
    pub inputs: Vec<InputHash>,
    pub outputs: Vec<PathBuf>,
    pub wall_time_secs: f64,
}

impl Manifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Manifest> {
        let text = fs::read_to_string(path).map_err(|e| input_err(path, 0, e.to_string()))?;
        Ok(serde_json::from_str(&text)?)
    }
}
