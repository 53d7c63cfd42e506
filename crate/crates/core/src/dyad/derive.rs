//! Raw individual tables, covariate encoding and pair-covariate derivation.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::Individual;
use crate::error::{Error, Result};
use crate::geometry::{euclid, Point};

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Numeric(Vec<f64>),
    Categorical(Vec<String>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Individuals as read from disk, before encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct IndividualTable {
    pub ids: Vec<String>,
    pub locations: Vec<Point>,
    pub columns: Vec<(String, Column)>,
}

impl IndividualTable {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, c)| c)
            .ok_or_else(|| Error::Config(format!("individual field `{name}` not found")))
    }

    fn numeric(&self, name: &str) -> Result<&[f64]> {
        match self.column(name)? {
            Column::Numeric(v) => Ok(v),
            Column::Categorical(_) => Err(Error::Config(format!("field `{name}` is categorical, expected numeric"))),
        }
    }
}

/// A rule producing one or more pair-level covariate columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum PairRule {
    Intercept,
    /// Euclidean distance between the two locations, in input units
    /// divided by `per` (e.g. 50 for "per 50 km").
    Distance {
        #[serde(default = "one")]
        per: f64,
    },
    /// 1 when the two individuals share a location.
    SameLocation {
        #[serde(default)]
        tol: f64,
    },
    /// |value_i − value_j| of a numeric individual field.
    AbsDiff {
        field: String,
        #[serde(default = "one")]
        per: f64,
    },
    /// For a two-level categorical field: indicators for the pair classes
    /// `both_<level>` and `mixed`, dropping `reference`.
    PairCategory { field: String, reference: String },
}

fn one() -> f64 {
    1.0
}

/// Symmetric pair covariates indexed by unordered pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairCovariateTable {
    pub names: Vec<String>,
    n: usize,
    values: Vec<Vec<f64>>,
}

impl PairCovariateTable {
    fn index(&self, i: usize, j: usize) -> usize {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        // row-major position of (a, b) in the strict upper triangle
        a * (2 * self.n - a - 1) / 2 + (b - a - 1)
    }

    pub fn get(&self, i: usize, j: usize) -> &[f64] {
        &self.values[self.index(i, j)]
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

pub fn derive_pair_covariates(table: &IndividualTable, rules: &[PairRule]) -> Result<PairCovariateTable> {
    let n = table.len();
    let mut names = Vec::new();
    let mut columns: Vec<Box<dyn Fn(usize, usize) -> f64 + '_>> = Vec::new();
    for rule in rules {
        match rule {
            PairRule::Intercept => {
                names.push("intercept".to_string());
                columns.push(Box::new(|_, _| 1.0));
            }
            PairRule::Distance { per } => {
                check_per(*per)?;
                let per = *per;
                names.push("distance".to_string());
                columns.push(Box::new(move |i, j| euclid(table.locations[i], table.locations[j]) / per));
            }
            PairRule::SameLocation { tol } => {
                let tol = *tol;
                names.push("same_location".to_string());
                columns.push(Box::new(move |i, j| {
                    if euclid(table.locations[i], table.locations[j]) <= tol {
                        1.0
                    } else {
                        0.0
                    }
                }));
            }
            PairRule::AbsDiff { field, per } => {
                check_per(*per)?;
                let per = *per;
                let v = table.numeric(field)?;
                names.push(format!("{field}_diff"));
                columns.push(Box::new(move |i, j| (v[i] - v[j]).abs() / per));
            }
            PairRule::PairCategory { field, reference } => {
                let labels = match table.column(field)? {
                    Column::Categorical(v) => v,
                    Column::Numeric(_) => {
                        return Err(Error::Config(format!("pair category rule needs a categorical field, `{field}` is numeric")))
                    }
                };
                let levels: Vec<String> = labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
                if levels.len() > 2 {
                    return Err(Error::Config(format!(
                        "pair category rule supports two-level fields; `{field}` has {}",
                        levels.len()
                    )));
                }
                let mut classes: Vec<String> = levels.iter().map(|l| format!("both_{l}")).collect();
                classes.push("mixed".to_string());
                if !classes.contains(reference) {
                    return Err(Error::Config(format!(
                        "reference class `{reference}` for `{field}` must be one of {classes:?}"
                    )));
                }
                for class in classes.into_iter().filter(|c| c != reference) {
                    names.push(format!("{field}:{class}"));
                    columns.push(Box::new(move |i, j| {
                        let (a, b) = (&labels[i], &labels[j]);
                        let this = if a == b { format!("both_{a}") } else { "mixed".to_string() };
                        if this == class {
                            1.0
                        } else {
                            0.0
                        }
                    }));
                }
            }
        }
    }
    let mut values = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            values.push(columns.iter().map(|f| f(i, j)).collect());
        }
    }
    Ok(PairCovariateTable { names, n, values })
}

fn check_per(per: f64) -> Result<()> {
    if per > 0.0 && per.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("scale divisor must be positive, got {per}")))
    }
}

/// Which individual fields become the covariate vector d_i.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IndividualEncoding {
    #[serde(default)]
    pub numeric: Vec<String>,
    /// Categorical field with its reference level; one-hot over the rest.
    #[serde(default)]
    pub categorical: Vec<CategoricalField>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalField {
    pub field: String,
    pub reference: String,
}

pub fn encode_individuals(table: &IndividualTable, enc: &IndividualEncoding) -> Result<(Vec<Individual>, Vec<String>)> {
    let n = table.len();
    let mut names = Vec::new();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for f in &enc.numeric {
        names.push(f.clone());
        cols.push(table.numeric(f)?.to_vec());
    }
    for c in &enc.categorical {
        let labels = match table.column(&c.field)? {
            Column::Categorical(v) => v,
            Column::Numeric(_) => return Err(Error::Config(format!("field `{}` is numeric, not categorical", c.field))),
        };
        let levels: BTreeSet<&String> = labels.iter().collect();
        if !levels.contains(&c.reference) {
            return Err(Error::Config(format!(
                "reference level `{}` not present in field `{}`",
                c.reference, c.field
            )));
        }
        for level in levels.into_iter().filter(|l| **l != c.reference) {
            names.push(format!("{}={}", c.field, level));
            cols.push(labels.iter().map(|l| if l == level { 1.0 } else { 0.0 }).collect());
        }
    }
    let individuals = (0..n)
        .map(|i| Individual {
            id: table.ids[i].clone(),
            location: table.locations[i],
            covariates: cols.iter().map(|c| c[i]).collect(),
        })
        .collect();
    Ok((individuals, names))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> IndividualTable {
        IndividualTable {
            ids: vec!["a".into(), "b".into(), "c".into()],
            locations: vec![[0.0, 0.0], [0.0, 0.0], [3.0, 4.0]],
            columns: vec![
                ("age".into(), Column::Numeric(vec![30.0, 43.0, 50.0])),
                ("sex".into(), Column::Categorical(vec!["M".into(), "F".into(), "M".into()])),
            ],
        }
    }

    #[test]
    fn derivations() {
        let t = table();
        let rules = vec![
            PairRule::Intercept,
            PairRule::Distance { per: 1.0 },
            PairRule::SameLocation { tol: 0.0 },
            PairRule::AbsDiff { field: "age".into(), per: 1.0 },
            PairRule::PairCategory { field: "sex".into(), reference: "both_F".into() },
        ];
        let p = derive_pair_covariates(&t, &rules).unwrap();
        assert_eq!(p.names, vec!["intercept", "distance", "same_location", "age_diff", "sex:both_M", "sex:mixed"]);
        assert_eq!(p.get(0, 1), &[1.0, 0.0, 1.0, 13.0, 0.0, 1.0]);
        assert_eq!(p.get(1, 0), p.get(0, 1));
        assert_eq!(p.get(0, 2), &[1.0, 5.0, 0.0, 20.0, 1.0, 0.0]);
        assert_eq!(p.get(1, 2)[4..], [0.0, 1.0]);
    }

    #[test]
    fn missing_field_is_an_error() {
        let t = table();
        assert!(derive_pair_covariates(&t, &[PairRule::AbsDiff { field: "date".into(), per: 1.0 }]).is_err());
        assert!(derive_pair_covariates(&t, &[PairRule::PairCategory { field: "age".into(), reference: "mixed".into() }]).is_err());
        assert!(derive_pair_covariates(&t, &[PairRule::PairCategory { field: "sex".into(), reference: "both_X".into() }]).is_err());
    }

    #[test]
    fn one_hot_with_reference() {
        let t = table();
        let enc = IndividualEncoding {
            numeric: vec!["age".into()],
            categorical: vec![CategoricalField { field: "sex".into(), reference: "F".into() }],
        };
        let (inds, names) = encode_individuals(&t, &enc).unwrap();
        assert_eq!(names, vec!["age", "sex=M"]);
        assert_eq!(inds[1].covariates, vec![43.0, 0.0]);
        assert_eq!(inds[2].covariates, vec![50.0, 1.0]);
        let bad = IndividualEncoding { numeric: vec![], categorical: vec![CategoricalField { field: "sex".into(), reference: "X".into() }] };
        assert!(encode_individuals(&t, &bad).is_err());
    }

    #[test]
    fn stratified_share_summary() {
        // Same-location share by outcome stratum, the shape of a descriptive table.
        let t = table();
        let p = derive_pair_covariates(&t, &[PairRule::SameLocation { tol: 0.0 }]).unwrap();
        let outcomes = [(0, 1, 0.0), (0, 2, 0.3), (1, 2, 0.0)];
        let share = |positive: bool| {
            let rows: Vec<f64> = outcomes
                .iter()
                .filter(|(_, _, t)| (*t > 0.0) == positive)
                .map(|(i, j, _)| p.get(*i, *j)[0])
                .collect();
            100.0 * rows.iter().sum::<f64>() / rows.len() as f64
        };
        assert_eq!(share(false), 50.0);
        assert_eq!(share(true), 0.0);
    }
}
