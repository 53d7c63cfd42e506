//! Posterior-predictive random effects at new locations, one point at a time.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dyad::OutcomeKind;
use crate::error::{Error, Result};
use crate::geometry::{exp_corr, LocationSet, Point, SpatialCorrelation};
use crate::linalg;
use crate::mcmc::PosteriorSamples;
use crate::rng::RngStream;
use crate::transmission::EFFECT_BLOCKS;

pub const DEFAULT_GRID_COUNT: usize = 500;

/// Scaled distance below which a grid point counts as an observed location.
const COINCIDE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min_x: f64,
    pub max_x: f64,
    pub min_y: f64,
    pub max_y: f64,
}

impl Bounds {
    pub fn from_points(points: &[Point]) -> Result<Bounds> {
        if points.is_empty() {
            return Err(Error::invalid("cannot bound an empty point set"));
        }
        let mut b = Bounds {
            min_x: f64::INFINITY,
            max_x: f64::NEG_INFINITY,
            min_y: f64::INFINITY,
            max_y: f64::NEG_INFINITY,
        };
        for p in points {
            b.min_x = b.min_x.min(p[0]);
            b.max_x = b.max_x.max(p[0]);
            b.min_y = b.min_y.min(p[1]);
            b.max_y = b.max_y.max(p[1]);
        }
        Ok(b)
    }
}

/// Regular grid of about `count` cell centres over `bounds`; the cell shape
/// follows the aspect ratio.
pub fn make_grid(bounds: Bounds, count: usize) -> Result<Vec<Point>> {
    if count == 0 {
        return Err(Error::invalid("grid count must be positive"));
    }
    let w = bounds.max_x - bounds.min_x;
    let h = bounds.max_y - bounds.min_y;
    if !(w >= 0.0 && h >= 0.0) {
        return Err(Error::invalid("grid bounds are inverted or non-finite"));
    }
    let (nx, ny) = if w == 0.0 && h == 0.0 {
        (1, 1)
    } else if h == 0.0 {
        (count, 1)
    } else if w == 0.0 {
        (1, count)
    } else {
        let nx = ((count as f64 * w / h).sqrt().round() as usize).clamp(1, count);
        let ny = ((count as f64 / nx as f64).round() as usize).max(1);
        (nx, ny)
    };
    let mut out = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            out.push([
                bounds.min_x + (i as f64 + 0.5) * w / nx as f64,
                bounds.min_y + (j as f64 + 0.5) * h / ny as f64,
            ]);
        }
    }
    Ok(out)
}

/// Predictive draws at one point; rows are posterior draws, columns are
/// effect components (one for patristic, four for transmission).
#[derive(Debug, Clone, PartialEq)]
pub struct KrigeDraws {
    pub components: Vec<String>,
    pub eta0: Vec<Vec<f64>>,
    pub theta0: Vec<Vec<f64>>,
}

struct DrawState {
    corr: SpatialCorrelation,
    /// Σ⁻¹η per component.
    weights: Vec<DVector<f64>>,
    eta: Vec<DVector<f64>>,
    /// Cross-component covariance of η (τ² for patristic, Ω for transmission).
    cov: DMatrix<f64>,
    zeta_var: Vec<f64>,
}

/// Per-draw factorizations of a spatial fit, reused across grid points.
pub struct Kriger<'a> {
    locs: &'a LocationSet,
    components: Vec<String>,
    draws: Vec<DrawState>,
}

fn need(samples: &PosteriorSamples, name: &str) -> Result<Vec<f64>> {
    samples
        .column(name)
        .ok_or_else(|| Error::invalid(format!("kriging needs a spatial fit; `{name}` is missing")))
}

impl<'a> Kriger<'a> {
    pub fn new(samples: &PosteriorSamples, locs: &'a LocationSet) -> Result<Kriger<'a>> {
        let m = locs.len();
        let phi = need(samples, "phi")?;
        let (components, eta_blocks): (Vec<String>, Vec<String>) = match samples.model {
            OutcomeKind::Patristic => (vec!["theta".into()], vec!["eta".into()]),
            OutcomeKind::Transmission => (
                EFFECT_BLOCKS.iter().map(|b| b.to_string()).collect(),
                EFFECT_BLOCKS.iter().map(|b| format!("eta_{b}")).collect(),
            ),
        };
        let mut eta_cols = Vec::new();
        for name in &eta_blocks {
            let block = samples
                .block(name)
                .ok_or_else(|| Error::invalid(format!("kriging needs a spatial fit; `{name}` is missing")))?;
            if block.width() != m {
                return Err(Error::invalid(format!("`{name}` has {} columns but there are {m} locations", block.width())));
            }
            eta_cols.push(block);
        }
        let k = components.len();
        let (cov_cols, zeta_cols): (Vec<Vec<f64>>, Vec<Vec<f64>>) = match samples.model {
            OutcomeKind::Patristic => (vec![need(samples, "tau2")?], vec![need(samples, "sigma2_zeta")?]),
            OutcomeKind::Transmission => {
                let mut om = Vec::new();
                for a in 0..4 {
                    for b in a..4 {
                        om.push(need(samples, &format!("omega[{},{}]", EFFECT_BLOCKS[a], EFFECT_BLOCKS[b]))?);
                    }
                }
                let z = EFFECT_BLOCKS
                    .iter()
                    .map(|b| need(samples, &format!("sigma2_zeta_{b}")))
                    .collect::<Result<_>>()?;
                (om, z)
            }
        };
        let draws = (0..samples.n_draws())
            .into_par_iter()
            .map(|d| {
                let corr = exp_corr(locs, phi[d])?;
                let eta: Vec<DVector<f64>> = eta_cols.iter().map(|b| DVector::from_row_slice(b.row(d))).collect();
                let weights = eta.iter().map(|e| corr.solve(e)).collect();
                let mut cov = DMatrix::zeros(k, k);
                let mut idx = 0;
                for a in 0..k {
                    for b in a..k {
                        cov[(a, b)] = cov_cols[idx][d];
                        cov[(b, a)] = cov_cols[idx][d];
                        idx += 1;
                    }
                }
                Ok(DrawState {
                    corr,
                    weights,
                    eta,
                    cov,
                    zeta_var: zeta_cols.iter().map(|c| c[d]).collect(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Kriger { locs, components, draws })
    }

    pub fn components(&self) -> &[String] {
        &self.components
    }

    /// Conditional mean and covariance of η₀ for draw `d`. Under Ω ⊗ Σ(φ)
    /// the conditional separates: mean kᵀΣ⁻¹η_b per component, covariance
    /// Ω(1 − kᵀΣ⁻¹k).
    pub fn conditional(&self, d: usize, point: Point) -> (DVector<f64>, DMatrix<f64>) {
        let st = &self.draws[d];
        let dist = self.locs.dist_to(point);
        let k = self.components.len();
        if let Some(j) = dist.iter().position(|v| *v <= COINCIDE_TOL) {
            let mean = DVector::from_iterator(k, st.eta.iter().map(|e| e[j]));
            return (mean, DMatrix::zeros(k, k));
        }
        let kvec = dist.map(|v| (-st.corr.phi() * v).exp());
        let mean = DVector::from_iterator(k, st.weights.iter().map(|w| kvec.dot(w)));
        let resid = (1.0 - st.corr.quad(&kvec)).max(0.0);
        (mean, &st.cov * resid)
    }

    pub fn predict(&self, point: Point, rng: &mut RngStream) -> Result<KrigeDraws> {
        let k = self.components.len();
        let mut eta0 = Vec::with_capacity(self.draws.len());
        let mut theta0 = Vec::with_capacity(self.draws.len());
        for d in 0..self.draws.len() {
            let (mean, cov) = self.conditional(d, point);
            let e = if cov.iter().all(|v| *v == 0.0) {
                mean
            } else {
                let (ch, _) = linalg::cholesky_jittered(&cov, "kriging conditional covariance")?;
                let z = DVector::from_iterator(k, (0..k).map(|_| rng.std_normal()));
                mean + ch.l() * z
            };
            let t: Vec<f64> = (0..k)
                .map(|c| e[c] + self.draws[d].zeta_var[c].sqrt() * rng.std_normal())
                .collect();
            eta0.push(e.iter().cloned().collect());
            theta0.push(t);
        }
        Ok(KrigeDraws {
            components: self.components.clone(),
            eta0,
            theta0,
        })
    }
}

pub fn krige_patristic(samples: &PosteriorSamples, locs: &LocationSet, point: Point, rng: &mut RngStream) -> Result<KrigeDraws> {
    if samples.model != OutcomeKind::Patristic {
        return Err(Error::invalid("expected patristic posterior samples"));
    }
    Kriger::new(samples, locs)?.predict(point, rng)
}

pub fn krige_transmission(samples: &PosteriorSamples, locs: &LocationSet, point: Point, rng: &mut RngStream) -> Result<KrigeDraws> {
    if samples.model != OutcomeKind::Transmission {
        return Err(Error::invalid("expected transmission posterior samples"));
    }
    Kriger::new(samples, locs)?.predict(point, rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub x: f64,
    pub y: f64,
    pub component: String,
    /// θ₀, the headline prediction.
    pub mean: f64,
    pub sd: f64,
    pub eta_mean: f64,
    pub eta_sd: f64,
}

fn mean_sd(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let v: Vec<f64> = xs.collect();
    let sd = if v.len() > 1 { linalg::sample_var(&v).sqrt() } else { 0.0 };
    (linalg::mean(&v), sd)
}

/// Predictive mean and sd per grid point and component. Point `g` uses
/// stream `g` derived from `rng`, so results do not depend on scheduling.
pub fn predict_grid(samples: &PosteriorSamples, locs: &LocationSet, grid: &[Point], rng: &RngStream) -> Result<Vec<GridRow>> {
    let kriger = Kriger::new(samples, locs)?;
    let rows: Vec<Vec<GridRow>> = grid
        .par_iter()
        .enumerate()
        .map(|(g, p)| {
            let mut r = rng.derive(g as u64);
            let draws = kriger.predict(*p, &mut r)?;
            Ok(draws
                .components
                .iter()
                .enumerate()
                .map(|(c, name)| {
                    let (mean, sd) = mean_sd(draws.theta0.iter().map(|row| row[c]));
                    let (eta_mean, eta_sd) = mean_sd(draws.eta0.iter().map(|row| row[c]));
                    GridRow {
                        x: p[0],
                        y: p[1],
                        component: name.clone(),
                        mean,
                        sd,
                        eta_mean,
                        eta_sd,
                    }
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}
