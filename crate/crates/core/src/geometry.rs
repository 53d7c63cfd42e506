//! Spatial locations, distance scaling and the exponential correlation kernel.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Chol};

pub type Point = [f64; 2];

/// Co-location tolerance, in scaled distance units.
pub const DEFAULT_DEDUP_TOL: f64 = 1e-9;

/// How raw Euclidean distances are normalized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DistanceScale {
    /// Divide by the largest pairwise distance so scaled distances lie in [0, 1].
    #[default]
    MaxPairwise,
    Fixed(f64),
}

/// Unique locations with their scaled distance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationSet {
    coords: Vec<Point>,
    dist: DMatrix<f64>,
    scale_factor: f64,
}

/// The map from individuals to unique locations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndividualLocationMap {
    assignment: Vec<usize>,
    m: usize,
}

impl LocationSet {
    pub fn coords(&self) -> &[Point] {
        &self.coords
    }

    /// Scaled distances between unique locations.
    pub fn dist(&self) -> &DMatrix<f64> {
        &self.dist
    }

    pub fn scale_factor(&self) -> f64 {
        self.scale_factor
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn max_dist(&self) -> f64 {
        self.dist.iter().cloned().fold(0.0, f64::max)
    }

    /// Scaled distance from an arbitrary point to each unique location.
    pub fn dist_to(&self, p: Point) -> DVector<f64> {
        DVector::from_iterator(
            self.coords.len(),
            self.coords.iter().map(|c| euclid(*c, p) / self.scale_factor),
        )
    }
}

impl IndividualLocationMap {
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn location_of(&self, individual: usize) -> usize {
        self.assignment[individual]
    }

    /// Dense n×m incidence matrix V.
    pub fn incidence(&self) -> DMatrix<f64> {
        let mut v = DMatrix::zeros(self.n(), self.m);
        for (i, &l) in self.assignment.iter().enumerate() {
            v[(i, l)] = 1.0;
        }
        v
    }

    /// Individuals per location, the diagonal of VᵀV.
    pub fn counts(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.m];
        for &l in &self.assignment {
            c[l] += 1.0;
        }
        c
    }

    /// `V x` for x of length m.
    pub fn expand(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.n(), self.assignment.iter().map(|&l| x[l]))
    }

    /// `Vᵀ x` for x of length n.
    pub fn collapse(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.m);
        for (i, &l) in self.assignment.iter().enumerate() {
            out[l] += x[i];
        }
        out
    }
}

pub fn euclid(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Collapse co-located points and compute scaled distances.
pub fn build_location_set(
    points: &[Point],
    dedup_tol: f64,
    scale: DistanceScale,
) -> Result<(LocationSet, IndividualLocationMap)> {
    if points.is_empty() {
        return Err(Error::data("no locations supplied"));
    }
    if let Some(p) = points.iter().find(|p| !(p[0].is_finite() && p[1].is_finite())) {
        return Err(Error::data(format!("non-finite coordinate {p:?}")));
    }
    if !(dedup_tol >= 0.0) {
        return Err(Error::invalid("dedup tolerance must be non-negative"));
    }
    let scale_factor = match scale {
        DistanceScale::Fixed(s) if s > 0.0 && s.is_finite() => s,
        DistanceScale::Fixed(s) => return Err(Error::invalid(format!("distance scale {s} must be positive"))),
        DistanceScale::MaxPairwise => {
            let mut max = 0.0f64;
            for i in 0..points.len() {
                for j in (i + 1)..points.len() {
                    max = max.max(euclid(points[i], points[j]));
                }
            }
            if max > 0.0 {
                max
            } else {
                1.0
            }
        }
    };

    let mut coords: Vec<Point> = Vec::new();
    let mut assignment = Vec::with_capacity(points.len());
    for p in points {
        let hit = coords
            .iter()
            .position(|c| euclid(*c, *p) / scale_factor <= dedup_tol);
        match hit {
            Some(l) => assignment.push(l),
            None => {
                assignment.push(coords.len());
                coords.push(*p);
            }
        }
    }
    let m = coords.len();
    let dist = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            0.0
        } else {
            euclid(coords[i], coords[j]) / scale_factor
        }
    });
    Ok((
        LocationSet {
            coords,
            dist,
            scale_factor,
        },
        IndividualLocationMap { assignment, m },
    ))
}

/// Σ(φ) together with its factorization.
#[derive(Debug, Clone)]
pub struct SpatialCorrelation {
    phi: f64,
    sigma_mat: DMatrix<f64>,
    chol: Chol,
    jitter: f64,
}

impl SpatialCorrelation {
    pub fn phi(&self) -> f64 {
        self.phi
    }

    /// Σ(φ) without jitter; unit diagonal.
    pub fn sigma_mat(&self) -> &DMatrix<f64> {
        &self.sigma_mat
    }

    pub fn chol(&self) -> &Chol {
        &self.chol
    }

    /// Diagonal jitter used in the factorization (0 if none).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn log_det(&self) -> f64 {
        linalg::log_det(&self.chol)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    /// `xᵀ Σ(φ)⁻¹ x`.
    pub fn quad(&self, x: &DVector<f64>) -> f64 {
        linalg::inv_quad(&self.chol, x)
    }

    pub fn solve(&self, x: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(x)
    }
}

/// Exponential correlation Σ(φ)ᵢⱼ = exp(−φ dᵢⱼ) over scaled distances.
pub fn exp_corr(loc: &LocationSet, phi: f64) -> Result<SpatialCorrelation> {
    exp_corr_from_dist(loc.dist(), phi)
}

pub fn exp_corr_from_dist(dist: &DMatrix<f64>, phi: f64) -> Result<SpatialCorrelation> {
    if !(phi.is_finite() && phi > 0.0) {
        return Err(Error::invalid(format!("phi must be positive, got {phi}")));
    }
    let sigma_mat = dist.map(|d| (-phi * d).exp());
    let (chol, jitter) = linalg::cholesky_jittered(&sigma_mat, "spatial correlation Σ(φ)")?;
    Ok(SpatialCorrelation {
        phi,
        sigma_mat,
        chol,
        jitter,
    })
}

/// φ at which correlation falls to 0.05 at distance `range`.
pub fn effective_range_phi(range: f64) -> f64 {
    -(0.05f64).ln() / range
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KronOrdering {
    /// Stacked by location: Σ(φ) ⊗ Ω.
    LocationMajor,
    /// Stacked by effect type: Ω ⊗ Σ(φ).
    BlockMajor,
}

pub fn kron_cov(sigma_mat: &DMatrix<f64>, omega: &DMatrix<f64>, ordering: KronOrdering) -> Result<DMatrix<f64>> {
    linalg::cholesky(sigma_mat, "spatial correlation (Kronecker factor)")?;
    linalg::cholesky(omega, "cross-covariance Ω (Kronecker factor)")?;
    Ok(match ordering {
        KronOrdering::LocationMajor => sigma_mat.kronecker(omega),
        KronOrdering::BlockMajor => omega.kronecker(sigma_mat),
    })
}

/// Index permutation taking block-major position to location-major position:
/// entry (location l, effect e) sits at `e*m + l` block-major and `l*k + e` location-major.
pub fn block_to_location_major(m: usize, k: usize) -> Vec<usize> {
    let mut perm = vec![0; m * k];
    for e in 0..k {
        for l in 0..m {
            perm[e * m + l] = l * k + e;
        }
    }
    perm
}
