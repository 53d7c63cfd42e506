//! Dense linear-algebra helpers shared by the samplers.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub type Chol = Cholesky<f64, Dyn>;

/// Jitter ladder applied to the diagonal when a plain factorization fails.
pub const JITTER_LADDER: [f64; 5] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Cholesky factorization with diagonal jitter escalation.
///
/// Returns the factor and the jitter that was needed (0.0 when the matrix
/// factorized as given).
pub fn cholesky_jittered(mat: &DMatrix<f64>, what: &str) -> Result<(Chol, f64)> {
    if let Some(ch) = Cholesky::new(mat.clone()) {
        return Ok((ch, 0.0));
    }
    for &jitter in JITTER_LADDER.iter() {
        let mut m = mat.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += jitter;
        }
        if let Some(ch) = Cholesky::new(m) {
            log::debug!("{what}: factorized with diagonal jitter {jitter:e}");
            return Ok((ch, jitter));
        }
    }
    Err(Error::cholesky(what))
}

/// Strict factorization, no jitter.
pub fn cholesky(mat: &DMatrix<f64>, what: &str) -> Result<Chol> {
    Cholesky::new(mat.clone()).ok_or_else(|| Error::cholesky(what))
}

pub fn log_det(ch: &Chol) -> f64 {
    ch.l_dirty().diagonal().iter().map(|d| 2.0 * d.ln()).sum()
}

/// Quadratic form `xᵀ A⁻¹ x` given the factor of `A`.
pub fn inv_quad(ch: &Chol, x: &DVector<f64>) -> f64 {
    let l = ch.l();
    let y = l
        .solve_lower_triangular(x)
        .expect("Cholesky factor has a nonzero diagonal");
    y.norm_squared()
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let n = m.nrows();
    (0..n).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol * (1.0 + m[(i, j)].abs())))
}

/// Mean of the Gaussian with precision `Q` and canonical vector `b`,
/// i.e. `Q⁻¹ b`, along with the factor of `Q`.
pub fn canonical_mean(precision: &DMatrix<f64>, b: &DVector<f64>, what: &str) -> Result<(DVector<f64>, Chol)> {
    let (ch, _) = cholesky_jittered(precision, what)?;
    let mean = ch.solve(b);
    Ok((mean, ch))
}

/// Solve `Lᵀ x = z` for the lower factor `L`.
pub fn back_substitute_transpose(ch: &Chol, z: &DVector<f64>) -> DVector<f64> {
    ch.l_dirty()
        .tr_solve_lower_triangular(z)
        .expect("Cholesky factor has a nonzero diagonal")
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with divisor `n - 1`.
pub fn sample_var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn sample_corr(a: &[f64], b: &[f64]) -> f64 {
    let ma = mean(a);
    let mb = mean(b);
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}
