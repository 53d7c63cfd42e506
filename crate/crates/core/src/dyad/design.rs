use nalgebra::{DMatrix, DVector};

use super::{DyadDataset, OutcomeKind};
use crate::error::{Error, Result};

/// Which individuals each outcome row touches.
#[derive(Debug, Clone, PartialEq)]
pub enum PairIncidence {
    /// Z has ones at both members of the pair.
    Symmetric { pairs: Vec<(usize, usize)> },
    /// Z_g has a one at the giver column and Z_r at the receiver column.
    Directed { giver: Vec<usize>, receiver: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrices {
    pub x: DMatrix<f64>,
    pub incidence: PairIncidence,
    pub column_names: Vec<String>,
    pub n: usize,
}

impl DesignMatrices {
    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn q(&self) -> usize {
        self.x.ncols()
    }

    /// Dense Z (patristic).
    pub fn z_dense(&self) -> Option<DMatrix<f64>> {
        match &self.incidence {
            PairIncidence::Symmetric { pairs } => {
                let mut z = DMatrix::zeros(pairs.len(), self.n);
                for (r, &(a, b)) in pairs.iter().enumerate() {
                    z[(r, a)] = 1.0;
                    z[(r, b)] = 1.0;
                }
                Some(z)
            }
            PairIncidence::Directed { .. } => None,
        }
    }

    /// Dense (Z_g, Z_r) (transmission).
    pub fn z_directed_dense(&self) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        match &self.incidence {
            PairIncidence::Directed { giver, receiver } => {
                let mut zg = DMatrix::zeros(giver.len(), self.n);
                let mut zr = DMatrix::zeros(giver.len(), self.n);
                for r in 0..giver.len() {
                    zg[(r, giver[r])] = 1.0;
                    zr[(r, receiver[r])] = 1.0;
                }
                Some((zg, zr))
            }
            PairIncidence::Symmetric { .. } => None,
        }
    }

    /// Numerical column rank of X.
    pub fn rank(&self) -> usize {
        if self.x.nrows() == 0 || self.x.ncols() == 0 {
            return 0;
        }
        let sv = self.x.clone().svd(false, false).singular_values;
        let max = sv.iter().cloned().fold(0.0, f64::max);
        let tol = max * (self.x.nrows().max(self.x.ncols()) as f64) * f64::EPSILON;
        sv.iter().filter(|&&s| s > tol).count()
    }

    pub fn x_times(&self, beta: &DVector<f64>) -> DVector<f64> {
        &self.x * beta
    }

    fn warn_rank(&self) {
        let r = self.rank();
        if r < self.q() {
            log::warn!(
                "design matrix X has rank {r} < {} columns; some coefficients are informed only by the prior",
                self.q()
            );
        }
    }
}

/// X rows `(x_jk, d_j + d_k)` and Z with ones at `j` and `k`.
pub fn build_patristic_design(data: &DyadDataset) -> Result<DesignMatrices> {
    if data.kind() != OutcomeKind::Patristic {
        return Err(Error::data("patristic design requested for transmission outcomes"));
    }
    let p_x = data.pair_covariate_names().len();
    let p_d = data.individual_covariate_names().len();
    let q = p_x + p_d;
    let rows = data.n_pairs();
    let mut x = DMatrix::zeros(rows, q);
    let mut pairs = Vec::with_capacity(rows);
    for (r, rec) in data.pairs().iter().enumerate() {
        if !(rec.outcome > 0.0) {
            return Err(Error::data("patristic outcomes must be strictly positive"));
        }
        for (c, v) in rec.x.iter().enumerate() {
            x[(r, c)] = *v;
        }
        let dj = &data.individuals()[rec.i].covariates;
        let dk = &data.individuals()[rec.j].covariates;
        for c in 0..p_d {
            x[(r, p_x + c)] = dj[c] + dk[c];
        }
        pairs.push((rec.i, rec.j));
    }
    let mut column_names: Vec<String> = data.pair_covariate_names().to_vec();
    column_names.extend(data.individual_covariate_names().iter().cloned());
    let design = DesignMatrices {
        x,
        incidence: PairIncidence::Symmetric { pairs },
        column_names,
        n: data.n(),
    };
    design.warn_rank();
    Ok(design)
}

/// For `T_jk` (k infects j): X row `(x_jk, d_k, d_j)`, giver k, receiver j.
pub fn build_transmission_design(data: &DyadDataset) -> Result<DesignMatrices> {
    if data.kind() != OutcomeKind::Transmission {
        return Err(Error::data("transmission design requested for patristic outcomes"));
    }
    let p_x = data.pair_covariate_names().len();
    let p_d = data.individual_covariate_names().len();
    let q = p_x + 2 * p_d;
    let rows = data.n_pairs();
    let mut x = DMatrix::zeros(rows, q);
    let mut giver = Vec::with_capacity(rows);
    let mut receiver = Vec::with_capacity(rows);
    for (r, rec) in data.pairs().iter().enumerate() {
        if !(rec.outcome >= 0.0 && rec.outcome < 1.0) {
            return Err(Error::data("transmission outcomes must lie in [0, 1)"));
        }
        for (c, v) in rec.x.iter().enumerate() {
            x[(r, c)] = *v;
        }
        let d_recv = &data.individuals()[rec.i].covariates;
        let d_give = &data.individuals()[rec.j].covariates;
        for c in 0..p_d {
            x[(r, p_x + c)] = d_give[c];
            x[(r, p_x + p_d + c)] = d_recv[c];
        }
        giver.push(rec.j);
        receiver.push(rec.i);
    }
    let mut column_names: Vec<String> = data.pair_covariate_names().to_vec();
    column_names.extend(data.individual_covariate_names().iter().map(|s| format!("giver:{s}")));
    column_names.extend(data.individual_covariate_names().iter().map(|s| format!("receiver:{s}")));
    let design = DesignMatrices {
        x,
        incidence: PairIncidence::Directed { giver, receiver },
        column_names,
        n: data.n(),
    };
    design.warn_rank();
    Ok(design)
}
