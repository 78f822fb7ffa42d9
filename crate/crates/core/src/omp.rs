//! Orthogonal Matching Pursuit.
//!
//! Atoms are picked by normalized correlation `|a_j' r| / ||a_j||` and the
//! support is refit by least squares after every pick. The least-squares
//! solve is kept incremental through a Gram-Schmidt QR of the selected
//! columns (with one reorthogonalization pass), so each iteration costs
//! `O(m * k)` on top of the correlation sweep.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmpConfig {
    /// Maximum number of atoms in the support.
    pub max_sparsity: usize,
    /// Stop once `||r|| <= residual_tol * ||y||`.
    pub residual_tol: f64,
    /// Spacing between patch windows during reconstruction, in pixels.
    pub patch_stride: usize,
}

impl Default for OmpConfig {
    fn default() -> Self {
        Self {
            max_sparsity: 16,
            residual_tol: 1e-3,
            patch_stride: 3,
        }
    }
}

impl OmpConfig {
    pub fn validate(&self, patch_size: usize) -> Result<()> {
        if self.max_sparsity == 0 {
            return Err(Error::Parameter("sparsity must be at least 1".into()));
        }
        if !(self.residual_tol >= 0.0 && self.residual_tol.is_finite()) {
            return Err(Error::Parameter(format!(
                "residual tolerance must be finite and non-negative, got {}",
                self.residual_tol
            )));
        }
        if self.patch_stride == 0 || self.patch_stride > patch_size {
            return Err(Error::Parameter(format!(
                "stride must be in 1..={patch_size}, got {}",
                self.patch_stride
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    /// Measurement was all zeros; nothing to fit.
    ZeroMeasurement,
    SparsityReached,
    ToleranceReached,
    /// Residual is orthogonal to every remaining atom.
    NoCorrelation,
    /// Newest atom was linearly dependent on the support and was dropped.
    RankDeficient,
}

/// State after one pick-and-refit iteration.
#[derive(Debug, Clone)]
pub struct OmpStep<'a> {
    pub iteration: usize,
    pub support: &'a [usize],
    pub coefficients: &'a [f64],
    pub residual: &'a DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct OmpSolution {
    /// Dense coefficient vector, one entry per atom.
    pub coefficients: DVector<f64>,
    /// Selected atoms in pick order.
    pub support: Vec<usize>,
    pub residual: DVector<f64>,
    /// `||r||` before the first pick and after each iteration.
    pub residual_norms: Vec<f64>,
    pub stop: StopReason,
}

impl OmpSolution {
    pub fn iterations(&self) -> usize {
        self.support.len()
    }

    pub fn residual_norm(&self) -> f64 {
        *self.residual_norms.last().expect("at least the initial norm")
    }

    pub fn rank_deficient(&self) -> bool {
        self.stop == StopReason::RankDeficient
    }
}

/// Runs OMP of `y` over the columns of `a`.
pub fn omp(a: &DMatrix<f64>, y: &DVector<f64>, cfg: &OmpConfig) -> Result<OmpSolution> {
    omp_observed(a, y, cfg, |_| {})
}

/// As [`omp`], calling `observer` after every completed iteration.
pub fn omp_observed<F>(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    cfg: &OmpConfig,
    mut observer: F,
) -> Result<OmpSolution>
where
    F: FnMut(&OmpStep<'_>),
{
    let (m, n) = a.shape();
    if y.len() != m {
        return Err(Error::Dimension(format!(
            "measurement has {} entries, operator has {m} rows",
            y.len()
        )));
    }
    if cfg.max_sparsity == 0 {
        return Err(Error::Parameter("sparsity must be at least 1".into()));
    }

    let y_norm = y.norm();
    let mut residual = y.clone();
    let mut residual_norms = vec![y_norm];
    let mut support: Vec<usize> = Vec::new();
    let mut coefficients = DVector::zeros(n);

    if y_norm == 0.0 {
        return Ok(OmpSolution {
            coefficients,
            support,
            residual,
            residual_norms,
            stop: StopReason::ZeroMeasurement,
        });
    }

    let col_norms: Vec<f64> = a.column_iter().map(|c| c.norm()).collect();
    let max_norm = col_norms.iter().cloned().fold(0.0, f64::max);
    let usable: Vec<bool> = col_norms.iter().map(|&c| c > 1e-12 * max_norm).collect();
    let mut selected = vec![false; n];

    // Orthonormal basis of the support span and the triangular factor R,
    // stored by column.
    let mut q_cols: Vec<DVector<f64>> = Vec::new();
    let mut r_cols: Vec<Vec<f64>> = Vec::new();
    // Projections of y onto each q.
    let mut qty: Vec<f64> = Vec::new();
    let mut support_coeffs: Vec<f64> = Vec::new();

    let stop = loop {
        let r_norm = *residual_norms.last().unwrap();
        if r_norm <= cfg.residual_tol * y_norm {
            break StopReason::ToleranceReached;
        }
        if support.len() >= cfg.max_sparsity {
            break StopReason::SparsityReached;
        }

        let correlations = a.tr_mul(&residual);
        let mut best: Option<(usize, f64)> = None;
        for j in 0..n {
            if !usable[j] || selected[j] {
                continue;
            }
            let score = correlations[j].abs() / col_norms[j];
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((j, score));
            }
        }
        let Some((j, score)) = best else {
            break StopReason::NoCorrelation;
        };
        if score <= 1e-12 * y_norm {
            break StopReason::NoCorrelation;
        }

        let col = a.column(j).into_owned();
        let mut q = col.clone();
        let mut r_col = vec![0.0; q_cols.len() + 1];
        for _pass in 0..2 {
            for (i, qi) in q_cols.iter().enumerate() {
                let h = qi.dot(&q);
                q.axpy(-h, qi, 1.0);
                r_col[i] += h;
            }
        }
        let diag = q.norm();
        if diag <= 1e-10 * col_norms[j] {
            break StopReason::RankDeficient;
        }
        q /= diag;
        r_col[q_cols.len()] = diag;

        qty.push(q.dot(y));
        q_cols.push(q);
        r_cols.push(r_col);
        support.push(j);
        selected[j] = true;

        // r = y - Q Q' y
        residual.copy_from(y);
        for (qi, &c) in q_cols.iter().zip(&qty) {
            residual.axpy(-c, qi, 1.0);
        }
        residual_norms.push(residual.norm());

        support_coeffs = back_substitute(&r_cols, &qty);
        observer(&OmpStep {
            iteration: support.len(),
            support: &support,
            coefficients: &support_coeffs,
            residual: &residual,
        });
    };

    for (&j, &c) in support.iter().zip(&support_coeffs) {
        coefficients[j] = c;
    }
    Ok(OmpSolution {
        coefficients,
        support,
        residual,
        residual_norms,
        stop,
    })
}

/// Solves `R x = b` for upper-triangular `R` given by columns.
fn back_substitute(r_cols: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let k = b.len();
    let mut x = b.to_vec();
    for i in (0..k).rev() {
        for j in i + 1..k {
            x[i] -= r_cols[j][i] * x[j];
        }
        x[i] /= r_cols[i][i];
    }
    x
}
