//! Separable orthonormal 3D DCT-II dictionary over `p x p x T` patches.
//!
//! Signal vectors are indexed `(row * p + col) * T + t`; atoms are indexed by
//! frequency `(u * p + v) * T + w`, so atom ordering is `(u, v, w)`
//! lexicographic with the temporal frequency fastest.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Orthonormal DCT-II basis of length `n`; row `k` holds frequency `k`.
pub fn dct_basis(n: usize) -> Vec<Vec<f64>> {
    let nf = n as f64;
    (0..n)
        .map(|k| {
            let scale = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
            (0..n)
                .map(|i| scale * (PI * (2 * i + 1) as f64 * k as f64 / (2.0 * nf)).cos())
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Dictionary3D {
    patch_size: usize,
    chunk_len: usize,
    spatial: Vec<Vec<f64>>,
    temporal: Vec<Vec<f64>>,
    atoms: DMatrix<f64>,
}

impl Dictionary3D {
    pub fn new(patch_size: usize, chunk_len: usize) -> Result<Self> {
        if patch_size == 0 || chunk_len == 0 {
            return Err(Error::Parameter(format!(
                "dictionary needs patch size and chunk length >= 1, got {patch_size} and {chunk_len}"
            )));
        }
        let spatial = dct_basis(patch_size);
        let temporal = dct_basis(chunk_len);
        let dim = patch_size * patch_size * chunk_len;
        let p = patch_size;
        let t_len = chunk_len;
        let atoms = DMatrix::from_fn(dim, dim, |sig, atom| {
            let (r, c, t) = (sig / (p * t_len), (sig / t_len) % p, sig % t_len);
            let (u, v, w) = (atom / (p * t_len), (atom / t_len) % p, atom % t_len);
            spatial[u][r] * spatial[v][c] * temporal[w][t]
        });
        Ok(Self {
            patch_size,
            chunk_len,
            spatial,
            temporal,
            atoms,
        })
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn chunk_len(&self) -> usize {
        self.chunk_len
    }

    /// Length of a patch signal vector, `p * p * T`.
    pub fn signal_len(&self) -> usize {
        self.patch_size * self.patch_size * self.chunk_len
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.ncols()
    }

    /// One atom per column.
    pub fn atoms(&self) -> &DMatrix<f64> {
        &self.atoms
    }

    pub fn spatial_basis(&self) -> &[Vec<f64>] {
        &self.spatial
    }

    pub fn temporal_basis(&self) -> &[Vec<f64>] {
        &self.temporal
    }

    /// For every legal bump start `s`, the sum of each temporal basis
    /// function over frames `s..s + bump_len`. Indexed `[s][w]`.
    pub fn temporal_bump_sums(&self, bump_len: usize) -> Vec<Vec<f64>> {
        (0..=self.chunk_len.saturating_sub(bump_len))
            .map(|s| {
                self.temporal
                    .iter()
                    .map(|row| row[s..s + bump_len].iter().sum())
                    .collect()
            })
            .collect()
    }
}
