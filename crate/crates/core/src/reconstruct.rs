//! Patch-wise reconstruction of a chunk from its coded frame.
//!
//! Every `p x p` window of the coded sums becomes a small sparse-coding
//! problem over the 3D DCT dictionary. Windows are laid out at the configured
//! stride and the last window along each axis is shifted inward so it ends on
//! the image border. Overlapping estimates are averaged.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::dictionary::Dictionary3D;
use crate::encoder::CodedFrame;
use crate::error::{Error, Result};
use crate::omp::{omp, OmpConfig, OmpSolution};
use crate::sensing::SensingMatrix;
use crate::video::Video;

/// Coded measurements of one window together with the exposure starts of its pixels.
#[derive(Debug, Clone)]
pub struct PatchProblem {
    pub patch_size: usize,
    pub chunk_len: usize,
    pub bump_len: usize,
    /// Raw sums, row-major over the window.
    pub measurement: DVector<f64>,
    /// Bump start per window pixel, row-major.
    pub starts: Vec<usize>,
}

impl PatchProblem {
    /// Extracts the window with top-left corner `(row, col)`.
    pub fn from_window(
        coded: &CodedFrame,
        matrix: &SensingMatrix,
        patch_size: usize,
        row: usize,
        col: usize,
    ) -> Self {
        let mut measurement = DVector::zeros(patch_size * patch_size);
        let mut starts = Vec::with_capacity(patch_size * patch_size);
        for r in 0..patch_size {
            for c in 0..patch_size {
                let p = (row + r) * coded.width + col + c;
                measurement[r * patch_size + c] = coded.sums[p] as f64;
                starts.push(matrix.start_times()[p] as usize);
            }
        }
        Self {
            patch_size,
            chunk_len: matrix.chunk_len(),
            bump_len: matrix.bump_len(),
            measurement,
            starts,
        }
    }

    /// Dense binary operator mapping a patch signal to its coded sums.
    pub fn measurement_operator(&self) -> DMatrix<f64> {
        let p2 = self.patch_size * self.patch_size;
        let t_len = self.chunk_len;
        let mut phi = DMatrix::zeros(p2, p2 * t_len);
        for (pix, &s) in self.starts.iter().enumerate() {
            for t in s..s + self.bump_len {
                phi[(pix, pix * t_len + t)] = 1.0;
            }
        }
        phi
    }

    /// The masked dictionary `Phi * D`, built from the separable factors.
    #[allow(clippy::needless_range_loop)]
    pub fn effective_dictionary(&self, dict: &Dictionary3D) -> DMatrix<f64> {
        let p = self.patch_size;
        let t_len = self.chunk_len;
        let spatial = dict.spatial_basis();
        let bump_sums = dict.temporal_bump_sums(self.bump_len);
        let mut a = DMatrix::zeros(p * p, dict.atom_count());
        for u in 0..p {
            for v in 0..p {
                for w in 0..t_len {
                    let atom = (u * p + v) * t_len + w;
                    let mut column = a.column_mut(atom);
                    for r in 0..p {
                        for c in 0..p {
                            let pix = r * p + c;
                            column[pix] =
                                spatial[u][r] * spatial[v][c] * bump_sums[self.starts[pix]][w];
                        }
                    }
                }
            }
        }
        a
    }

    fn check(&self, dict: &Dictionary3D) -> Result<()> {
        if dict.patch_size() != self.patch_size || dict.chunk_len() != self.chunk_len {
            return Err(Error::Dimension(format!(
                "patch {}x{}x{} does not match dictionary {}x{}x{}",
                self.patch_size,
                self.patch_size,
                self.chunk_len,
                dict.patch_size(),
                dict.patch_size(),
                dict.chunk_len()
            )));
        }
        Ok(())
    }
}

/// Sparse-codes one patch problem against the masked dictionary.
pub fn omp_solve(problem: &PatchProblem, dict: &Dictionary3D, cfg: &OmpConfig) -> Result<OmpSolution> {
    problem.check(dict)?;
    omp(&problem.effective_dictionary(dict), &problem.measurement, cfg)
}

/// Window origins along one axis of length `len`.
pub fn window_starts(len: usize, patch: usize, stride: usize) -> Vec<usize> {
    let last = len - patch;
    let mut starts: Vec<usize> = (0..=last).step_by(stride).collect();
    if *starts.last().unwrap() != last {
        starts.push(last);
    }
    starts
}

#[derive(Debug, Clone)]
pub struct ChunkReconstruction {
    pub video: Video,
    pub elapsed: Duration,
    pub patches: usize,
    /// Patches whose solve stopped on a linearly dependent atom.
    pub rank_deficient: usize,
}

/// Estimates the `chunk_len` source frames behind one coded frame of raw sums.
pub fn reconstruct_chunk(
    coded: &CodedFrame,
    matrix: &SensingMatrix,
    dict: &Dictionary3D,
    cfg: &OmpConfig,
) -> Result<ChunkReconstruction> {
    let started = Instant::now();
    if coded.width != matrix.width() || coded.height != matrix.height() {
        return Err(Error::Dimension(format!(
            "coded frame is {}x{}, matrix is {}x{}",
            coded.height,
            coded.width,
            matrix.height(),
            matrix.width()
        )));
    }
    if coded.bump_len != matrix.bump_len() {
        return Err(Error::Dimension(format!(
            "coded frame bump {} differs from matrix bump {}",
            coded.bump_len,
            matrix.bump_len()
        )));
    }
    if dict.chunk_len() != matrix.chunk_len() {
        return Err(Error::Dimension(format!(
            "dictionary spans {} frames, matrix chunk is {}",
            dict.chunk_len(),
            matrix.chunk_len()
        )));
    }
    let p = dict.patch_size();
    if p > coded.width || p > coded.height {
        return Err(Error::Parameter(format!(
            "patch size {p} larger than {}x{} frame",
            coded.height, coded.width
        )));
    }
    cfg.validate(p)?;

    let rows = window_starts(coded.height, p, cfg.patch_stride);
    let cols = window_starts(coded.width, p, cfg.patch_stride);
    let windows: Vec<(usize, usize)> = rows
        .iter()
        .flat_map(|&r| cols.iter().map(move |&c| (r, c)))
        .collect();

    let estimates = windows
        .par_iter()
        .map(|&(r0, c0)| {
            let problem = PatchProblem::from_window(coded, matrix, p, r0, c0);
            let sol = omp_solve(&problem, dict, cfg)?;
            let mut patch = DVector::<f64>::zeros(dict.signal_len());
            for &j in &sol.support {
                patch.axpy(sol.coefficients[j], &dict.atoms().column(j), 1.0);
            }
            Ok((patch, sol.rank_deficient()))
        })
        .collect::<Result<Vec<_>>>()?;

    let (w, h, t_len) = (coded.width, coded.height, dict.chunk_len());
    let frame_len = w * h;
    let mut acc = vec![0.0f64; frame_len * t_len];
    let mut coverage = vec![0u32; frame_len];
    for (&(r0, c0), (patch, _)) in windows.iter().zip(&estimates) {
        for r in 0..p {
            for c in 0..p {
                let pix = (r0 + r) * w + c0 + c;
                coverage[pix] += 1;
                let base = (r * p + c) * t_len;
                for t in 0..t_len {
                    acc[t * frame_len + pix] += patch[base + t].clamp(0.0, 255.0);
                }
            }
        }
    }
    let pixels = acc
        .iter()
        .enumerate()
        .map(|(i, &sum)| {
            let n = coverage[i % frame_len];
            debug_assert!(n > 0);
            (sum / n as f64).round().clamp(0.0, 255.0) as u8
        })
        .collect();
    let video = Video::new(w, h, t_len, pixels)?;
    Ok(ChunkReconstruction {
        video,
        elapsed: started.elapsed(),
        patches: windows.len(),
        rank_deficient: estimates.iter().filter(|(_, rd)| *rd).count(),
    })
}
