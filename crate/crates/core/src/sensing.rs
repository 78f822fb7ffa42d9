//! Per-chunk sensing matrices with a single contiguous exposure bump per pixel.
//!
//! Only the start frame of each pixel's bump is stored; the binary cube
//! `S(m, n, t)` is implied by `start <= t < start + bump_len`.
//!
//! Start times are drawn from a `ChaCha8Rng` seeded with `seed_from_u64`, which
//! produces the same stream on every platform.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::video::{Frame, HeaderReader};

pub const MATRIX_MAGIC: &[u8; 6] = b"PCESM1";

/// How exposure start times are drawn within a chunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixDistribution {
    /// Every legal start frame equally likely.
    #[default]
    Uniform,
    /// Normal with mean `(chunk_len - bump_len) / 2` and standard deviation
    /// `(chunk_len - bump_len) / 4`, rounded and clamped to the legal range.
    TruncatedGaussian,
}

impl MatrixDistribution {
    pub fn tag(self) -> u8 {
        match self {
            MatrixDistribution::Uniform => 0,
            MatrixDistribution::TruncatedGaussian => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(MatrixDistribution::Uniform),
            1 => Some(MatrixDistribution::TruncatedGaussian),
            _ => None,
        }
    }

    /// `(mean, stddev)` of the gaussian mode in frames.
    pub fn gaussian_params(chunk_len: usize, bump_len: usize) -> (f64, f64) {
        let span = (chunk_len - bump_len) as f64;
        (span / 2.0, span / 4.0)
    }
}

impl std::str::FromStr for MatrixDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(MatrixDistribution::Uniform),
            "gaussian" | "truncated-gaussian" => Ok(MatrixDistribution::TruncatedGaussian),
            other => Err(Error::Parameter(format!(
                "unknown distribution {other:?}, expected uniform or gaussian"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SensingMatrix {
    width: usize,
    height: usize,
    chunk_len: usize,
    bump_len: usize,
    distribution: MatrixDistribution,
    seed: u64,
    start_times: Vec<u16>,
}

fn check_timing(chunk_len: usize, bump_len: usize) -> Result<()> {
    if bump_len == 0 {
        return Err(Error::Parameter("bump length must be at least 1".into()));
    }
    if bump_len > chunk_len {
        return Err(Error::Parameter(format!(
            "bump length {bump_len} exceeds chunk length {chunk_len}"
        )));
    }
    if chunk_len > u16::MAX as usize {
        return Err(Error::Parameter(format!(
            "chunk length {chunk_len} does not fit the u16 start-time encoding"
        )));
    }
    Ok(())
}

impl SensingMatrix {
    /// Builds a matrix from explicit start times, validating every invariant.
    pub fn from_start_times(
        height: usize,
        width: usize,
        chunk_len: usize,
        bump_len: usize,
        distribution: MatrixDistribution,
        seed: u64,
        start_times: Vec<u16>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Parameter(format!(
                "matrix must be at least 1x1, got {height}x{width}"
            )));
        }
        check_timing(chunk_len, bump_len)?;
        if start_times.len() != width * height {
            return Err(Error::Dimension(format!(
                "{height}x{width} matrix needs {} start times, got {}",
                width * height,
                start_times.len()
            )));
        }
        let max_start = chunk_len - bump_len;
        if let Some(p) = start_times.iter().position(|&s| s as usize > max_start) {
            return Err(Error::Validation(format!(
                "pixel {p}: start time {} exceeds {max_start} (chunk {chunk_len}, bump {bump_len})",
                start_times[p]
            )));
        }
        Ok(Self {
            width,
            height,
            chunk_len,
            bump_len,
            distribution,
            seed,
            start_times,
        })
    }

    pub fn generate(
        height: usize,
        width: usize,
        chunk_len: usize,
        bump_len: usize,
        distribution: MatrixDistribution,
        seed: u64,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Parameter(format!(
                "matrix must be at least 1x1, got {height}x{width}"
            )));
        }
        check_timing(chunk_len, bump_len)?;
        let max_start = (chunk_len - bump_len) as u16;
        let n = width * height;
        let start_times = if max_start == 0 {
            vec![0; n]
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            match distribution {
                MatrixDistribution::Uniform => (0..n)
                    .map(|_| rng.random_range(0..=max_start))
                    .collect(),
                MatrixDistribution::TruncatedGaussian => {
                    let (mean, sd) = MatrixDistribution::gaussian_params(chunk_len, bump_len);
                    let normal = Normal::new(mean, sd).expect("stddev positive when span > 0");
                    (0..n)
                        .map(|_| normal.sample(&mut rng).round().clamp(0.0, max_start as f64) as u16)
                        .collect()
                }
            }
        };
        Ok(Self {
            width,
            height,
            chunk_len,
            bump_len,
            distribution,
            seed,
            start_times,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn chunk_len(&self) -> usize {
        self.chunk_len
    }

    pub fn bump_len(&self) -> usize {
        self.bump_len
    }

    pub fn distribution(&self) -> MatrixDistribution {
        self.distribution
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn start_times(&self) -> &[u16] {
        &self.start_times
    }

    #[inline]
    pub fn start_at(&self, row: usize, col: usize) -> usize {
        self.start_times[row * self.width + col] as usize
    }

    /// Whether pixel `p` (row-major) is exposed during frame `t`.
    #[inline]
    pub fn is_exposed(&self, p: usize, t: usize) -> bool {
        let s = self.start_times[p] as usize;
        s <= t && t < s + self.bump_len
    }

    /// Binary exposure mask (0 or 1 per pixel) for one frame of the chunk.
    pub fn mask_at(&self, frame_index: usize) -> Result<Frame> {
        if frame_index >= self.chunk_len {
            return Err(Error::Parameter(format!(
                "frame index {frame_index} outside chunk of {} frames",
                self.chunk_len
            )));
        }
        let pixels = (0..self.start_times.len())
            .map(|p| self.is_exposed(p, frame_index) as u8)
            .collect();
        Frame::new(self.width, self.height, pixels)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(6 + 16 + 8 + 1 + 2 * self.start_times.len());
        out.extend_from_slice(MATRIX_MAGIC);
        for d in [self.height, self.width, self.chunk_len, self.bump_len] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.push(self.distribution.tag());
        for s in &self.start_times {
            out.extend_from_slice(&s.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = HeaderReader::new(bytes);
        r.magic(MATRIX_MAGIC)?;
        let height = r.u32()? as usize;
        let width = r.u32()? as usize;
        let chunk_len = r.u32()? as usize;
        let bump_len = r.u32()? as usize;
        let seed = r.u64()?;
        let tag_offset = r.pos;
        let tag = r.u8()?;
        let distribution = MatrixDistribution::from_tag(tag)
            .ok_or_else(|| Error::format(tag_offset, format!("unknown distribution tag {tag}")))?;
        let payload = &bytes[r.pos..];
        if payload.len() != 2 * width * height {
            return Err(Error::Dimension(format!(
                "header declares {height}x{width} start times ({} bytes), payload has {}",
                2 * width * height,
                payload.len()
            )));
        }
        let start_times = payload
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]))
            .collect();
        Self::from_start_times(height, width, chunk_len, bump_len, distribution, seed, start_times)
    }
}

pub fn save_matrix(matrix: &SensingMatrix, path: &Path) -> Result<()> {
    fs::write(path, matrix.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_matrix(path: &Path) -> Result<SensingMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    SensingMatrix::from_bytes(&bytes)
}
