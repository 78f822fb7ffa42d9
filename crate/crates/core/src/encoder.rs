//! Coded-exposure encoder: one coded frame per chunk of `chunk_len` frames.
//!
//! Each coded pixel holds the exact integer sum of the frames it was exposed
//! for. Sums fit in `u16` since at most `255 * bump_len` with
//! `bump_len <= u16::MAX / 255`.

use std::fs;
use std::path::Path;

use log::warn;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sensing::{MatrixDistribution, SensingMatrix};
use crate::video::{save_video, Frame, HeaderReader, Video, VideoFormat};

pub const CODED_MAGIC: &[u8; 5] = b"PCEC1";

/// Largest bump length whose sums are guaranteed to fit in 16 bits.
pub const MAX_BUMP_LEN: usize = u16::MAX as usize / 255;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodedFrame {
    pub width: usize,
    pub height: usize,
    pub sums: Vec<u16>,
    pub bump_len: usize,
    pub chunk_index: usize,
    /// Matrix used to produce this frame; absent when loaded from a coded container.
    pub matrix: Option<SensingMatrix>,
}

/// Rounds `sum / bump_len` half away from zero (all operands are non-negative).
#[inline]
pub fn normalize_sum(sum: u16, bump_len: usize) -> u8 {
    let (s, b) = (sum as u64, bump_len as u64);
    ((2 * s + b) / (2 * b)).min(255) as u8
}

impl CodedFrame {
    /// The 8-bit export: each sum divided by the bump length.
    pub fn normalized(&self) -> Frame {
        let pixels = self
            .sums
            .iter()
            .map(|&s| normalize_sum(s, self.bump_len))
            .collect();
        Frame::new(self.width, self.height, pixels).expect("coded frame dims valid")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodedSequence {
    pub frames: Vec<CodedFrame>,
    pub width: usize,
    pub height: usize,
    pub chunk_len: usize,
    pub bump_len: usize,
    pub base_seed: u64,
    pub distribution: MatrixDistribution,
    pub source_frames: usize,
    pub dropped_frames: usize,
}

impl CodedSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Stacks the normalized exports into a video with one frame per chunk.
    pub fn normalized_video(&self) -> Video {
        let mut pixels = Vec::with_capacity(self.width * self.height * self.frames.len());
        for f in &self.frames {
            pixels.extend(f.sums.iter().map(|&s| normalize_sum(s, f.bump_len)));
        }
        Video::new(self.width, self.height, self.frames.len(), pixels)
            .expect("sequence is non-empty with valid dims")
    }

    /// Ratio of 8-bit coded payload bytes to source payload bytes.
    pub fn payload_ratio(&self) -> f64 {
        (self.frames.len() * self.width * self.height) as f64
            / (self.source_frames * self.width * self.height) as f64
    }
}

/// Applies the coded-exposure sum to one chunk.
pub fn encode_chunk(chunk: &Video, matrix: &SensingMatrix) -> Result<CodedFrame> {
    if chunk.width() != matrix.width() || chunk.height() != matrix.height() {
        return Err(Error::Parameter(format!(
            "chunk is {}x{}, matrix is {}x{}",
            chunk.height(),
            chunk.width(),
            matrix.height(),
            matrix.width()
        )));
    }
    if chunk.frame_count() != matrix.chunk_len() {
        return Err(Error::Parameter(format!(
            "chunk has {} frames, matrix expects {}",
            chunk.frame_count(),
            matrix.chunk_len()
        )));
    }
    if matrix.bump_len() > MAX_BUMP_LEN {
        return Err(Error::Parameter(format!(
            "bump length {} overflows 16-bit sums (max {MAX_BUMP_LEN})",
            matrix.bump_len()
        )));
    }
    let n = chunk.frame_len();
    let bump = matrix.bump_len();
    let pixels = chunk.pixels();
    let sums = matrix
        .start_times()
        .iter()
        .enumerate()
        .map(|(p, &start)| {
            let start = start as usize;
            (start..start + bump)
                .map(|t| pixels[t * n + p] as u16)
                .sum::<u16>()
        })
        .collect();
    Ok(CodedFrame {
        width: chunk.width(),
        height: chunk.height(),
        sums,
        bump_len: bump,
        chunk_index: 0,
        matrix: Some(matrix.clone()),
    })
}

/// Seed for chunk `k` of a sequence started from `base_seed`.
pub fn chunk_seed(base_seed: u64, chunk_index: usize) -> u64 {
    base_seed.wrapping_add(chunk_index as u64)
}

/// Encodes every complete chunk; a trailing partial chunk is dropped.
pub fn encode_video(
    video: &Video,
    chunk_len: usize,
    bump_len: usize,
    distribution: MatrixDistribution,
    base_seed: u64,
) -> Result<CodedSequence> {
    if bump_len == 0 || bump_len > chunk_len {
        return Err(Error::Parameter(format!(
            "need chunk length >= bump length >= 1, got chunk {chunk_len}, bump {bump_len}"
        )));
    }
    let count = video.frame_count() / chunk_len;
    if count == 0 {
        return Err(Error::EmptyOutput(format!(
            "video has {} frames, fewer than one chunk of {chunk_len}",
            video.frame_count()
        )));
    }
    let dropped = video.frame_count() % chunk_len;
    if dropped > 0 {
        warn!("dropping {dropped} trailing frame(s) that do not fill a chunk of {chunk_len}");
    }
    let frames = (0..count)
        .into_par_iter()
        .map(|k| {
            let matrix = SensingMatrix::generate(
                video.height(),
                video.width(),
                chunk_len,
                bump_len,
                distribution,
                chunk_seed(base_seed, k),
            )?;
            let chunk = video.slice_frames(k * chunk_len, chunk_len)?;
            let mut coded = encode_chunk(&chunk, &matrix)?;
            coded.chunk_index = k;
            Ok(coded)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CodedSequence {
        frames,
        width: video.width(),
        height: video.height(),
        chunk_len,
        bump_len,
        base_seed,
        distribution,
        source_frames: video.frame_count(),
        dropped_frames: dropped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportMode {
    /// 8-bit `round(sum / bump_len)` frames in the given video format.
    Normalized(VideoFormat),
    /// Lossless 16-bit sums in a `PCEC1` container.
    RawSums,
}

pub fn export_coded(seq: &CodedSequence, path: &Path, mode: ExportMode) -> Result<()> {
    if seq.is_empty() {
        return Err(Error::EmptyOutput("no coded frames to export".into()));
    }
    match mode {
        ExportMode::Normalized(format) => save_video(&seq.normalized_video(), path, format),
        ExportMode::RawSums => {
            fs::write(path, encode_coded_container(&seq.frames)?).map_err(|e| Error::io(path, e))
        }
    }
}

/// `PCEC1`: magic, then height, width, frame count and bump length as
/// `u32` little-endian, then the sums as `u16` little-endian.
pub fn encode_coded_container(frames: &[CodedFrame]) -> Result<Vec<u8>> {
    let first = frames
        .first()
        .ok_or_else(|| Error::EmptyOutput("no coded frames to encode".into()))?;
    if frames.iter().any(|f| {
        f.width != first.width || f.height != first.height || f.bump_len != first.bump_len
    }) {
        return Err(Error::Dimension(
            "coded frames disagree on dimensions or bump length".into(),
        ));
    }
    let mut out = Vec::with_capacity(21 + 2 * frames.len() * first.sums.len());
    out.extend_from_slice(CODED_MAGIC);
    for d in [first.height, first.width, frames.len(), first.bump_len] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for f in frames {
        for s in &f.sums {
            out.extend_from_slice(&s.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_coded_container(bytes: &[u8]) -> Result<Vec<CodedFrame>> {
    if bytes.starts_with(crate::video::VIDEO_MAGIC) || bytes.starts_with(b"P5") {
        return Err(Error::Parameter(
            "input holds normalized 8-bit coded frames; reconstruction needs the raw 16-bit \
             sums (export with --export raw or both)"
                .into(),
        ));
    }
    let mut r = HeaderReader::new(bytes);
    r.magic(CODED_MAGIC)?;
    let height = r.u32()? as usize;
    let width = r.u32()? as usize;
    let count = r.u32()? as usize;
    let bump_len = r.u32()? as usize;
    if width == 0 || height == 0 || count == 0 || bump_len == 0 {
        return Err(Error::Dimension(format!(
            "coded container declares {height}x{width}x{count}, bump {bump_len}"
        )));
    }
    let payload = &bytes[r.pos..];
    let n = width * height;
    if payload.len() != 2 * n * count {
        return Err(Error::Dimension(format!(
            "header declares {count} coded {height}x{width} frames ({} bytes), payload has {}",
            2 * n * count,
            payload.len()
        )));
    }
    let limit = 255 * bump_len;
    let frames = payload
        .chunks_exact(2 * n)
        .enumerate()
        .map(|(k, chunk)| {
            let sums: Vec<u16> = chunk
                .chunks_exact(2)
                .map(|c| u16::from_le_bytes([c[0], c[1]]))
                .collect();
            if let Some(p) = sums.iter().position(|&s| s as usize > limit) {
                return Err(Error::Validation(format!(
                    "coded frame {k}, pixel {p}: sum {} exceeds 255 * bump {bump_len}",
                    sums[p]
                )));
            }
            Ok(CodedFrame {
                width,
                height,
                sums,
                bump_len,
                chunk_index: k,
                matrix: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(frames)
}

pub fn load_coded(path: &Path) -> Result<Vec<CodedFrame>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_coded_container(&bytes)
}
