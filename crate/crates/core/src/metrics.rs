//! Fidelity and information measures on videos and coded frames.

use crate::encoder::CodedSequence;
use crate::error::{Error, Result};
use crate::video::Video;

pub fn mse(a: &Video, b: &Video) -> Result<f64> {
    if (a.width(), a.height(), a.frame_count()) != (b.width(), b.height(), b.frame_count()) {
        return Err(Error::Dimension(format!(
            "cannot compare {}x{}x{} with {}x{}x{}",
            a.height(),
            a.width(),
            a.frame_count(),
            b.height(),
            b.width(),
            b.frame_count()
        )));
    }
    let sum: f64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(sum / a.pixels().len() as f64)
}

/// Peak signal-to-noise ratio in dB for 8-bit data; infinite for identical inputs.
pub fn psnr(a: &Video, b: &Video) -> Result<f64> {
    let m = mse(a, b)?;
    Ok(if m == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0 * 255.0 / m).log10()
    })
}

/// Shannon entropy of the byte histogram, in bits per pixel.
pub fn entropy_bits(pixels: &[u8]) -> f64 {
    if pixels.is_empty() {
        return 0.0;
    }
    let mut hist = [0usize; 256];
    for &p in pixels {
        hist[p as usize] += 1;
    }
    let n = pixels.len() as f64;
    hist.iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let q = c as f64 / n;
            -q * q.log2()
        })
        .sum()
}

/// Baseline "reconstruction": every normalized coded frame repeated for the
/// whole chunk it covers.
pub fn repeat_normalized(seq: &CodedSequence) -> Video {
    let n = seq.width * seq.height;
    let mut pixels = Vec::with_capacity(n * seq.chunk_len * seq.len());
    for f in &seq.frames {
        let frame = f.normalized();
        for _ in 0..seq.chunk_len {
            pixels.extend_from_slice(frame.pixels());
        }
    }
    Video::new(seq.width, seq.height, seq.chunk_len * seq.len(), pixels)
        .expect("non-empty sequence")
}
