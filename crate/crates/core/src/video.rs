//! Grayscale video cubes and their on-disk containers.
//!
//! Two formats are supported:
//!
//! * `PCEV1` raw container: ASCII magic `PCEV1`, then height, width and frame
//!   count as `u32` little-endian, then the payload (frame-major, row-major
//!   within each frame).
//! * PGM sequence: a directory holding one binary `P5` file (maxval 255) per
//!   frame. Frames are ordered by file name.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const VIDEO_MAGIC: &[u8; 5] = b"PCEV1";

/// A single 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl Frame {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "frame must be at least 1x1, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::Dimension(format!(
                "frame {width}x{height} needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }
}

/// An M x N x T luminance cube, stored frame-major then row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Video {
    width: usize,
    height: usize,
    frame_count: usize,
    pixels: Vec<u8>,
}

impl Video {
    pub fn new(width: usize, height: usize, frame_count: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || frame_count == 0 {
            return Err(Error::Dimension(format!(
                "video must be at least 1x1x1, got {width}x{height}x{frame_count}"
            )));
        }
        let expected = width * height * frame_count;
        if pixels.len() != expected {
            return Err(Error::Dimension(format!(
                "video {width}x{height}x{frame_count} needs {expected} pixels, got {}",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            frame_count,
            pixels,
        })
    }

    /// Stacks equally sized frames into a video.
    pub fn from_frames(frames: &[Frame]) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::Dimension("video needs at least one frame".into()))?;
        let (width, height) = (first.width, first.height);
        let mut pixels = Vec::with_capacity(width * height * frames.len());
        for (i, f) in frames.iter().enumerate() {
            if f.width != width || f.height != height {
                return Err(Error::Dimension(format!(
                    "frame {i} is {}x{}, expected {width}x{height}",
                    f.width, f.height
                )));
            }
            pixels.extend_from_slice(&f.pixels);
        }
        Self::new(width, height, frames.len(), pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn frame_count(&self) -> usize {
        self.frame_count
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn frame_len(&self) -> usize {
        self.width * self.height
    }

    pub fn frame_pixels(&self, t: usize) -> &[u8] {
        let n = self.frame_len();
        &self.pixels[t * n..(t + 1) * n]
    }

    pub fn frame(&self, t: usize) -> Frame {
        Frame {
            width: self.width,
            height: self.height,
            pixels: self.frame_pixels(t).to_vec(),
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, t: usize) -> u8 {
        self.pixels[t * self.frame_len() + row * self.width + col]
    }

    /// Frames `[start, start + len)` as a new video.
    pub fn slice_frames(&self, start: usize, len: usize) -> Result<Video> {
        if len == 0 || start + len > self.frame_count {
            return Err(Error::Parameter(format!(
                "frame range {start}..{} outside 0..{}",
                start + len,
                self.frame_count
            )));
        }
        let n = self.frame_len();
        Video::new(
            self.width,
            self.height,
            len,
            self.pixels[start * n..(start + len) * n].to_vec(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VideoFormat {
    RawContainer,
    PgmSequence,
}

impl VideoFormat {
    /// Directories are PGM sequences, everything else a raw container.
    pub fn detect(path: &Path) -> Self {
        if path.is_dir() {
            VideoFormat::PgmSequence
        } else {
            VideoFormat::RawContainer
        }
    }
}

pub fn load_video(path: &Path, format: VideoFormat) -> Result<Video> {
    match format {
        VideoFormat::RawContainer => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            decode_raw_container(&bytes)
        }
        VideoFormat::PgmSequence => load_pgm_sequence(path),
    }
}

pub fn save_video(video: &Video, path: &Path, format: VideoFormat) -> Result<()> {
    match format {
        VideoFormat::RawContainer => {
            fs::write(path, encode_raw_container(video)).map_err(|e| Error::io(path, e))
        }
        VideoFormat::PgmSequence => {
            fs::create_dir_all(path).map_err(|e| Error::io(path, e))?;
            for t in 0..video.frame_count {
                let file = path.join(pgm_frame_name(t));
                let bytes = encode_pgm(video.width, video.height, video.frame_pixels(t));
                fs::write(&file, bytes).map_err(|e| Error::io(&file, e))?;
            }
            Ok(())
        }
    }
}

/// File name for frame `t` in a PGM sequence; zero padding keeps
/// lexicographic order equal to frame order.
pub fn pgm_frame_name(t: usize) -> String {
    format!("frame_{t:06}.pgm")
}

pub fn encode_raw_container(video: &Video) -> Vec<u8> {
    let mut out = Vec::with_capacity(17 + video.pixels.len());
    out.extend_from_slice(VIDEO_MAGIC);
    for d in [video.height, video.width, video.frame_count] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&video.pixels);
    out
}

pub fn decode_raw_container(bytes: &[u8]) -> Result<Video> {
    let mut header = HeaderReader::new(bytes);
    header.magic(VIDEO_MAGIC)?;
    let height = header.u32()? as usize;
    let width = header.u32()? as usize;
    let frames = header.u32()? as usize;
    let payload = &bytes[header.pos..];
    let expected = height * width * frames;
    if payload.len() != expected {
        return Err(Error::Dimension(format!(
            "header declares {height}x{width}x{frames} = {expected} bytes, payload has {}",
            payload.len()
        )));
    }
    Video::new(width, height, frames, payload.to_vec())
}

/// Little-endian header cursor that reports the offset of whatever it fails on.
pub(crate) struct HeaderReader<'a> {
    bytes: &'a [u8],
    pub(crate) pos: usize,
}

impl<'a> HeaderReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn magic(&mut self, magic: &[u8]) -> Result<()> {
        for (i, &m) in magic.iter().enumerate() {
            match self.bytes.get(i) {
                Some(&b) if b == m => {}
                Some(_) => {
                    return Err(Error::format(
                        i,
                        format!("bad magic, expected {:?}", String::from_utf8_lossy(magic)),
                    ))
                }
                None => return Err(Error::format(i, "file ends inside magic")),
            }
        }
        self.pos = magic.len();
        Ok(())
    }

    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let slice = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::format(self.bytes.len(), "header truncated"))?;
        self.pos = end;
        Ok(slice.try_into().expect("slice length checked"))
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take::<1>()?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take()?))
    }
}

pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// Decodes a binary P5 image with maxval 255.
pub fn decode_pgm(bytes: &[u8]) -> Result<Frame> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::format(0, "expected binary PGM magic P5"));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while let Some(&b) = bytes.get(pos) {
                        pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format(pos, "expected unsigned integer in PGM header"));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *field = text
            .parse()
            .map_err(|_| Error::format(start, "PGM header integer out of range"))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::format(pos, format!("maxval {maxval} unsupported, need 255")));
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::format(pos, "expected single whitespace after maxval")),
    }
    let payload = &bytes[pos..];
    if payload.len() != width * height {
        return Err(Error::Dimension(format!(
            "PGM header declares {width}x{height}, payload has {} bytes",
            payload.len()
        )));
    }
    Frame::new(width, height, payload.to_vec())
}

fn load_pgm_sequence(dir: &Path) -> Result<Video> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Dimension(format!(
            "{} contains no .pgm frames",
            dir.display()
        )));
    }
    let mut frames = Vec::with_capacity(files.len());
    for file in &files {
        let bytes = fs::read(file).map_err(|e| Error::io(file, e))?;
        let frame = decode_pgm(&bytes).map_err(|e| match e {
            Error::Format { offset, reason } => Error::Format {
                offset,
                reason: format!("{}: {reason}", file.display()),
            },
            Error::Dimension(msg) => Error::Dimension(format!("{}: {msg}", file.display())),
            other => other,
        })?;
        frames.push(frame);
    }
    Video::from_frames(&frames)
}
