//! Object boxes, label files and per-chunk box merging.
//!
//! Label files are UTF-8, one box per line:
//!
//! ```text
//! # frame class confidence x_min y_min x_max y_max
//! 3 car 0.995 10.0 20.0 50.0 80.0
//! 4 person - 1 2 3 4
//! ```
//!
//! `-` marks a box without confidence (ground truth). Chunk-label files use
//! the same layout with the chunk index in the first column.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const CHUNKS_DIRECTIVE: &str = "#! chunks";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClassId(pub u16);

impl ClassId {
    pub const CAR: ClassId = ClassId(0);
    pub const PERSON: ClassId = ClassId(1);

    const NAMES: [&'static str; 2] = ["car", "person"];

    pub fn name(self) -> &'static str {
        Self::NAMES.get(self.0 as usize).copied().unwrap_or("unknown")
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::NAMES
            .iter()
            .position(|&n| n == name)
            .map(|i| ClassId(i as u16))
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Axis-aligned box in continuous pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub class: ClassId,
    pub confidence: Option<f64>,
}

impl BoundingBox {
    pub fn new(
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
        class: ClassId,
        confidence: Option<f64>,
    ) -> Result<Self> {
        let b = Self {
            x_min,
            y_min,
            x_max,
            y_max,
            class,
            confidence,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let coords = [self.x_min, self.y_min, self.x_max, self.y_max];
        if coords.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::Validation(format!(
                "box coordinates must be finite and non-negative: {coords:?}"
            )));
        }
        if self.x_min >= self.x_max {
            return Err(Error::Validation(format!(
                "x_min {} must be below x_max {}",
                self.x_min, self.x_max
            )));
        }
        if self.y_min >= self.y_max {
            return Err(Error::Validation(format!(
                "y_min {} must be below y_max {}",
                self.y_min, self.y_max
            )));
        }
        if let Some(c) = self.confidence {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::Validation(format!("confidence {c} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Checks the box lies inside a `width x height` image.
    pub fn check_bounds(&self, width: f64, height: f64) -> Result<()> {
        if self.x_max > width || self.y_max > height {
            return Err(Error::Validation(format!(
                "box ({}, {}, {}, {}) exceeds {width}x{height} image",
                self.x_min, self.y_min, self.x_max, self.y_max
            )));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    pub fn contains(&self, other: &BoundingBox) -> bool {
        self.x_min <= other.x_min
            && self.y_min <= other.y_min
            && self.x_max >= other.x_max
            && self.y_max >= other.y_max
    }

    pub fn with_confidence(mut self, confidence: Option<f64>) -> Self {
        self.confidence = confidence;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameAnnotations {
    pub frame_index: usize,
    pub boxes: Vec<BoundingBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkLabel {
    pub chunk_index: usize,
    pub boxes: Vec<BoundingBox>,
}

/// Parses `index class confidence x_min y_min x_max y_max` lines, grouped by index.
fn parse_indexed(text: &str) -> Result<BTreeMap<usize, Vec<BoundingBox>>> {
    let mut out: BTreeMap<usize, Vec<BoundingBox>> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let err = |reason: String| Error::Label {
            line: line_no,
            reason,
        };
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 7 {
            return Err(err(format!("expected 7 fields, found {}", fields.len())));
        }
        let index: usize = fields[0]
            .parse()
            .map_err(|_| err(format!("bad index {:?}", fields[0])))?;
        let class = ClassId::from_name(fields[1])
            .ok_or_else(|| err(format!("unknown class {:?}", fields[1])))?;
        let confidence = match fields[2] {
            "-" => None,
            s => Some(
                s.parse::<f64>()
                    .map_err(|_| err(format!("bad confidence {s:?}")))?,
            ),
        };
        let mut coords = [0.0; 4];
        for (c, s) in coords.iter_mut().zip(&fields[3..]) {
            *c = s
                .parse()
                .map_err(|_| err(format!("bad coordinate {s:?}")))?;
        }
        let b = BoundingBox::new(coords[0], coords[1], coords[2], coords[3], class, confidence)
            .map_err(|e| match e {
                Error::Validation(msg) => err(msg),
                other => other,
            })?;
        out.entry(index).or_default().push(b);
    }
    Ok(out)
}

fn write_indexed<'a>(rows: impl Iterator<Item = (usize, &'a [BoundingBox])>, header: &str) -> String {
    let mut out = String::new();
    writeln!(out, "# {header} class confidence x_min y_min x_max y_max").unwrap();
    for (index, boxes) in rows {
        for b in boxes {
            let conf = b.confidence.map_or_else(|| "-".to_string(), |c| c.to_string());
            writeln!(
                out,
                "{index} {} {conf} {} {} {} {}",
                b.class, b.x_min, b.y_min, b.x_max, b.y_max
            )
            .unwrap();
        }
    }
    out
}

pub fn parse_labels_str(text: &str) -> Result<Vec<FrameAnnotations>> {
    Ok(parse_indexed(text)?
        .into_iter()
        .map(|(frame_index, boxes)| FrameAnnotations { frame_index, boxes })
        .collect())
}

/// Reads a per-frame label file; frames come back sorted by index.
pub fn parse_labels(path: &Path) -> Result<Vec<FrameAnnotations>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels_str(&text)
}

pub fn format_labels(frames: &[FrameAnnotations]) -> String {
    write_indexed(
        frames.iter().map(|f| (f.frame_index, f.boxes.as_slice())),
        "frame",
    )
}

/// Parses a chunk-label file. A `#! chunks N` line declares chunks
/// `0..N`, so chunks without boxes survive a round trip.
pub fn parse_chunk_labels_str(text: &str) -> Result<Vec<ChunkLabel>> {
    let mut by_chunk = parse_indexed(text)?;
    for (i, line) in text.lines().enumerate() {
        if let Some(rest) = line.trim().strip_prefix(CHUNKS_DIRECTIVE) {
            let count: usize = rest.trim().parse().map_err(|_| Error::Label {
                line: i + 1,
                reason: format!("bad chunk count {:?}", rest.trim()),
            })?;
            for k in 0..count {
                by_chunk.entry(k).or_default();
            }
        }
    }
    Ok(by_chunk
        .into_iter()
        .map(|(chunk_index, boxes)| ChunkLabel { chunk_index, boxes })
        .collect())
}

pub fn parse_chunk_labels(path: &Path) -> Result<Vec<ChunkLabel>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_chunk_labels_str(&text)
}

pub fn format_chunk_labels(chunks: &[ChunkLabel]) -> String {
    let mut out = write_indexed(
        chunks.iter().map(|c| (c.chunk_index, c.boxes.as_slice())),
        "chunk",
    );
    if chunks.iter().enumerate().all(|(i, c)| c.chunk_index == i) {
        out.insert_str(0, &format!("{CHUNKS_DIRECTIVE} {}\n", chunks.len()));
    }
    out
}

pub fn save_chunk_labels(chunks: &[ChunkLabel], path: &Path) -> Result<()> {
    fs::write(path, format_chunk_labels(chunks)).map_err(|e| Error::io(path, e))
}

/// Drops boxes whose confidence is below `min_conf`; boxes without a
/// confidence are kept.
pub fn filter_confidence(frames: &[FrameAnnotations], min_conf: f64) -> Vec<FrameAnnotations> {
    frames
        .iter()
        .map(|f| FrameAnnotations {
            frame_index: f.frame_index,
            boxes: f
                .boxes
                .iter()
                .filter(|b| b.confidence.is_none_or(|c| c >= min_conf))
                .copied()
                .collect(),
        })
        .collect()
}

/// Smallest box enclosing every box of `class` across `frames`.
///
/// At most one box of the class may appear per frame; frames without the
/// class do not contribute.
pub fn merge_chunk(frames: &[FrameAnnotations], class: ClassId) -> Result<Option<BoundingBox>> {
    let mut merged: Option<BoundingBox> = None;
    for f in frames {
        let mut of_class = f.boxes.iter().filter(|b| b.class == class);
        let Some(b) = of_class.next() else { continue };
        if of_class.next().is_some() {
            return Err(Error::Ambiguity(format!(
                "frame {} holds more than one {class} box; cannot associate without tracking",
                f.frame_index
            )));
        }
        merged = Some(match merged {
            None => b.with_confidence(None),
            Some(m) => BoundingBox {
                x_min: m.x_min.min(b.x_min),
                y_min: m.y_min.min(b.y_min),
                x_max: m.x_max.max(b.x_max),
                y_max: m.y_max.max(b.y_max),
                class,
                confidence: None,
            },
        });
    }
    Ok(merged)
}

/// One label per complete chunk of `chunk_len` frames out of `total_frames`.
/// Annotations on frames of a dropped trailing chunk are ignored.
pub fn build_chunk_labels(
    frames: &[FrameAnnotations],
    chunk_len: usize,
    total_frames: usize,
) -> Result<Vec<ChunkLabel>> {
    if chunk_len == 0 {
        return Err(Error::Parameter("chunk length must be at least 1".into()));
    }
    let count = total_frames / chunk_len;
    let mut per_chunk: Vec<Vec<FrameAnnotations>> = vec![Vec::new(); count];
    for f in frames {
        let k = f.frame_index / chunk_len;
        if k < count {
            per_chunk[k].push(f.clone());
        }
    }
    per_chunk
        .into_iter()
        .enumerate()
        .map(|(chunk_index, chunk_frames)| {
            let classes: BTreeSet<ClassId> = chunk_frames
                .iter()
                .flat_map(|f| f.boxes.iter().map(|b| b.class))
                .collect();
            let mut boxes = Vec::with_capacity(classes.len());
            for class in classes {
                if let Some(b) = merge_chunk(&chunk_frames, class)? {
                    boxes.push(b);
                }
            }
            Ok(ChunkLabel { chunk_index, boxes })
        })
        .collect()
}
