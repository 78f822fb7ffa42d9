//! Parameter sweeps over bump time or compression rate.
//!
//! Each axis value re-encodes the source video and re-merges the per-frame
//! labels at that chunk length. With a detections template, every row holds
//! AP at each IoU threshold plus the mean; without one, rows carry encoding
//! statistics instead.

use std::fmt::Write as _;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotations::{build_chunk_labels, parse_chunk_labels, FrameAnnotations};
use crate::encoder::encode_video;
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalConfig};
use crate::metrics::{entropy_bits, psnr, repeat_normalized};
use crate::sensing::MatrixDistribution;
use crate::video::Video;

/// Compression rate held fixed while sweeping bump time.
pub const FIXED_COMPRESSION: usize = 13;
/// Bump time held fixed while sweeping compression rate.
pub const FIXED_BUMP: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Bump,
    Compression,
}

impl SweepAxis {
    /// `(compression, bump)` for one axis value.
    pub fn settings(self, value: usize) -> (usize, usize) {
        match self {
            SweepAxis::Bump => (FIXED_COMPRESSION, value),
            SweepAxis::Compression => (value, FIXED_BUMP),
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bump" => Ok(SweepAxis::Bump),
            "compression" => Ok(SweepAxis::Compression),
            other => Err(Error::Parameter(format!(
                "unknown sweep axis {other:?}, expected bump or compression"
            ))),
        }
    }
}

/// Path template with a `{value}` placeholder, e.g. `dets/bump_{value}.txt`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectionTemplate(pub String);

impl DetectionTemplate {
    pub fn path_for(&self, value: usize) -> PathBuf {
        PathBuf::from(self.0.replace("{value}", &value.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct SweepSettings {
    pub axis: SweepAxis,
    pub values: Vec<usize>,
    pub seed: u64,
    pub distribution: MatrixDistribution,
    pub detections: Option<DetectionTemplate>,
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingStats {
    pub coded_frames: usize,
    pub entropy_bits: f64,
    pub naive_psnr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowResult {
    Ap { ap: Vec<f64>, mean_ap: f64 },
    Stats(EncodingStats),
    Unavailable(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: usize,
    pub compression: usize,
    pub bump: usize,
    pub result: RowResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub iou_thresholds: Vec<f64>,
    pub scored: bool,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn header(&self) -> Vec<String> {
        let mut cols = vec!["value".to_string()];
        if self.scored {
            cols.extend(self.iou_thresholds.iter().map(|t| format!("AP@{t:.2}")));
            cols.push("meanAP".into());
        } else {
            cols.extend(["coded_frames", "entropy_bits", "naive_psnr_db"].map(String::from));
        }
        cols
    }

    pub fn to_csv(&self) -> String {
        let header = self.header();
        let mut out = header.join(",");
        out.push('\n');
        for row in &self.rows {
            write!(out, "{}", row.value).unwrap();
            match &row.result {
                RowResult::Ap { ap, mean_ap } => {
                    for a in ap {
                        write!(out, ",{a:.6}").unwrap();
                    }
                    write!(out, ",{mean_ap:.6}").unwrap();
                }
                RowResult::Stats(s) => {
                    write!(
                        out,
                        ",{},{:.6},{:.4}",
                        s.coded_frames, s.entropy_bits, s.naive_psnr_db
                    )
                    .unwrap();
                }
                RowResult::Unavailable(_) => {
                    for _ in 1..header.len() {
                        out.push_str(",NA");
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

fn sweep_row(
    video: &Video,
    labels: &[FrameAnnotations],
    settings: &SweepSettings,
    value: usize,
) -> Result<SweepRow> {
    let (compression, bump) = settings.axis.settings(value);
    let seq = encode_video(video, compression, bump, settings.distribution, settings.seed)?;
    let result = match &settings.detections {
        Some(template) => {
            let path = template.path_for(value);
            if !path.is_file() {
                RowResult::Unavailable(format!("missing detections file {}", path.display()))
            } else {
                let truth = build_chunk_labels(labels, compression, video.frame_count())?;
                let dets = parse_chunk_labels(&path)?;
                let report = evaluate(&dets, &truth, &settings.eval)?;
                RowResult::Ap {
                    ap: report.ap_by_threshold(),
                    mean_ap: report.map,
                }
            }
        }
        None => {
            let used = seq.len() * compression;
            let source = video.slice_frames(0, used)?;
            let coded = seq.normalized_video();
            RowResult::Stats(EncodingStats {
                coded_frames: seq.len(),
                entropy_bits: entropy_bits(coded.pixels()),
                naive_psnr_db: psnr(&source, &repeat_normalized(&seq))?,
            })
        }
    };
    Ok(SweepRow {
        value,
        compression,
        bump,
        result,
    })
}

pub fn sweep(
    video: &Video,
    labels: &[FrameAnnotations],
    settings: &SweepSettings,
) -> Result<SweepTable> {
    if settings.values.is_empty() {
        return Err(Error::Parameter("sweep needs at least one value".into()));
    }
    settings.eval.validate()?;
    let rows = settings
        .values
        .par_iter()
        .map(|&v| sweep_row(video, labels, settings, v))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepTable {
        axis: settings.axis,
        iou_thresholds: settings.eval.iou_thresholds.clone(),
        scored: settings.detections.is_some(),
        rows,
    })
}
