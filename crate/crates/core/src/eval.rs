//! Detection scoring: IoU, per-class AP over a set of IoU thresholds, mAP.
//!
//! AP is the area under the all-point interpolated precision envelope.
//! Detections are ranked by confidence (ties keep input order) and each is
//! matched greedily to the unmatched ground-truth box of the same chunk with
//! the highest IoU, provided that IoU reaches the threshold.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotations::{BoundingBox, ChunkLabel, ClassId};
use crate::error::{Error, Result};

pub const AP_METHOD: &str = "all-point precision envelope, greedy confidence-ordered matching";

pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let w = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let h = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = w * h;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub iou_thresholds: Vec<f64>,
    /// Classes to score; `None` scores every class seen in either input.
    pub classes: Option<Vec<ClassId>>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_thresholds: coco_thresholds(),
            classes: None,
        }
    }
}

/// 0.50, 0.55, ..., 0.95.
pub fn coco_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iou_thresholds.is_empty() {
            return Err(Error::Parameter("need at least one IoU threshold".into()));
        }
        if self
            .iou_thresholds
            .iter()
            .any(|&t| !(t > 0.0 && t <= 1.0))
        {
            return Err(Error::Parameter(format!(
                "IoU thresholds must lie in (0, 1]: {:?}",
                self.iou_thresholds
            )));
        }
        if self.iou_thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Parameter(format!(
                "IoU thresholds must be strictly increasing: {:?}",
                self.iou_thresholds
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

/// A detection tagged with the chunk it belongs to.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    chunk: usize,
    bbox: BoundingBox,
    confidence: f64,
}

/// Marks each ranked detection as true (`true`) or false positive.
fn greedy_match(
    ranked: &[Candidate],
    truths: &BTreeMap<usize, Vec<BoundingBox>>,
    threshold: f64,
) -> Vec<bool> {
    let mut used: BTreeMap<usize, Vec<bool>> = truths
        .iter()
        .map(|(&k, v)| (k, vec![false; v.len()]))
        .collect();
    ranked
        .iter()
        .map(|d| {
            let Some(chunk_truths) = truths.get(&d.chunk) else {
                return false;
            };
            let taken = used.get_mut(&d.chunk).expect("same keys");
            let mut best: Option<(usize, f64)> = None;
            for (i, t) in chunk_truths.iter().enumerate() {
                if taken[i] {
                    continue;
                }
                let v = iou(&d.bbox, t);
                if v >= threshold && best.is_none_or(|(_, b)| v > b) {
                    best = Some((i, v));
                }
            }
            match best {
                Some((i, _)) => {
                    taken[i] = true;
                    true
                }
                None => false,
            }
        })
        .collect()
}

/// Area under the precision envelope for a ranked hit list.
fn envelope_ap(hits: &[bool], n_truth: usize) -> f64 {
    if n_truth == 0 {
        return 0.0;
    }
    let mut precision = Vec::with_capacity(hits.len());
    let mut recall = Vec::with_capacity(hits.len());
    let mut tp = 0usize;
    for (i, &hit) in hits.iter().enumerate() {
        tp += hit as usize;
        precision.push(tp as f64 / (i + 1) as f64);
        recall.push(tp as f64 / n_truth as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (p, r) in precision.iter().zip(&recall) {
        ap += (r - prev_recall) * p;
        prev_recall = *r;
    }
    ap
}

fn rank(mut candidates: Vec<Candidate>) -> Vec<Candidate> {
    // stable: equal confidences keep input order
    candidates.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
    candidates
}

/// AP of one class at one threshold, all boxes from a single image/chunk.
///
/// `None` when there are neither detections nor truths.
pub fn average_precision(
    detections: &[(BoundingBox, f64)],
    truths: &[BoundingBox],
    threshold: f64,
) -> Option<f64> {
    if detections.is_empty() && truths.is_empty() {
        return None;
    }
    let ranked = rank(
        detections
            .iter()
            .map(|&(bbox, confidence)| Candidate {
                chunk: 0,
                bbox,
                confidence,
            })
            .collect(),
    );
    let truths = BTreeMap::from([(0usize, truths.to_vec())]);
    let hits = greedy_match(&ranked, &truths, threshold);
    Some(envelope_ap(&hits, truths[&0].len()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: ClassId,
    pub truths: usize,
    pub detections: usize,
    /// AP per threshold; `None` when the class has neither detections nor truths.
    pub ap: Vec<Option<f64>>,
    pub counts: Vec<MatchCounts>,
    /// Mean AP over thresholds; `None` when the class has no ground truth.
    pub mean_ap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApReport {
    pub method: String,
    pub iou_thresholds: Vec<f64>,
    pub classes: Vec<ClassReport>,
    /// Mean over classes with ground truth of their mean AP.
    pub map: f64,
}

impl ApReport {
    /// AP at each threshold averaged over classes with ground truth.
    pub fn ap_by_threshold(&self) -> Vec<f64> {
        let scored: Vec<&ClassReport> = self.classes.iter().filter(|c| c.mean_ap.is_some()).collect();
        (0..self.iou_thresholds.len())
            .map(|i| {
                if scored.is_empty() {
                    0.0
                } else {
                    scored.iter().map(|c| c.ap[i].unwrap_or(0.0)).sum::<f64>() / scored.len() as f64
                }
            })
            .collect()
    }

    pub fn total_counts(&self) -> Vec<MatchCounts> {
        (0..self.iou_thresholds.len())
            .map(|i| {
                self.classes.iter().fold(MatchCounts::default(), |acc, c| MatchCounts {
                    tp: acc.tp + c.counts[i].tp,
                    fp: acc.fp + c.counts[i].fp,
                    fn_: acc.fn_ + c.counts[i].fn_,
                })
            })
            .collect()
    }

    /// `class,AP@0.50,...,meanAP` rows, one per class plus an `all` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class");
        for t in &self.iou_thresholds {
            write!(out, ",AP@{t:.2}").unwrap();
        }
        out.push_str(",meanAP\n");
        let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"));
        for c in &self.classes {
            out.push_str(c.class.name());
            for ap in &c.ap {
                write!(out, ",{}", fmt(*ap)).unwrap();
            }
            writeln!(out, ",{}", fmt(c.mean_ap)).unwrap();
        }
        out.push_str("all");
        for ap in self.ap_by_threshold() {
            write!(out, ",{ap:.6}").unwrap();
        }
        writeln!(out, ",{:.6}", self.map).unwrap();
        out
    }
}

fn group_by_class(chunks: &[ChunkLabel]) -> BTreeMap<ClassId, Vec<(usize, BoundingBox)>> {
    let mut out: BTreeMap<ClassId, Vec<(usize, BoundingBox)>> = BTreeMap::new();
    for c in chunks {
        for b in &c.boxes {
            out.entry(b.class).or_default().push((c.chunk_index, *b));
        }
    }
    out
}

/// Scores chunk-level detections against chunk-level ground truth, pooling
/// matches over all chunks per (class, threshold).
///
/// Every chunk index in `detections` must also appear in `ground_truth`.
pub fn evaluate(
    detections: &[ChunkLabel],
    ground_truth: &[ChunkLabel],
    cfg: &EvalConfig,
) -> Result<ApReport> {
    cfg.validate()?;
    let gt_chunks: BTreeSet<usize> = ground_truth.iter().map(|c| c.chunk_index).collect();
    let missing: Vec<usize> = detections
        .iter()
        .map(|c| c.chunk_index)
        .filter(|k| !gt_chunks.contains(k))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if !missing.is_empty() {
        return Err(Error::Alignment { missing });
    }

    let dets = group_by_class(detections);
    let gts = group_by_class(ground_truth);
    let classes: Vec<ClassId> = match &cfg.classes {
        Some(list) => list.clone(),
        None => dets.keys().chain(gts.keys()).copied().collect::<BTreeSet<_>>().into_iter().collect(),
    };

    let class_reports: Vec<ClassReport> = classes
        .par_iter()
        .map(|&class| {
            let class_dets = dets.get(&class).cloned().unwrap_or_default();
            let mut truths: BTreeMap<usize, Vec<BoundingBox>> =
                gt_chunks.iter().map(|&k| (k, Vec::new())).collect();
            for (k, b) in gts.get(&class).into_iter().flatten() {
                truths.get_mut(k).expect("chunk registered").push(*b);
            }
            let n_truth: usize = truths.values().map(Vec::len).sum();
            let ranked = rank(
                class_dets
                    .iter()
                    .map(|&(chunk, bbox)| Candidate {
                        chunk,
                        bbox,
                        confidence: bbox.confidence.unwrap_or(1.0),
                    })
                    .collect(),
            );
            let mut ap = Vec::with_capacity(cfg.iou_thresholds.len());
            let mut counts = Vec::with_capacity(cfg.iou_thresholds.len());
            for &threshold in &cfg.iou_thresholds {
                let hits = greedy_match(&ranked, &truths, threshold);
                let tp = hits.iter().filter(|&&h| h).count();
                counts.push(MatchCounts {
                    tp,
                    fp: hits.len() - tp,
                    fn_: n_truth - tp,
                });
                ap.push(if ranked.is_empty() && n_truth == 0 {
                    None
                } else {
                    Some(envelope_ap(&hits, n_truth))
                });
            }
            let mean_ap = (n_truth > 0).then(|| {
                ap.iter().map(|a| a.unwrap_or(0.0)).sum::<f64>() / ap.len() as f64
            });
            ClassReport {
                class,
                truths: n_truth,
                detections: ranked.len(),
                ap,
                counts,
                mean_ap,
            }
        })
        .collect();

    let scored: Vec<f64> = class_reports.iter().filter_map(|c| c.mean_ap).collect();
    let map = if scored.is_empty() {
        0.0
    } else {
        scored.iter().sum::<f64>() / scored.len() as f64
    };
    Ok(ApReport {
        method: AP_METHOD.to_string(),
        iou_thresholds: cfg.iou_thresholds.clone(),
        classes: class_reports,
        map,
    })
}
