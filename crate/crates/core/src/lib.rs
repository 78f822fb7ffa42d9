//! Pixel-wise coded exposure (PCE) video toolkit.
//!
//! * [`video`]: grayscale video cubes, `PCEV1` containers and PGM sequences.
//! * [`sensing`]: single-bump sensing matrices and the `PCESM1` format.
//! * [`encoder`]: per-chunk coded frames, normalized and raw (`PCEC1`) export.
//! * [`dictionary`], [`omp`], [`reconstruct`]: patch-wise sparse recovery
//!   over a 3D DCT dictionary.
//! * [`annotations`]: label files and per-chunk box merging.
//! * [`eval`], [`sweep`]: IoU, AP/mAP and bump/compression sweeps.
//! * [`demo`], [`synthetic`]: an end-to-end pipeline on generated scenes.

pub mod annotations;
pub mod demo;
pub mod dictionary;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod metrics;
pub mod omp;
pub mod reconstruct;
pub mod sensing;
pub mod sweep;
pub mod synthetic;
pub mod video;

pub use annotations::{BoundingBox, ChunkLabel, ClassId, FrameAnnotations};
pub use dictionary::Dictionary3D;
pub use encoder::{CodedFrame, CodedSequence, ExportMode};
pub use error::{Error, Result};
pub use eval::{ApReport, EvalConfig};
pub use omp::{OmpConfig, OmpSolution};
pub use sensing::{MatrixDistribution, SensingMatrix};
pub use video::{Frame, Video, VideoFormat};
