//! Release gate: one line per criterion, non-zero exit if any fails.
//!
//! Run with `cargo test -p pce-cli --test acceptance`.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode, Output};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use pce_core::annotations::{
    build_chunk_labels, format_labels, merge_chunk, BoundingBox, ChunkLabel, ClassId, FrameAnnotations,
};
use pce_core::dictionary::Dictionary3D;
use pce_core::encoder::{chunk_seed, encode_video, normalize_sum, CodedFrame};
use pce_core::eval::{average_precision, evaluate, iou, EvalConfig};
use pce_core::metrics::psnr;
use pce_core::omp::{omp, omp_observed, OmpConfig};
use pce_core::reconstruct::{reconstruct_chunk, PatchProblem};
use pce_core::sensing::{load_matrix, save_matrix, MatrixDistribution, SensingMatrix};
use pce_core::synthetic::{moving_objects_video, piecewise_constant_video};
use pce_core::video::{save_video, Video, VideoFormat};
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

const PCE: &str = env!("CARGO_BIN_EXE_pce");
const DISTS: [MatrixDistribution; 2] = [MatrixDistribution::Uniform, MatrixDistribution::TruncatedGaussian];

fn run_pce(args: &[&str]) -> Result<Output, String> {
    let out = Command::new(PCE)
        .args(args)
        .output()
        .map_err(|e| format!("spawning pce: {e}"))?;
    Ok(out)
}

fn run_ok(args: &[&str]) -> Result<String, String> {
    let out = run_pce(args)?;
    ensure!(
        out.status.success(),
        "pce {} exited with {:?}: {}",
        args.join(" "),
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn random_video(rng: &mut ChaCha8Rng, max_w: usize, max_h: usize, max_t: usize) -> Video {
    let (w, h, t) = (
        rng.random_range(1..=max_w),
        rng.random_range(1..=max_h),
        rng.random_range(1..=max_t),
    );
    let px = (0..w * h * t).map(|_| rng.random()).collect();
    Video::new(w, h, t, px).unwrap()
}

// ---------------------------------------------------------------- encoder

fn encoder_exactness() -> Check {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut chunks = 0;
    for case in 0..1200 {
        let v = random_video(&mut rng, 8, 8, 24);
        let chunk = rng.random_range(1..=v.frame_count());
        let bump = rng.random_range(1..=chunk);
        let dist = DISTS[case % 2];
        let seed: u64 = rng.random();
        let seq = encode_video(&v, chunk, bump, dist, seed).map_err(|e| e.to_string())?;
        ensure!(seq.len() == v.frame_count() / chunk, "case {case}: wrong frame count");
        for (k, coded) in seq.frames.iter().enumerate() {
            let m = SensingMatrix::generate(v.height(), v.width(), chunk, bump, dist, chunk_seed(seed, k))
                .map_err(|e| e.to_string())?;
            // full binary cube S(m, n, t) over the chunk
            let starts = m.start_times();
            for row in 0..v.height() {
                for col in 0..v.width() {
                    let s0 = starts[row * v.width() + col] as usize;
                    let mut sum = 0u32;
                    for t in 0..chunk {
                        let s = (s0 <= t && t < s0 + bump) as u32;
                        sum += s * v.get(row, col, k * chunk + t) as u32;
                    }
                    let got = coded.sums[row * v.width() + col];
                    ensure!(got as u32 == sum, "case {case} chunk {k} ({row},{col}): {got} vs {sum}");
                    let norm = normalize_sum(got, bump) as f64;
                    ensure!((norm - sum as f64 / bump as f64).abs() <= 0.5, "case {case}: normalized export off");
                }
            }
            chunks += 1;
        }
    }
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(format!("1200 videos, {chunks} chunks exact in {:.2} s", elapsed.as_secs_f64()))
}

// ---------------------------------------------------------------- sensing

fn sensing_invariants() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let n_seeds = 10_000;
    for i in 0..n_seeds {
        let h = rng.random_range(1..=6);
        let w = rng.random_range(1..=6);
        let chunk = rng.random_range(1..=24);
        let bump = rng.random_range(1..=chunk);
        let dist = DISTS[i % 2];
        let seed: u64 = rng.random();
        let m = SensingMatrix::generate(h, w, chunk, bump, dist, seed).map_err(|e| e.to_string())?;
        let masks: Vec<_> = (0..chunk).map(|t| m.mask_at(t).unwrap()).collect();
        for p in 0..h * w {
            let on: Vec<usize> = (0..chunk).filter(|&t| masks[t].pixels()[p] == 1).collect();
            ensure!(on.len() == bump, "seed {seed}: pixel {p} has {} ones, want {bump}", on.len());
            ensure!(on[bump - 1] - on[0] == bump - 1, "seed {seed}: pixel {p} not contiguous");
            ensure!(on[0] <= chunk - bump, "seed {seed}: start {} out of range", on[0]);
        }
        let again = SensingMatrix::generate(h, w, chunk, bump, dist, seed).map_err(|e| e.to_string())?;
        ensure!(again.to_bytes() == m.to_bytes(), "seed {seed}: regenerated matrix differs");
        if i % 500 == 0 {
            let path = dir.path().join("m.pcesm");
            save_matrix(&m, &path).map_err(|e| e.to_string())?;
            ensure!(load_matrix(&path).map_err(|e| e.to_string())? == m, "file round trip differs");
        }
    }

    // Two separate processes produce identical files.
    let a = dir.path().join("a.pcesm");
    let b = dir.path().join("b.pcesm");
    for path in [&a, &b] {
        run_ok(&[
            "gen-matrix", "--height", "32", "--width", "48", "--compression", "13", "--bump", "3",
            "--seed", "99", "--out", path.to_str().unwrap(),
        ])?;
    }
    ensure!(fs::read(&a).unwrap() == fs::read(&b).unwrap(), "gen-matrix output differs between runs");
    Ok(format!("{n_seeds} seeds, both distributions; two-run file identity holds"))
}

// ---------------------------------------------------------------- accounting

fn compression_accounting() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let px: Vec<u8> = (0..64 * 64 * 260).map(|_| rng.random()).collect();
    let v = Video::new(64, 64, 260, px).unwrap();
    let seq = encode_video(&v, 13, 3, MatrixDistribution::Uniform, 0).map_err(|e| e.to_string())?;
    ensure!(seq.len() == 20, "library produced {} coded frames", seq.len());
    ensure!(seq.payload_ratio() == 1.0 / 13.0, "library ratio {}", seq.payload_ratio());

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let input = dir.path().join("in.pcev");
    save_video(&v, &input, VideoFormat::RawContainer).map_err(|e| e.to_string())?;
    let out = dir.path().join("out");
    let stdout = run_ok(&[
        "compress", "--in", input.to_str().unwrap(), "--out", out.to_str().unwrap(),
        "--compression", "13", "--bump", "3",
    ])?;
    ensure!(stdout.contains("coded_frames=20"), "compress printed {stdout:?}");
    let header = 5 + 12;
    let src = fs::metadata(&input).unwrap().len() - header;
    let coded = fs::metadata(out.join("coded.pcev")).unwrap().len() - header;
    ensure!(coded * 13 == src, "coded payload {coded} bytes vs source {src}");
    let pgm = fs::read_dir(out.join("coded_frames")).unwrap().count();
    ensure!(pgm == 20, "{pgm} PGM frames written");
    Ok(format!("20 coded frames, payload {coded}/{src} = 1/13"))
}

// ---------------------------------------------------------------- OMP

fn masked_operator(seed: u64, bump: usize) -> DMatrix<f64> {
    let dict = Dictionary3D::new(4, 4).unwrap();
    let m = SensingMatrix::generate(4, 4, 4, bump, MatrixDistribution::Uniform, seed).unwrap();
    let coded = CodedFrame {
        width: 4,
        height: 4,
        sums: vec![0; 16],
        bump_len: bump,
        chunk_index: 0,
        matrix: None,
    };
    PatchProblem::from_window(&coded, &m, 4, 0, 0).effective_dictionary(&dict)
}

/// Exact recovery condition on normalized columns.
fn recoverable(a: &DMatrix<f64>, support: &[usize]) -> bool {
    if support.iter().any(|&j| a.column(j).norm() < 1e-6) {
        return false;
    }
    let mut an = a.clone();
    for mut c in an.column_iter_mut() {
        let n = c.norm();
        if n > 0.0 {
            c /= n;
        }
    }
    let sub = DMatrix::from_columns(&support.iter().map(|&j| an.column(j)).collect::<Vec<_>>());
    if sub.clone().svd(false, false).singular_values.min() < 1e-6 {
        return false;
    }
    let pinv = sub.pseudo_inverse(1e-12).unwrap();
    (0..a.ncols())
        .filter(|j| !support.contains(j) && a.column(*j).norm() > 1e-12)
        .all(|j| (&pinv * an.column(j)).abs().sum() < 1.0 - 1e-9)
}

fn omp_correctness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut instances = 0;
    let mut iterations = 0;
    for trial in 0..2000u64 {
        let bump = rng.random_range(1..=3);
        let a = masked_operator(trial, bump);
        let k = rng.random_range(1..=3);
        let support = sample(&mut rng, a.ncols(), k).into_vec();
        if !recoverable(&a, &support) {
            continue;
        }
        let mut x = DVector::zeros(a.ncols());
        if k == 1 {
            x[support[0]] = 3.7;
        } else {
            for &j in &support {
                let mag: f64 = rng.random_range(0.5..3.0);
                x[j] = if rng.random_bool(0.5) { mag } else { -mag };
            }
        }
        let y = &a * &x;
        let y_norm = y.norm();
        let cfg = OmpConfig { max_sparsity: k, residual_tol: 1e-12, patch_stride: 1 };
        let mut prev = y_norm;
        let mut step_error: Option<String> = None;
        let sol = omp_observed(&a, &y, &cfg, |step| {
            iterations += 1;
            let r = step.residual.norm();
            if r > prev && step_error.is_none() {
                step_error = Some(format!("trial {trial}: residual rose {prev} -> {r}"));
            }
            prev = r;
            for &j in step.support {
                let dot = a.column(j).dot(step.residual).abs();
                if dot > 1e-8 * y_norm && step_error.is_none() {
                    step_error = Some(format!("trial {trial}: |a_{j}' r| = {dot:e}"));
                }
            }
            let sub = DMatrix::from_columns(&step.support.iter().map(|&j| a.column(j)).collect::<Vec<_>>());
            let oracle = sub.svd(true, true).solve(&y, 1e-14).unwrap();
            for (c, o) in step.coefficients.iter().zip(oracle.iter()) {
                if (c - o).abs() > 1e-8 * (1.0 + o.abs()) && step_error.is_none() {
                    step_error = Some(format!("trial {trial}: LS coefficient {c} vs SVD {o}"));
                }
            }
        })
        .map_err(|e| e.to_string())?;
        if let Some(e) = step_error {
            return Err(e);
        }
        let err = (&sol.coefficients - &x).amax();
        ensure!(err <= 1e-6, "trial {trial}: {k}-sparse recovery error {err:e}");
        instances += 1;
    }
    ensure!(instances >= 200, "only {instances} recoverable instances generated");

    // Unmasked orthonormal basis: the dictionary round trip is the identity.
    let dict = Dictionary3D::new(4, 4).unwrap();
    let y = DVector::from_fn(dict.signal_len(), |_, _| rng.random_range(0.0..255.0));
    let back = dict.atoms() * (dict.atoms().transpose() * &y);
    ensure!((back - &y).amax() < 1e-8, "D D' y differs from y");
    let full = OmpConfig { max_sparsity: dict.atom_count(), residual_tol: 1e-12, patch_stride: 1 };
    let sol = omp(dict.atoms(), &y, &full).map_err(|e| e.to_string())?;
    ensure!((dict.atoms() * &sol.coefficients - &y).amax() < 1e-8, "full-basis OMP misses y");
    Ok(format!("{instances} instances (k<=3), {iterations} iterations checked"))
}

// ---------------------------------------------------------------- reconstruction

/// Measured for the 64x64 quadrant scene, seed 0.
const QUADRANT_PSNR_DB: f64 = 40.90;

fn reconstruction_fixed_point() -> Check {
    let cfg = OmpConfig::default();
    let dict = Dictionary3D::new(7, 13).unwrap();
    for (w, h, level, seed) in [(16usize, 16usize, 0u8, 1u64), (24, 19, 128, 2), (64, 64, 255, 3), (30, 12, 77, 4)] {
        let v = Video::new(w, h, 13, vec![level; w * h * 13]).unwrap();
        let m = SensingMatrix::generate(h, w, 13, 3, MatrixDistribution::Uniform, seed).unwrap();
        let coded = pce_core::encoder::encode_chunk(&v, &m).map_err(|e| e.to_string())?;
        let rec = reconstruct_chunk(&coded, &m, &dict, &cfg).map_err(|e| e.to_string())?;
        ensure!(rec.video == v, "static {w}x{h} chunk at level {level} not reproduced exactly");
    }

    let v = piecewise_constant_video(64, 64, 13);
    let seq = encode_video(&v, 13, 3, MatrixDistribution::Uniform, 0).map_err(|e| e.to_string())?;
    let m = SensingMatrix::generate(64, 64, 13, 3, MatrixDistribution::Uniform, 0).unwrap();
    let rec = reconstruct_chunk(&seq.frames[0], &m, &dict, &cfg).map_err(|e| e.to_string())?;
    let db = psnr(&v, &rec.video).map_err(|e| e.to_string())?;
    ensure!(db >= 35.0, "quadrant scene at {db:.2} dB");
    ensure!(db >= QUADRANT_PSNR_DB - 0.5, "quadrant scene regressed to {db:.2} dB (pinned {QUADRANT_PSNR_DB})");

    let (moving, _) = moving_objects_video(64, 64, 13, 0);
    let seq = encode_video(&moving, 13, 3, MatrixDistribution::Uniform, 0).map_err(|e| e.to_string())?;
    let rec_moving = reconstruct_chunk(&seq.frames[0], &m, &dict, &cfg).map_err(|e| e.to_string())?;
    Ok(format!(
        "static chunks exact; quadrant scene {db:.2} dB; per-coded-frame time {:.3} s ({} patches) / {:.3} s moving scene",
        rec.elapsed.as_secs_f64(),
        rec.patches,
        rec_moving.elapsed.as_secs_f64()
    ))
}

// ---------------------------------------------------------------- merge

fn merge_correctness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 10_000;
    for case in 0..n {
        let len = rng.random_range(1..=13);
        let boxes: Vec<BoundingBox> = (0..len)
            .map(|_| {
                let x = rng.random_range(0.0..200.0);
                let y = rng.random_range(0.0..200.0);
                let w = rng.random_range(0.5..50.0);
                let h = rng.random_range(0.5..50.0);
                BoundingBox::new(x, y, x + w, y + h, ClassId::PERSON, Some(rng.random())).unwrap()
            })
            .collect();
        let mut frames: Vec<FrameAnnotations> = boxes
            .iter()
            .enumerate()
            .map(|(i, b)| FrameAnnotations { frame_index: i, boxes: vec![*b] })
            .collect();
        // frames without the class are ignored
        frames.push(FrameAnnotations { frame_index: len, boxes: vec![] });
        let merged = merge_chunk(&frames, ClassId::PERSON).map_err(|e| e.to_string())?.unwrap();
        ensure!(boxes.iter().all(|b| merged.contains(b)), "case {case}: not containing");
        let sides = [
            boxes.iter().any(|b| b.x_min == merged.x_min),
            boxes.iter().any(|b| b.y_min == merged.y_min),
            boxes.iter().any(|b| b.x_max == merged.x_max),
            boxes.iter().any(|b| b.y_max == merged.y_max),
        ];
        ensure!(sides.iter().all(|&s| s), "case {case}: not minimal {sides:?}");
        let again = merge_chunk(
            &[FrameAnnotations { frame_index: 0, boxes: vec![merged] }],
            ClassId::PERSON,
        )
        .unwrap()
        .unwrap();
        ensure!(again == merged, "case {case}: not idempotent");
        frames.shuffle(&mut rng);
        let shuffled = merge_chunk(&frames, ClassId::PERSON).unwrap().unwrap();
        ensure!(shuffled == merged, "case {case}: order dependent");
    }

    let frames: Vec<FrameAnnotations> = (0..13)
        .map(|t| {
            let x = 2.0 * t as f64;
            FrameAnnotations {
                frame_index: t,
                boxes: vec![BoundingBox::new(x, 0.0, x + 10.0, 10.0, ClassId::CAR, None).unwrap()],
            }
        })
        .collect();
    let chunk = build_chunk_labels(&frames, 13, 13).map_err(|e| e.to_string())?;
    let b = chunk[0].boxes[0];
    let got = (b.x_min, b.y_min, b.x_max, b.y_max);
    ensure!(got == (0.0, 0.0, 34.0, 10.0), "translating box merged to {got:?}");
    Ok(format!("{n} random sequences; translating box -> (0,0,34,10)"))
}

// ---------------------------------------------------------------- evaluator

fn oracle_ap(hits: &[bool], n_truth: usize) -> f64 {
    let mut points = Vec::new();
    let mut tp = 0;
    for (i, &h) in hits.iter().enumerate() {
        tp += h as usize;
        points.push((tp, tp as f64 / (i + 1) as f64));
    }
    (1..=n_truth)
        .map(|level| {
            points
                .iter()
                .filter(|(tp, _)| *tp >= level)
                .map(|(_, p)| *p)
                .fold(0.0, f64::max)
        })
        .sum::<f64>()
        / n_truth as f64
}

/// Per-(class, threshold) AP and (tp, fp) from an independent greedy scorer.
fn oracle_class_ap(det: &[ChunkLabel], gt: &[ChunkLabel], class: ClassId, thr: f64) -> (Option<f64>, usize, usize) {
    let mut dets: Vec<(usize, usize, BoundingBox)> = Vec::new();
    for c in det {
        for b in c.boxes.iter().filter(|b| b.class == class) {
            dets.push((dets.len(), c.chunk_index, *b));
        }
    }
    dets.sort_by(|a, b| {
        let (ca, cb) = (a.2.confidence.unwrap_or(1.0), b.2.confidence.unwrap_or(1.0));
        cb.partial_cmp(&ca).unwrap().then(a.0.cmp(&b.0))
    });
    let truths: Vec<(usize, BoundingBox)> = gt
        .iter()
        .flat_map(|c| c.boxes.iter().filter(|b| b.class == class).map(move |b| (c.chunk_index, *b)))
        .collect();
    if truths.is_empty() {
        return ((!dets.is_empty()).then_some(0.0), 0, dets.len());
    }
    let mut taken = vec![false; truths.len()];
    let hits: Vec<bool> = dets
        .iter()
        .map(|(_, k, d)| {
            let mut best: Option<(usize, f64)> = None;
            for (i, (tk, t)) in truths.iter().enumerate() {
                if tk != k || taken[i] {
                    continue;
                }
                let w = (d.x_max.min(t.x_max) - d.x_min.max(t.x_min)).max(0.0);
                let h = (d.y_max.min(t.y_max) - d.y_min.max(t.y_min)).max(0.0);
                let inter = w * h;
                let v = inter / ((d.x_max - d.x_min) * (d.y_max - d.y_min) + (t.x_max - t.x_min) * (t.y_max - t.y_min) - inter);
                if v >= thr && best.is_none_or(|(_, b)| v > b) {
                    best = Some((i, v));
                }
            }
            if let Some((i, _)) = best {
                taken[i] = true;
            }
            best.is_some()
        })
        .collect();
    let tp = hits.iter().filter(|&&h| h).count();
    (Some(oracle_ap(&hits, truths.len())), tp, hits.len() - tp)
}

fn grid_box(rng: &mut ChaCha8Rng, class: ClassId, conf: Option<f64>) -> BoundingBox {
    let x = rng.random_range(0..6) as f64 * 2.0;
    let y = rng.random_range(0..6) as f64 * 2.0;
    let w = rng.random_range(1..6) as f64 * 2.0;
    let h = rng.random_range(1..6) as f64 * 2.0;
    BoundingBox::new(x, y, x + w, y + h, class, conf).unwrap()
}

fn evaluator_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cfg = EvalConfig::default();
    let n = 5000;
    for case in 0..n {
        let chunks = rng.random_range(1..=4);
        let mut gt = Vec::new();
        let mut det = Vec::new();
        for k in 0..chunks {
            let g = (0..rng.random_range(0..=4))
                .map(|_| {
                    let c = ClassId(rng.random_range(0..2));
                    grid_box(&mut rng, c, None)
                })
                .collect();
            let d = (0..rng.random_range(0..=4))
                .map(|_| {
                    let c = ClassId(rng.random_range(0..2));
                    let conf = rng.random_range(0..4) as f64 / 4.0;
                    grid_box(&mut rng, c, Some(conf))
                })
                .collect();
            gt.push(ChunkLabel { chunk_index: k, boxes: g });
            det.push(ChunkLabel { chunk_index: k, boxes: d });
        }
        let report = evaluate(&det, &gt, &cfg).map_err(|e| e.to_string())?;
        let mut means = Vec::new();
        for class in [ClassId::CAR, ClassId::PERSON] {
            let expect: Vec<_> = cfg.iou_thresholds.iter().map(|&t| oracle_class_ap(&det, &gt, class, t)).collect();
            let Some(c) = report.classes.iter().find(|c| c.class == class) else {
                ensure!(expect.iter().all(|e| e.0.is_none()), "case {case}: class {class} missing from report");
                continue;
            };
            for (i, (ap, tp, fp)) in expect.iter().enumerate() {
                let counts = c.counts[i];
                ensure!(
                    (counts.tp, counts.fp) == (*tp, *fp),
                    "case {case} class {class} threshold {i}: tp/fp {:?} vs oracle {:?}",
                    (counts.tp, counts.fp),
                    (tp, fp)
                );
                let same = match (c.ap[i], ap) {
                    (Some(a), Some(b)) => (a - b).abs() < 1e-12,
                    (None, None) => true,
                    _ => false,
                };
                ensure!(same, "case {case} class {class} threshold {i}: AP {:?} vs oracle {ap:?}", c.ap[i]);
            }
            if let Some(c) = report.classes.iter().find(|c| c.class == class && c.truths > 0) {
                means.push(c.mean_ap.unwrap());
            }
        }
        let map = if means.is_empty() { 0.0 } else { means.iter().sum::<f64>() / means.len() as f64 };
        ensure!((report.map - map).abs() < 1e-12, "case {case}: mAP {} vs {map}", report.map);
    }

    // Hand-derived: T, F, T over two truths.
    let ta = BoundingBox::new(0.0, 0.0, 10.0, 10.0, ClassId::CAR, None).unwrap();
    let tb = BoundingBox::new(50.0, 50.0, 60.0, 60.0, ClassId::CAR, None).unwrap();
    let miss = BoundingBox::new(100.0, 0.0, 110.0, 10.0, ClassId::CAR, None).unwrap();
    let ap = average_precision(&[(ta, 0.9), (miss, 0.8), (tb, 0.7)], &[ta, tb], 0.5);
    ensure!(ap.is_some_and(|a| (a - 5.0 / 6.0).abs() < 1e-12), "T F T example gave {ap:?}");

    let pair_gt = BoundingBox::new(0.0, 0.0, 10.0, 10.0, ClassId::CAR, None).unwrap();
    let pair_det = BoundingBox::new(0.0, 0.0, 10.0, 6.0, ClassId::CAR, Some(0.9)).unwrap();
    ensure!(iou(&pair_gt, &pair_det) == 0.6, "pair IoU {}", iou(&pair_gt, &pair_det));
    let report = evaluate(
        &[ChunkLabel { chunk_index: 0, boxes: vec![pair_det] }],
        &[ChunkLabel { chunk_index: 0, boxes: vec![pair_gt] }],
        &cfg,
    )
    .map_err(|e| e.to_string())?;
    ensure!((report.map - 0.3).abs() < 1e-12, "IoU-0.6 pair mAP {}", report.map);

    let (_, labels) = moving_objects_video(64, 64, 52, 9);
    let truth = build_chunk_labels(&labels, 13, 52).map_err(|e| e.to_string())?;
    let perfect: Vec<ChunkLabel> = truth
        .iter()
        .map(|c| ChunkLabel {
            chunk_index: c.chunk_index,
            boxes: c.boxes.iter().map(|b| b.with_confidence(Some(1.0))).collect(),
        })
        .collect();
    let report = evaluate(&perfect, &truth, &cfg).map_err(|e| e.to_string())?;
    ensure!(report.map == 1.0, "perfect detections mAP {}", report.map);
    Ok(format!("{n} random instances: matches identical to oracle, AP within 1e-12; AP 5/6, mAP 0.3 and perfect 1.0 reproduced"))
}

// ---------------------------------------------------------------- sweep

fn check_sweep_table(csv: &str, values: &[usize]) -> Result<(), String> {
    let lines: Vec<&str> = csv.lines().collect();
    let mut expected_header = vec!["value".to_string()];
    expected_header.extend((0..10).map(|i| format!("AP@{:.2}", (50 + 5 * i) as f64 / 100.0)));
    expected_header.push("meanAP".into());
    let header: Vec<String> = lines[0].split(',').map(str::to_string).collect();
    ensure!(header == expected_header, "header {header:?}");
    ensure!(lines.len() == values.len() + 1, "{} data rows, want {}", lines.len() - 1, values.len());
    for (line, v) in lines[1..].iter().zip(values) {
        let cells: Vec<&str> = line.split(',').collect();
        ensure!(cells.len() == 12, "row {line:?} has {} cells", cells.len());
        ensure!(cells[0] == v.to_string(), "row value {} want {v}", cells[0]);
        for c in &cells[1..] {
            let x: f64 = c.parse().map_err(|_| format!("cell {c:?} not numeric"))?;
            ensure!(x == 1.0, "row {v}: ground-truth detections scored {x}");
        }
    }
    Ok(())
}

fn sweep_shape() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let (video, labels) = moving_objects_video(64, 64, 312, 12);
    let video_path = d.join("video.pcev");
    save_video(&video, &video_path, VideoFormat::RawContainer).map_err(|e| e.to_string())?;
    let labels_path = d.join("labels.txt");
    fs::write(&labels_path, format_labels(&labels)).unwrap();

    let started = Instant::now();
    let merge = |compression: usize, out: &Path| {
        run_ok(&[
            "merge-labels", "--labels", labels_path.to_str().unwrap(), "--compression", &compression.to_string(),
            "--frames", "312", "--out", out.to_str().unwrap(),
        ])
    };
    let bump_values = [2usize, 3, 4, 5];
    let compression_values = [6usize, 10, 13, 16, 20, 24];
    for v in bump_values {
        merge(13, &d.join(format!("det_bump_{v}.txt")))?;
    }
    for v in compression_values {
        merge(v, &d.join(format!("det_compression_{v}.txt")))?;
    }
    for (axis, values) in [("bump", &bump_values[..]), ("compression", &compression_values[..])] {
        let list: Vec<String> = values.iter().map(usize::to_string).collect();
        let out = d.join(format!("{axis}.csv"));
        run_ok(&[
            "sweep", "--video", video_path.to_str().unwrap(), "--labels", labels_path.to_str().unwrap(),
            "--axis", axis, "--values", &list.join(","),
            "--det-template", d.join(format!("det_{axis}_{{value}}.txt")).to_str().unwrap(),
            "--out", out.to_str().unwrap(),
        ])?;
        check_sweep_table(&fs::read_to_string(&out).unwrap(), values).map_err(|e| format!("{axis}: {e}"))?;
    }
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!("bump 4x12 and compression 6x12 tables in {:.2} s", elapsed.as_secs_f64()))
}

// ---------------------------------------------------------------- demo

fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(p) = stack.pop() {
        for entry in fs::read_dir(&p).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn end_to_end_demo() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut runs = Vec::new();
    for name in ["a", "b"] {
        let out_dir = dir.path().join(name);
        let started = Instant::now();
        let out = run_pce(&["demo", "--seed", "7", "--out", out_dir.to_str().unwrap()])?;
        let elapsed = started.elapsed();
        ensure!(out.status.code() == Some(0), "demo exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr));
        ensure!(elapsed < Duration::from_secs(30), "demo took {elapsed:?}");
        let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
        let stable: Vec<String> = stdout
            .lines()
            .filter(|l| !l.starts_with("reconstruct frame"))
            .map(str::to_string)
            .collect();
        runs.push((stable, dir_contents(&out_dir), elapsed, stdout));
    }
    ensure!(runs[0].0 == runs[1].0, "stdout differs: {:?} vs {:?}", runs[0].0, runs[1].0);
    ensure!(runs[0].1 == runs[1].1, "artifacts differ between runs");
    ensure!(runs[0].1.len() >= 10, "only {} artifacts written", runs[0].1.len());
    let summary = runs[0].0.join(" ");
    Ok(format!("exit 0, identical outputs, {:.2} s / {:.2} s; {summary}", runs[0].2.as_secs_f64(), runs[1].2.as_secs_f64()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("encoder exactness", encoder_exactness),
        ("sensing invariants", sensing_invariants),
        ("compression accounting", compression_accounting),
        ("OMP correctness", omp_correctness),
        ("reconstruction fixed point", reconstruction_fixed_point),
        ("merge correctness", merge_correctness),
        ("evaluator oracle equivalence", evaluator_oracle),
        ("sweep shape", sweep_shape),
        ("end-to-end demo", end_to_end_demo),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let result = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match result {
            Ok(detail) => println!("[PASS] {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
