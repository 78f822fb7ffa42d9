//! Deterministic synthetic scenes with exact per-frame ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::annotations::{BoundingBox, ClassId, FrameAnnotations};
use crate::video::Video;

/// Four flat gray quadrants, identical in every frame.
pub fn piecewise_constant_video(width: usize, height: usize, frames: usize) -> Video {
    const LEVELS: [u8; 4] = [40, 100, 160, 220];
    let mut frame = Vec::with_capacity(width * height);
    for r in 0..height {
        for c in 0..width {
            let q = (r >= height / 2) as usize * 2 + (c >= width / 2) as usize;
            frame.push(LEVELS[q]);
        }
    }
    let pixels = frame.repeat(frames);
    Video::new(width, height, frames, pixels).expect("non-zero dims")
}

/// Folds `x` into `[0, span]` like a ball bouncing between two walls.
fn bounce(x: i64, span: i64) -> i64 {
    if span <= 0 {
        return 0;
    }
    let period = 2 * span;
    let m = x.rem_euclid(period);
    if m <= span {
        m
    } else {
        period - m
    }
}

struct Mover {
    class: ClassId,
    w: usize,
    h: usize,
    x0: i64,
    y0: i64,
    vx: i64,
    vy: i64,
    level: u8,
}

impl Mover {
    fn origin(&self, t: usize, width: usize, height: usize) -> (usize, usize) {
        let x = bounce(self.x0 + self.vx * t as i64, (width - self.w) as i64);
        let y = bounce(self.y0 + self.vy * t as i64, (height - self.h) as i64);
        (x as usize, y as usize)
    }
}

/// A bright square ("car") moving horizontally and a dark upright
/// rectangle ("person") moving vertically over a smooth gradient.
///
/// Returns the video and one annotation per frame per object. Needs
/// `width, height >= 16`.
pub fn moving_objects_video(
    width: usize,
    height: usize,
    frames: usize,
    seed: u64,
) -> (Video, Vec<FrameAnnotations>) {
    assert!(width >= 16 && height >= 16, "scene needs at least 16x16 pixels");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let car_side = (width.min(height) / 4).max(4);
    let person = (width / 8).max(2);
    let movers = [
        Mover {
            class: ClassId::CAR,
            w: car_side,
            h: car_side,
            x0: rng.random_range(0..(width - car_side) as i64),
            y0: rng.random_range(0..(height - car_side) as i64),
            vx: 2,
            vy: 0,
            level: 235,
        },
        Mover {
            class: ClassId::PERSON,
            w: person,
            h: 2 * person,
            x0: rng.random_range(0..(width - person) as i64),
            y0: rng.random_range(0..(height - 2 * person) as i64),
            vx: 0,
            vy: 1,
            level: 15,
        },
    ];

    let mut pixels = Vec::with_capacity(width * height * frames);
    let mut labels = Vec::with_capacity(frames);
    for t in 0..frames {
        let mut frame: Vec<u8> = (0..height)
            .flat_map(|r| (0..width).map(move |c| (70 + (60 * (r + c)) / (width + height)) as u8))
            .collect();
        let mut boxes = Vec::with_capacity(movers.len());
        for m in &movers {
            let (x, y) = m.origin(t, width, height);
            for r in y..y + m.h {
                frame[r * width + x..r * width + x + m.w].fill(m.level);
            }
            boxes.push(
                BoundingBox::new(
                    x as f64,
                    y as f64,
                    (x + m.w) as f64,
                    (y + m.h) as f64,
                    m.class,
                    None,
                )
                .expect("mover inside frame"),
            );
        }
        pixels.extend_from_slice(&frame);
        labels.push(FrameAnnotations {
            frame_index: t,
            boxes,
        });
    }
    let video = Video::new(width, height, frames, pixels).expect("non-zero dims");
    (video, labels)
}
