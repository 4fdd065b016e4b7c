//! Synthetic clips and scripts for demos and tests.
//!
//! The moving-square clip is a textured field that slides right by
//! [`BG_STEP`] pixels per frame (so the camera reads as panning left) with
//! a red square crossing it at [`SQUARE_STEP`] pixels per frame.

use std::path::Path;

use structcap_core::amc::{Detection, ScriptedAdapter, ScriptedTrack};
use structcap_core::chat::MockScript;
use structcap_core::image::{Rect, RgbImage};
use structcap_core::orchestrator::{OP_BACKGROUND, OP_CAMERA, OP_GLOBAL, OP_INSTANCE};

use crate::ingest::write_image_dir;

pub const SIZE: u32 = 96;
pub const FRAMES: u32 = 16;
pub const FPS: f64 = 8.0;
pub const BG_STEP: u32 = 2;
pub const SQUARE_STEP: u32 = 3;
pub const SQUARE_SIDE: u32 = 16;
pub const SQUARE_RED: [u8; 3] = [220, 30, 30];

pub const GLOBAL_REPLY: &str = "A red square glides to the right across a speckled gray field.";
pub const BACKGROUND_REPLY: &str = "A speckled gray field fills the whole frame.";
pub const CAMERA_REPLY: &str = "steady, moderate speed";
pub const INSTANCE_REPLY: &str = "APPEARANCE: A bright red square with crisp edges.\n\
ACTIONS_MOTION: Slides steadily toward the right edge.\n\
POSITION: Left of center in the middle band of the frame.";

fn noise(x: u32, y: u32) -> u8 {
    let mut h = u64::from(x) << 32 | u64::from(y);
    h = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^= h >> 31;
    60 + (h % 120) as u8
}

/// The square's box in frame `t`.
pub fn square_rect(t: u32) -> Rect {
    let x0 = 10 + SQUARE_STEP * t;
    Rect::new(x0, 40, x0 + SQUARE_SIDE, 40 + SQUARE_SIDE)
}

pub fn moving_square_frame(t: u32) -> RgbImage {
    let sq = square_rect(t);
    RgbImage::from_fn(SIZE, SIZE, |x, y| {
        if sq.contains(x, y) {
            SQUARE_RED
        } else {
            let g = noise((x + SIZE * 8 - BG_STEP * t) % SIZE, y);
            [g, g, g.saturating_add(10)]
        }
    })
}

pub fn moving_square_frames() -> Vec<RgbImage> {
    (0..FRAMES).map(moving_square_frame).collect()
}

/// Writes the clip as an image directory with its `meta.json`.
pub fn write_moving_square(dir: &Path) -> std::io::Result<()> {
    write_image_dir(dir, &moving_square_frames(), FPS)
}

/// An adapter that detects the square and tracks it through the given
/// sampled source indices.
pub fn moving_square_adapter(indices: &[u32]) -> ScriptedAdapter {
    let first = indices.first().copied().unwrap_or(0);
    ScriptedAdapter::new(
        vec![
            Detection::new("square", 0.92, square_rect(first)),
            // Below the default threshold; must be dropped.
            Detection::new("shadow", 0.2, Rect::new(0, 0, 8, 8)),
        ],
        vec![
            ScriptedTrack::Boxes(indices.iter().map(|&i| square_rect(i)).collect()),
            ScriptedTrack::Empty,
        ],
    )
}

pub fn moving_square_script() -> MockScript {
    MockScript::new()
        .always(OP_GLOBAL, GLOBAL_REPLY)
        .always(OP_BACKGROUND, BACKGROUND_REPLY)
        .always(OP_CAMERA, CAMERA_REPLY)
        .always(OP_INSTANCE, INSTANCE_REPLY)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_stays_inside() {
        for t in 0..FRAMES {
            let r = square_rect(t);
            assert!(r.x1 <= SIZE && r.y1 <= SIZE);
        }
    }

    #[test]
    fn background_translates() {
        let (a, b) = (moving_square_frame(0), moving_square_frame(1));
        // Away from the square, frame 1 is frame 0 shifted right.
        for y in [0, 10, 90] {
            for x in 0..SIZE {
                assert_eq!(b.pixel((x + BG_STEP) % SIZE, y), a.pixel(x, y));
            }
        }
    }
}
