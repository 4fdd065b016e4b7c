//! Basic camera-movement classification from coarse flow.
//!
//! Labels are camera-centric: content drifting right in the image means the
//! camera panned left; content expanding outward means the camera zoomed in;
//! content turning clockwise on screen means the camera rolled
//! counter-clockwise.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use serde::{Deserialize, Serialize};

use crate::flow::FlowField;

/// Closed set of basic movements. Serialized in snake_case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CameraMovement {
    Static,
    PanLeft,
    PanRight,
    TiltUp,
    TiltDown,
    ZoomIn,
    ZoomOut,
    RotateCw,
    RotateCcw,
    Unknown,
}

impl CameraMovement {
    pub const ALL: [CameraMovement; 10] = [
        CameraMovement::Static,
        CameraMovement::PanLeft,
        CameraMovement::PanRight,
        CameraMovement::TiltUp,
        CameraMovement::TiltDown,
        CameraMovement::ZoomIn,
        CameraMovement::ZoomOut,
        CameraMovement::RotateCw,
        CameraMovement::RotateCcw,
        CameraMovement::Unknown,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CameraMovement::Static => "static",
            CameraMovement::PanLeft => "pan_left",
            CameraMovement::PanRight => "pan_right",
            CameraMovement::TiltUp => "tilt_up",
            CameraMovement::TiltDown => "tilt_down",
            CameraMovement::ZoomIn => "zoom_in",
            CameraMovement::ZoomOut => "zoom_out",
            CameraMovement::RotateCw => "rotate_cw",
            CameraMovement::RotateCcw => "rotate_ccw",
            CameraMovement::Unknown => "unknown",
        }
    }

    /// Human phrasing used in flat training text ("pan left").
    pub fn phrase(self) -> &'static str {
        match self {
            CameraMovement::Static => "static",
            CameraMovement::PanLeft => "pan left",
            CameraMovement::PanRight => "pan right",
            CameraMovement::TiltUp => "tilt up",
            CameraMovement::TiltDown => "tilt down",
            CameraMovement::ZoomIn => "zoom in",
            CameraMovement::ZoomOut => "zoom out",
            CameraMovement::RotateCw => "rotate clockwise",
            CameraMovement::RotateCcw => "rotate counter-clockwise",
            CameraMovement::Unknown => "unknown",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s)
    }

    /// Finds the earliest label named in free text, accepting `pan_left`,
    /// `pan left` and `pan-left`. `unknown` is never matched. Returns the
    /// label and the byte span it occupied.
    pub fn find_in(text: &str) -> Option<(Self, usize, usize)> {
        let lower = text.to_ascii_lowercase();
        let bytes = lower.as_bytes();
        let mut best: Option<(Self, usize, usize)> = None;
        for m in Self::ALL {
            if m == CameraMovement::Unknown {
                continue;
            }
            for sep in ["_", " ", "-"] {
                let needle = m.as_str().replace('_', sep);
                let mut from = 0;
                while let Some(pos) = lower[from..].find(&needle) {
                    let start = from + pos;
                    let end = start + needle.len();
                    let left_ok = start == 0 || !bytes[start - 1].is_ascii_alphanumeric();
                    let right_ok = end == bytes.len() || !bytes[end].is_ascii_alphanumeric();
                    if left_ok && right_ok {
                        if best.map_or(true, |b| start < b.1 || (start == b.1 && end > b.2)) {
                            best = Some((m, start, end));
                        }
                        break;
                    }
                    from = start + 1;
                }
            }
        }
        best
    }
}

impl fmt::Display for CameraMovement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraMotionLabel {
    pub movement: CameraMovement,
    /// px/frame of the deciding component.
    pub magnitude: f64,
}

impl CameraMotionLabel {
    pub fn unknown() -> Self {
        Self {
            movement: CameraMovement::Unknown,
            magnitude: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraConfig {
    /// Mean flow magnitude (px/frame) below which the camera is static.
    pub static_threshold: f64,
    /// Relative gap the winning score needs over the runner-up.
    pub margin: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            static_threshold: 0.5,
            margin: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CameraError {
    #[error("no flow fields to classify")]
    EmptyInput,
    #[error("flow fields disagree on grid or frame size")]
    GridMismatch,
}

/// Affine decomposition of the time-averaged field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionComponents {
    pub mean_dx: f64,
    pub mean_dy: f64,
    pub mean_magnitude: f64,
    /// Half the trace of the fitted velocity gradient, per pixel.
    pub divergence: f64,
    /// Half the antisymmetric part of the fitted gradient, per pixel
    /// (positive is clockwise on screen, image y pointing down).
    pub curl: f64,
    /// Mean distance of block centres from their centroid.
    pub mean_radius: f64,
}

impl MotionComponents {
    pub fn translation_score(&self) -> f64 {
        libm::hypot(self.mean_dx, self.mean_dy)
    }

    pub fn zoom_score(&self) -> f64 {
        libm::fabs(self.divergence) * self.mean_radius
    }

    pub fn rotation_score(&self) -> f64 {
        libm::fabs(self.curl) * self.mean_radius
    }
}

/// Averages the fields and fits `v = t + J (p - c)` by least squares.
pub fn decompose(flows: &[FlowField]) -> Result<MotionComponents, CameraError> {
    let first = flows.first().ok_or(CameraError::EmptyInput)?;
    if flows
        .iter()
        .any(|f| f.grid() != first.grid() || f.frame_size() != first.frame_size())
    {
        return Err(CameraError::GridMismatch);
    }
    let n = first.vectors().len();
    let mut avg = alloc::vec![[0.0f64; 2]; n];
    for f in flows {
        for (acc, v) in avg.iter_mut().zip(f.vectors()) {
            acc[0] += f64::from(v[0]);
            acc[1] += f64::from(v[1]);
        }
    }
    let t = flows.len() as f64;
    for acc in &mut avg {
        acc[0] /= t;
        acc[1] /= t;
    }
    let centers: Vec<(f64, f64)> = first
        .centers()
        .map(|(x, y)| (f64::from(x), f64::from(y)))
        .collect();
    let nf = n as f64;
    let cx = centers.iter().map(|c| c.0).sum::<f64>() / nf;
    let cy = centers.iter().map(|c| c.1).sum::<f64>() / nf;
    let mean_dx = avg.iter().map(|v| v[0]).sum::<f64>() / nf;
    let mean_dy = avg.iter().map(|v| v[1]).sum::<f64>() / nf;
    let mean_magnitude = avg.iter().map(|v| libm::hypot(v[0], v[1])).sum::<f64>() / nf;

    let (mut suu, mut suv, mut svv) = (0.0, 0.0, 0.0);
    let (mut su_dx, mut sv_dx, mut su_dy, mut sv_dy) = (0.0, 0.0, 0.0, 0.0);
    let mut radius = 0.0;
    for (c, v) in centers.iter().zip(&avg) {
        let u = c.0 - cx;
        let w = c.1 - cy;
        suu += u * u;
        suv += u * w;
        svv += w * w;
        su_dx += u * (v[0] - mean_dx);
        sv_dx += w * (v[0] - mean_dx);
        su_dy += u * (v[1] - mean_dy);
        sv_dy += w * (v[1] - mean_dy);
        radius += libm::hypot(u, w);
    }
    let det = suu * svv - suv * suv;
    let solve = |bu: f64, bv: f64| -> (f64, f64) {
        if libm::fabs(det) < 1e-12 {
            (0.0, 0.0)
        } else {
            ((bu * svv - bv * suv) / det, (bv * suu - bu * suv) / det)
        }
    };
    let (ddx_dx, ddx_dy) = solve(su_dx, sv_dx);
    let (ddy_dx, ddy_dy) = solve(su_dy, sv_dy);
    Ok(MotionComponents {
        mean_dx,
        mean_dy,
        mean_magnitude,
        divergence: (ddx_dx + ddy_dy) / 2.0,
        curl: (ddy_dx - ddx_dy) / 2.0,
        mean_radius: radius / nf,
    })
}

/// Classifies the time-averaged field into one basic movement.
pub fn classify_camera_motion(
    flows: &[FlowField],
    cfg: &CameraConfig,
) -> Result<CameraMotionLabel, CameraError> {
    let m = decompose(flows)?;
    if m.mean_magnitude < cfg.static_threshold {
        return Ok(CameraMotionLabel {
            movement: CameraMovement::Static,
            magnitude: m.mean_magnitude,
        });
    }
    let translation = if libm::fabs(m.mean_dx) >= libm::fabs(m.mean_dy) {
        if m.mean_dx > 0.0 {
            CameraMovement::PanLeft
        } else {
            CameraMovement::PanRight
        }
    } else if m.mean_dy > 0.0 {
        CameraMovement::TiltUp
    } else {
        CameraMovement::TiltDown
    };
    let zoom = if m.divergence > 0.0 {
        CameraMovement::ZoomIn
    } else {
        CameraMovement::ZoomOut
    };
    let rotation = if m.curl > 0.0 {
        CameraMovement::RotateCcw
    } else {
        CameraMovement::RotateCw
    };
    let mut scored = [
        (m.translation_score(), translation),
        (m.zoom_score(), zoom),
        (m.rotation_score(), rotation),
    ];
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (top, runner_up) = (scored[0].0, scored[1].0);
    let movement = if top - runner_up < cfg.margin * top {
        CameraMovement::Unknown
    } else {
        scored[0].1
    };
    Ok(CameraMotionLabel {
        movement,
        magnitude: top,
    })
}

/// Renders the hint sentence given to the MLLM.
pub fn hint_text(label: &CameraMotionLabel) -> String {
    match label.movement {
        CameraMovement::Unknown => String::from(
            "The basic camera movement could not be determined automatically.",
        ),
        m => alloc::format!(
            "The basic camera movement is {} ({:.1} px/frame).",
            m.as_str(),
            label.magnitude
        ),
    }
}
