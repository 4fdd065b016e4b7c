//! Gaussian blur and mask compositing for instance isolation.
//!
//! The blur is a separable Gaussian with kernel radius `ceil(3 sigma)` and
//! symmetric (edge-duplicating) reflection at the borders: `cba|abcd|dcb`.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::image::{check_dims, DimensionMismatch, Mask, RgbImage};

pub const DEFAULT_SIGMA: f64 = 9.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BlurError {
    #[error(transparent)]
    Dimensions(#[from] DimensionMismatch),
    #[error("sigma must be finite and positive, got {0}")]
    BadSigma(f64),
}

/// How non-instance pixels are treated when isolating an instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VisualPrompt {
    /// Keep the instance sharp and blur everything else.
    #[default]
    Blur,
    /// Paint everything outside the instance pure red.
    RedScreen,
    /// Leave the frame untouched and outline the instance's box in red.
    BboxOverlay,
}

impl VisualPrompt {
    pub fn as_str(self) -> &'static str {
        match self {
            VisualPrompt::Blur => "blur",
            VisualPrompt::RedScreen => "red-screen",
            VisualPrompt::BboxOverlay => "bbox-overlay",
        }
    }
}

/// Maps any integer index into `[0, n)` by mirroring with edge duplication.
pub fn reflect_index(i: i64, n: usize) -> usize {
    let n = n as i64;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

/// Normalized 1-D Gaussian taps for offsets `-radius..=radius`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f32> {
    let radius = libm::ceil(3.0 * sigma).max(1.0) as i64;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|i| libm::exp(-((i * i) as f64) / (2.0 * sigma * sigma)))
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter().map(|t| (t / sum) as f32).collect()
}

pub fn gaussian_blur(img: &RgbImage, sigma: f64) -> Result<RgbImage, BlurError> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(BlurError::BadSigma(sigma));
    }
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w == 0 || h == 0 {
        return Ok(img.clone());
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as i64;
    let src = img.as_raw();

    let mut horiz = vec![0f32; w * h * 3];
    for y in 0..h {
        let row = y * w * 3;
        for x in 0..w {
            let mut acc = [0f32; 3];
            for (k, &tap) in kernel.iter().enumerate() {
                let sx = reflect_index(x as i64 + k as i64 - radius, w);
                let o = row + sx * 3;
                acc[0] += tap * f32::from(src[o]);
                acc[1] += tap * f32::from(src[o + 1]);
                acc[2] += tap * f32::from(src[o + 2]);
            }
            horiz[row + x * 3..row + x * 3 + 3].copy_from_slice(&acc);
        }
    }

    let mut out = vec![0u8; w * h * 3];
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0f32; 3];
            for (k, &tap) in kernel.iter().enumerate() {
                let sy = reflect_index(y as i64 + k as i64 - radius, h);
                let o = (sy * w + x) * 3;
                acc[0] += tap * horiz[o];
                acc[1] += tap * horiz[o + 1];
                acc[2] += tap * horiz[o + 2];
            }
            let o = (y * w + x) * 3;
            for c in 0..3 {
                out[o + c] = libm::roundf(acc[c]).clamp(0.0, 255.0) as u8;
            }
        }
    }
    Ok(RgbImage::from_raw(img.width(), img.height(), out).expect("sized above"))
}

/// Takes masked pixels from `sharp` and the rest from `background`.
pub fn composite(sharp: &RgbImage, background: &RgbImage, mask: &Mask) -> Result<RgbImage, BlurError> {
    check_dims(sharp.dimensions(), mask.dimensions())?;
    check_dims(sharp.dimensions(), background.dimensions())?;
    let mut data = background.as_raw().to_vec();
    for (i, &keep) in mask.bits().iter().enumerate() {
        if keep {
            data[i * 3..i * 3 + 3].copy_from_slice(&sharp.as_raw()[i * 3..i * 3 + 3]);
        }
    }
    Ok(RgbImage::from_raw(sharp.width(), sharp.height(), data).expect("same size"))
}

/// Masked pixels are copied verbatim; all others come from a Gaussian blur
/// of the whole frame.
pub fn blur_composite(frame: &RgbImage, mask: &Mask, sigma: f64) -> Result<RgbImage, BlurError> {
    check_dims(frame.dimensions(), mask.dimensions())?;
    let blurred = gaussian_blur(frame, sigma)?;
    composite(frame, &blurred, mask)
}

pub fn red_screen(frame: &RgbImage, mask: &Mask) -> Result<RgbImage, BlurError> {
    let red = RgbImage::from_fn(frame.width(), frame.height(), |_, _| [255, 0, 0]);
    composite(frame, &red, mask)
}

/// Draws a 2 px red outline just inside the mask's bounding box.
pub fn bbox_overlay(frame: &RgbImage, mask: &Mask) -> Result<RgbImage, BlurError> {
    check_dims(frame.dimensions(), mask.dimensions())?;
    let mut out = frame.clone();
    if let Some(b) = mask.bbox() {
        for y in b.y0..b.y1 {
            for x in b.x0..b.x1 {
                let edge = x < b.x0 + 2 || x + 2 >= b.x1 || y < b.y0 + 2 || y + 2 >= b.y1;
                if edge {
                    out.set_pixel(x, y, [255, 0, 0]);
                }
            }
        }
    }
    Ok(out)
}

/// Applies `mode`. `blurred` may carry a precomputed blur of `frame` so one
/// blur serves every instance in the frame.
pub fn apply_visual_prompt(
    frame: &RgbImage,
    blurred: Option<&RgbImage>,
    mask: &Mask,
    mode: VisualPrompt,
    sigma: f64,
) -> Result<RgbImage, BlurError> {
    match mode {
        VisualPrompt::Blur => match blurred {
            Some(b) => composite(frame, b, mask),
            None => blur_composite(frame, mask, sigma),
        },
        VisualPrompt::RedScreen => red_screen(frame, mask),
        VisualPrompt::BboxOverlay => bbox_overlay(frame, mask),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Rect;

    fn noise(w: u32, h: u32, seed: u64) -> RgbImage {
        let mut s = seed | 1;
        RgbImage::from_fn(w, h, |_, _| {
            let mut px = [0u8; 3];
            for c in &mut px {
                s ^= s << 13;
                s ^= s >> 7;
                s ^= s << 17;
                *c = (s >> 24) as u8;
            }
            px
        })
    }

    #[test]
    fn reflect_duplicates_edges() {
        let got: Vec<usize> = (-3..7).map(|i| reflect_index(i, 4)).collect();
        assert_eq!(got, [2, 1, 0, 0, 1, 2, 3, 3, 2, 1]);
        // radius wider than the axis keeps bouncing
        assert_eq!(reflect_index(-9, 3), 2);
        assert_eq!(reflect_index(1, 1), 0);
    }

    #[test]
    fn kernel_is_normalized_and_symmetric() {
        let k = gaussian_kernel(2.0);
        assert_eq!(k.len(), 13);
        let s: f32 = k.iter().sum();
        assert!((s - 1.0).abs() < 1e-5);
        for i in 0..k.len() / 2 {
            assert_eq!(k[i], k[k.len() - 1 - i]);
        }
    }

    #[test]
    fn constant_image_is_fixed_point() {
        let img = RgbImage::from_fn(9, 7, |_, _| [40, 120, 250]);
        assert_eq!(gaussian_blur(&img, 3.0).unwrap(), img);
    }

    #[test]
    fn full_mask_is_identity() {
        let img = noise(20, 14, 3);
        let out = blur_composite(&img, &Mask::full(20, 14), 9.0).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn empty_mask_is_plain_blur() {
        let img = noise(20, 14, 5);
        let out = blur_composite(&img, &Mask::empty(20, 14), 2.0).unwrap();
        assert_eq!(out, gaussian_blur(&img, 2.0).unwrap());
    }

    #[test]
    fn rejects_bad_sigma_and_dims() {
        let img = noise(4, 4, 1);
        assert_eq!(
            blur_composite(&img, &Mask::full(4, 4), 0.0),
            Err(BlurError::BadSigma(0.0))
        );
        assert!(matches!(
            blur_composite(&img, &Mask::full(4, 5), 1.0),
            Err(BlurError::Dimensions(_))
        ));
    }

    #[test]
    fn red_screen_and_overlay() {
        let img = noise(10, 10, 9);
        let mask = Mask::from_rect(10, 10, Rect::new(3, 3, 8, 8));
        let red = red_screen(&img, &mask).unwrap();
        assert_eq!(red.pixel(0, 0), [255, 0, 0]);
        assert_eq!(red.pixel(5, 5), img.pixel(5, 5));
        let boxed = bbox_overlay(&img, &mask).unwrap();
        assert_eq!(boxed.pixel(3, 3), [255, 0, 0]);
        assert_eq!(boxed.pixel(7, 5), [255, 0, 0]);
        assert_eq!(boxed.pixel(5, 5), img.pixel(5, 5));
        assert_eq!(boxed.pixel(0, 0), img.pixel(0, 0));
    }

    #[test]
    fn visual_prompt_names() {
        let s = serde_json::to_string(&VisualPrompt::RedScreen).unwrap();
        assert_eq!(s, "\"red-screen\"");
    }
}
