//! Weighted squared distance between two stacks of video latents.
//!
//! For layers `l`, times `t`, positions `(h, w)` and channels `c`:
//!
//! ```text
//! d = Σ_l Σ_t Σ_{h,w} Σ_c ( w_l[h, w, c] · (z_gt - z_rec)[l, t, h, w, c] )²
//! ```
//!
//! The channel sum sits inside the norm. Nothing is averaged; see
//! [`vae_distance_mean`] for the per-element variant.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::MetricError;

/// Latents indexed `[layer, time, height, width, channel]`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentTensor {
    shape: [usize; 5],
    values: Vec<f32>,
}

impl LatentTensor {
    pub fn new(shape: [usize; 5], values: Vec<f32>) -> Result<Self, MetricError> {
        let n: usize = shape.iter().product();
        if values.len() != n {
            return Err(MetricError::ShapeMismatch(format!(
                "shape {shape:?} needs {n} values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(MetricError::NonFinite("latent tensor"));
        }
        Ok(Self { shape, values })
    }

    pub fn zeros(shape: [usize; 5]) -> Self {
        Self {
            shape,
            values: vec![0.0; shape.iter().product()],
        }
    }

    pub fn shape(&self) -> [usize; 5] {
        self.shape
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn offset(&self, l: usize, t: usize, h: usize, w: usize, c: usize) -> usize {
        let [_, nt, nh, nw, nc] = self.shape;
        (((l * nt + t) * nh + h) * nw + w) * nc + c
    }

    pub fn get(&self, l: usize, t: usize, h: usize, w: usize, c: usize) -> f32 {
        self.values[self.offset(l, t, h, w, c)]
    }
}

/// One layer's weights, broadcast over `(height, width, channel)`. Each
/// dimension of `shape` is either 1 or the latent's size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerWeight {
    pub shape: [usize; 3],
    pub values: Vec<f64>,
}

impl LayerWeight {
    pub fn scalar(w: f64) -> Self {
        Self {
            shape: [1, 1, 1],
            values: vec![w],
        }
    }

    pub fn per_channel(w: Vec<f64>) -> Self {
        Self {
            shape: [1, 1, w.len()],
            values: w,
        }
    }

    pub fn full(h: usize, w: usize, c: usize, values: Vec<f64>) -> Self {
        Self {
            shape: [h, w, c],
            values,
        }
    }

    fn validate(&self, h: usize, w: usize, c: usize) -> Result<(), MetricError> {
        if self.values.len() != self.shape.iter().product::<usize>() {
            return Err(MetricError::BadWeights(format!(
                "shape {:?} with {} values",
                self.shape,
                self.values.len()
            )));
        }
        for (have, want) in self.shape.iter().zip([h, w, c]) {
            if *have != 1 && *have != want {
                return Err(MetricError::BadWeights(format!(
                    "shape {:?} does not broadcast over ({h}, {w}, {c})",
                    self.shape
                )));
            }
        }
        if self.values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(MetricError::BadWeights("weights must be finite and non-negative".into()));
        }
        Ok(())
    }

    #[inline]
    fn at(&self, h: usize, w: usize, c: usize) -> f64 {
        let [sh, sw, sc] = self.shape;
        let (h, w, c) = (if sh == 1 { 0 } else { h }, if sw == 1 { 0 } else { w }, if sc == 1 { 0 } else { c });
        self.values[(h * sw + w) * sc + c]
    }
}

/// One [`LayerWeight`] per latent layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LayerWeights(pub Vec<LayerWeight>);

impl LayerWeights {
    /// Unit weight on every layer.
    pub fn unit(layers: usize) -> Self {
        Self(vec![LayerWeight::scalar(1.0); layers])
    }
}

fn check(z_gt: &LatentTensor, z_rec: &LatentTensor, w: &LayerWeights) -> Result<(), MetricError> {
    if z_gt.shape != z_rec.shape {
        return Err(MetricError::ShapeMismatch(format!("{:?} vs {:?}", z_gt.shape, z_rec.shape)));
    }
    let [nl, _, nh, nw, nc] = z_gt.shape;
    if w.0.len() != nl {
        return Err(MetricError::BadWeights(format!("{} layer weights for {nl} layers", w.0.len())));
    }
    w.0.iter().try_for_each(|lw| lw.validate(nh, nw, nc))
}

/// Sum of weighted squared latent differences. Symmetric, non-negative, and
/// zero when the tensors are equal.
pub fn vae_distance(z_gt: &LatentTensor, z_rec: &LatentTensor, w: &LayerWeights) -> Result<f64, MetricError> {
    check(z_gt, z_rec, w)?;
    let [_, nt, nh, nw, nc] = z_gt.shape;
    let plane = nh * nw * nc;
    let mut total = 0.0f64;
    for (l, lw) in w.0.iter().enumerate() {
        for t in 0..nt {
            let base = (l * nt + t) * plane;
            let a = &z_gt.values[base..base + plane];
            let b = &z_rec.values[base..base + plane];
            let mut k = 0;
            for h in 0..nh {
                for x in 0..nw {
                    for c in 0..nc {
                        let d = lw.at(h, x, c) * (f64::from(a[k]) - f64::from(b[k]));
                        total += d * d;
                        k += 1;
                    }
                }
            }
        }
    }
    Ok(total)
}

/// [`vae_distance`] divided by the number of latent elements.
pub fn vae_distance_mean(z_gt: &LatentTensor, z_rec: &LatentTensor, w: &LayerWeights) -> Result<f64, MetricError> {
    let d = vae_distance(z_gt, z_rec, w)?;
    match z_gt.len() {
        0 => Err(MetricError::EmptyInput("latent tensor")),
        n => Ok(d / n as f64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_is_zero() {
        let z = LatentTensor::new([1, 2, 2, 2, 1], (0..8).map(|i| i as f32 * 0.5).collect()).unwrap();
        assert_eq!(vae_distance(&z, &z, &LayerWeights::unit(1)).unwrap(), 0.0);
    }

    #[test]
    fn all_ones_difference_over_2x2x2() {
        let a = LatentTensor::zeros([1, 2, 2, 2, 1]);
        let b = LatentTensor::new([1, 2, 2, 2, 1], vec![1.0; 8]).unwrap();
        // 8 elements, each contributing (1 * 1)^2.
        assert_eq!(vae_distance(&a, &b, &LayerWeights::unit(1)).unwrap(), 8.0);
        assert_eq!(vae_distance_mean(&a, &b, &LayerWeights::unit(1)).unwrap(), 1.0);
    }

    #[test]
    fn weights_broadcast() {
        let a = LatentTensor::zeros([1, 1, 1, 2, 2]);
        let b = LatentTensor::new([1, 1, 1, 2, 2], vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let w = LayerWeights(vec![LayerWeight::per_channel(vec![1.0, 3.0])]);
        assert_eq!(vae_distance(&a, &b, &w).unwrap(), 2.0 * (1.0 + 9.0));
        let w = LayerWeights(vec![LayerWeight::full(1, 2, 1, vec![0.0, 2.0])]);
        assert_eq!(vae_distance(&a, &b, &w).unwrap(), 8.0);
    }

    #[test]
    fn errors() {
        let a = LatentTensor::zeros([1, 1, 2, 2, 1]);
        let b = LatentTensor::zeros([1, 1, 2, 1, 2]);
        assert!(matches!(vae_distance(&a, &b, &LayerWeights::unit(1)), Err(MetricError::ShapeMismatch(_))));
        assert!(matches!(vae_distance(&a, &a, &LayerWeights::unit(2)), Err(MetricError::BadWeights(_))));
        let neg = LayerWeights(vec![LayerWeight::scalar(-1.0)]);
        assert!(matches!(vae_distance(&a, &a, &neg), Err(MetricError::BadWeights(_))));
        let bad = LayerWeights(vec![LayerWeight::per_channel(vec![1.0, 2.0, 3.0])]);
        assert!(matches!(vae_distance(&a, &a, &bad), Err(MetricError::BadWeights(_))));
        assert!(LatentTensor::new([1, 1, 1, 1, 2], vec![0.0]).is_err());
        assert!(LatentTensor::new([1, 1, 1, 1, 1], vec![f32::NAN]).is_err());
    }
}
