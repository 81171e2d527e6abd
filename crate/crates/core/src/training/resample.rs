//! Configuration-specific input resampling.

use ndarray::Array5;

use crate::configspace::{scaled_frames, scaled_pixels, Configuration};
use crate::nn::ops::{frame_indices, resize_spatial, select_frames};
use crate::real::Real;

/// Frames to keep and the target side length for one configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResamplePlan {
    pub frame_indices: Vec<usize>,
    pub target_pixels: usize,
}

impl ResamplePlan {
    /// Plan for clips of `frames × pixels²`: frames `⌊i·T/T'⌋` with
    /// `T' = max(1, round(γt·T))` and a bilinear resize to `round(γs·S)`.
    pub fn new(frames: usize, pixels: usize, c: &Configuration) -> Self {
        let out = scaled_frames(frames, c.gamma_t).min(frames);
        Self {
            frame_indices: frame_indices(frames, out),
            target_pixels: scaled_pixels(pixels, c.gamma_s),
        }
    }

    pub fn frames(&self) -> usize {
        self.frame_indices.len()
    }

    /// Resamples `clip`; a clip already at the target size is returned unchanged.
    pub fn apply<T: Real>(&self, clip: &Array5<T>) -> Array5<T> {
        let (_, _, t, h, w) = clip.dim();
        let px = self.target_pixels;
        if t == self.frames() && (h, w) == (px, px) {
            return clip.clone();
        }
        let kept = if self.frame_indices.iter().copied().eq(0..t) {
            clip.clone()
        } else {
            select_frames(clip.view(), &self.frame_indices)
        };
        if (h, w) == (px, px) {
            kept
        } else {
            resize_spatial(kept.view(), px, px)
        }
    }
}

/// Resamples a full-resolution batch `[B, C, T, S, S]` to configuration `c`.
pub fn resample_clip<T: Real>(clip: &Array5<T>, c: &Configuration) -> Array5<T> {
    let (_, _, t, h, _) = clip.dim();
    ResamplePlan::new(t, h, c).apply(clip)
}
