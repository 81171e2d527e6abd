//! Video clip datasets: a synthetic shape × motion task, image-folder ingestion
//! and a single-file binary archive.

mod archive;
mod folder;
mod synth;

use ndarray::{s, Array5, ArrayView4, Axis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use archive::{read_archive, write_archive, ARCHIVE_MAGIC};
pub use folder::{load_clip, load_clip_folder, save_clip, write_clip_folder, FolderDataset, IMAGE_EXTENSIONS};
pub use synth::{class_names, generate_synth, planted_frame_clip, render_clip, SynthSpec, MOTIONS, SHAPES};

use crate::error::{A3dError, Result};
use crate::nn::ops::frame_indices;
use crate::real::Real;

/// A batch of clips `[batch, 3, T, S, S]` with values in `[0, 1]` and integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipBatch {
    pub data: Array5<f32>,
    pub labels: Vec<usize>,
}

impl ClipBatch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Labelled videos `[N, 3, L, S, S]`; `L` may exceed the model's clip length.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub videos: Array5<f32>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(videos: Array5<f32>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if videos.dim().0 != labels.len() {
            return Err(A3dError::Shape(format!(
                "{} videos but {} labels",
                videos.dim().0,
                labels.len()
            )));
        }
        if videos.dim().1 != 3 {
            return Err(A3dError::Shape(format!("expected 3 colour channels, got {}", videos.dim().1)));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(A3dError::Invalid(format!("label {bad} outside [0, {num_classes})")));
        }
        if videos.iter().any(|v| !v.is_finite()) {
            return Err(A3dError::Invalid("non-finite pixel values".into()));
        }
        Ok(Self {
            videos,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Frames per stored video.
    pub fn frames(&self) -> usize {
        self.videos.dim().2
    }

    pub fn pixels(&self) -> usize {
        self.videos.dim().3
    }

    pub fn video(&self, i: usize) -> ArrayView4<'_, f32> {
        self.videos.index_axis(Axis(0), i)
    }

    /// Clips of `frames` consecutive frames starting at `start[k]` for each `idx[k]`.
    pub fn windows(&self, idx: &[usize], start: &[usize], frames: usize) -> ClipBatch {
        let (_, c, _, h, w) = self.videos.dim();
        let mut data = Array5::zeros((idx.len(), c, frames, h, w));
        for (k, (&i, &t0)) in idx.iter().zip(start).enumerate() {
            data.index_axis_mut(Axis(0), k)
                .assign(&self.videos.slice(s![i, .., t0..t0 + frames, .., ..]));
        }
        ClipBatch {
            data,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Centre windows of `frames` frames.
    pub fn center_clips(&self, idx: &[usize], frames: usize) -> ClipBatch {
        let t0 = (self.frames() - frames) / 2;
        self.windows(idx, &vec![t0; idx.len()], frames)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// SHA-256 of one video's pixels.
    pub fn clip_hash(&self, i: usize) -> [u8; 32] {
        let mut h = Sha256::new();
        for v in self.video(i).iter() {
            h.update(v.to_le_bytes());
        }
        h.finalize().into()
    }

    /// Resamples every video to `frames` frames with the shared index rule.
    pub fn with_frames(&self, frames: usize) -> Self {
        let idx = frame_indices(self.frames(), frames);
        Self {
            videos: self.videos.select(Axis(2), &idx),
            labels: self.labels.clone(),
            num_classes: self.num_classes,
        }
    }
}

/// Per-channel input normalization `(x − mean) / std`, fitted on training data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelNorm {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl Default for ChannelNorm {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl ChannelNorm {
    pub const IDENTITY: ChannelNorm = ChannelNorm {
        mean: [0.0; 3],
        std: [1.0; 3],
    };

    /// Mean and standard deviation of each colour channel over all videos.
    pub fn fit(data: &Dataset) -> Self {
        let mut out = Self::IDENTITY;
        for c in 0..3 {
            let ch = data.videos.index_axis(Axis(1), c);
            let n = ch.len() as f64;
            let mean = ch.iter().map(|&v| v as f64).sum::<f64>() / n;
            let var = ch.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
            out.mean[c] = mean;
            out.std[c] = var.sqrt().max(1e-6);
        }
        out
    }

    pub fn apply<T: Real>(&self, x: &mut Array5<T>) {
        for c in 0..3 {
            let (m, s) = (T::of(self.mean[c]), T::of(1.0 / self.std[c]));
            x.index_axis_mut(Axis(1), c).mapv_inplace(|v| (v - m) * s);
        }
    }
}
