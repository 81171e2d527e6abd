//! Class-activation maps over space and time for a global-pool + linear head.

use std::path::Path;

use image::{GrayImage, Luma};
use ndarray::{s, Array3, Array5, Axis};

use crate::configspace::Configuration;
use crate::error::{A3dError, Result};
use crate::model::Model;
use crate::nn::ops::resize_spatial;
use crate::real::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct CamResult {
    /// Predicted class.
    pub class: usize,
    /// Pre-softmax score of the predicted class.
    pub score: f64,
    /// Rectified maps `[frames, pixels, pixels]` at the configuration's input size.
    pub spatial_maps: Array3<f64>,
    /// Per-frame contribution to the class score; sums to the score's positive part.
    pub temporal_profile: Vec<f64>,
}

/// CAM of the predicted class for one full-resolution clip `[1, 3, T, S, S]`,
/// using the statistics calibrated for `c`.
pub fn compute_cam<T: Real>(model: &Model<T>, c: &Configuration, clip: &Array5<T>) -> Result<CamResult> {
    if clip.dim().0 != 1 {
        return Err(A3dError::Shape(format!("CAM takes one clip, got a batch of {}", clip.dim().0)));
    }
    let input = model.input_for(clip, c)?;
    let (frames, pixels) = (input.slow.dim().2, input.slow.dim().3);
    let out = model.predict(&input, c)?;
    let logits = out.logits.row(0);
    let class = (0..logits.len())
        .max_by(|&a, &b| logits[a].f64().total_cmp(&logits[b].f64()).then(b.cmp(&a)))
        .ok_or(A3dError::Empty("logits"))?;
    let score = logits[class].f64();
    let feats = out.features.index_axis(Axis(0), 0);
    let (ch, ft, fh, fw) = feats.dim();
    let weights = model.head().active_weight(&model.params, c.gamma_w);
    let w = weights.slice(s![class, ..ch]);
    let mut cam = Array3::<f64>::zeros((ft, fh, fw));
    for (k, f) in feats.axis_iter(Axis(0)).enumerate() {
        let wk = w[k].f64();
        cam.zip_mut_with(&f, |m, &v| *m += wk * v.f64());
    }
    cam.mapv_inplace(|v| v.max(0.0));
    let src = frame_indices_up(ft, frames);
    let raw: Vec<f64> = src.iter().map(|&t| cam.index_axis(Axis(0), t).sum()).collect();
    let total: f64 = raw.iter().sum();
    let temporal_profile = if total > 0.0 {
        raw.iter().map(|r| r / total * score.max(0.0)).collect()
    } else {
        vec![0.0; frames]
    };
    let expanded = cam.select(Axis(0), &src).insert_axis(Axis(0)).insert_axis(Axis(0));
    let up = if (fh, fw) == (pixels, pixels) {
        expanded
    } else {
        resize_spatial(expanded.view(), pixels, pixels)
    };
    let spatial_maps = up.index_axis_move(Axis(0), 0).index_axis_move(Axis(0), 0).mapv(|v| v.max(0.0));
    Ok(CamResult {
        class,
        score,
        spatial_maps,
        temporal_profile,
    })
}

/// Source feature frame of each of `out` input frames.
fn frame_indices_up(features: usize, out: usize) -> Vec<usize> {
    (0..out).map(|t| t * features / out).collect()
}

/// Writes `frame_XX.png` grayscale heatmaps (scaled by the global maximum) and
/// `temporal_profile.csv` into `dir`.
pub fn write_cam(dir: &Path, cam: &CamResult) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let max = cam.spatial_maps.iter().copied().fold(0.0, f64::max);
    let scale = if max > 0.0 { 255.0 / max } else { 0.0 };
    for (t, map) in cam.spatial_maps.axis_iter(Axis(0)).enumerate() {
        let (h, w) = map.dim();
        let img = GrayImage::from_fn(w as u32, h as u32, |x, y| Luma([(map[[y as usize, x as usize]] * scale).round() as u8]));
        img.save(dir.join(format!("frame_{t:02}.png")))?;
    }
    let mut wtr = csv::Writer::from_path(dir.join("temporal_profile.csv"))?;
    wtr.write_record(["frame", "contribution"])?;
    for (t, v) in cam.temporal_profile.iter().enumerate() {
        wtr.write_record([t.to_string(), v.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}
