//! Single- and multi-view evaluation and exhaustive grid evaluation.

use std::sync::atomic::{AtomicBool, Ordering};

use ndarray::{s, Array2, Array4, Array5, ArrayView4, Axis};
use serde::{Deserialize, Serialize};

use super::table::TradeoffRow;
use crate::configspace::{network_cost_at, Configuration, GridPoint};
use crate::data::Dataset;
use crate::error::{A3dError, Result};
use crate::exec::map_indexed;
use crate::model::Model;
use crate::nn::ops::{resize_spatial, softmax_rows, stack_samples};
use crate::real::Real;
use crate::slimnet::Ctx;

/// Temporal clips × spatial crops averaged per video.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Views {
    pub temporal: usize,
    pub spatial: usize,
}

impl Views {
    pub const SINGLE: Views = Views { temporal: 1, spatial: 1 };

    pub fn new(temporal: usize, spatial: usize) -> Result<Self> {
        if temporal == 0 || spatial == 0 {
            return Err(A3dError::Invalid(format!("views must be positive, got {temporal}×{spatial}")));
        }
        Ok(Self { temporal, spatial })
    }

    pub fn count(&self) -> usize {
        self.temporal * self.spatial
    }
}

/// Where inference takes its normalization statistics from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StatSource {
    /// Statistics calibrated for the running configuration.
    Calibrated,
    /// Statistics of another (wider) configuration, truncated to the active channels.
    Prefix(Configuration),
}

/// Start frames of `n` uniformly spaced windows of `frames` frames in a video
/// of `len` frames; one window is centred.
pub fn window_starts(len: usize, frames: usize, n: usize) -> Vec<usize> {
    let room = len.saturating_sub(frames);
    if n == 1 {
        return vec![room / 2];
    }
    (0..n).map(|i| (i * room + (n - 1) / 2) / (n - 1)).collect()
}

/// Offsets of `n` square crops of side `crop` along an axis of `side` pixels:
/// left, centre and right for three, centre only for one.
pub fn crop_offsets(side: usize, crop: usize, n: usize) -> Vec<usize> {
    window_starts(side, crop, n)
}

static LOOP_PAD_WARNED: AtomicBool = AtomicBool::new(false);

/// Every view of `video` `[3, L, H, W]` as a batch `[V, 3, frames, pixels, pixels]`.
/// Videos shorter than `frames` are loop-padded.
pub fn extract_views(video: ArrayView4<f32>, frames: usize, pixels: usize, views: Views) -> Array5<f32> {
    let (_, len, h, w) = video.dim();
    if len < frames && !LOOP_PAD_WARNED.swap(true, Ordering::Relaxed) {
        log::warn!("video of {len} frames is shorter than the {frames}-frame clip; loop-padding");
    }
    let side = h.min(w);
    let mut out = Vec::with_capacity(views.count());
    for t0 in window_starts(len, frames, views.temporal) {
        let idx: Vec<usize> = (0..frames).map(|k| (t0 + k) % len).collect();
        let clip = video.select(Axis(1), &idx);
        for off in crop_offsets(h.max(w), side, views.spatial) {
            let crop = if h >= w {
                clip.slice(s![.., .., off..off + side, ..])
            } else {
                clip.slice(s![.., .., .., off..off + side])
            };
            out.push(crop.to_owned());
        }
    }
    let batch = stack_samples(out);
    if side == pixels {
        batch
    } else {
        resize_spatial(batch.view(), pixels, pixels)
    }
}

fn logits<T: Real>(model: &Model<T>, clips: &Array5<f32>, c: &Configuration, stats: StatSource) -> Result<Array2<T>> {
    let x = clips.mapv(|v| T::of(v as f64));
    let input = model.input_for(&x, c)?;
    let mut ctx = match stats {
        StatSource::Calibrated => Ctx::eval(model.stats.get(c)?),
        StatSource::Prefix(from) => Ctx::prefix(model.stats.get(&from)?),
    };
    Ok(model.forward(&input, c, &mut ctx)?.0.logits)
}

/// Mean softmax over `views` of one video `[3, L, H, W]`.
pub fn multi_view_predict<T: Real>(model: &Model<T>, c: &Configuration, video: ArrayView4<f32>, views: Views, stats: StatSource) -> Result<Vec<f64>> {
    let clips = extract_views(video, model.clip_frames(), model.clip_pixels(), views);
    let p = softmax_rows(&logits(model, &clips, c, stats)?);
    Ok(p.mean_axis(Axis(0)).expect("at least one view").to_vec())
}

/// Accuracy of one configuration, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub top1: f64,
    pub top5: f64,
    pub clips: usize,
}

/// Per-video class distributions `[N, K]` averaged over views.
pub fn predict_dataset<T: Real>(model: &Model<T>, data: &Dataset, c: &Configuration, views: Views, stats: StatSource, batch_size: usize) -> Result<Array2<f64>> {
    if data.is_empty() {
        return Err(A3dError::Empty("evaluation set"));
    }
    let (frames, pixels) = (model.clip_frames(), model.clip_pixels());
    let mut probs = Array2::zeros((data.len(), model.arch.num_classes));
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(batch_size.max(1)) {
        let per_video: Vec<Array5<f32>> = chunk.iter().map(|&i| extract_views(data.video(i), frames, pixels, views)).collect();
        for v in 0..views.count() {
            let clips: Vec<Array4<f32>> = per_video.iter().map(|b| b.index_axis(Axis(0), v).to_owned()).collect();
            let p = softmax_rows(&logits(model, &stack_samples(clips), c, stats)?);
            let mut dst = probs.slice_mut(s![chunk[0]..chunk[0] + chunk.len(), ..]);
            dst += &p;
        }
    }
    probs /= views.count() as f64;
    Ok(probs)
}

/// Top-1 and top-5 accuracy of `c` on `data`.
pub fn evaluate<T: Real>(model: &Model<T>, data: &Dataset, c: &Configuration, views: Views, stats: StatSource, batch_size: usize) -> Result<EvalResult> {
    let probs = predict_dataset(model, data, c, views, stats, batch_size)?;
    let (mut top1, mut top5) = (0usize, 0usize);
    for (row, &y) in probs.rows().into_iter().zip(&data.labels) {
        let above = row.iter().enumerate().filter(|&(j, &p)| p > row[y] || (p == row[y] && j < y)).count();
        top1 += usize::from(above < 1);
        top5 += usize::from(above < 5);
    }
    let n = data.len() as f64;
    Ok(EvalResult {
        top1: 100.0 * top1 as f64 / n,
        top5: 100.0 * top5 as f64 / n,
        clips: data.len(),
    })
}

/// Evaluates every grid point with its calibrated statistics. Configurations
/// run concurrently on the read-only model.
pub fn evaluate_grid<T: Real>(model: &Model<T>, data: &Dataset, points: &[GridPoint], views: Views, batch_size: usize) -> Result<Vec<TradeoffRow>> {
    if let Some(p) = points.iter().find(|p| !model.stats.contains(&p.config)) {
        return Err(A3dError::Uncalibrated(p.config.key()));
    }
    map_indexed(points.len(), |i| {
        let p = &points[i];
        let r = evaluate(model, data, &p.config, views, StatSource::Calibrated, batch_size)?;
        let cost = network_cost_at(&model.arch, p.config.gamma_w, p.frames, p.pixels)?;
        Ok(TradeoffRow {
            gamma_w: p.config.gamma_w,
            gamma_s: p.config.gamma_s,
            gamma_t: p.config.gamma_t,
            frames: p.frames,
            pixels: p.pixels,
            gflops: cost.gflops(),
            params: cost.params,
            top1: r.top1,
            top5: Some(r.top5),
        })
    })
    .into_iter()
    .collect()
}
