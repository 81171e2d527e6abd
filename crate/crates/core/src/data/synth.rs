//! Synthetic 16-class video task: 4 textured shapes × 4 trajectories.
//!
//! Every trajectory moves right for the first half of the video and then
//! continues right, turns back, goes up or goes down, so motion classes are
//! only separable from the second half. Shapes differ in outline and in a
//! 1-pixel texture, so they blur together at low spatial resolution.

use ndarray::{Array4, Array5, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{A3dError, Result};
use crate::exec::map_indexed;
use crate::nn::ops::stack_samples;

pub const SHAPES: [&str; 4] = ["disk", "square", "triangle", "cross"];
pub const MOTIONS: [&str; 4] = ["right", "back", "up", "down"];

const TRAIN_STREAM: u64 = 0;
const VAL_STREAM: u64 = 1;
const PROBE_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub num_classes: usize,
    /// Frames per model clip `T`.
    pub clip_frames: usize,
    /// Side length `S` of every frame.
    pub clip_pixels: usize,
    /// Extra frames rendered per video for temporal-offset augmentation.
    pub margin: usize,
    pub samples_per_class: usize,
    pub val_per_class: usize,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            num_classes: 16,
            clip_frames: 8,
            clip_pixels: 32,
            margin: 2,
            samples_per_class: 50,
            val_per_class: 20,
            noise_std: 0.05,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(A3dError::InvalidConfig(m));
        if self.num_classes != SHAPES.len() * MOTIONS.len() {
            return fail(format!(
                "num_classes must be {} (shapes × motions), got {}",
                SHAPES.len() * MOTIONS.len(),
                self.num_classes
            ));
        }
        if self.clip_frames < 4 {
            return fail(format!("clip_frames must be at least 4, got {}", self.clip_frames));
        }
        if self.clip_pixels < 16 {
            return fail(format!("clip_pixels must be at least 16, got {}", self.clip_pixels));
        }
        if self.samples_per_class == 0 || self.val_per_class == 0 {
            return fail("samples_per_class and val_per_class must be positive".into());
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return fail(format!("noise_std must be a non-negative number, got {}", self.noise_std));
        }
        Ok(())
    }

    /// Frames per stored video.
    pub fn video_frames(&self) -> usize {
        self.clip_frames + self.margin
    }

    fn rng(&self, stream: u64, index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((stream << 48) | index as u64);
        rng
    }

    fn split(&self, stream: u64, per_class: usize) -> Dataset {
        let n = per_class * self.num_classes;
        let clips = map_indexed(n, |i| {
            let label = i % self.num_classes;
            render_clip(self, label, self.video_frames(), &mut self.rng(stream, i))
        });
        let labels = (0..n).map(|i| i % self.num_classes).collect();
        Dataset::new(stack_samples(clips), labels, self.num_classes).expect("rendered clips are valid")
    }
}

/// Folder names of the 16 classes in label order, e.g. `05_square_back`.
pub fn class_names() -> Vec<String> {
    (0..SHAPES.len() * MOTIONS.len())
        .map(|l| format!("{l:02}_{}_{}", SHAPES[l / MOTIONS.len()], MOTIONS[l % MOTIONS.len()]))
        .collect()
}

/// Class-balanced train and validation splits drawn from disjoint seed streams.
pub fn generate_synth(spec: &SynthSpec) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    Ok((
        spec.split(TRAIN_STREAM, spec.samples_per_class),
        spec.split(VAL_STREAM, spec.val_per_class),
    ))
}

/// Whether pixel offset `(u, v)` from the centre lies inside `shape` of radius `r`.
fn inside(shape: usize, u: f64, v: f64, r: f64) -> bool {
    match shape {
        0 => u * u + v * v <= r * r,
        1 => u.abs() <= 0.85 * r && v.abs() <= 0.85 * r,
        2 => v >= -r && v <= 0.8 * r && u.abs() <= (v + r) / 1.8,
        _ => (u.abs() <= r / 3.0 && v.abs() <= r) || (v.abs() <= r / 3.0 && u.abs() <= r),
    }
}

/// Texture of `shape` at offset `(u, v)`, in `{0, 1}`.
fn texture(shape: usize, u: f64, v: f64) -> f64 {
    let bit = |x: f64| ((x / 2.0).floor() as i64).rem_euclid(2) as f64;
    match shape {
        0 => bit(v),
        1 => bit(u),
        2 => (bit(u) + bit(v)) % 2.0,
        _ => bit(u + v),
    }
}

struct Scene {
    shape: usize,
    radius: f64,
    fg: [f64; 3],
    bg: [f64; 3],
}

impl Scene {
    fn new<R: Rng>(shape: usize, pixels: usize, rng: &mut R) -> Self {
        let mut fg = [0.0; 3];
        let mut bg = [0.0; 3];
        for c in 0..3 {
            fg[c] = rng.random_range(0.55..1.0);
            bg[c] = rng.random_range(0.0..0.35);
        }
        Self {
            shape,
            radius: pixels as f64 * 0.2,
            fg,
            bg,
        }
    }

    /// Writes one frame `[3, S, S]` with the object centred at `centre` (or background only).
    fn draw(&self, frame: &mut ndarray::ArrayViewMut3<f32>, centre: Option<(f64, f64)>) {
        let (_, h, w) = frame.dim();
        for y in 0..h {
            for x in 0..w {
                let obj = centre.and_then(|(cx, cy)| {
                    let (u, v) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                    inside(self.shape, u, v, self.radius).then(|| 0.55 + 0.45 * texture(self.shape, u, v))
                });
                for c in 0..3 {
                    frame[[c, y, x]] = match obj {
                        Some(t) => (self.fg[c] * t) as f32,
                        None => self.bg[c] as f32,
                    };
                }
            }
        }
    }
}

fn add_noise<R: Rng>(video: &mut Array4<f32>, std: f64, rng: &mut R) {
    if std > 0.0 {
        let noise = Normal::new(0.0, std).expect("finite std");
        video.mapv_inplace(|v| (v as f64 + noise.sample(rng)).clamp(0.0, 1.0) as f32);
    }
}

/// Renders one video `[3, frames, S, S]` of class `label`.
pub fn render_clip<R: Rng>(spec: &SynthSpec, label: usize, frames: usize, rng: &mut R) -> Array4<f32> {
    let (shape, motion) = (label / MOTIONS.len(), label % MOTIONS.len());
    let s = spec.clip_pixels;
    let scene = Scene::new(shape, s, rng);
    let speed = s as f64 / 12.0;
    let turn = frames / 2;
    let dir = [(1.0, 0.0), (-1.0, 0.0), (0.0, -1.0), (0.0, 1.0)][motion];
    let offset = |f: usize| {
        let a = f.min(turn) as f64;
        let b = f.saturating_sub(turn) as f64;
        (speed * (a + b * dir.0), speed * b * dir.1)
    };
    let offsets: Vec<(f64, f64)> = (0..frames).map(offset).collect();
    let lo = |k: fn(&(f64, f64)) -> f64| offsets.iter().map(k).fold(0.0, f64::min);
    let hi = |k: fn(&(f64, f64)) -> f64| offsets.iter().map(k).fold(0.0, f64::max);
    let pad = scene.radius + 1.0;
    let mut start = |lo: f64, hi: f64| {
        let (a, b) = (pad - lo, s as f64 - pad - hi);
        if b > a {
            rng.random_range(a..b)
        } else {
            (a + b) / 2.0
        }
    };
    let x0 = start(lo(|p| p.0), hi(|p| p.0));
    let y0 = start(lo(|p| p.1), hi(|p| p.1));
    let mut video = Array4::zeros((3, frames, s, s));
    for (f, (dx, dy)) in offsets.iter().enumerate() {
        scene.draw(&mut video.index_axis_mut(Axis(1), f), Some((x0 + dx, y0 + dy)));
    }
    add_noise(&mut video, spec.noise_std, rng);
    video
}

/// A clip `[1, 3, T, S, S]` whose object (the shape of `label`) is visible in
/// frame `frame` only; every other frame shows the background.
pub fn planted_frame_clip(spec: &SynthSpec, label: usize, frame: usize, index: usize) -> Array5<f32> {
    let mut rng = spec.rng(PROBE_STREAM, index);
    let s = spec.clip_pixels;
    let scene = Scene::new(label / MOTIONS.len(), s, &mut rng);
    let pad = scene.radius + 1.0;
    let cx = rng.random_range(pad..s as f64 - pad);
    let cy = rng.random_range(pad..s as f64 - pad);
    let mut video = Array4::zeros((3, spec.clip_frames, s, s));
    for f in 0..spec.clip_frames {
        scene.draw(&mut video.index_axis_mut(Axis(1), f), (f == frame).then_some((cx, cy)));
    }
    add_noise(&mut video, spec.noise_std, &mut rng);
    video.insert_axis(Axis(0))
}
