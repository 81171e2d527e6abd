//! Clips stored as image sequences: `root/<class>/<clip>/<frame>.{png,jpg}`.

use std::fs;
use std::path::{Path, PathBuf};

use image::imageops::FilterType;
use ndarray::{Array4, ArrayView4, Axis};

use super::Dataset;
use crate::error::{A3dError, Result};
use crate::nn::ops::{frame_indices, stack_samples};

pub const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

/// Clips loaded from a folder tree plus the class names in label order.
#[derive(Debug, Clone)]
pub struct FolderDataset {
    pub data: Dataset,
    pub classes: Vec<String>,
    pub clips: Vec<PathBuf>,
}

fn sorted_entries(dir: &Path, dirs: bool) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let keep = if dirs {
            path.is_dir()
        } else {
            path.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        };
        if keep {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Decodes one frame, centre-crops it to a square and resizes it to `pixels`.
fn load_frame(path: &Path, pixels: usize) -> Result<image::RgbImage> {
    let img = image::open(path)
        .map_err(|e| A3dError::Format(format!("{}: {e}", path.display())))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    let side = w.min(h);
    let crop = image::imageops::crop_imm(&img, (w - side) / 2, (h - side) / 2, side, side).to_image();
    Ok(image::imageops::resize(&crop, pixels as u32, pixels as u32, FilterType::Triangle))
}

/// Loads one clip directory as `[3, frames, S, S]`, sampling frames `⌊i·n/frames⌋`.
pub fn load_clip(dir: &Path, frames: usize, pixels: usize) -> Result<Array4<f32>> {
    let files = sorted_entries(dir, false)?;
    if files.is_empty() {
        return Err(A3dError::Invalid(format!("{}: no frames", dir.display())));
    }
    let mut clip = Array4::zeros((3, frames, pixels, pixels));
    for (t, i) in frame_indices(files.len(), frames).into_iter().enumerate() {
        let img = load_frame(&files[i], pixels)?;
        for (x, y, p) in img.enumerate_pixels() {
            for c in 0..3 {
                clip[[c, t, y as usize, x as usize]] = p.0[c] as f32 / 255.0;
            }
        }
    }
    Ok(clip)
}

/// Loads every clip under `root`; labels follow the sorted class folder names.
pub fn load_clip_folder(root: &Path, frames: usize, pixels: usize) -> Result<FolderDataset> {
    if frames == 0 || pixels == 0 {
        return Err(A3dError::InvalidConfig("frames and pixels must be positive".into()));
    }
    let class_dirs = sorted_entries(root, true)?;
    if class_dirs.is_empty() {
        return Err(A3dError::Invalid(format!("{}: no class folders", root.display())));
    }
    let mut videos = Vec::new();
    let mut labels = Vec::new();
    let mut clips = Vec::new();
    for (label, dir) in class_dirs.iter().enumerate() {
        for clip in sorted_entries(dir, true)? {
            videos.push(load_clip(&clip, frames, pixels)?);
            labels.push(label);
            clips.push(clip);
        }
    }
    if videos.is_empty() {
        return Err(A3dError::Invalid(format!("{}: no clips", root.display())));
    }
    let classes = class_dirs
        .iter()
        .map(|d| d.file_name().unwrap_or_default().to_string_lossy().into_owned())
        .collect::<Vec<_>>();
    let data = Dataset::new(stack_samples(videos), labels, classes.len())?;
    Ok(FolderDataset { data, classes, clips })
}

/// Writes one clip `[3, T, H, W]` as `frame_XXXX.png` files, values clamped to `[0, 1]`.
pub fn save_clip(dir: &Path, video: ArrayView4<f32>) -> Result<()> {
    let (c, t, h, w) = video.dim();
    if c != 3 {
        return Err(A3dError::Shape(format!("clips need 3 channels, got {c}")));
    }
    fs::create_dir_all(dir)?;
    for f in 0..t {
        let img = image::RgbImage::from_fn(w as u32, h as u32, |x, y| {
            let px = |ch: usize| (video[[ch, f, y as usize, x as usize]].clamp(0.0, 1.0) * 255.0).round() as u8;
            image::Rgb([px(0), px(1), px(2)])
        });
        img.save(dir.join(format!("frame_{f:04}.png")))?;
    }
    Ok(())
}

/// Writes `data` as `root/<class>/<clip>/frame_XXXX.png`; `classes` names the
/// labels in order and must sort in that order.
pub fn write_clip_folder(root: &Path, data: &Dataset, classes: &[String]) -> Result<()> {
    if classes.len() != data.num_classes {
        return Err(A3dError::Invalid(format!("{} class names for {} classes", classes.len(), data.num_classes)));
    }
    if classes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(A3dError::Invalid("class names must be strictly increasing".into()));
    }
    for (i, video) in data.videos.axis_iter(Axis(0)).enumerate() {
        save_clip(&root.join(&classes[data.labels[i]]).join(format!("clip_{i:05}")), video)?;
    }
    Ok(())
}
