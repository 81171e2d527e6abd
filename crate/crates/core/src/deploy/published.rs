//! Published trade-off lists and full trade-off tables of the ResNet-50
//! presets, as reported at 30 views.

use super::table::TradeoffRow;
use crate::configspace::{network_cost_at, ArchSpec, ComputeRange};
use crate::error::Result;

/// One selected configuration of a published trade-off list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ListRow {
    pub pixels: usize,
    pub frames: usize,
    pub gamma_w: f64,
    pub top1: f64,
    pub gflops: f64,
    pub params_m: f64,
}

const fn lr(pixels: usize, frames: usize, gamma_w: f64, top1: f64, gflops: f64, params_m: f64) -> ListRow {
    ListRow {
        pixels,
        frames,
        gamma_w,
        top1,
        gflops,
        params_m,
    }
}

/// A published trade-off list with its own cost column.
#[derive(Debug, Clone, Copy)]
pub struct PublishedList {
    pub arch: &'static str,
    pub range: &'static str,
    pub rows: &'static [ListRow],
}

/// A published full table: top-1 per input size (rows) and width (columns).
#[derive(Debug, Clone, Copy)]
pub struct PublishedGrid {
    pub arch: &'static str,
    pub range: &'static str,
    pub widths: &'static [f64],
    pub rows: &'static [(usize, usize, &'static [Option<f64>])],
}

pub const SLOW_WIDE_LIST: PublishedList = PublishedList {
    arch: "slow8x8_r50",
    range: "0.016",
    rows: &[
        lr(256, 8, 1.0, 75.2, 54.5, 32.5),
        lr(224, 8, 1.0, 74.9, 41.7, 32.5),
        lr(224, 6, 1.0, 74.3, 31.3, 32.5),
        lr(224, 4, 1.0, 74.2, 20.9, 32.5),
        lr(224, 4, 0.9, 73.2, 16.8, 26.5),
        lr(224, 4, 0.8, 72.8, 13.4, 21.0),
        lr(192, 4, 0.8, 72.1, 9.8, 21.0),
        lr(192, 4, 0.7, 71.6, 7.6, 16.0),
        lr(224, 4, 0.5, 70.9, 5.3, 8.3),
        lr(192, 4, 0.5, 70.1, 3.9, 8.3),
        lr(160, 4, 0.5, 68.8, 2.7, 8.3),
        lr(192, 2, 0.5, 67.7, 2.0, 8.3),
        lr(160, 2, 0.5, 66.4, 1.4, 8.3),
        lr(128, 2, 0.5, 64.1, 0.9, 8.3),
    ],
};

pub const SLOW_NARROW_LIST: PublishedList = PublishedList {
    arch: "slow8x8_r50",
    range: "0.06",
    rows: &[
        lr(256, 8, 1.0, 75.6, 54.5, 32.5),
        lr(224, 8, 1.0, 75.2, 41.7, 32.5),
        lr(224, 8, 0.83, 74.6, 29.3, 22.5),
        lr(224, 8, 0.73, 74.3, 22.5, 17.5),
        lr(224, 8, 0.63, 74.0, 16.6, 13.0),
        lr(224, 5, 0.63, 73.0, 10.4, 13.0),
        lr(178, 5, 0.63, 72.3, 7.3, 13.0),
        lr(178, 3, 0.63, 70.7, 4.4, 13.0),
        lr(142, 3, 0.63, 68.7, 2.7, 13.0),
    ],
};

pub const SLOWFAST_NARROW_LIST: PublishedList = PublishedList {
    arch: "slowfast4x16_r50",
    range: "0.06",
    rows: &[
        lr(256, 4, 1.0, 75.7, 36.1, 34.5),
        lr(224, 4, 1.0, 75.2, 27.6, 34.5),
        lr(224, 3, 1.0, 75.1, 22.1, 34.5),
        lr(224, 3, 0.83, 74.9, 17.4, 24.4),
        lr(224, 3, 0.73, 74.6, 14.7, 19.2),
        lr(224, 3, 0.63, 74.3, 12.4, 14.5),
        lr(224, 2, 0.63, 73.5, 10.2, 14.5),
        lr(178, 2, 0.63, 72.4, 8.8, 14.5),
        lr(142, 2, 0.73, 71.3, 8.3, 19.2),
        lr(142, 2, 0.63, 71.0, 7.6, 14.5),
    ],
};

const N: Option<f64> = None;

pub const SLOW_WIDE_GRID: PublishedGrid = PublishedGrid {
    arch: "slow8x8_r50",
    range: "0.016",
    widths: &[1.0, 0.9, 0.8, 0.7, 0.6, 0.5],
    rows: &[
        (256, 8, &[Some(75.2), N, N, N, N, N]),
        (224, 8, &[Some(74.9), Some(74.2), Some(73.8), Some(73.2), Some(72.7), Some(72.1)]),
        (224, 6, &[Some(74.3), Some(73.8), Some(73.4), Some(72.7), Some(72.4), Some(71.6)]),
        (224, 4, &[Some(73.6), Some(73.2), Some(72.8), Some(72.2), Some(71.6), Some(70.9)]),
        (224, 2, &[Some(71.3), Some(70.8), Some(70.4), Some(69.9), Some(69.2), Some(68.5)]),
        (192, 8, &[Some(73.9), Some(73.6), Some(73.1), Some(72.6), Some(72.0), Some(71.3)]),
        (192, 6, &[Some(73.6), Some(73.2), Some(72.8), Some(72.2), Some(71.7), Some(71.0)]),
        (192, 4, &[Some(72.5), Some(72.4), Some(72.1), Some(71.6), Some(70.8), Some(70.1)]),
        (192, 2, &[Some(70.3), Some(70.1), Some(69.6), Some(69.1), Some(68.3), Some(67.7)]),
        (160, 8, &[Some(72.3), Some(72.3), Some(71.9), Some(71.5), Some(70.7), Some(70.3)]),
        (160, 6, &[Some(71.9), Some(72.1), Some(71.4), Some(71.1), Some(70.4), Some(69.9)]),
        (160, 4, &[Some(71.0), Some(71.1), Some(70.5), Some(70.1), Some(69.5), Some(68.8)]),
        (160, 2, &[Some(68.0), Some(68.4), Some(68.2), Some(67.7), Some(66.9), Some(66.4)]),
        (128, 8, &[Some(69.4), Some(69.9), Some(69.7), Some(69.3), Some(68.7), Some(67.9)]),
        (128, 6, &[Some(69.1), Some(69.4), Some(69.2), Some(68.8), Some(68.2), Some(67.5)]),
        (128, 4, &[Some(68.0), Some(68.5), Some(68.0), Some(67.8), Some(67.2), Some(66.7)]),
        (128, 2, &[Some(65.1), Some(65.9), Some(65.1), Some(65.4), Some(64.5), Some(64.1)]),
    ],
};

pub const SLOW_NARROW_GRID: PublishedGrid = PublishedGrid {
    arch: "slow8x8_r50",
    range: "0.06",
    widths: &[1.0, 0.93, 0.83, 0.73, 0.63],
    rows: &[
        (256, 8, &[Some(75.6), N, N, N, N]),
        (224, 8, &[Some(75.2), Some(74.6), Some(74.6), Some(74.3), Some(74.0)]),
        (224, 5, &[Some(74.2), Some(73.8), Some(73.8), Some(73.6), Some(73.0)]),
        (224, 3, &[Some(72.6), Some(72.3), Some(72.2), Some(71.9), Some(71.7)]),
        (178, 8, &[Some(73.7), Some(73.6), Some(73.5), Some(73.2), Some(73.0)]),
        (178, 5, &[Some(73.0), Some(72.8), Some(72.7), Some(72.4), Some(72.3)]),
        (178, 3, &[Some(71.0), Some(71.2), Some(71.2), Some(71.0), Some(70.7)]),
        (142, 8, &[Some(71.5), Some(71.7), Some(71.8), Some(71.5), Some(71.3)]),
        (142, 5, &[Some(70.7), Some(71.1), Some(71.0), Some(70.7), Some(70.5)]),
        (142, 3, &[Some(68.9), Some(69.4), Some(69.3), Some(68.9), Some(68.7)]),
    ],
};

pub const SLOWFAST_NARROW_GRID: PublishedGrid = PublishedGrid {
    arch: "slowfast4x16_r50",
    range: "0.06",
    widths: &[1.0, 0.93, 0.83, 0.73, 0.63],
    rows: &[
        (256, 4, &[Some(75.7), N, N, N, N]),
        (224, 4, &[Some(75.2), Some(75.1), Some(75.0), Some(74.7), Some(74.6)]),
        (224, 3, &[Some(75.1), Some(75.0), Some(74.9), Some(74.6), Some(74.3)]),
        (224, 2, &[Some(74.4), Some(74.2), Some(74.1), Some(73.9), Some(73.5)]),
        (178, 4, &[Some(74.2), Some(74.3), Some(74.1), Some(73.7), Some(73.4)]),
        (178, 3, &[Some(73.9), Some(74.0), Some(73.9), Some(73.7), Some(73.3)]),
        (178, 2, &[Some(73.1), Some(73.2), Some(73.1), Some(72.9), Some(72.4)]),
        (142, 4, &[Some(72.4), Some(72.6), Some(72.6), Some(72.6), Some(72.0)]),
        (142, 3, &[Some(72.1), Some(72.5), Some(72.4), Some(72.3), Some(71.8)]),
        (142, 2, &[Some(71.2), Some(71.7), Some(71.6), Some(71.3), Some(71.0)]),
    ],
};

fn preset_arch(name: &str) -> ArchSpec {
    ArchSpec::preset(name).expect("published tables name built-in presets")
}

/// Nominal (γs, γt) of a published input size; sizes outside the grid
/// (the 256-pixel test crop) map to 1.
fn nominal(arch: &ArchSpec, range: &str, pixels: usize, frames: usize) -> Result<(f64, f64)> {
    let r = ComputeRange::preset(range, 224, arch.base_frames)?;
    let s = r.spatial_grid.iter().find(|l| l.pixels == pixels).map_or(1.0, |l| l.gamma);
    let t = r.temporal_grid.iter().find(|l| l.frames == frames).map_or(1.0, |l| l.gamma);
    Ok((s, t))
}

impl PublishedList {
    /// Rows carrying the published cost and parameter columns.
    pub fn rows(&self) -> Result<Vec<TradeoffRow>> {
        let arch = preset_arch(self.arch);
        self.rows
            .iter()
            .map(|r| {
                let (s, t) = nominal(&arch, self.range, r.pixels, r.frames)?;
                Ok(TradeoffRow {
                    gamma_w: r.gamma_w,
                    gamma_s: s,
                    gamma_t: t,
                    frames: r.frames,
                    pixels: r.pixels,
                    gflops: r.gflops,
                    params: (r.params_m * 1e6).round() as u64,
                    top1: r.top1,
                    top5: None,
                })
            })
            .collect()
    }
}

impl PublishedGrid {
    /// Every reported cell, costed with the analytic cost model.
    pub fn rows(&self) -> Result<Vec<TradeoffRow>> {
        let arch = preset_arch(self.arch);
        let mut out = Vec::new();
        for &(pixels, frames, cells) in self.rows {
            let (s, t) = nominal(&arch, self.range, pixels, frames)?;
            for (&w, cell) in self.widths.iter().zip(cells) {
                if let Some(top1) = *cell {
                    let cost = network_cost_at(&arch, w, frames, pixels)?;
                    out.push(TradeoffRow {
                        gamma_w: w,
                        gamma_s: s,
                        gamma_t: t,
                        frames,
                        pixels,
                        gflops: cost.gflops(),
                        params: cost.params,
                        top1,
                        top5: None,
                    });
                }
            }
        }
        Ok(out)
    }
}
