//! Configurations, compute ranges, training-time sampling and the analytic
//! cost model.

mod arch;
mod cost;

pub use arch::{
    ArchSpec, LayerKind, LayerSpec, PathwayBody, PathwaySpec, PlacedLayer, PoolSpec,
    ResidualSpec, StageSpec, StemSpec,
};
pub use cost::{
    expected_training_cost, layer_cost, network_cost, network_cost_at, write_cost_csv, CostRow,
    NetworkCost, TrainingCostEstimate,
};

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{A3dError, Result};

/// Tolerance used when checking range invariants.
pub const RANGE_EPS: f64 = 1e-6;

/// Round half up, nudged so that values like `0.15 * 10` land on the intended side.
pub fn round_half_up(x: f64) -> usize {
    (x + 0.5 + 1e-9).floor().max(0.0) as usize
}

/// Active channel count of a width-scalable layer with `channels` full channels.
pub fn width(channels: usize, gamma_w: f64) -> usize {
    round_half_up(gamma_w * channels as f64).max(1)
}

/// Frame count after temporal scaling.
pub fn scaled_frames(frames: usize, gamma_t: f64) -> usize {
    round_half_up(gamma_t * frames as f64).max(1)
}

/// Spatial side length after spatial scaling.
pub fn scaled_pixels(pixels: usize, gamma_s: f64) -> usize {
    round_half_up(gamma_s * pixels as f64).max(1)
}

/// One executable network instance: width, spatial and temporal factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub gamma_w: f64,
    pub gamma_s: f64,
    pub gamma_t: f64,
}

impl Configuration {
    pub const FULL: Configuration = Configuration {
        gamma_w: 1.0,
        gamma_s: 1.0,
        gamma_t: 1.0,
    };

    pub fn new(gamma_w: f64, gamma_s: f64, gamma_t: f64) -> Result<Self> {
        for (name, g) in [("gamma_w", gamma_w), ("gamma_s", gamma_s), ("gamma_t", gamma_t)] {
            if !(g > 0.0 && g <= 1.0) {
                return Err(A3dError::InvalidConfig(format!(
                    "{name} = {g} is outside (0, 1]"
                )));
            }
        }
        Ok(Self {
            gamma_w,
            gamma_s,
            gamma_t,
        })
    }

    /// γw²·γs²·γt, the fraction of full-network compute.
    pub fn reduction_factor(&self) -> f64 {
        self.gamma_w * self.gamma_w * self.gamma_s * self.gamma_s * self.gamma_t
    }

    pub fn is_full(&self) -> bool {
        self.gamma_w == 1.0 && self.gamma_s == 1.0 && self.gamma_t == 1.0
    }

    /// Canonical stat-bank key, `w{γw}_s{γs}_t{γt}` with four decimals.
    pub fn key(&self) -> String {
        format!(
            "w{:.4}_s{:.4}_t{:.4}",
            self.gamma_w, self.gamma_s, self.gamma_t
        )
    }

    pub fn from_key(key: &str) -> Result<Self> {
        let bad = || A3dError::InvalidConfig(format!("malformed configuration key '{key}'"));
        let mut parts = key.split('_');
        let mut next = |prefix: char| -> Result<f64> {
            let p = parts.next().ok_or_else(bad)?;
            p.strip_prefix(prefix)
                .ok_or_else(bad)?
                .parse::<f64>()
                .map_err(|_| bad())
        };
        let (w, s, t) = (next('w')?, next('s')?, next('t')?);
        Self::new(w, s, t)
    }

    pub fn frames(&self, base_frames: usize) -> usize {
        scaled_frames(base_frames, self.gamma_t)
    }

    pub fn pixels(&self, base_pixels: usize) -> usize {
        scaled_pixels(base_pixels, self.gamma_s)
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(γw={}, γs={}, γt={})",
            self.gamma_w, self.gamma_s, self.gamma_t
        )
    }
}

impl FromStr for Configuration {
    type Err = A3dError;

    /// Parses `w,s,t`.
    fn from_str(s: &str) -> Result<Self> {
        let vals: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| A3dError::InvalidConfig(format!("cannot parse '{s}' as w,s,t")))?;
        match vals.as_slice() {
            [w, s, t] => Configuration::new(*w, *s, *t),
            _ => Err(A3dError::InvalidConfig(format!(
                "expected three comma-separated factors, got '{s}'"
            ))),
        }
    }
}

/// A spatial grid level: the nominal factor and the pixel side it maps to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialLevel {
    pub gamma: f64,
    pub pixels: usize,
}

/// A temporal grid level: the nominal factor and its frame count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemporalLevel {
    pub gamma: f64,
    pub frames: usize,
}

/// The adaptive compute range γw²γs²γt ∈ [1/ρ, 1] and its discrete grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComputeRange {
    pub rho: f64,
    pub width_grid: Vec<f64>,
    pub spatial_grid: Vec<SpatialLevel>,
    pub temporal_grid: Vec<TemporalLevel>,
}

/// Published pixel/frame labels for the 224-crop, 8-frame setting.
const WIDE_SPATIAL_224: [(f64, usize); 4] = [(0.57, 128), (0.71, 160), (0.86, 192), (1.0, 224)];
const WIDE_TEMPORAL_8: [(f64, usize); 4] = [(0.25, 2), (0.5, 4), (0.75, 6), (1.0, 8)];
const NARROW_SPATIAL_224: [(f64, usize); 3] = [(0.63, 142), (0.80, 178), (1.0, 224)];
const NARROW_TEMPORAL_8: [(f64, usize); 3] = [(0.4, 3), (0.63, 5), (1.0, 8)];

impl ComputeRange {
    /// Builds a range from nominal grids, deriving pixel and frame counts from the crop base.
    pub fn from_grids(
        rho: f64,
        width_grid: &[f64],
        spatial: &[f64],
        temporal: &[f64],
        crop: usize,
        frames: usize,
    ) -> Result<Self> {
        let range = Self {
            rho,
            width_grid: width_grid.to_vec(),
            spatial_grid: spatial
                .iter()
                .map(|&g| SpatialLevel {
                    gamma: g,
                    pixels: scaled_pixels(crop, g),
                })
                .collect(),
            temporal_grid: temporal
                .iter()
                .map(|&g| TemporalLevel {
                    gamma: g,
                    frames: scaled_frames(frames, g),
                })
                .collect(),
        };
        range.validate()?;
        Ok(range)
    }

    /// The ρ = 64 range `[0.016, 1]`.
    pub fn wide(crop: usize, frames: usize) -> Self {
        let mut r = Self::from_grids(
            64.0,
            &[0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
            &WIDE_SPATIAL_224.map(|p| p.0),
            &WIDE_TEMPORAL_8.map(|p| p.0),
            crop,
            frames,
        )
        .expect("built-in range is valid");
        r.apply_published_labels(crop, frames, &WIDE_SPATIAL_224, &WIDE_TEMPORAL_8);
        r
    }

    /// The ρ = 16 range `[0.06, 1]`.
    pub fn narrow(crop: usize, frames: usize) -> Self {
        let mut r = Self::from_grids(
            16.0,
            &[0.63, 0.73, 0.83, 0.93, 1.0],
            &NARROW_SPATIAL_224.map(|p| p.0),
            &NARROW_TEMPORAL_8.map(|p| p.0),
            crop,
            frames,
        )
        .expect("built-in range is valid");
        r.apply_published_labels(crop, frames, &NARROW_SPATIAL_224, &NARROW_TEMPORAL_8);
        r
    }

    /// Degenerate range containing only the full configuration.
    pub fn full_only(crop: usize, frames: usize) -> Self {
        Self::from_grids(1.0, &[1.0], &[1.0], &[1.0], crop, frames).expect("valid")
    }

    /// Named preset: `"0.016"`/`"wide"`, `"0.06"`/`"narrow"`, `"full"`.
    pub fn preset(name: &str, crop: usize, frames: usize) -> Result<Self> {
        match name {
            "0.016" | "wide" | "[0.016,1]" => Ok(Self::wide(crop, frames)),
            "0.06" | "narrow" | "[0.06,1]" => Ok(Self::narrow(crop, frames)),
            "full" | "1" => Ok(Self::full_only(crop, frames)),
            other => Err(A3dError::InvalidConfig(format!(
                "unknown compute range '{other}' (expected 0.016, 0.06 or full)"
            ))),
        }
    }

    fn apply_published_labels(
        &mut self,
        crop: usize,
        frames: usize,
        spatial: &[(f64, usize)],
        temporal: &[(f64, usize)],
    ) {
        if crop == 224 {
            for (level, &(_, px)) in self.spatial_grid.iter_mut().zip(spatial) {
                level.pixels = px;
            }
        }
        if frames == 8 {
            for (level, &(_, f)) in self.temporal_grid.iter_mut().zip(temporal) {
                level.frames = f;
            }
        }
    }

    /// Variant without the temporal dimension: γt pinned to 1 and the width and
    /// spatial lower bounds widened to ρ^(-1/4) (rounded up to two decimals) so
    /// the range keeps its coverage.
    pub fn without_temporal(&self, crop: usize, frames: usize) -> Result<Self> {
        let lower = self.rho.powf(-0.25);
        let n_w = self.width_grid.len().max(2);
        let n_s = self.spatial_grid.len().max(2);
        let spaced = |n: usize| -> Vec<f64> {
            (0..n)
                .map(|i| {
                    let v = lower + (1.0 - lower) * i as f64 / (n - 1) as f64;
                    (v * 100.0 - 1e-9).ceil() / 100.0
                })
                .collect()
        };
        Self::from_grids(self.rho, &spaced(n_w), &spaced(n_s), &[1.0], crop, frames)
    }

    pub fn width_min(&self) -> f64 {
        self.width_grid.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho >= 1.0) {
            return Err(A3dError::InvalidConfig(format!("rho = {} < 1", self.rho)));
        }
        if self.width_grid.is_empty() || self.spatial_grid.is_empty() || self.temporal_grid.is_empty()
        {
            return Err(A3dError::InvalidConfig("grids must be non-empty".into()));
        }
        let check = |name: &str, vals: Vec<f64>| -> Result<()> {
            if vals.iter().any(|&g| !(g > 0.0 && g <= 1.0)) {
                return Err(A3dError::InvalidConfig(format!("{name} grid has values outside (0,1]")));
            }
            if vals.windows(2).any(|w| w[0] >= w[1]) {
                return Err(A3dError::InvalidConfig(format!("{name} grid must be strictly ascending")));
            }
            if *vals.last().unwrap() != 1.0 {
                return Err(A3dError::InvalidConfig(format!("{name} grid must end at 1.0")));
            }
            Ok(())
        };
        check("width", self.width_grid.clone())?;
        check("spatial", self.spatial_grid.iter().map(|l| l.gamma).collect())?;
        check("temporal", self.temporal_grid.iter().map(|l| l.gamma).collect())?;
        let min = self.width_grid[0].powi(2)
            * self.spatial_grid[0].gamma.powi(2)
            * self.temporal_grid[0].gamma;
        if min < 1.0 / self.rho - RANGE_EPS {
            return Err(A3dError::InvalidConfig(format!(
                "smallest grid configuration has reduction {min:.5} below 1/rho = {:.5}",
                1.0 / self.rho
            )));
        }
        Ok(())
    }

    pub fn spatial_level(&self, gamma_s: f64) -> Option<SpatialLevel> {
        self.spatial_grid.iter().copied().find(|l| (l.gamma - gamma_s).abs() < 1e-9)
    }

    pub fn temporal_level(&self, gamma_t: f64) -> Option<TemporalLevel> {
        self.temporal_grid.iter().copied().find(|l| (l.gamma - gamma_t).abs() < 1e-9)
    }
}

/// A configuration together with the input geometry it maps to on a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub config: Configuration,
    pub frames: usize,
    pub pixels: usize,
}

/// All grid configurations, deduplicated and sorted by descending reduction factor.
pub fn enumerate_grid(range: &ComputeRange) -> Vec<Configuration> {
    enumerate_points(range).into_iter().map(|p| p.config).collect()
}

/// Like [`enumerate_grid`] but keeps the frame and pixel labels of each point.
pub fn enumerate_points(range: &ComputeRange) -> Vec<GridPoint> {
    let mut points = Vec::new();
    for &w in &range.width_grid {
        for s in &range.spatial_grid {
            for t in &range.temporal_grid {
                let p = GridPoint {
                    config: Configuration {
                        gamma_w: w,
                        gamma_s: s.gamma,
                        gamma_t: t.gamma,
                    },
                    frames: t.frames,
                    pixels: s.pixels,
                };
                if !points.iter().any(|q: &GridPoint| q.config == p.config) {
                    points.push(p);
                }
            }
        }
    }
    points.sort_by(|a, b| {
        let key = |p: &GridPoint| {
            (
                p.config.reduction_factor(),
                p.config.gamma_w,
                p.config.gamma_s,
                p.config.gamma_t,
            )
        };
        key(b).partial_cmp(&key(a)).expect("finite factors")
    });
    points
}

/// Full network plus the two sub-networks sampled for one training iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampledTriple {
    pub full: Configuration,
    pub random_sub: Configuration,
    pub min_sub: Configuration,
}

impl SampledTriple {
    pub fn subs(&self) -> [Configuration; 2] {
        [self.random_sub, self.min_sub]
    }
}

/// Sandwich sampling: the full network, one sub-network with γw ~ U[width_min, 1]
/// and one at the minimal width. Spatial and temporal factors of the subs are
/// drawn uniformly from the grids, independently per sub unless `shared_draw`.
pub fn sample_training_triple<R: Rng + ?Sized>(
    range: &ComputeRange,
    rng: &mut R,
    shared_draw: bool,
) -> SampledTriple {
    let w_min = range.width_min();
    let w_max = range.width_grid.iter().copied().fold(w_min, f64::max);
    let u: f64 = rng.random();
    let gamma_w = w_min + (w_max - w_min) * u;
    let draw_st = |rng: &mut R| {
        let s = range.spatial_grid[rng.random_range(0..range.spatial_grid.len())].gamma;
        let t = range.temporal_grid[rng.random_range(0..range.temporal_grid.len())].gamma;
        (s, t)
    };
    let (s1, t1) = draw_st(rng);
    let (s2, t2) = if shared_draw { (s1, t1) } else { draw_st(rng) };
    SampledTriple {
        full: Configuration::FULL,
        random_sub: Configuration {
            gamma_w: gamma_w.min(1.0),
            gamma_s: s1,
            gamma_t: t1,
        },
        min_sub: Configuration {
            gamma_w: w_min,
            gamma_s: s2,
            gamma_t: t2,
        },
    }
}
