//! Analytic multiply-add and parameter accounting.
//!
//! GFLOPs here follow the SlowFast reporting convention: one multiply-add is
//! counted as one FLOP unit. Pooling, normalization, activations and softmax
//! contribute nothing.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    round_half_up, sample_training_triple, scaled_frames, ArchSpec, ComputeRange, Configuration,
    GridPoint, LayerKind, LayerSpec, PlacedLayer,
};
use crate::error::{A3dError, Result};
use crate::exec::map_indexed;

/// Multiply-adds of one layer at configuration `c`, given its full-configuration
/// output shape `(T, H, W)`.
pub fn layer_cost(layer: &LayerSpec, out_shape: [usize; 3], c: &Configuration) -> Result<u64> {
    if out_shape.iter().any(|&d| d == 0) {
        return Err(A3dError::Shape(format!("zero-sized output shape {out_shape:?}")));
    }
    let ci = layer.active_in(c.gamma_w) as u64;
    let co = layer.active_out(c.gamma_w) as u64;
    Ok(match layer.kind {
        LayerKind::Pool3d | LayerKind::Bn => 0,
        LayerKind::Fc => ci * co,
        LayerKind::Conv3d | LayerKind::FusionConv => {
            let k: u64 = layer.kernel.iter().map(|&k| k as u64).product();
            let t = scaled_frames(out_shape[0], c.gamma_t) as u64;
            let h = round_half_up(c.gamma_s * out_shape[1] as f64).max(1) as u64;
            let w = round_half_up(c.gamma_s * out_shape[2] as f64).max(1) as u64;
            k * ci * co * t * h * w
        }
    })
}

/// Parameters on the active slice of one layer.
fn layer_params(layer: &LayerSpec, gamma_w: f64) -> u64 {
    let ci = layer.active_in(gamma_w) as u64;
    let co = layer.active_out(gamma_w) as u64;
    let bias = if layer.bias { co } else { 0 };
    match layer.kind {
        LayerKind::Pool3d => 0,
        LayerKind::Bn => 2 * co,
        LayerKind::Fc => ci * co + co,
        LayerKind::Conv3d | LayerKind::FusionConv => {
            let k: u64 = layer.kernel.iter().map(|&k| k as u64).product();
            k * ci * co + bias
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkCost {
    pub macs: u64,
    pub params: u64,
}

impl NetworkCost {
    pub fn gflops(&self) -> f64 {
        self.macs as f64 / 1e9
    }
}

fn sum_layers(layers: &[PlacedLayer], c: &Configuration) -> Result<NetworkCost> {
    let mut macs = 0u64;
    let mut params = 0u64;
    for l in layers {
        let local = if l.resolution_scaled {
            *c
        } else {
            Configuration::FULL
        };
        let gw = if l.spec.kind == LayerKind::Fc || l.resolution_scaled {
            c.gamma_w
        } else {
            1.0
        };
        let at = Configuration {
            gamma_w: gw,
            ..local
        };
        macs += layer_cost(&l.spec, l.out_shape, &at)?;
        params += layer_params(&l.spec, gw);
    }
    Ok(NetworkCost { macs, params })
}

/// Cost of one view of `arch` at configuration `c`. For two-pathway specs the
/// configuration applies to the adaptive pathway only.
pub fn network_cost(arch: &ArchSpec, c: &Configuration) -> Result<NetworkCost> {
    sum_layers(&arch.layers()?, c)
}

/// Cost at an explicit input geometry (frames × pixels²) and width.
pub fn network_cost_at(
    arch: &ArchSpec,
    gamma_w: f64,
    frames: usize,
    pixels: usize,
) -> Result<NetworkCost> {
    let c = Configuration {
        gamma_w,
        gamma_s: pixels as f64 / arch.base_spatial as f64,
        gamma_t: frames as f64 / arch.base_frames as f64,
    };
    network_cost(arch, &c)
}

/// One row of a cost report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub gamma_w: f64,
    pub gamma_s: f64,
    pub gamma_t: f64,
    pub frames: usize,
    pub pixels: usize,
    pub gflops: f64,
    pub params: u64,
}

impl CostRow {
    pub fn for_point(arch: &ArchSpec, p: &GridPoint) -> Result<Self> {
        let cost = network_cost_at(arch, p.config.gamma_w, p.frames, p.pixels)?;
        Ok(Self {
            gamma_w: p.config.gamma_w,
            gamma_s: p.config.gamma_s,
            gamma_t: p.config.gamma_t,
            frames: p.frames,
            pixels: p.pixels,
            gflops: cost.gflops(),
            params: cost.params,
        })
    }
}

/// Writes cost rows as CSV, preceded by a comment line stating the FLOP convention.
pub fn write_cost_csv<W: Write>(out: W, arch: &str, rows: &[CostRow]) -> Result<()> {
    let mut out = out;
    writeln!(
        out,
        "# arch={arch}; gflops = 1e9 multiply-adds per view (multiply-add counted once); params on the active slice"
    )?;
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingCostEstimate {
    /// E[cost(full) + cost(sub1) + cost(sub2)] / cost(full).
    pub ratio: f64,
    pub full_gflops: f64,
    pub expected_gflops: f64,
    pub samples: usize,
    pub assumptions: String,
}

/// Monte-Carlo estimate of the per-iteration training cost of sandwich
/// sampling relative to a single full-network pass, with all three networks
/// evaluated at the range's pixel/frame labels (the training crop).
pub fn expected_training_cost<R: Rng + ?Sized>(
    arch: &ArchSpec,
    range: &ComputeRange,
    n_samples: usize,
    rng: &mut R,
) -> Result<TrainingCostEstimate> {
    if n_samples < 1000 {
        return Err(A3dError::Invalid(format!(
            "need at least 1000 samples, got {n_samples}"
        )));
    }
    let layers = arch.layers()?;
    let crop = range.spatial_level(1.0).map(|l| l.pixels).unwrap_or(arch.base_spatial);
    let frames = range.temporal_level(1.0).map(|l| l.frames).unwrap_or(arch.base_frames);
    let geom = |gw: f64, f: usize, px: usize| Configuration {
        gamma_w: gw,
        gamma_s: px as f64 / arch.base_spatial as f64,
        gamma_t: f as f64 / arch.base_frames as f64,
    };
    let full = sum_layers(&layers, &geom(1.0, frames, crop))?.macs as f64;
    let triples: Vec<_> = (0..n_samples)
        .map(|_| sample_training_triple(range, rng, false))
        .collect();
    let costs = map_indexed(n_samples, |i| -> Result<f64> {
        let t = &triples[i];
        let mut total = 0.0;
        for c in [t.full, t.random_sub, t.min_sub] {
            let px = range.spatial_level(c.gamma_s).map(|l| l.pixels).unwrap_or(crop);
            let fr = range.temporal_level(c.gamma_t).map(|l| l.frames).unwrap_or(frames);
            total += sum_layers(&layers, &geom(c.gamma_w, fr, px))?.macs as f64;
        }
        Ok(total)
    });
    let mut sum = 0.0;
    for c in costs {
        sum += c?;
    }
    let expected = sum / n_samples as f64;
    Ok(TrainingCostEstimate {
        ratio: expected / full,
        full_gflops: full / 1e9,
        expected_gflops: expected / 1e9,
        samples: n_samples,
        assumptions: format!(
            "full network at {crop}px x {frames} frames; random sub gamma_w ~ U[{:.2},1]; min sub gamma_w = {:.2}; \
             sub spatial/temporal levels drawn uniformly and independently from the grids",
            range.width_min(),
            range.width_min()
        ),
    })
}
