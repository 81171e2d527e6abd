use a3d::configspace::{enumerate_points, expected_training_cost, write_cost_csv, CostRow, GridPoint};
use a3d::{ArchSpec, ComputeRange, Result};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::{fmt_gflops, parse_config, seed_or, to_json, write_text};
use crate::args::CostArgs;
use crate::error::CliResult;
use crate::manifest::{beside, RunManifest};

pub fn run(a: &CostArgs, argv: &[String]) -> CliResult<()> {
    let arch = ArchSpec::resolve(&a.arch)?;
    let crop = a.crop.unwrap_or(arch.base_spatial);
    let seed = seed_or(a.seed)?;
    let points = if a.grid {
        enumerate_points(&ComputeRange::preset(&a.range, crop, arch.base_frames)?)
    } else {
        let c = parse_config(&a.config)?;
        vec![GridPoint {
            config: c,
            frames: c.frames(arch.base_frames),
            pixels: c.pixels(crop),
        }]
    };
    let rows = points.iter().map(|p| CostRow::for_point(&arch, p)).collect::<Result<Vec<_>>>()?;
    let mut csv = Vec::new();
    write_cost_csv(&mut csv, &arch.name, &rows)?;
    let csv = String::from_utf8(csv).expect("csv is utf-8");

    let training = if a.training_cost {
        let range = ComputeRange::preset(&a.range, crop, arch.base_frames)?;
        Some(expected_training_cost(&arch, &range, a.samples, &mut ChaCha8Rng::seed_from_u64(seed))?)
    } else {
        None
    };

    if !a.grid {
        let r = &rows[0];
        println!(
            "{} at ({}, {}, {}) on {}x{}^2: {} GFLOPs per view, {:.1}M params",
            arch.name,
            r.gamma_w,
            r.gamma_s,
            r.gamma_t,
            r.frames,
            r.pixels,
            fmt_gflops(r.gflops),
            r.params as f64 / 1e6
        );
    }
    if let Some(t) = &training {
        println!(
            "training cost per iteration: {:.3}x one full pass ({} samples; {})",
            t.ratio, t.samples, t.assumptions
        );
    }
    match &a.out {
        Some(out) => {
            write_text(out, &csv)?;
            let mut m = RunManifest::new("cost", argv, seed);
            m.config = json!({
                "arch": arch.name,
                "range": a.range,
                "grid": a.grid,
                "config": if a.grid { None } else { Some(&a.config) },
                "crop": crop,
                "samples": a.samples,
            });
            m.outputs.push(out.clone());
            m.extra = json!({ "rows": rows.len(), "training_cost": training.as_ref().map(to_json) });
            m.write(&beside(out))?;
            if a.grid {
                println!("{} configurations written to {}", rows.len(), out.display());
            }
        }
        None if a.grid => print!("{csv}"),
        None => {}
    }
    Ok(())
}
