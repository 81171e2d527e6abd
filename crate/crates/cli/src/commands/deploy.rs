use a3d::checkpoint::{save_checkpoint, Checkpoint};
use a3d::configspace::{enumerate_grid, enumerate_points};
use a3d::data::{load_clip, planted_frame_clip, SynthSpec};
use a3d::deploy::{
    build_budget_table, calibrate_grid, calibration_stream, compute_cam, evaluate, evaluate_grid, multi_view_predict, select_config,
    write_cam, write_tradeoff_csv, write_tradeoff_grid, BudgetTable, StatSource,
};
use a3d::training::{CalibrationConfig, DataSource, RunConfig};
use a3d::{A3dError, ComputeRange, Configuration};
use ndarray::Axis;
use serde_json::json;

use super::{fmt_gflops, load_model, parse_config, parse_views, run_config, seed_or, to_json, write_text};
use crate::args::{CalibrateArgs, CamArgs, EvalArgs, InferArgs, TableArgs};
use crate::error::{at_path, CliError, CliResult};
use crate::manifest::{beside, RunManifest};

pub const TRADEOFF_CSV: &str = "tradeoff.csv";
pub const TRADEOFF_GRID_CSV: &str = "tradeoff_grid.csv";
pub const BUDGET_JSON: &str = "budget_table.json";
pub const CAM_JSON: &str = "cam.json";
pub const MANIFEST: &str = "manifest.json";

fn range_for(cfg: &RunConfig, ck: &Checkpoint<f32>, name: Option<&str>) -> CliResult<ComputeRange> {
    let arch = &ck.model.arch;
    Ok(match name {
        Some(r) => ComputeRange::preset(r, arch.base_spatial, arch.base_frames)?,
        None => cfg.compute_range(arch)?,
    })
}

pub fn calibrate(a: &CalibrateArgs, argv: &[String]) -> CliResult<()> {
    let mut ck = load_model(&a.checkpoint)?;
    let cfg = run_config(&a.data, &ck)?;
    let configs = match &a.config {
        Some(c) => vec![parse_config(c)?],
        None => enumerate_grid(&range_for(&cfg, &ck, a.range.as_deref())?),
    };
    let calib = CalibrationConfig {
        batches: a.batches.unwrap_or(cfg.calibration.batches),
        batch_size: a.batch_size.unwrap_or(cfg.calibration.batch_size),
        passes: a.passes.unwrap_or(cfg.calibration.passes),
    };
    if calib.batches == 0 || calib.batch_size == 0 || calib.passes == 0 {
        return Err(CliError::Usage("calibration batches, batch size and passes must be positive".into()));
    }
    let seed = seed_or(cfg.seed)?;
    let (train, _) = cfg.load_data()?;
    let stream = calibration_stream::<f32>(&train, ck.model.clip_frames(), calib.batches, calib.batch_size, seed)?;
    let checksum = ck.model.params.checksum();
    calibrate_grid(&mut ck.model, &configs, &stream, calib.passes)?;
    debug_assert_eq!(checksum, ck.model.params.checksum());
    save_checkpoint(&a.out, &ck)?;
    println!("calibrated {} configurations; {} in the checkpoint", configs.len(), ck.model.stats.len());
    let mut m = RunManifest::new("calibrate", argv, seed);
    m.config = json!({
        "checkpoint": a.checkpoint,
        "run": to_json(&cfg),
        "range": a.range,
        "calibration": to_json(&calib),
    });
    m.outputs.push(a.out.clone());
    m.extra = json!({
        "configs": configs.iter().map(Configuration::key).collect::<Vec<_>>(),
        "parameter_checksum": checksum,
    });
    m.write(&beside(&a.out))?;
    Ok(())
}

pub fn table(a: &TableArgs, argv: &[String]) -> CliResult<()> {
    let ck = load_model(&a.checkpoint)?;
    let cfg = run_config(&a.data, &ck)?;
    let points = enumerate_points(&range_for(&cfg, &ck, a.range.as_deref())?);
    let views = parse_views(&a.views)?;
    let (_, val) = cfg.load_data()?;
    let rows = evaluate_grid(&ck.model, &val, &points, views, a.batch_size)?;
    let table = build_budget_table(&ck.model.arch.name, [views.temporal, views.spatial], &rows)?;
    std::fs::create_dir_all(&a.out)?;
    let mut csv = Vec::new();
    write_tradeoff_csv(&mut csv, &rows)?;
    a3d::fsutil::write_atomic(&a.out.join(TRADEOFF_CSV), &csv)?;
    let mut grid = Vec::new();
    write_tradeoff_grid(&mut grid, &rows)?;
    a3d::fsutil::write_atomic(&a.out.join(TRADEOFF_GRID_CSV), &grid)?;
    write_text(&a.out.join(BUDGET_JSON), &(table.to_json()? + "\n"))?;
    let full = rows.iter().find(|r| r.config().is_full());
    println!(
        "{} configurations evaluated on {} clips, {} on the Pareto curve{}",
        rows.len(),
        val.len(),
        table.entries.len(),
        full.map(|r| format!("; full top-1 {:.1}%", r.top1)).unwrap_or_default()
    );
    let mut m = RunManifest::new("table", argv, cfg.seed);
    m.config = json!({ "checkpoint": a.checkpoint, "run": to_json(&cfg), "range": a.range, "views": [views.temporal, views.spatial] });
    m.outputs = vec![a.out.join(TRADEOFF_CSV), a.out.join(TRADEOFF_GRID_CSV), a.out.join(BUDGET_JSON)];
    m.extra = json!({ "rows": rows.len(), "pareto": table.entries.len(), "pareto_monotone": table.is_pareto_monotone() });
    m.write(&a.out.join(MANIFEST))?;
    Ok(())
}

pub fn eval(a: &EvalArgs, argv: &[String]) -> CliResult<()> {
    let ck = load_model(&a.checkpoint)?;
    let cfg = run_config(&a.data, &ck)?;
    let c = parse_config(&a.config)?;
    let views = parse_views(&a.views)?;
    let stats = if a.uncalibrated {
        StatSource::Prefix(Configuration::FULL)
    } else {
        StatSource::Calibrated
    };
    let (_, val) = cfg.load_data()?;
    let r = evaluate(&ck.model, &val, &c, views, stats, a.batch_size)?;
    println!(
        "{c}: top-1 {:.2}% top-5 {:.2}% over {} clips ({}x{} views, {} statistics)",
        r.top1,
        r.top5,
        r.clips,
        views.temporal,
        views.spatial,
        if a.uncalibrated { "full-prefix" } else { "calibrated" }
    );
    if let Some(out) = &a.out {
        let result = json!({
            "config": c,
            "views": [views.temporal, views.spatial],
            "uncalibrated": a.uncalibrated,
            "top1": r.top1,
            "top5": r.top5,
            "clips": r.clips,
        });
        write_text(out, &(serde_json::to_string_pretty(&result)? + "\n"))?;
        let mut m = RunManifest::new("eval", argv, cfg.seed);
        m.config = json!({ "checkpoint": a.checkpoint, "run": to_json(&cfg), "batch_size": a.batch_size });
        m.outputs.push(out.clone());
        m.extra = result;
        m.write(&beside(out))?;
    }
    Ok(())
}

pub fn infer(a: &InferArgs, argv: &[String]) -> CliResult<()> {
    let ck = load_model(&a.checkpoint)?;
    let table = at_path(&a.table, BudgetTable::load(&a.table))?;
    if table.arch != ck.model.arch.name {
        return Err(A3dError::InvalidConfig(format!(
            "budget table is for '{}' but the checkpoint holds '{}'",
            table.arch, ck.model.arch.name
        ))
        .into());
    }
    let entry = *select_config(&table, a.budget)?;
    let c = entry.config();
    let views = parse_views(&a.views)?;
    let video = at_path(&a.clip, load_clip(&a.clip, ck.model.clip_frames(), ck.model.clip_pixels()))?;
    let probs = multi_view_predict(&ck.model, &c, video.view(), views, StatSource::Calibrated)?;
    let mut ranked: Vec<(usize, f64)> = probs.iter().copied().enumerate().collect();
    ranked.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    let (class, p) = ranked[0];
    println!(
        "config {c} at {}x{}^2: {} GFLOPs per view, {} for {} views; expected top-1 {:.1}%",
        entry.frames,
        entry.pixels,
        fmt_gflops(entry.gflops),
        fmt_gflops(entry.gflops * views.count() as f64),
        views.count(),
        entry.top1
    );
    println!("prediction: class {class} (p = {p:.3})");
    if let Some(out) = &a.out {
        let result = json!({
            "budget": a.budget,
            "config": c,
            "frames": entry.frames,
            "pixels": entry.pixels,
            "gflops_per_view": entry.gflops,
            "views": [views.temporal, views.spatial],
            "gflops_total": entry.gflops * views.count() as f64,
            "class": class,
            "probability": p,
            "top5": ranked.iter().take(5).map(|&(k, q)| json!({ "class": k, "probability": q })).collect::<Vec<_>>(),
        });
        write_text(out, &(serde_json::to_string_pretty(&result)? + "\n"))?;
        let mut m = RunManifest::new("infer", argv, 0);
        m.config = json!({ "checkpoint": a.checkpoint, "table": a.table, "clip": a.clip });
        m.outputs.push(out.clone());
        m.extra = result;
        m.write(&beside(out))?;
    }
    Ok(())
}

pub fn cam(a: &CamArgs, argv: &[String]) -> CliResult<()> {
    let ck = load_model(&a.checkpoint)?;
    let c = parse_config(&a.config)?;
    let (frames, pixels) = (ck.model.clip_frames(), ck.model.clip_pixels());
    let clip = match (&a.clip, a.planted) {
        (Some(dir), _) => at_path(dir, load_clip(dir, frames, pixels))?.insert_axis(Axis(0)),
        (None, Some(f)) => {
            let spec = match ck.train.as_ref().map(|t| &t.config.data) {
                Some(DataSource::Synth(s)) => s.clone(),
                _ => SynthSpec::default(),
            };
            if (spec.clip_frames, spec.clip_pixels) != (frames, pixels) {
                return Err(CliError::Usage(format!(
                    "synthetic clips are {}x{}^2 but the model takes {frames}x{pixels}^2",
                    spec.clip_frames, spec.clip_pixels
                )));
            }
            if f >= frames || a.label >= spec.num_classes {
                return Err(CliError::Usage(format!(
                    "planted frame must be below {frames} and label below {}",
                    spec.num_classes
                )));
            }
            planted_frame_clip(&spec, a.label, f, a.index)
        }
        (None, None) => return Err(CliError::Usage("give --clip or --planted".into())),
    };
    let cam = compute_cam(&ck.model, &c, &clip)?;
    write_cam(&a.out, &cam)?;
    let peak = cam
        .temporal_profile
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.total_cmp(y.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let result = json!({
        "config": c,
        "class": cam.class,
        "score": cam.score,
        "temporal_profile": cam.temporal_profile,
        "peak_frame": peak,
    });
    write_text(&a.out.join(CAM_JSON), &(serde_json::to_string_pretty(&result)? + "\n"))?;
    println!(
        "class {} (logit {:.3}); temporal profile peaks at frame {peak}; maps written to {}",
        cam.class,
        cam.score,
        a.out.display()
    );
    let mut m = RunManifest::new("cam", argv, 0);
    m.config = json!({ "checkpoint": a.checkpoint, "clip": a.clip, "planted": a.planted, "label": a.label, "index": a.index });
    m.outputs = (0..cam.spatial_maps.dim().0)
        .map(|t| a.out.join(format!("frame_{t:02}.png")))
        .chain([a.out.join("temporal_profile.csv"), a.out.join(CAM_JSON)])
        .collect();
    m.extra = result;
    m.write(&a.out.join(MANIFEST))?;
    Ok(())
}
