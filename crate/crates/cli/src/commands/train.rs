use std::time::Instant;

use a3d::checkpoint::{load_checkpoint, save_training};
use a3d::training::{write_metrics_csv, RunConfig, Trainer};
use serde_json::json;

use super::{to_json, write_text};
use crate::args::TrainArgs;
use crate::error::{at_path, CliError, CliResult};
use crate::manifest::RunManifest;

pub const CHECKPOINT: &str = "checkpoint.a3d";
pub const METRICS: &str = "metrics.csv";
pub const RUN_CONFIG: &str = "run.toml";
pub const MANIFEST: &str = "manifest.json";

fn apply_overrides(mut cfg: RunConfig, a: &TrainArgs) -> CliResult<RunConfig> {
    if let Some(m) = &a.mode {
        cfg.mode = m.parse()?;
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.seed = cfg.effective_seed()?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(a: &TrainArgs, argv: &[String]) -> CliResult<()> {
    let ckpt = a.out.join(CHECKPOINT);
    let resumed = if a.resume {
        if !ckpt.exists() {
            return Err(CliError::Usage(format!("--resume given but {} does not exist", ckpt.display())));
        }
        Some(load_checkpoint::<f32>(&ckpt)?.into_train_state()?)
    } else {
        None
    };
    let base = match (&a.config_file, &resumed) {
        (Some(p), _) => at_path(p, RunConfig::load(p))?,
        (None, Some((_, meta))) => meta.config.clone(),
        (None, None) => RunConfig::default(),
    };
    let cfg = apply_overrides(base, a)?;
    std::fs::create_dir_all(&a.out)?;
    let (train, _) = cfg.load_data()?;
    let mut trainer = match resumed {
        Some((state, meta)) => Trainer::resume(cfg.clone(), state, meta.log)?,
        None => Trainer::new(cfg.clone(), &train)?,
    };
    let mut m = RunManifest::new("train", argv, trainer.seed);
    m.config = to_json(&cfg);
    let start_epoch = trainer.state.epoch;
    let started = Instant::now();
    let metrics_path = a.out.join(METRICS);
    trainer.run(&train, |t| {
        save_training(&ckpt, &t.state, &t.cfg, &t.log)?;
        let mut csv = Vec::new();
        write_metrics_csv(&mut csv, &t.log.metrics)?;
        a3d::fsutil::write_atomic(&metrics_path, &csv)?;
        let e = t.log.metrics.last().expect("one epoch ran");
        println!(
            "epoch {}/{}: lr {:.4} ce {:.4} kl {:.4} train acc {:.1}%",
            e.epoch + 1,
            t.cfg.epochs,
            e.lr,
            e.ce,
            e.kl_mean,
            100.0 * e.train_acc_full
        );
        Ok(())
    })?;
    let seconds = started.elapsed().as_secs_f64();
    if trainer.state.epoch == start_epoch {
        save_training(&ckpt, &trainer.state, &trainer.cfg, &trainer.log)?;
        let mut csv = Vec::new();
        write_metrics_csv(&mut csv, &trainer.log.metrics)?;
        a3d::fsutil::write_atomic(&metrics_path, &csv)?;
    }
    write_text(&a.out.join(RUN_CONFIG), &cfg.to_toml())?;
    let epochs_run = trainer.state.epoch - start_epoch;
    m.outputs = vec![ckpt.clone(), metrics_path, a.out.join(RUN_CONFIG)];
    m.extra = json!({
        "epochs_run": epochs_run,
        "epochs_total": trainer.state.epoch,
        "iterations": trainer.state.iteration,
        "seconds": seconds,
        "seconds_per_epoch": if epochs_run > 0 { seconds / epochs_run as f64 } else { 0.0 },
        "final": trainer.log.metrics.last().map(to_json),
        "sampled_configs": to_json(&trainer.log.histogram),
    });
    m.write(&a.out.join(MANIFEST))?;
    println!("checkpoint written to {}", ckpt.display());
    Ok(())
}
