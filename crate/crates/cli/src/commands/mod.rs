//! Command implementations and the helpers they share.

pub mod cost;
pub mod deploy;
pub mod plot;
pub mod synth;
pub mod train;

use std::path::Path;

use a3d::checkpoint::{load_checkpoint, Checkpoint};
use a3d::deploy::Views;
use a3d::training::RunConfig;
use a3d::{A3dError, ArchSpec, Configuration};

use crate::args::DataArgs;
use crate::error::{at_path, CliError, CliResult};

/// Environment variable that overrides every seed.
pub const SEED_ENV: &str = "A3D_SEED";

/// `default` unless `A3D_SEED` is set.
pub fn seed_or(default: u64) -> CliResult<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{SEED_ENV} must be an unsigned integer, got '{v}'"))),
        Err(_) => Ok(default),
    }
}

pub fn parse_config(s: &str) -> CliResult<Configuration> {
    Ok(s.parse()?)
}

/// Views given as `temporal,spatial`.
pub fn parse_views(s: &str) -> CliResult<Views> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let bad = || CliError::Usage(format!("views must be 'temporal,spatial', got '{s}'"));
    if parts.len() != 2 {
        return Err(bad());
    }
    let n = |p: &str| p.parse::<usize>().map_err(|_| bad());
    Ok(Views::new(n(parts[0])?, n(parts[1])?)?)
}

pub fn load_model(path: &Path) -> CliResult<Checkpoint<f32>> {
    at_path(path, load_checkpoint::<f32>(path))
}

/// Run configuration from `--config-file`, else the one stored in the checkpoint, else defaults.
pub fn run_config(data: &DataArgs, ck: &Checkpoint<f32>) -> CliResult<RunConfig> {
    let cfg = match (&data.config_file, &ck.train) {
        (Some(p), _) => at_path(p, RunConfig::load(p))?,
        (None, Some(meta)) => meta.config.clone(),
        (None, None) => RunConfig::default(),
    };
    if ArchSpec::resolve(&cfg.arch)?.name != ck.model.arch.name {
        return Err(A3dError::InvalidConfig(format!(
            "run configuration names architecture '{}' but the checkpoint holds '{}'",
            cfg.arch, ck.model.arch.name
        ))
        .into());
    }
    Ok(cfg)
}

pub fn to_json<T: serde::Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("serializable")
}

/// GFLOPs with enough digits for toy models.
pub fn fmt_gflops(g: f64) -> String {
    if g >= 1.0 {
        format!("{g:.2}")
    } else {
        format!("{g:.3e}")
    }
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    a3d::fsutil::write_atomic(path, text.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn views_parse() {
        let v = parse_views("10,3").unwrap();
        assert_eq!((v.temporal, v.spatial), (10, 3));
        assert!(parse_views("10").is_err());
        assert!(parse_views("0,1").is_err());
        assert!(parse_views("a,b").is_err());
    }
}
