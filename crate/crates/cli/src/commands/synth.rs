use a3d::data::{class_names, generate_synth, write_archive, write_clip_folder};
use a3d::training::{DataSource, RunConfig};
use serde_json::json;

use super::{seed_or, to_json};
use crate::args::{SynthArgs, SynthFormat};
use crate::error::{at_path, CliError, CliResult};
use crate::manifest::RunManifest;

pub fn run(a: &SynthArgs, argv: &[String]) -> CliResult<()> {
    let cfg = match &a.config_file {
        Some(p) => at_path(p, RunConfig::load(p))?,
        None => RunConfig::default(),
    };
    let DataSource::Synth(mut spec) = cfg.data else {
        return Err(CliError::Usage("the run configuration's data source is not synthetic".into()));
    };
    spec.seed = seed_or(spec.seed)?;
    let (train, val) = generate_synth(&spec)?;
    std::fs::create_dir_all(&a.out)?;
    let outputs = match a.format {
        SynthFormat::Archive => {
            let paths = [a.out.join("train.a3dz"), a.out.join("val.a3dz")];
            for (p, d) in paths.iter().zip([&train, &val]) {
                write_archive(p, d, to_json(&spec))?;
            }
            paths.to_vec()
        }
        SynthFormat::Folder => {
            let paths = [a.out.join("train"), a.out.join("val")];
            for (p, d) in paths.iter().zip([&train, &val]) {
                write_clip_folder(p, d, &class_names())?;
            }
            paths.to_vec()
        }
    };
    println!("{} train and {} val clips written to {}", train.len(), val.len(), a.out.display());
    let mut m = RunManifest::new("synth", argv, spec.seed);
    m.config = json!({ "spec": to_json(&spec), "format": format!("{:?}", a.format).to_lowercase() });
    m.outputs = outputs;
    m.extra = json!({ "train": train.len(), "val": val.len() });
    m.write(&a.out.join("manifest.json"))?;
    Ok(())
}
