use std::fs::File;

use a3d::deploy::read_tradeoff_csv;
use serde_json::json;

use super::write_text;
use crate::args::PlotArgs;
use crate::error::{at_path, CliError, CliResult};
use crate::manifest::{beside, RunManifest};
use crate::plot::{pareto_curve, render_svg, segments, Curve};

pub fn run(a: &PlotArgs, argv: &[String]) -> CliResult<()> {
    if a.out.extension().and_then(|e| e.to_str()) != Some("svg") {
        return Err(CliError::Usage(format!("plot writes SVG; --out must end in .svg, got {}", a.out.display())));
    }
    if !a.labels.is_empty() && a.labels.len() != a.tradeoff.len() {
        return Err(CliError::Usage(format!("{} labels for {} tables", a.labels.len(), a.tradeoff.len())));
    }
    let mut curves = Vec::new();
    for (i, path) in a.tradeoff.iter().enumerate() {
        let file = File::open(path).map_err(|source| CliError::File {
            path: path.clone(),
            source,
        })?;
        let rows = at_path(path, read_tradeoff_csv(file))?;
        let label = a
            .labels
            .get(i)
            .cloned()
            .unwrap_or_else(|| path.file_stem().unwrap_or_default().to_string_lossy().into_owned());
        curves.push(Curve {
            label,
            points: pareto_curve(&rows)?,
        });
    }
    write_text(&a.out, &render_svg(&curves))?;
    let summary: Vec<_> = curves
        .iter()
        .map(|c| {
            let segs = segments(&c.points);
            json!({
                "label": c.label,
                "points": c.points.len(),
                "segments": segs.iter().map(|s| s.kind.label()).collect::<Vec<_>>(),
            })
        })
        .collect();
    println!("{} curves drawn to {}", curves.len(), a.out.display());
    let mut m = RunManifest::new("plot", argv, 0);
    m.config = json!({ "tradeoff": a.tradeoff, "labels": a.labels });
    m.outputs.push(a.out.clone());
    m.extra = json!({ "curves": summary });
    m.write(&beside(&a.out))?;
    Ok(())
}
