//! Trade-off rows and their CSV forms.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::configspace::Configuration;
use crate::error::{A3dError, Result};

/// Accuracy and cost of one evaluated configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub gamma_w: f64,
    pub gamma_s: f64,
    pub gamma_t: f64,
    pub frames: usize,
    pub pixels: usize,
    /// GFLOPs of one view.
    pub gflops: f64,
    pub params: u64,
    pub top1: f64,
    pub top5: Option<f64>,
}

impl TradeoffRow {
    pub fn config(&self) -> Configuration {
        Configuration {
            gamma_w: self.gamma_w,
            gamma_s: self.gamma_s,
            gamma_t: self.gamma_t,
        }
    }
}

/// Writes one row per configuration with every field.
pub fn write_tradeoff_csv<W: Write>(out: W, rows: &[TradeoffRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_tradeoff_csv<R: Read>(input: R) -> Result<Vec<TradeoffRow>> {
    let rows = csv::Reader::from_reader(input)
        .deserialize()
        .collect::<std::result::Result<Vec<TradeoffRow>, _>>()?;
    if let Some(r) = rows.iter().find(|r| !(r.gflops.is_finite() && r.top1.is_finite())) {
        return Err(A3dError::Format(format!("non-finite value in trade-off row {r:?}")));
    }
    Ok(rows)
}

/// Writes top-1 accuracy as a grid: one row per input size `S^2xT`, one column
/// per width factor, `-` where a combination was not evaluated.
pub fn write_tradeoff_grid<W: Write>(out: W, rows: &[TradeoffRow]) -> Result<()> {
    let mut widths: Vec<f64> = Vec::new();
    let mut sizes: Vec<(usize, usize)> = Vec::new();
    for r in rows {
        if !widths.contains(&r.gamma_w) {
            widths.push(r.gamma_w);
        }
        if !sizes.contains(&(r.pixels, r.frames)) {
            sizes.push((r.pixels, r.frames));
        }
    }
    widths.sort_by(|a, b| b.total_cmp(a));
    sizes.sort_by(|a, b| b.cmp(a));
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["S^2xT".to_string()];
    header.extend(widths.iter().map(|g| format!("{g}")));
    w.write_record(&header)?;
    for &(px, t) in &sizes {
        let mut rec = vec![format!("{px}^2x{t}")];
        for &g in &widths {
            let cell = rows
                .iter()
                .find(|r| r.pixels == px && r.frames == t && r.gamma_w == g)
                .map_or("-".to_string(), |r| format!("{:.1}", r.top1));
            rec.push(cell);
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
