//! Configuration-budget tables: Pareto pruning and budget lookup.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::table::TradeoffRow;
use crate::configspace::{network_cost_at, ArchSpec, Configuration};
use crate::error::{A3dError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetEntry {
    pub gamma_w: f64,
    pub gamma_s: f64,
    pub gamma_t: f64,
    pub frames: usize,
    pub pixels: usize,
    /// GFLOPs of one view.
    pub gflops: f64,
    pub params: u64,
    pub top1: f64,
}

impl BudgetEntry {
    pub fn config(&self) -> Configuration {
        Configuration {
            gamma_w: self.gamma_w,
            gamma_s: self.gamma_s,
            gamma_t: self.gamma_t,
        }
    }
}

impl From<&TradeoffRow> for BudgetEntry {
    fn from(r: &TradeoffRow) -> Self {
        Self {
            gamma_w: r.gamma_w,
            gamma_s: r.gamma_s,
            gamma_t: r.gamma_t,
            frames: r.frames,
            pixels: r.pixels,
            gflops: r.gflops,
            params: r.params,
            top1: r.top1,
        }
    }
}

/// Pareto-optimal configurations sorted by descending cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetTable {
    pub arch: String,
    /// Temporal and spatial view counts the accuracies were measured with.
    pub views: [usize; 2],
    pub entries: Vec<BudgetEntry>,
}

/// Keeps the rows not dominated under (lower GFLOPs, higher top-1). Equal
/// costs prefer the higher top-1, then the smaller parameter count.
pub fn build_budget_table(arch: &str, views: [usize; 2], rows: &[TradeoffRow]) -> Result<BudgetTable> {
    if rows.is_empty() {
        return Err(A3dError::Empty("trade-off rows"));
    }
    if let Some(r) = rows.iter().find(|r| !(r.gflops.is_finite() && r.top1.is_finite())) {
        return Err(A3dError::Invalid(format!("non-finite trade-off row {r:?}")));
    }
    let mut sorted: Vec<&TradeoffRow> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        a.gflops
            .total_cmp(&b.gflops)
            .then(b.top1.total_cmp(&a.top1))
            .then(a.params.cmp(&b.params))
    });
    let mut entries: Vec<BudgetEntry> = Vec::new();
    for r in sorted {
        if entries.last().is_none_or(|best| r.top1 > best.top1) {
            entries.push(r.into());
        }
    }
    entries.reverse();
    Ok(BudgetTable {
        arch: arch.to_string(),
        views,
        entries,
    })
}

impl BudgetTable {
    /// Whether top-1 never increases as cost decreases.
    pub fn is_pareto_monotone(&self) -> bool {
        self.entries
            .windows(2)
            .all(|w| w[0].gflops >= w[1].gflops && w[0].top1 >= w[1].top1)
    }

    /// Checks every entry's cost against the cost model within `rel_tol`.
    pub fn verify_costs(&self, arch: &ArchSpec, rel_tol: f64) -> Result<()> {
        for e in &self.entries {
            let cost = network_cost_at(arch, e.gamma_w, e.frames, e.pixels)?;
            let model = cost.gflops();
            if (e.gflops - model).abs() > rel_tol * model.abs().max(f64::MIN_POSITIVE) || cost.params != e.params {
                return Err(A3dError::Invalid(format!(
                    "entry {} at {}^2x{}: table says {} GFLOPs / {} params, cost model gives {model} / {}",
                    e.config(),
                    e.pixels,
                    e.frames,
                    e.gflops,
                    e.params,
                    cost.params
                )));
            }
        }
        Ok(())
    }

    pub fn cheapest(&self) -> Option<&BudgetEntry> {
        self.entries.last()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let t: Self = serde_json::from_str(text)?;
        if !t.is_pareto_monotone() {
            return Err(A3dError::Format("budget table entries are not sorted Pareto-monotone".into()));
        }
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// The highest-accuracy entry whose per-view cost fits `budget` GFLOPs.
pub fn select_config(table: &BudgetTable, budget: f64) -> Result<&BudgetEntry> {
    if budget.is_nan() {
        return Err(A3dError::Invalid("budget is NaN".into()));
    }
    let cheapest = table.cheapest().ok_or(A3dError::Empty("budget table"))?;
    table
        .entries
        .iter()
        .filter(|e| e.gflops <= budget)
        .max_by(|a, b| a.top1.total_cmp(&b.top1).then(b.gflops.total_cmp(&a.gflops)))
        .ok_or(A3dError::InfeasibleBudget {
            budget,
            cheapest: cheapest.gflops,
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(gflops: f64, top1: f64, params: u64) -> TradeoffRow {
        TradeoffRow {
            gamma_w: 1.0,
            gamma_s: 1.0,
            gamma_t: 1.0,
            frames: 8,
            pixels: 32,
            gflops,
            params,
            top1,
            top5: None,
        }
    }

    #[test]
    fn single_row_table() {
        let t = build_budget_table("x", [1, 1], &[row(1.0, 50.0, 1)]).unwrap();
        assert_eq!(t.entries.len(), 1);
    }

    #[test]
    fn dominated_expensive_row_is_pruned() {
        let t = build_budget_table("x", [1, 1], &[row(2.0, 50.0, 1), row(1.0, 60.0, 1)]).unwrap();
        assert_eq!(t.entries.len(), 1);
        assert_eq!(t.entries[0].gflops, 1.0);
    }

    #[test]
    fn equal_cost_prefers_accuracy_then_fewer_params() {
        let t = build_budget_table("x", [1, 1], &[row(1.0, 50.0, 1), row(1.0, 55.0, 9), row(1.0, 55.0, 3)]).unwrap();
        assert_eq!(t.entries.len(), 1);
        assert_eq!((t.entries[0].top1, t.entries[0].params), (55.0, 3));
    }

    #[test]
    fn sorted_descending_and_monotone() {
        let rows = [row(1.0, 40.0, 1), row(3.0, 70.0, 1), row(2.0, 65.0, 1), row(2.5, 60.0, 1)];
        let t = build_budget_table("x", [1, 1], &rows).unwrap();
        let costs: Vec<f64> = t.entries.iter().map(|e| e.gflops).collect();
        assert_eq!(costs, vec![3.0, 2.0, 1.0]);
        assert!(t.is_pareto_monotone());
    }

    #[test]
    fn selection_and_infeasible_budget() {
        let t = build_budget_table("x", [1, 1], &[row(1.0, 40.0, 1), row(3.0, 70.0, 1)]).unwrap();
        assert_eq!(select_config(&t, 1e12).unwrap().top1, 70.0);
        assert_eq!(select_config(&t, 2.0).unwrap().top1, 40.0);
        assert!(matches!(select_config(&t, 0.5), Err(A3dError::InfeasibleBudget { .. })));
        assert!(build_budget_table("x", [1, 1], &[]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let t = build_budget_table("toy", [10, 3], &[row(1.0, 40.0, 1), row(3.0, 70.0, 1)]).unwrap();
        let text = t.to_json().unwrap();
        assert_eq!(BudgetTable::from_json(&text).unwrap(), t);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["views"], serde_json::json!([10, 3]));
        assert!(v["entries"][0]["gamma_w"].is_number());
    }
}
