//! Post-training deployment: per-configuration normalization calibration,
//! grid evaluation, configuration-budget tables and class-activation maps.

mod budget;
mod calibrate;
mod cam;
mod evaluate;
pub mod published;
mod table;

pub use budget::{build_budget_table, select_config, BudgetEntry, BudgetTable};
pub use calibrate::{calibrate_bn, calibrate_grid, calibration_entry, calibration_stream};
pub use cam::{compute_cam, write_cam, CamResult};
pub use evaluate::{crop_offsets, evaluate, evaluate_grid, extract_views, multi_view_predict, predict_dataset, window_starts, EvalResult, StatSource, Views};
pub use table::{read_tradeoff_csv, write_tradeoff_csv, write_tradeoff_grid, TradeoffRow};
