//! Per-label and aggregate metrics, and label-by-experiment result tables.

mod metrics;
mod tables;

pub use self::metrics::{
    label_deltas, macro_f1, micro_f1, per_label_f1, prf, ConfusionCounts, LabelScore, MetricsReport,
};
pub use self::tables::{
    parse_table_csv, render_deltas, render_report, RenderedTable, TableLayout, TableValues, MACRO_ROW, MICRO_ROW,
};
