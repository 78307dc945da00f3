//! Run configuration, datasets, metrics and trace logs.

mod config;
mod dataset;
mod metrics;
mod trace;

pub use config::{EmbeddingMode, LlmMode, RunConfig, ScriptedProvider, ToolkitMode};
pub use dataset::{load_dataset, parse_dataset, write_dataset, DatasetRow, Gold};
pub use metrics::{normalize_answer, score, MetricReport, RowResult};
pub use trace::TraceWriter;
