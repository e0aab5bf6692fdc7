//! Simulation studies for invariant ancestry search: oracle comparisons on
//! random graphs, finite-sample runs on random linear SCMs, and a search for
//! graphs with many minimally invariant sets.

pub mod config;
pub mod output;
pub mod records;
pub mod runners;
pub mod summarize;

pub use config::{ExperimentConfig, ExperimentKind, Resolved};
pub use output::{CsvSink, RecordSink};
pub use records::jaccard;
pub use runners::RunStats;
