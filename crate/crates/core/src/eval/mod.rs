//! Embedding extraction, probing and clustering metrics.

mod external;
mod extract;
mod kfold;
mod metrics;
mod probe;
mod report;
mod table;


pub use external::{aggregate_windows, import_external_embeddings, DEFAULT_WINDOW_FRAMES};
pub use extract::{extract_embeddings, extract_prepared, extract_spectrograms, ExtractOptions, Extraction};
pub use kfold::{entry_folds, kfold_eval, kfold_probe, KfoldMode, KfoldOptions};
pub use metrics::{dbi, f1_scores, macro_f1, F1Scores};
pub use probe::nn_probe;
pub use report::{probe_report, DatasetReport, EvalReport, FoldResult};
pub use table::{fit_standardization, zscore, EmbeddingRow, EmbeddingTable, Standardization, StatsSource, TableEncoding};
