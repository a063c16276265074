//! Cross-dataset training of a convolutional audio encoder and evaluation
//! of its embedding space.

pub mod error;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod losses;
pub mod model;
pub mod nn;
pub mod seed;
pub mod testkit;
pub mod training;

pub use error::{Error, Result};
pub use eval::{EmbeddingTable, EvalReport};
pub use features::FeatureConfig;
pub use model::{ModelConfig, ModelState};
pub use training::TrainConfig;
