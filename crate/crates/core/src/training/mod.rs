//! Samplers, epoch schedules, focal dataset weighting and the optimization loop.

mod config;
mod data;
mod engine;
mod fdr;
mod optim;
mod record;
mod sampler;


pub use config::{AdamConfig, FdrConfig, Mixing, Scenario, TrainConfig};
pub use data::{prepare_datasets, prepare_from_manifest, PreparedDataset};
pub use engine::{calibrate_fdr, dataset_epoch_batches, epoch_plan, train, transfer_head_finetune};
pub use fdr::{fdr_weights, raw_weight, record_convergence, FdrWeights};
pub use optim::Adam;
pub use record::{DatasetEpoch, EarlyStopping, EpochRecord, HistoryLine, RunRecord};
pub use sampler::{class_balanced_batches, schedule_epoch, shuffled_batches, Batch, BatchItem, BatchPlan};
