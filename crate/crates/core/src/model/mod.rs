//! Encoder, per-dataset heads, parameter accounting and checkpoints.

mod checkpoint;
mod config;
mod encoder;
mod frozen;
mod head;
mod param;
mod state;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use config::{EncoderConfig, ModelConfig};
pub use encoder::{ConvBlock, Encoder, EncoderCache, NormSet};
pub use frozen::{freeze_encoder, FrozenEncoder};
pub use head::{HeadBank, HeadCache, MlpHead};
pub use param::Param;
pub use state::{patches_to_tensor, Mode, ModelState, NamedTensor, ParamScope, TrainingMeta};

#[cfg(test)]
mod tests;
