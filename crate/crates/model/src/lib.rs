//! Toy rhythm-conditioned drum generator: a band-energy audio tokenizer and a small
//! decoder-only transformer fine-tuned with most layers frozen.

pub mod checkpoint;
pub mod codec;
pub mod config;
pub mod error;
pub mod fixture;
pub mod generate;
pub mod model;
pub mod sequence;
pub mod tensor;
pub mod training;

pub use codec::{codec_decode, codec_encode};
pub use config::{make_freeze_schedule, FreezeSchedule, ModelConfig};
pub use error::{Error, Result};
pub use generate::generate;
pub use model::{train_step, Transformer};
pub use sequence::{build_sequence, RhythmConditionGrid, TokenSequence};
