//! Rhythm-conditioned drum accompaniment toolkit.
//!
//! Percussive rhythm prompts are tokenized into `(onset, timbre class)` events via NMF, generated
//! audio is scored against those events with tolerance-matched onset F1, and paired training data
//! is built with mirrored augmentations.

pub mod audio;
pub mod data;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod peaks;
pub mod post;
pub mod rhythm;
pub mod seed;
pub mod spectrogram;
pub mod synth;

pub use audio::{load_wav, resample, save_wav, AudioBuffer};
pub use error::{Error, Result};
pub use rhythm::{RhythmEvent, RhythmTrack};
pub use spectrogram::{stft_magnitude, Spectrogram};
