//! Rhythm-prompt tokenization: an NMF decomposition `S ≈ WH` of the prompt's magnitude
//! spectrogram, with components ordered by energy and activation peaks turned into
//! `(onset, class)` events. Only `H` survives into the representation, so the events carry
//! timing and class membership but no timbre.

pub mod nmf;
pub mod track;
pub mod transcribe;

pub use nmf::{
    energy_order, factorize_matrix, kl_divergence, nmf_factorize, sort_components_by_energy,
    NmfFactors, NmfRun,
};
pub use track::{RhythmEvent, RhythmTrack};
pub use transcribe::{events_from_activations, transcribe_rhythm, TranscribeConfig};
