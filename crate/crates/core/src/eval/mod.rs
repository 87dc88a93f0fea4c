//! Rhythm-adherence metrics: a spectral-flux onset detector, tolerance-window onset matching
//! and the per-file evaluation protocol.

pub mod matching;
pub mod onset;
pub mod protocol;

pub use matching::{aggregate_reports, macro_average, match_onsets, matched_pairs, MatchReport};
pub use onset::{detect_onsets, OnsetConfig};
pub use protocol::{
    evaluate_rhythm_adherence, merge_close_onsets, reference_onsets, Adherence, EvalConfig,
    RhythmScores, KICK_CLASS, SNARE_CLASS,
};
