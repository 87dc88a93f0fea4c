//! Rhythm-adherence protocol: truncation, minimum-onset filtering, onset F1 and per-class F1.

use serde::{Deserialize, Serialize};

use super::matching::{match_onsets, MatchReport};
use super::onset::{detect_onsets, OnsetConfig};
use crate::audio::AudioBuffer;
use crate::error::{Error, Result};
use crate::post::{apply_post_chain, PostChainConfig};
use crate::rhythm::{transcribe_rhythm, RhythmTrack, TranscribeConfig};

pub const KICK_CLASS: usize = 0;
pub const SNARE_CLASS: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub onset_tol_sec: f64,
    pub kick_tol_sec: f64,
    pub snare_tol_sec: f64,
    pub truncate_sec: f64,
    pub min_onsets: usize,
    pub onset: OnsetConfig,
    pub transcribe: TranscribeConfig,
    /// Applied to the generated audio (after truncation) when present.
    pub post_chain: Option<PostChainConfig>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            onset_tol_sec: 0.070,
            kick_tol_sec: 0.030,
            snare_tol_sec: 0.100,
            truncate_sec: 9.0,
            min_onsets: 2,
            onset: OnsetConfig::default(),
            transcribe: TranscribeConfig::default(),
            post_chain: None,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("onset_tol_sec", self.onset_tol_sec),
            ("kick_tol_sec", self.kick_tol_sec),
            ("snare_tol_sec", self.snare_tol_sec),
            ("truncate_sec", self.truncate_sec),
        ] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhythmScores {
    pub onset: MatchReport,
    pub kick: MatchReport,
    pub snare: MatchReport,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Adherence {
    Scored(RhythmScores),
    /// The reference had fewer than `min_onsets` onsets after truncation.
    Skipped { reference_onsets: usize },
}

/// Collapses onsets closer than `min_gap_sec` to the first of each cluster. A detector with a
/// minimum gap can never report both, so simultaneous multi-class events count once.
pub fn merge_close_onsets(onsets: &[f64], min_gap_sec: f64) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(onsets.len());
    for &t in onsets {
        match out.last() {
            Some(&last) if t - last < min_gap_sec => {}
            _ => out.push(t),
        }
    }
    out
}

/// Reference onsets as scored by the onset metric.
pub fn reference_onsets(reference: &RhythmTrack, config: &EvalConfig) -> Vec<f64> {
    merge_close_onsets(
        &reference.truncated(config.truncate_sec).onsets(),
        config.onset.min_gap_sec,
    )
}

pub fn evaluate_rhythm_adherence(
    reference: &RhythmTrack,
    generated: &AudioBuffer,
    config: &EvalConfig,
) -> Result<Adherence> {
    config.validate()?;
    let reference = reference.truncated(config.truncate_sec);
    let ref_onsets = merge_close_onsets(&reference.onsets(), config.onset.min_gap_sec);
    if ref_onsets.len() < config.min_onsets {
        return Ok(Adherence::Skipped {
            reference_onsets: ref_onsets.len(),
        });
    }

    let mut audio = generated.truncated(config.truncate_sec);
    if let Some(post) = &config.post_chain {
        audio = match apply_post_chain(&audio, post) {
            Ok(a) => a,
            // Silent output simply detects nothing.
            Err(Error::SilentInput) => audio,
            Err(e) => return Err(e),
        };
    }

    let est_onsets = detect_onsets(&audio, &config.onset)?;
    let onset = match_onsets(&ref_onsets, &est_onsets, config.onset_tol_sec)?;

    let transcribed = match transcribe_rhythm(&audio, &config.transcribe) {
        Ok(t) => Some(t),
        Err(Error::EmptyPrompt | Error::PromptTooShort { .. }) => None,
        Err(e) => return Err(e),
    };
    let class_report = |class: usize, tol: f64| -> Result<MatchReport> {
        let est = transcribed
            .as_ref()
            .map(|t| t.class_onsets(class))
            .unwrap_or_default();
        match_onsets(&reference.class_onsets(class), &est, tol)
    };
    Ok(Adherence::Scored(RhythmScores {
        onset,
        kick: class_report(KICK_CLASS, config.kick_tol_sec)?,
        snare: class_report(SNARE_CLASS, config.snare_tol_sec)?,
    }))
}
