//! Spectral-flux onset detection.

use serde::{Deserialize, Serialize};

use crate::audio::AudioBuffer;
use crate::error::Result;
use crate::peaks::{local_maxima, suppress_close};
use crate::spectrogram::stft_magnitude;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OnsetConfig {
    pub win_sec: f64,
    pub hop_sec: f64,
    /// `γ` in the `ln(1 + γ|X|)` magnitude compression.
    pub compression: f64,
    /// Full width of the moving-median window.
    pub median_window_sec: f64,
    /// Threshold offset as a fraction of the maximum novelty.
    pub offset_rel: f64,
    pub min_gap_sec: f64,
}

impl Default for OnsetConfig {
    fn default() -> Self {
        Self {
            win_sec: 0.023,
            hop_sec: 0.005,
            compression: 10.0,
            median_window_sec: 0.1,
            offset_rel: 0.1,
            min_gap_sec: 0.05,
        }
    }
}

fn median(values: &mut [f64]) -> f64 {
    let mid = values.len() / 2;
    let (_, m, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    *m
}

/// Half-wave rectified spectral flux on log-compressed magnitudes; value `t` measures the rise
/// from frame `t - 1` to frame `t`. The signal is taken as silent before its first sample, so
/// value 0 is the full content of frame 0.
pub fn novelty_curve(buf: &AudioBuffer, config: &OnsetConfig) -> Result<(Vec<f64>, f64)> {
    let sr = buf.sample_rate() as f64;
    let hop = ((config.hop_sec * sr).round() as usize).max(1);
    let win = ((config.win_sec * sr).round() as usize).max(hop);
    let spec = stft_magnitude(buf, win, hop)?;
    let mag = spec.mag.mapv(|m| (1.0 + config.compression * m).ln());
    let n = spec.n_frames();
    let mut flux = vec![0.0; n];
    flux[0] = mag.column(0).sum();
    for t in 1..n {
        flux[t] = mag
            .column(t)
            .iter()
            .zip(mag.column(t - 1).iter())
            .map(|(a, b)| (a - b).max(0.0))
            .sum();
    }
    Ok((flux, spec.frame_rate()))
}

/// Onset times in seconds, ascending.
pub fn detect_onsets(buf: &AudioBuffer, config: &OnsetConfig) -> Result<Vec<f64>> {
    if buf.is_empty() {
        return Ok(Vec::new());
    }
    let (flux, frame_rate) = novelty_curve(buf, config)?;
    let max = flux.iter().cloned().fold(0.0, f64::max);
    if max <= 1e-9 {
        return Ok(Vec::new());
    }
    let half = ((config.median_window_sec * frame_rate / 2.0).round() as usize).max(1);
    let offset = config.offset_rel * max;
    let mut scratch = Vec::with_capacity(2 * half + 1);
    let thresholds: Vec<f64> = (0..flux.len())
        .map(|t| {
            let lo = t.saturating_sub(half);
            let hi = (t + half + 1).min(flux.len());
            scratch.clear();
            scratch.extend_from_slice(&flux[lo..hi]);
            median(&mut scratch) + offset
        })
        .collect();
    let peaks = local_maxima(&flux, |t| thresholds[t]);
    let kept = suppress_close(&flux, &peaks, config.min_gap_sec * frame_rate);
    Ok(kept.into_iter().map(|t| t as f64 / frame_rate).collect())
}
