use serde::{Deserialize, Serialize};

use super::nmf::{nmf_factorize, sort_components_by_energy, NmfFactors};
use super::track::{RhythmEvent, RhythmTrack};
use crate::audio::AudioBuffer;
use crate::error::{Error, Result};
use crate::peaks::{local_maxima, suppress_close};
use crate::spectrogram::{scaled_resolution, stft_magnitude};

pub const DEFAULT_COMPONENTS: usize = 3;
pub const MIN_PROMPT_SEC: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TranscribeConfig {
    pub components: usize,
    /// STFT window; `None` scales 2048 samples at 44.1 kHz to the input rate.
    pub win_samples: Option<usize>,
    pub hop_samples: Option<usize>,
    pub iterations: usize,
    pub seed: u64,
    pub threshold_rel: f64,
    pub min_gap_sec: f64,
}

impl Default for TranscribeConfig {
    fn default() -> Self {
        Self {
            components: DEFAULT_COMPONENTS,
            win_samples: None,
            hop_samples: None,
            iterations: 300,
            seed: 0,
            threshold_rel: 0.1,
            min_gap_sec: 0.05,
        }
    }
}

impl TranscribeConfig {
    pub fn resolution(&self, sample_rate: u32) -> (usize, usize) {
        let (win, hop) = scaled_resolution(sample_rate);
        (self.win_samples.unwrap_or(win), self.hop_samples.unwrap_or(hop))
    }
}

/// Turns each activation row into events at its salient local maxima.
///
/// Factors are expected to be energy-sorted already so that row `k` is class `k`.
pub fn events_from_activations(
    f: &NmfFactors,
    frame_rate: f64,
    threshold_rel: f64,
    min_gap_sec: f64,
) -> Result<RhythmTrack> {
    if !(threshold_rel > 0.0 && threshold_rel < 1.0) {
        return Err(Error::Config(format!("threshold_rel {threshold_rel} not in (0, 1)")));
    }
    if !(min_gap_sec >= 0.0) || !(frame_rate > 0.0) {
        return Err(Error::Config("min_gap_sec must be >= 0 and frame_rate > 0".into()));
    }
    let h = &f.activations;
    let min_gap_frames = min_gap_sec * frame_rate;
    let mut events = Vec::new();
    for (class_index, row) in h.rows().into_iter().enumerate() {
        let row = row.to_vec();
        let max = row.iter().cloned().fold(0.0, f64::max);
        if max <= 0.0 {
            continue;
        }
        let thr = threshold_rel * max;
        let peaks = local_maxima(&row, |_| thr);
        for idx in suppress_close(&row, &peaks, min_gap_frames) {
            events.push(RhythmEvent {
                onset_sec: idx as f64 / frame_rate,
                class_index,
                salience: row[idx],
            });
        }
    }
    let duration = h.ncols() as f64 / frame_rate;
    RhythmTrack::new(events, duration, h.nrows())
}

/// STFT → NMF → energy sort → peak picking. The basis matrix is discarded.
pub fn transcribe_rhythm(buf: &AudioBuffer, config: &TranscribeConfig) -> Result<RhythmTrack> {
    if buf.duration_sec() < MIN_PROMPT_SEC {
        return Err(Error::PromptTooShort {
            duration_sec: buf.duration_sec(),
            min_sec: MIN_PROMPT_SEC,
        });
    }
    let (win, hop) = config.resolution(buf.sample_rate());
    let spec = stft_magnitude(buf, win, hop)?;
    let factors = nmf_factorize(&spec, config.components, config.iterations, config.seed)?;
    let sorted = sort_components_by_energy(&factors);
    let track = events_from_activations(
        &sorted,
        spec.frame_rate(),
        config.threshold_rel,
        config.min_gap_sec,
    )?;
    // Frame times never exceed the audio length, so re-anchoring the duration is safe.
    let duration = buf
        .duration_sec()
        .max(track.events().last().map_or(0.0, |e| e.onset_sec));
    RhythmTrack::new(track.events().to_vec(), duration, track.n_classes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn factors_with_rows(rows: &[Vec<f64>]) -> NmfFactors {
        let k = rows.len();
        let n = rows[0].len();
        let h = Array2::from_shape_fn((k, n), |(r, c)| rows[r][c]);
        NmfFactors::new(Array2::ones((4, k)), h).unwrap()
    }

    #[test]
    fn single_spike_time() {
        let mut row = vec![0.0; 40];
        row[10] = 1.0;
        let t = events_from_activations(&factors_with_rows(&[row]), 86.13, 0.1, 0.05).unwrap();
        assert_eq!(t.len(), 1);
        assert!((t.events()[0].onset_sec - 10.0 / 86.13).abs() < 1e-12);
        assert!((t.events()[0].onset_sec - 0.1161).abs() < 1e-4);
        assert_eq!(t.events()[0].salience, 1.0);
    }

    #[test]
    fn close_peaks_keep_larger() {
        // 100 frames/s: peaks 30 ms apart, gap 50 ms.
        let mut row = vec![0.0; 50];
        row[10] = 0.6;
        row[13] = 1.0;
        let t = events_from_activations(&factors_with_rows(&[row]), 100.0, 0.1, 0.05).unwrap();
        assert_eq!(t.onsets(), vec![0.13]);
    }

    #[test]
    fn zero_row_yields_nothing() {
        let mut row = vec![0.0; 20];
        row[5] = 1.0;
        let t = events_from_activations(&factors_with_rows(&[row, vec![0.0; 20]]), 50.0, 0.1, 0.0)
            .unwrap();
        assert_eq!(t.len(), 1);
        assert!(t.class_onsets(1).is_empty());
    }

    #[test]
    fn scaling_activations_preserves_events() {
        let row: Vec<f64> = (0..64).map(|i| ((i as f64) * 0.7).sin().abs() * (i % 5) as f64).collect();
        let a = events_from_activations(&factors_with_rows(&[row.clone()]), 50.0, 0.2, 0.04).unwrap();
        let scaled: Vec<f64> = row.iter().map(|v| v * 37.5).collect();
        let b = events_from_activations(&factors_with_rows(&[scaled]), 50.0, 0.2, 0.04).unwrap();
        let key = |t: &RhythmTrack| -> Vec<(f64, usize)> {
            t.events().iter().map(|e| (e.onset_sec, e.class_index)).collect()
        };
        assert_eq!(key(&a), key(&b));
    }

    #[test]
    fn threshold_range_checked() {
        let f = factors_with_rows(&[vec![0.0, 1.0, 0.0]]);
        assert!(events_from_activations(&f, 10.0, 0.0, 0.0).is_err());
        assert!(events_from_activations(&f, 10.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn short_prompt_rejected() {
        let buf = AudioBuffer::silence(4410, 44100).unwrap();
        assert!(matches!(
            transcribe_rhythm(&buf, &TranscribeConfig::default()),
            Err(Error::PromptTooShort { .. })
        ));
    }

    #[test]
    fn silent_prompt_is_empty() {
        let buf = AudioBuffer::silence(22050, 22050).unwrap();
        assert!(matches!(
            transcribe_rhythm(&buf, &TranscribeConfig::default()),
            Err(Error::EmptyPrompt)
        ));
    }
}
