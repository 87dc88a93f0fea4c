//! Waveform-similarity overlap-add (WSOLA) time stretching and the pitch shift built on it.

use std::f64::consts::PI;

use crate::audio::resample_by_ratio;
use crate::dsp::dot;

const FRAME_SEC: f64 = 0.040;

/// Output length for a tempo change: `round(len / ratio)`.
pub fn stretched_len(len: usize, tempo_ratio: f64) -> usize {
    (len as f64 / tempo_ratio).round() as usize
}

/// Plays `x` `tempo_ratio` times faster without changing pitch. The output has exactly
/// [`stretched_len`] samples.
///
/// Frames of 40 ms overlap by half under a periodic Hann window (which sums to one), and each
/// frame is shifted within a quarter frame to best continue the previous one.
pub fn time_stretch(x: &[f64], tempo_ratio: f64, sample_rate: u32) -> Vec<f64> {
    let out_len = stretched_len(x.len(), tempo_ratio);
    if tempo_ratio == 1.0 || x.is_empty() {
        let mut y = x.to_vec();
        y.resize(out_len, 0.0);
        return y;
    }
    let n = (((FRAME_SEC * sample_rate as f64) as usize) / 2 * 2).max(4);
    let hs = n / 2;
    let tol = (hs / 2) as isize;
    let window: Vec<f64> = (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect();

    // Both signals carry `hs` samples of leading silence so the first output sample is already
    // covered by two frames.
    let mut padded = vec![0.0; hs];
    padded.extend_from_slice(x);
    padded.extend(std::iter::repeat_n(0.0, n + 2 * tol as usize));
    let frame_at = |pos: isize, buf: &mut Vec<f64>| {
        buf.clear();
        buf.extend((pos..pos + n as isize).map(|i| {
            if i >= 0 {
                padded.get(i as usize).copied().unwrap_or(0.0)
            } else {
                0.0
            }
        }));
    };

    let mut out = vec![0.0; out_len + hs + n];
    let mut natural = Vec::with_capacity(n);
    let mut candidate = Vec::with_capacity(n);
    let mut prev: Option<isize> = None;
    let mut k = 0usize;
    while k * hs <= out_len + hs {
        let nominal = ((k as f64 - 1.0) * hs as f64 * tempo_ratio).round() as isize + hs as isize;
        let pos = match prev {
            None => nominal,
            Some(p) => {
                frame_at(p + hs as isize, &mut natural);
                let mut best = (nominal, f64::NEG_INFINITY);
                for delta in -tol..=tol {
                    frame_at(nominal + delta, &mut candidate);
                    let score = dot(&natural, &candidate);
                    if score > best.1 {
                        best = (nominal + delta, score);
                    }
                }
                best.0
            }
        };
        frame_at(pos, &mut candidate);
        for ((o, &v), &w) in out[k * hs..].iter_mut().zip(&candidate).zip(&window) {
            *o += v * w;
        }
        prev = Some(pos);
        k += 1;
    }
    out.drain(..hs);
    out.truncate(out_len);
    out
}

/// Shifts pitch by `semitones` at constant duration: stretch by `2^(s/12)`, then resample back
/// to the original length.
pub fn pitch_shift(x: &[f64], semitones: f64, sample_rate: u32) -> Vec<f64> {
    if semitones == 0.0 || x.is_empty() {
        return x.to_vec();
    }
    let factor = 2f64.powf(semitones / 12.0);
    let longer = time_stretch(x, 1.0 / factor, sample_rate);
    resample_by_ratio(&longer, 1.0 / factor, x.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::sine;

    #[test]
    fn length_follows_ratio() {
        let x = sine(220.0, 0.5, 2.0, 16000);
        for ratio in [0.9, 1.0, 1.1, 0.5] {
            assert_eq!(time_stretch(&x, ratio, 16000).len(), stretched_len(x.len(), ratio));
        }
    }

    #[test]
    fn steady_sine_keeps_level() {
        let x = sine(440.0, 0.5, 1.0, 16000);
        let y = time_stretch(&x, 0.9, 16000);
        // Skip the edges; the interior should be a clean sine of the same amplitude.
        let mid = &y[2000..y.len() - 2000];
        let peak = mid.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak - 0.5).abs() < 0.03, "{peak}");
    }

    #[test]
    fn zero_shift_is_identity() {
        let x = sine(440.0, 0.5, 0.1, 16000);
        assert_eq!(pitch_shift(&x, 0.0, 16000), x);
        assert_eq!(time_stretch(&x, 1.0, 16000), x);
    }
}
