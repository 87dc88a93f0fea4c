//! Centered, Hann-windowed STFT magnitude spectrograms.

use std::f64::consts::PI;

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

pub const MAX_WINDOW: usize = 1 << 16;

/// Reference analysis resolution: 2048/512 samples at 44.1 kHz.
pub const REFERENCE_RATE: u32 = 44_100;
pub const REFERENCE_WINDOW: usize = 2048;
pub const REFERENCE_HOP: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    /// `[n_bins, n_frames]`, entrywise nonnegative.
    pub mag: Array2<f64>,
    pub win_samples: usize,
    pub hop_samples: usize,
    pub sample_rate: u32,
}

impl Spectrogram {
    pub fn n_bins(&self) -> usize {
        self.mag.nrows()
    }

    pub fn n_frames(&self) -> usize {
        self.mag.ncols()
    }

    pub fn frame_rate(&self) -> f64 {
        self.sample_rate as f64 / self.hop_samples as f64
    }

    pub fn bin_hz(&self, bin: usize) -> f64 {
        bin as f64 * self.sample_rate as f64 / self.win_samples as f64
    }
}

/// Window and hop scaled from the 44.1 kHz reference resolution to `sample_rate`.
pub fn scaled_resolution(sample_rate: u32) -> (usize, usize) {
    let scale = sample_rate as f64 / REFERENCE_RATE as f64;
    let win = ((REFERENCE_WINDOW as f64 * scale).round() as usize).max(2);
    let hop = ((REFERENCE_HOP as f64 * scale).round() as usize).max(1);
    (win, hop)
}

/// Periodic Hann window.
pub fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / len as f64).cos())
        .collect()
}

/// Magnitude STFT with frame `t` centered on sample `t * hop`; out-of-range samples read as zero.
pub fn stft_magnitude(buf: &AudioBuffer, win_samples: usize, hop_samples: usize) -> Result<Spectrogram> {
    stft_magnitude_f64(&buf.to_f64(), buf.sample_rate(), win_samples, hop_samples)
}

pub fn stft_magnitude_f64(
    x: &[f64],
    sample_rate: u32,
    win_samples: usize,
    hop_samples: usize,
) -> Result<Spectrogram> {
    if hop_samples == 0 || win_samples < hop_samples {
        return Err(Error::Config(format!(
            "need win >= hop > 0, got win={win_samples} hop={hop_samples}"
        )));
    }
    if win_samples > MAX_WINDOW {
        return Err(Error::Config(format!(
            "window of {win_samples} samples exceeds cap of {MAX_WINDOW}"
        )));
    }
    let n_frames = x.len().div_ceil(hop_samples);
    let n_bins = win_samples / 2 + 1;
    let window = hann(win_samples);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(win_samples);
    let mut scratch = vec![Complex::default(); fft.get_inplace_scratch_len()];
    let mut frame = vec![Complex::default(); win_samples];
    let mut mag = Array2::<f64>::zeros((n_bins, n_frames));
    let half = (win_samples / 2) as isize;

    for t in 0..n_frames {
        let start = (t * hop_samples) as isize - half;
        for (i, slot) in frame.iter_mut().enumerate() {
            let idx = start + i as isize;
            let s = if idx >= 0 && (idx as usize) < x.len() {
                x[idx as usize]
            } else {
                0.0
            };
            *slot = Complex::new(s * window[i], 0.0);
        }
        fft.process_with_scratch(&mut frame, &mut scratch);
        for (b, c) in frame.iter().take(n_bins).enumerate() {
            mag[[b, t]] = c.norm();
        }
    }

    Ok(Spectrogram {
        mag,
        win_samples,
        hop_samples,
        sample_rate,
    })
}
