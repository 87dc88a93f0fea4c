//! Paired augmentation: one spec drawn per example, applied identically to mix and stem.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::stretch::{pitch_shift, time_stretch};
use super::StemPair;
use crate::audio::{rms, AudioBuffer};
use crate::dsp::Biquad;
use crate::error::Result;
use crate::seed::derive_seed;

pub const PRESENCE_PROBABILITY: f64 = 0.25;
pub const TEMPO_RANGE: (f64, f64) = (0.9, 1.1);
pub const PITCH_RANGE: (f64, f64) = (-2.0, 2.0);
pub const SNR_RANGE_DB: (f64, f64) = (20.0, 40.0);
pub const BANDPASS_CENTER_RANGE: (f64, f64) = (200.0, 4000.0);
pub const BANDPASS_Q_RANGE: (f64, f64) = (0.5, 2.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bandpass {
    pub center_hz: f64,
    pub q: f64,
}

/// Absent augmentations are `None`. `noise_seed` feeds the noise generator; mix and stem get
/// independent realizations at the same SNR.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AugmentationSpec {
    pub tempo_ratio: Option<f64>,
    pub pitch_semitones: Option<f64>,
    pub noise_snr_db: Option<f64>,
    pub bandpass: Option<Bandpass>,
    #[serde(default)]
    pub noise_seed: u64,
}

impl AugmentationSpec {
    pub fn is_identity(&self) -> bool {
        self.tempo_ratio.is_none()
            && self.pitch_semitones.is_none()
            && self.noise_snr_db.is_none()
            && self.bandpass.is_none()
    }
}

/// Every draw is made whether or not the augmentation ends up present, so each field consumes
/// a fixed slice of the random stream.
pub fn sample_augmentation(seed: u64) -> AugmentationSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |lo: f64, hi: f64| -> (bool, f64) {
        let present = rng.random::<f64>() < PRESENCE_PROBABILITY;
        (present, rng.random_range(lo..=hi))
    };
    let (tempo_on, tempo) = draw(TEMPO_RANGE.0, TEMPO_RANGE.1);
    let (pitch_on, pitch) = draw(PITCH_RANGE.0, PITCH_RANGE.1);
    let (noise_on, snr) = draw(SNR_RANGE_DB.0, SNR_RANGE_DB.1);
    let (bp_on, center) = draw(BANDPASS_CENTER_RANGE.0, BANDPASS_CENTER_RANGE.1);
    let q = rng.random_range(BANDPASS_Q_RANGE.0..=BANDPASS_Q_RANGE.1);
    AugmentationSpec {
        tempo_ratio: tempo_on.then_some(tempo),
        pitch_semitones: pitch_on.then_some(pitch),
        noise_snr_db: noise_on.then_some(snr),
        bandpass: bp_on.then_some(Bandpass { center_hz: center, q }),
        noise_seed: rng.random(),
    }
}

/// Gaussian noise scaled so that `rms(x) / rms(noise)` is exactly the target SNR. Silent input
/// is returned unchanged.
pub fn add_noise(x: &[f64], snr_db: f64, seed: u64) -> Vec<f64> {
    let signal = rms(x);
    if signal == 0.0 {
        return x.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<f64> = (0..x.len()).map(|_| rng.sample(StandardNormal)).collect();
    let gain = signal / 10f64.powf(snr_db / 20.0) / rms(&noise);
    x.iter().zip(&noise).map(|(s, n)| s + gain * n).collect()
}

/// Applies `spec` to one buffer. `stream` selects the noise realization (0 for the mix, 1 for
/// the stem). Order: tempo, pitch, band-pass, noise.
pub fn augment_buffer(buf: &AudioBuffer, spec: &AugmentationSpec, stream: u64) -> Result<AudioBuffer> {
    if spec.is_identity() {
        return Ok(buf.clone());
    }
    let sr = buf.sample_rate();
    let mut x = buf.to_f64();
    if let Some(ratio) = spec.tempo_ratio {
        x = time_stretch(&x, ratio, sr);
    }
    if let Some(semitones) = spec.pitch_semitones {
        x = pitch_shift(&x, semitones, sr);
    }
    if let Some(bp) = spec.bandpass {
        let center = bp.center_hz.min(0.45 * sr as f64);
        x = Biquad::bandpass(center, bp.q, sr as f64).process(&x);
    }
    if let Some(snr) = spec.noise_snr_db {
        x = add_noise(&x, snr, derive_seed(spec.noise_seed, stream));
    }
    AudioBuffer::from_f64(&x, sr)
}

pub fn apply_augmentation(pair: &StemPair, spec: &AugmentationSpec) -> Result<StemPair> {
    StemPair::new(
        augment_buffer(&pair.mix, spec, 0)?,
        augment_buffer(&pair.stem, spec, 1)?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::sine;

    fn pair(secs: f64) -> StemPair {
        let mix = AudioBuffer::from_f64(&sine(330.0, 0.4, secs, 16000), 16000).unwrap();
        let stem = AudioBuffer::from_f64(&sine(90.0, 0.2, secs, 16000), 16000).unwrap();
        StemPair::new(mix, stem).unwrap()
    }

    #[test]
    fn same_seed_same_spec() {
        assert_eq!(sample_augmentation(11), sample_augmentation(11));
        assert_ne!(sample_augmentation(11), sample_augmentation(12));
    }

    #[test]
    fn parameters_stay_in_range() {
        for seed in 0..2000 {
            let s = sample_augmentation(seed);
            if let Some(t) = s.tempo_ratio {
                assert!((0.9..=1.1).contains(&t));
            }
            if let Some(p) = s.pitch_semitones {
                assert!((-2.0..=2.0).contains(&p));
            }
            if let Some(n) = s.noise_snr_db {
                assert!((20.0..=40.0).contains(&n));
            }
            if let Some(b) = s.bandpass {
                assert!((200.0..=4000.0).contains(&b.center_hz) && (0.5..=2.0).contains(&b.q));
            }
        }
    }

    #[test]
    fn empty_spec_is_bit_exact_identity() {
        let p = pair(1.0);
        let out = apply_augmentation(&p, &AugmentationSpec::default()).unwrap();
        assert_eq!(out, p);
    }

    #[test]
    fn noise_realizations_differ_between_mix_and_stem() {
        let p = pair(1.0);
        let spec = AugmentationSpec {
            noise_snr_db: Some(20.0),
            noise_seed: 5,
            ..Default::default()
        };
        let out = apply_augmentation(&p, &spec).unwrap();
        let dm: Vec<f64> = out.mix.to_f64().iter().zip(p.mix.to_f64()).map(|(a, b)| a - b).collect();
        let ds: Vec<f64> = out.stem.to_f64().iter().zip(p.stem.to_f64()).map(|(a, b)| a - b).collect();
        let scale = rms(&dm) / rms(&ds);
        assert!(dm.iter().zip(&ds).any(|(a, b)| (a - b * scale).abs() > 1e-3));
    }

    #[test]
    fn tempo_shortens_both_buffers() {
        let p = pair(10.0);
        let spec = AugmentationSpec {
            tempo_ratio: Some(1.1),
            ..Default::default()
        };
        let out = apply_augmentation(&p, &spec).unwrap();
        assert_eq!(out.mix.len(), out.stem.len());
        assert!((out.mix.duration_sec() - 10.0 / 1.1).abs() < 0.02);
    }
}
