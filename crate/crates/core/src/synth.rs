//! Deterministic synthetic percussion for fixtures: one-shot drum voices, an ideal renderer from
//! rhythm tracks, click trains and tones.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::audio::AudioBuffer;
use crate::dsp::Biquad;
use crate::error::Result;
use crate::rhythm::{RhythmEvent, RhythmTrack};
use crate::seed::derive_seed;

fn white_noise(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn normalize_peak(x: &mut [f64], peak: f64) {
    let m = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if m > 0.0 {
        x.iter_mut().for_each(|v| *v *= peak / m);
    }
}

fn exp_env(i: usize, sr: f64, tau: f64) -> f64 {
    (-(i as f64) / (sr * tau)).exp()
}

fn fade_in(i: usize, sr: f64, len_sec: f64) -> f64 {
    let x = (i as f64 / (sr * len_sec)).min(1.0);
    0.5 - 0.5 * (PI * x).cos()
}

/// 5 ms raised-cosine fade at the tail so truncated one-shots do not click.
fn fade_out(x: &mut [f64], sr: f64) {
    let n = ((0.005 * sr) as usize).min(x.len());
    let start = x.len() - n;
    for (i, v) in x[start..].iter_mut().enumerate() {
        *v *= 0.5 + 0.5 * (PI * (i + 1) as f64 / n as f64).cos();
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseFilter {
    Lowpass(f64),
    Highpass(f64),
    Bandpass { center_hz: f64, q: f64 },
}

impl NoiseFilter {
    fn biquad(self, sr: f64) -> Biquad {
        let q = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            NoiseFilter::Lowpass(f) => Biquad::lowpass(f, q, sr),
            NoiseFilter::Highpass(f) => Biquad::highpass(f, q, sr),
            NoiseFilter::Bandpass { center_hz, q } => Biquad::bandpass(center_hz, q, sr),
        }
    }
}

/// A percussive one-shot: an optional sine partial plus filtered noise under one exponential
/// decay. Each hit draws fresh noise, so repeated hits share a spectrum but not a waveform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoiceSpec {
    pub tone_hz: f64,
    pub tone_amp: f64,
    pub noise: NoiseFilter,
    pub noise_amp: f64,
    pub decay_sec: f64,
    pub attack_sec: f64,
    pub len_sec: f64,
}

impl VoiceSpec {
    pub fn render(&self, sample_rate: u32, seed: u64) -> Vec<f64> {
        let sr = sample_rate as f64;
        let n = (self.len_sec * sr) as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let filter = self.noise.biquad(sr);
        let mut noise = filter.process(&filter.process(&white_noise(n, &mut rng)));
        normalize_peak(&mut noise, self.noise_amp);
        let mut x: Vec<f64> = (0..n)
            .map(|i| {
                let tone = self.tone_amp * (2.0 * PI * self.tone_hz * i as f64 / sr).sin();
                let attack = if self.attack_sec > 0.0 {
                    fade_in(i, sr, self.attack_sec)
                } else {
                    1.0
                };
                (tone + noise[i]) * attack * exp_env(i, sr, self.decay_sec)
            })
            .collect();
        fade_out(&mut x, sr);
        x
    }
}

/// One voice per timbre class, rendered afresh at every event.
#[derive(Debug, Clone)]
pub struct DrumKit {
    sample_rate: u32,
    seed: u64,
    voices: Vec<VoiceSpec>,
}

impl DrumKit {
    /// Low sine thump, band-noise snare, high-frequency tick; classes ordered by energy.
    pub fn standard(sample_rate: u32, seed: u64) -> Self {
        let sr = sample_rate as f64;
        let kick = VoiceSpec {
            tone_hz: 60.0,
            tone_amp: 0.33,
            noise: NoiseFilter::Lowpass(2500.0),
            noise_amp: 0.15,
            decay_sec: 0.06,
            attack_sec: 0.008,
            len_sec: 0.3,
        };
        let snare = VoiceSpec {
            tone_hz: 0.0,
            tone_amp: 0.0,
            noise: NoiseFilter::Bandpass {
                center_hz: 2000.0,
                q: 0.8,
            },
            noise_amp: 0.45,
            decay_sec: 0.03,
            attack_sec: 0.0,
            len_sec: 0.2,
        };
        let hat = VoiceSpec {
            noise: NoiseFilter::Highpass((0.38 * sr).min(8000.0)),
            noise_amp: 0.25,
            decay_sec: 0.015,
            len_sec: 0.08,
            ..snare
        };
        Self::from_voices(sample_rate, seed, vec![kick, snare, hat])
    }

    /// Same roles, different timbres: lower kick, brighter and narrower snare band, higher tick.
    pub fn alternate(sample_rate: u32, seed: u64) -> Self {
        let sr = sample_rate as f64;
        let kick = VoiceSpec {
            tone_hz: 52.0,
            tone_amp: 0.22,
            noise: NoiseFilter::Lowpass(2500.0),
            noise_amp: 0.18,
            decay_sec: 0.06,
            attack_sec: 0.008,
            len_sec: 0.3,
        };
        let snare = VoiceSpec {
            tone_hz: 0.0,
            tone_amp: 0.0,
            noise: NoiseFilter::Bandpass {
                center_hz: 3200.0,
                q: 1.2,
            },
            noise_amp: 0.45,
            decay_sec: 0.025,
            attack_sec: 0.0,
            len_sec: 0.2,
        };
        let hat = VoiceSpec {
            noise: NoiseFilter::Highpass((0.42 * sr).min(10000.0)),
            noise_amp: 0.3,
            decay_sec: 0.012,
            len_sec: 0.08,
            ..snare
        };
        Self::from_voices(sample_rate, seed.wrapping_add(0x5eed), vec![kick, snare, hat])
    }

    pub fn from_voices(sample_rate: u32, seed: u64, voices: Vec<VoiceSpec>) -> Self {
        Self {
            sample_rate,
            seed,
            voices,
        }
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn n_classes(&self) -> usize {
        self.voices.len()
    }

    pub fn voice(&self, class_index: usize) -> &VoiceSpec {
        &self.voices[class_index]
    }

    /// Mixes one hit of the class voice at every event; hit `j` uses noise seeded from the kit
    /// seed and `j`. Event salience is ignored.
    pub fn render(&self, track: &RhythmTrack, duration_sec: f64) -> Result<AudioBuffer> {
        let sr = self.sample_rate as f64;
        let n = (duration_sec * sr).round() as usize;
        let mut out = vec![0.0f64; n];
        for (j, e) in track.events().iter().enumerate() {
            let voice = &self.voices[e.class_index % self.voices.len()];
            let hit = voice.render(self.sample_rate, derive_seed(self.seed, j as u64));
            let start = (e.onset_sec * sr).round() as usize;
            for (o, v) in out.iter_mut().skip(start).zip(&hit) {
                *o += v;
            }
        }
        let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if peak > 0.99 {
            normalize_peak(&mut out, 0.99);
        }
        AudioBuffer::from_f64(&out, self.sample_rate)
    }
}

/// Builds a track from `(onset_sec, class_index)` pairs with unit salience.
pub fn track_from_pairs(pairs: &[(f64, usize)], duration_sec: f64, n_classes: usize) -> Result<RhythmTrack> {
    RhythmTrack::new(
        pairs
            .iter()
            .map(|&(onset_sec, class_index)| RhythmEvent {
                onset_sec,
                class_index,
                salience: 1.0,
            })
            .collect(),
        duration_sec,
        n_classes,
    )
}

/// A rock-style groove on a 16th-note grid: kick on beats 1 and 3 (plus an "and"), snare on
/// 2 and 4, hats on off-beat eighths.
pub fn groove_track(bpm: f64, bars: usize, n_classes: usize) -> Result<RhythmTrack> {
    let sixteenth = 60.0 / bpm / 4.0;
    let mut pairs = Vec::new();
    for bar in 0..bars {
        let base = bar * 16;
        for step in 0..16 {
            let t = (base + step) as f64 * sixteenth;
            match step {
                0 | 8 | 10 => pairs.push((t, 0)),
                4 | 12 => pairs.push((t, 1)),
                2 | 6 | 14 => pairs.push((t, 2 % n_classes)),
                _ => {}
            }
        }
    }
    let duration = (bars * 16) as f64 * sixteenth;
    track_from_pairs(&pairs, duration, n_classes)
}

pub fn sine(freq_hz: f64, amplitude: f64, duration_sec: f64, sample_rate: u32) -> Vec<f64> {
    let sr = sample_rate as f64;
    let n = (duration_sec * sr).round() as usize;
    (0..n)
        .map(|i| amplitude * (2.0 * PI * freq_hz * i as f64 / sr).sin())
        .collect()
}

/// Single-sample clicks of the given amplitude at each time.
pub fn click_train(times_sec: &[f64], amplitude: f64, duration_sec: f64, sample_rate: u32) -> Vec<f64> {
    let sr = sample_rate as f64;
    let n = (duration_sec * sr).round() as usize;
    let mut x = vec![0.0; n];
    for &t in times_sec {
        let i = (t * sr).round() as usize;
        if i < n {
            x[i] = amplitude;
        }
    }
    x
}

/// Gaussian noise band-limited to `[lo_hz, hi_hz]` by cascaded 2nd-order sections, scaled to
/// the requested RMS.
pub fn band_noise(lo_hz: f64, hi_hz: f64, rms_target: f64, duration_sec: f64, sample_rate: u32, seed: u64) -> Vec<f64> {
    let sr = sample_rate as f64;
    let n = (duration_sec * sr).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = white_noise(n, &mut rng);
    let hp = Biquad::highpass(lo_hz, std::f64::consts::FRAC_1_SQRT_2, sr);
    for _ in 0..4 {
        x = hp.process(&x);
    }
    if hi_hz < sr / 2.0 {
        let lp = Biquad::lowpass(hi_hz, std::f64::consts::FRAC_1_SQRT_2, sr);
        for _ in 0..4 {
            x = lp.process(&x);
        }
    }
    let r = crate::audio::rms(&x);
    if r > 0.0 {
        x.iter_mut().for_each(|v| *v *= rms_target / r);
    }
    x
}
