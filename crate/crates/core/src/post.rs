//! Pre-evaluation clean-up chain: high-band gate, transient enhancement, compression and peak
//! normalization, applied in that order.

use serde::{Deserialize, Serialize};

use crate::audio::{amplitude_to_db, db_to_amplitude, rms, AudioBuffer};
use crate::dsp::{linkwitz_riley_split, one_pole_coeff};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PostChainConfig {
    pub gate_cutoff_hz: f64,
    pub gate_threshold_dbfs: f64,
    pub gate_attenuation_db: f64,
    pub transient_boost_db: f64,
    pub transient_window_ms: f64,
    pub comp_threshold_dbfs: f64,
    pub comp_ratio: f64,
    pub comp_attack_ms: f64,
    pub comp_release_ms: f64,
    pub normalize_peak_dbfs: f64,
}

impl Default for PostChainConfig {
    fn default() -> Self {
        Self {
            gate_cutoff_hz: 6000.0,
            gate_threshold_dbfs: -45.0,
            gate_attenuation_db: 24.0,
            transient_boost_db: 6.0,
            transient_window_ms: 20.0,
            comp_threshold_dbfs: -18.0,
            comp_ratio: 3.0,
            comp_attack_ms: 5.0,
            comp_release_ms: 100.0,
            normalize_peak_dbfs: -1.0,
        }
    }
}

const GATE_FRAME_SEC: f64 = 0.010;
const GATE_SMOOTHING_SEC: f64 = 0.005;
const FAST_ENVELOPE_SEC: f64 = 0.001;
const TRANSIENT_RATIO: f64 = 2.0;

impl PostChainConfig {
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let nyquist = sample_rate as f64 / 2.0;
        if !(self.comp_ratio >= 1.0) {
            return Err(Error::Config(format!("comp_ratio {} < 1", self.comp_ratio)));
        }
        if !(self.gate_attenuation_db >= 0.0) {
            return Err(Error::Config("gate_attenuation_db must be >= 0".into()));
        }
        if !(self.gate_cutoff_hz > 0.0 && self.gate_cutoff_hz < nyquist) {
            return Err(Error::Config(format!(
                "gate cutoff {} Hz must lie in (0, {nyquist})",
                self.gate_cutoff_hz
            )));
        }
        if !(self.transient_window_ms > 0.0 && self.transient_boost_db >= 0.0) {
            return Err(Error::Config("transient settings out of range".into()));
        }
        if !(self.comp_attack_ms >= 0.0 && self.comp_release_ms >= 0.0) {
            return Err(Error::Config("compressor times must be >= 0".into()));
        }
        Ok(())
    }
}

/// Level-dependent gate on the band above `gate_cutoff_hz`; the low band passes untouched.
pub fn gate_high_frequencies(buf: &AudioBuffer, config: &PostChainConfig) -> Result<AudioBuffer> {
    config.validate(buf.sample_rate())?;
    let sr = buf.sample_rate() as f64;
    let (low, high) = linkwitz_riley_split(&buf.to_f64(), config.gate_cutoff_hz, sr);
    let frame = ((GATE_FRAME_SEC * sr).round() as usize).max(1);
    let closed = db_to_amplitude(-config.gate_attenuation_db);
    let targets: Vec<f64> = high
        .chunks(frame)
        .map(|chunk| {
            if amplitude_to_db(rms(chunk)) < config.gate_threshold_dbfs {
                closed
            } else {
                1.0
            }
        })
        .collect();
    let a = one_pole_coeff(GATE_SMOOTHING_SEC, sr);
    let mut gain = targets.first().copied().unwrap_or(1.0);
    let out: Vec<f64> = low
        .iter()
        .zip(&high)
        .enumerate()
        .map(|(i, (l, h))| {
            gain = a * gain + (1.0 - a) * targets[i / frame];
            l + gain * h
        })
        .collect();
    AudioBuffer::from_f64(&out, buf.sample_rate())
}

/// Boosts samples where a 1 ms envelope runs ahead of the slower `transient_window_ms` one.
///
/// Gain rises linearly from 0 dB at a fast/slow ratio of 2 to the full boost at a ratio of 4.
pub fn enhance_transients(buf: &AudioBuffer, config: &PostChainConfig) -> Result<AudioBuffer> {
    config.validate(buf.sample_rate())?;
    let sr = buf.sample_rate() as f64;
    let af = one_pole_coeff(FAST_ENVELOPE_SEC, sr);
    let as_ = one_pole_coeff(config.transient_window_ms / 1000.0, sr);
    let (mut fast, mut slow) = (0.0f64, 0.0f64);
    let out: Vec<f64> = buf
        .samples()
        .iter()
        .map(|&x| {
            let x = x as f64;
            let level = x.abs();
            fast = af * fast + (1.0 - af) * level;
            slow = as_ * slow + (1.0 - as_) * level;
            if slow <= 0.0 {
                return x;
            }
            let excess = (fast / slow / TRANSIENT_RATIO - 1.0).clamp(0.0, 1.0);
            x * db_to_amplitude(config.transient_boost_db * excess)
        })
        .collect();
    AudioBuffer::from_f64(&out, buf.sample_rate())
}

/// Feed-forward compressor on a peak envelope with attack/release ballistics; hard knee, gain
/// computed in dB.
pub fn compress(buf: &AudioBuffer, config: &PostChainConfig) -> Result<AudioBuffer> {
    config.validate(buf.sample_rate())?;
    let sr = buf.sample_rate() as f64;
    let att = one_pole_coeff(config.comp_attack_ms / 1000.0, sr);
    let rel = one_pole_coeff(config.comp_release_ms / 1000.0, sr);
    let slope = 1.0 / config.comp_ratio - 1.0;
    // Decoupled peak detector: instant-attack/release peak hold, then attack smoothing.
    let (mut hold, mut env) = (0.0f64, 0.0f64);
    let out: Vec<f64> = buf
        .samples()
        .iter()
        .map(|&x| {
            let x = x as f64;
            let level = x.abs();
            hold = level.max(rel * hold + (1.0 - rel) * level);
            env = att * env + (1.0 - att) * hold;
            let over = amplitude_to_db(env) - config.comp_threshold_dbfs;
            if over > 0.0 {
                x * db_to_amplitude(slope * over)
            } else {
                x
            }
        })
        .collect();
    AudioBuffer::from_f64(&out, buf.sample_rate())
}

/// Uniform gain putting the absolute peak at `normalize_peak_dbfs`.
pub fn normalize_peak(buf: &AudioBuffer, config: &PostChainConfig) -> Result<AudioBuffer> {
    let peak = buf.peak();
    if peak == 0.0 {
        return Err(Error::SilentInput);
    }
    let gain = db_to_amplitude(config.normalize_peak_dbfs) / peak;
    let out: Vec<f64> = buf.samples().iter().map(|&x| x as f64 * gain).collect();
    AudioBuffer::from_f64(&out, buf.sample_rate())
}

pub fn apply_post_chain(buf: &AudioBuffer, config: &PostChainConfig) -> Result<AudioBuffer> {
    if buf.peak() == 0.0 {
        return Err(Error::SilentInput);
    }
    let x = gate_high_frequencies(buf, config)?;
    let x = enhance_transients(&x, config)?;
    let x = compress(&x, config)?;
    normalize_peak(&x, config)
}
