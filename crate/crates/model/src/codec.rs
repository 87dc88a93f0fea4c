//! Toy audio tokenizer: per 20 ms frame, RMS energy in four log-spaced bands quantized to eight
//! levels, packed into one id in `[0, 4096)`.
//!
//! Frames are 320 samples at 16 kHz, so DFT bin `k` sits at exactly `50·k` Hz. Decoding drives
//! each band with a multi-sine on that band's bins, which repeats every frame: a frame holding a
//! constant envelope re-encodes to exactly its dequantized energy.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use tapgroove::{resample, AudioBuffer};

use crate::error::{Error, Result};

pub const CODEC_SAMPLE_RATE: u32 = 16_000;
pub const FRAME_RATE: f64 = 50.0;
pub const FRAME_LEN: usize = 320;
pub const N_BANDS: usize = 4;
pub const N_LEVELS: u32 = 8;
pub const CODEC_VOCAB: u32 = 4096;
/// Band `b` covers DFT bins `[BAND_EDGES[b], BAND_EDGES[b + 1])`, i.e. 50–200, 200–650,
/// 650–2250 and 2250–8000 Hz.
pub const BAND_EDGES: [usize; N_BANDS + 1] = [1, 4, 13, 45, 160];
/// Lower edge of level 1; anything quieter is level 0 and decodes to silence.
pub const FLOOR_DB: f64 = -52.5;
pub const STEP_DB: f64 = 7.5;
/// Envelopes move linearly from one frame's value to the next over this many samples, inside
/// whichever of the two frames is louder: rises at the start of the louder frame, falls at its
/// end. A quiet frame next to a loud one therefore keeps its own level.
pub const INTERP_SAMPLES: usize = 16;
const PHASE_SEED: u64 = 0x0c0d_ec00;

pub fn quantize_db(db: f64) -> u32 {
    if !(db >= FLOOR_DB) {
        return 0;
    }
    (((db - FLOOR_DB) / STEP_DB).floor() as u32 + 1).min(N_LEVELS - 1)
}

/// Amplitude at the center of a level's dB range; level 0 is exact silence.
pub fn dequantize(level: u32) -> f64 {
    if level == 0 {
        return 0.0;
    }
    let db = FLOOR_DB + (level as f64 - 0.5) * STEP_DB;
    10f64.powf(db / 20.0)
}

pub fn pack(levels: [u32; N_BANDS]) -> u32 {
    levels.iter().rev().fold(0, |acc, &l| acc * N_LEVELS + l)
}

pub fn unpack(token: u32) -> [u32; N_BANDS] {
    let mut out = [0; N_BANDS];
    let mut t = token;
    for l in out.iter_mut() {
        *l = t % N_LEVELS;
        t /= N_LEVELS;
    }
    out
}

fn to_codec_rate(buf: &AudioBuffer) -> Result<Vec<f64>> {
    if buf.sample_rate() == CODEC_SAMPLE_RATE {
        Ok(buf.to_f64())
    } else {
        Ok(resample(buf, CODEC_SAMPLE_RATE)?.to_f64())
    }
}

/// Per-frame band RMS values (linear amplitude). The last partial frame is zero padded.
pub fn band_rms(buf: &AudioBuffer) -> Result<Vec<[f64; N_BANDS]>> {
    let x = to_codec_rate(buf)?;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(FRAME_LEN);
    let mut frame = vec![Complex::new(0.0, 0.0); FRAME_LEN];
    let n = FRAME_LEN as f64;
    Ok(x.chunks(FRAME_LEN)
        .map(|chunk| {
            for (i, c) in frame.iter_mut().enumerate() {
                *c = Complex::new(chunk.get(i).copied().unwrap_or(0.0), 0.0);
            }
            fft.process(&mut frame);
            let mut out = [0.0; N_BANDS];
            for (b, o) in out.iter_mut().enumerate() {
                let power: f64 = frame[BAND_EDGES[b]..BAND_EDGES[b + 1]]
                    .iter()
                    .map(|c| c.norm_sqr())
                    .sum();
                *o = (2.0 * power).sqrt() / n;
            }
            out
        })
        .collect())
}

pub fn band_levels(buf: &AudioBuffer) -> Result<Vec<[u32; N_BANDS]>> {
    Ok(band_rms(buf)?
        .into_iter()
        .map(|f| f.map(|r| quantize_db(20.0 * r.log10())))
        .collect())
}

/// Resamples to 16 kHz when needed; `ceil(len / 320)` tokens.
pub fn codec_encode(buf: &AudioBuffer) -> Result<Vec<u32>> {
    Ok(band_levels(buf)?.into_iter().map(pack).collect())
}

/// One frame period of each band's unit-RMS multi-sine.
fn carriers() -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(PHASE_SEED);
    let phases: Vec<f64> = (0..BAND_EDGES[N_BANDS])
        .map(|_| rng.random_range(0.0..2.0 * PI))
        .collect();
    (0..N_BANDS)
        .map(|b| {
            let bins = BAND_EDGES[b]..BAND_EDGES[b + 1];
            let amp = (2.0 / bins.len() as f64).sqrt();
            (0..FRAME_LEN)
                .map(|t| {
                    bins.clone()
                        .map(|k| (2.0 * PI * (k * t) as f64 / FRAME_LEN as f64 + phases[k]).cos())
                        .sum::<f64>()
                        * amp
                })
                .collect()
        })
        .collect()
}

/// 16 kHz audio of `320 · tokens.len()` samples. Fails on any id outside the codec vocabulary,
/// which includes the sequence delimiter.
pub fn codec_decode(tokens: &[u32]) -> Result<AudioBuffer> {
    if let Some((position, &token)) = tokens.iter().enumerate().find(|(_, &t)| t >= CODEC_VOCAB) {
        return Err(Error::InvalidToken { token, position });
    }
    let carriers = carriers();
    let amps: Vec<[f64; N_BANDS]> = tokens.iter().map(|&t| unpack(t).map(dequantize)).collect();
    let ramp_start = FRAME_LEN - INTERP_SAMPLES;
    let mut out = vec![0.0; tokens.len() * FRAME_LEN];
    for (j, a) in amps.iter().enumerate() {
        let frame = &mut out[j * FRAME_LEN..(j + 1) * FRAME_LEN];
        for b in 0..N_BANDS {
            let prev = if j > 0 { amps[j - 1][b] } else { 0.0 };
            let next = amps.get(j + 1).map_or(a[b], |n| n[b]);
            if a[b] == 0.0 {
                continue;
            }
            for (t, v) in frame.iter_mut().enumerate() {
                let env = if t < INTERP_SAMPLES && prev < a[b] {
                    prev + (a[b] - prev) * t as f64 / INTERP_SAMPLES as f64
                } else if t >= ramp_start && next < a[b] {
                    a[b] + (next - a[b]) * (t - ramp_start + 1) as f64 / (INTERP_SAMPLES + 1) as f64
                } else {
                    a[b]
                };
                *v += env * carriers[b][t];
            }
        }
    }
    Ok(AudioBuffer::from_f64(&out, CODEC_SAMPLE_RATE)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pack_roundtrip() {
        for t in [0, 1, 7, 8, 511, 4095] {
            assert_eq!(pack(unpack(t)), t);
        }
        assert_eq!(pack([1, 0, 0, 0]), 1);
        assert_eq!(pack([0, 0, 0, 7]), 7 * 512);
        assert_eq!(N_LEVELS.pow(N_BANDS as u32), CODEC_VOCAB);
    }

    #[test]
    fn levels_cover_range() {
        assert_eq!(quantize_db(f64::NEG_INFINITY), 0);
        assert_eq!(quantize_db(-60.0), 0);
        assert_eq!(quantize_db(-52.5), 1);
        assert_eq!(quantize_db(0.0), 7);
        assert_eq!(quantize_db(20.0), 7);
        for l in 1..N_LEVELS {
            assert_eq!(quantize_db(20.0 * dequantize(l).log10()), l);
        }
    }

    #[test]
    fn silence_is_token_zero() {
        let buf = AudioBuffer::silence(16000, 16000).unwrap();
        let tokens = codec_encode(&buf).unwrap();
        assert_eq!(tokens.len(), 50);
        assert!(tokens.iter().all(|&t| t == 0));
        let dec = codec_decode(&[0; 30]).unwrap();
        assert!(dec.peak() < 1e-4);
    }

    #[test]
    fn frame_count() {
        let buf = AudioBuffer::silence(16001, 16000).unwrap();
        assert_eq!(codec_encode(&buf).unwrap().len(), 51);
        let buf = AudioBuffer::silence(44100, 44100).unwrap();
        assert_eq!(codec_encode(&buf).unwrap().len(), 50);
    }

    #[test]
    fn carriers_have_unit_rms_per_frame() {
        for c in carriers() {
            let ms = c.iter().map(|v| v * v).sum::<f64>() / FRAME_LEN as f64;
            assert!((ms - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_tokens_reencode_exactly() {
        let tokens = vec![pack([3, 5, 7, 1]); 10];
        let dec = codec_decode(&tokens).unwrap();
        assert_eq!(codec_encode(&dec).unwrap()[1..], tokens[1..]);
    }

    #[test]
    fn delimiter_is_rejected() {
        assert!(matches!(
            codec_decode(&[1, 2, CODEC_VOCAB]),
            Err(Error::InvalidToken { position: 2, .. })
        ));
    }
}
