//! Synthetic (mix, rhythm, drums) examples for overfitting checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tapgroove::seed::derive_seed;
use tapgroove::synth::{sine, track_from_pairs, DrumKit};
use tapgroove::{AudioBuffer, RhythmTrack};

use crate::codec::{codec_encode, CODEC_SAMPLE_RATE, FRAME_RATE};
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct FixtureExample {
    pub mix: AudioBuffer,
    pub drums: AudioBuffer,
    pub rhythm: RhythmTrack,
    pub mix_tokens: Vec<u32>,
    pub drum_tokens: Vec<u32>,
}

/// Events on the codec frame grid at least 120 ms apart; a two-tone mix with a slow tremolo.
pub fn synthetic_example(duration_sec: f64, seed: u64) -> Result<FixtureExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sr = CODEC_SAMPLE_RATE;
    let last_frame = ((duration_sec - 0.15) * FRAME_RATE) as usize;
    let n_events = rng.random_range(3..=5);
    let mut pairs = Vec::new();
    let mut frame = rng.random_range(2..6usize);
    while pairs.len() < n_events && frame <= last_frame {
        pairs.push((frame as f64 / FRAME_RATE, rng.random_range(0..3usize)));
        frame += rng.random_range(6..12usize);
    }
    let rhythm = track_from_pairs(&pairs, duration_sec, 3)?;
    let drums = DrumKit::standard(sr, derive_seed(seed, 1)).render(&rhythm, duration_sec)?;

    let f1 = rng.random_range(150.0..400.0);
    let f2 = f1 * rng.random_range(1.2..2.5);
    let rate = rng.random_range(1.0..4.0);
    let a = sine(f1, rng.random_range(0.05..0.3), duration_sec, sr);
    let b = sine(f2, rng.random_range(0.02..0.2), duration_sec, sr);
    let mix: Vec<f64> = a
        .iter()
        .zip(&b)
        .enumerate()
        .map(|(i, (x, y))| {
            let t = i as f64 / sr as f64;
            (x + y) * (0.6 + 0.4 * (2.0 * std::f64::consts::PI * rate * t).sin())
        })
        .collect();
    let mix = AudioBuffer::from_f64(&mix, sr)?;
    Ok(FixtureExample {
        mix_tokens: codec_encode(&mix)?,
        drum_tokens: codec_encode(&drums)?,
        mix,
        drums,
        rhythm,
    })
}

pub fn memorization_set(n: usize, duration_sec: f64, seed: u64) -> Result<Vec<FixtureExample>> {
    (0..n)
        .map(|i| synthetic_example(duration_sec, derive_seed(seed, i as u64)))
        .collect()
}
