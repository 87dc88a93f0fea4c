use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tapgroove::RhythmTrack;

use crate::error::{Error, Result};
use crate::model::{argmax, Transformer};
use crate::sequence::{check_codec_tokens, RhythmConditionGrid};
use crate::tensor::Scalar;

/// Continues `mix_tokens ++ [delimiter]` for `max_new` tokens with the rhythm grid laid over the
/// generated region. Temperature 0 is greedy; otherwise softmax sampling seeded by `seed`. The
/// delimiter is never emitted.
pub fn generate<T: Scalar>(
    model: &Transformer<T>,
    mix_tokens: &[u32],
    rhythm: &RhythmTrack,
    max_new: usize,
    seed: u64,
    temperature: f64,
) -> Result<Vec<u32>> {
    check_codec_tokens(mix_tokens)?;
    let cfg = model.config();
    let prompt_len = mix_tokens.len() + 1;
    let total = prompt_len + max_new;
    if total > cfg.max_seq_len {
        return Err(Error::SequenceTooLong {
            len: total,
            max: cfg.max_seq_len,
        });
    }
    if !(temperature >= 0.0 && temperature.is_finite()) {
        return Err(Error::Config(format!("temperature {temperature} must be finite and >= 0")));
    }
    let grid = RhythmConditionGrid::from_track(rhythm, cfg.rhythm_classes, total, prompt_len, max_new)?;
    let delimiter = cfg.delimiter();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut prompt = mix_tokens.to_vec();
    prompt.push(delimiter);

    let mut state = model.new_state();
    let mut out = Vec::with_capacity(max_new);
    if max_new == 0 {
        return Ok(out);
    }
    let mut logits = model.step(&mut state, &prompt, &grid)?;
    loop {
        let token = if temperature == 0.0 {
            argmax(&logits, Some(delimiter))
        } else {
            sample(&logits, temperature, delimiter, &mut rng)
        };
        out.push(token);
        if out.len() == max_new {
            return Ok(out);
        }
        logits = model.step(&mut state, &[token], &grid)?;
    }
}

fn sample<T: Scalar>(logits: &[T], temperature: f64, exclude: u32, rng: &mut ChaCha8Rng) -> u32 {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.as_f64()));
    let weights: Vec<f64> = logits
        .iter()
        .enumerate()
        .map(|(i, v)| {
            if i as u32 == exclude {
                0.0
            } else {
                ((v.as_f64() - max) / temperature).exp()
            }
        })
        .collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i as u32;
        }
        u -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0) as u32
}
