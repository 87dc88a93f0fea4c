//! Log-uniform chunk sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_CHUNK_SEC: f64 = 10.0;
pub const MAX_CHUNK_SEC: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChunkSpec {
    pub start_sec: f64,
    pub duration_sec: f64,
}

/// Duration `exp(U(ln 10, ln min(30, source)))`, start uniform over the admissible range.
pub fn sample_chunk(source_sec: f64, seed: u64) -> Result<ChunkSpec> {
    if !(source_sec >= MIN_CHUNK_SEC) {
        return Err(Error::SourceTooShort {
            duration_sec: source_sec,
            min_sec: MIN_CHUNK_SEC,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lo = MIN_CHUNK_SEC.ln();
    let hi = source_sec.min(MAX_CHUNK_SEC).ln();
    let u: f64 = rng.random();
    let duration_sec = (lo + u * (hi - lo)).exp().clamp(MIN_CHUNK_SEC, source_sec.min(MAX_CHUNK_SEC));
    let start_sec = rng.random::<f64>() * (source_sec - duration_sec);
    Ok(ChunkSpec {
        start_sec,
        duration_sec,
    })
}
