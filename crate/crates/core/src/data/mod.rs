//! Training-example construction: paired chunking and augmentation of (drumless mix, drum stem)
//! sources, plus the JSON-lines manifests that make a corpus regenerable.

pub mod augment;
pub mod chunk;
pub mod corpus;
pub mod stretch;

pub use augment::{apply_augmentation, sample_augmentation, AugmentationSpec, Bandpass};
pub use chunk::{sample_chunk, ChunkSpec, MAX_CHUNK_SEC, MIN_CHUNK_SEC};
pub use corpus::{
    build_corpus, chunk_duration_stats, read_jsonl, regenerate, write_jsonl, CorpusOptions, DurationStats,
    ExampleRecord, PairRecord,
};

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};
use crate::seed::derive_seed;

/// A drumless mix and its drum stem, sample-aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct StemPair {
    pub mix: AudioBuffer,
    pub stem: AudioBuffer,
}

impl StemPair {
    pub fn new(mix: AudioBuffer, stem: AudioBuffer) -> Result<Self> {
        if mix.sample_rate() != stem.sample_rate() {
            return Err(Error::PairMismatch(format!(
                "sample rates {} and {}",
                mix.sample_rate(),
                stem.sample_rate()
            )));
        }
        if mix.len() != stem.len() {
            return Err(Error::PairMismatch(format!("lengths {} and {}", mix.len(), stem.len())));
        }
        Ok(Self { mix, stem })
    }

    pub fn sample_rate(&self) -> u32 {
        self.mix.sample_rate()
    }

    pub fn duration_sec(&self) -> f64 {
        self.mix.duration_sec()
    }

    /// Cuts the same chunk from both buffers.
    pub fn chunk(&self, chunk: &ChunkSpec) -> Result<Self> {
        let sr = self.sample_rate() as f64;
        let start = (chunk.start_sec * sr).round() as usize;
        let len = (chunk.duration_sec * sr).round() as usize;
        Self::new(self.mix.slice(start, len), self.stem.slice(start, len))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuiltExample {
    pub pair: StemPair,
    pub chunk: ChunkSpec,
    pub augmentation: AugmentationSpec,
}

/// Sub-seed of an example seed used for its chunk draw.
pub fn chunk_seed(example_seed: u64) -> u64 {
    derive_seed(example_seed, 0)
}

/// Chunk, then augment. The chunk and augmentation draws use separate sub-seeds of `seed`.
pub fn build_example(pair: &StemPair, seed: u64) -> Result<BuiltExample> {
    let chunk = sample_chunk(pair.duration_sec(), chunk_seed(seed))?;
    let augmentation = sample_augmentation(derive_seed(seed, 1));
    let pair = apply_augmentation(&pair.chunk(&chunk)?, &augmentation)?;
    Ok(BuiltExample {
        pair,
        chunk,
        augmentation,
    })
}
