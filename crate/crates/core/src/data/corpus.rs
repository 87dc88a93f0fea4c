//! Corpus building from a manifest of source pairs, and exact regeneration from its records.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{build_example, chunk_seed, sample_chunk, AugmentationSpec, ChunkSpec, StemPair};
use crate::audio::{load_wav, save_wav};
use crate::error::{Error, Result};
use crate::rhythm::{transcribe_rhythm, RhythmTrack, TranscribeConfig};
use crate::seed::derive_seed;

/// One line of a source-pair manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub mix_path: PathBuf,
    pub stem_path: PathBuf,
}

/// One line of a corpus manifest. Output file names are relative to the corpus directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub index: usize,
    pub mix_path: PathBuf,
    pub stem_path: PathBuf,
    pub seed: u64,
    pub chunk: ChunkSpec,
    pub augmentation: AugmentationSpec,
    pub out_mix: String,
    pub out_stem: String,
    pub out_rhythm: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusOptions {
    pub n_examples: usize,
    pub seed: u64,
    /// Fail on sources shorter than the minimum chunk instead of skipping them.
    pub strict: bool,
    pub transcribe: TranscribeConfig,
}

pub const MANIFEST_FILE: &str = "manifest.jsonl";

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| Error::Parse(e.to_string()))?;
        out.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(records)
}

fn load_pair(record: &PairRecord) -> Result<StemPair> {
    StemPair::new(load_wav(&record.mix_path)?, load_wav(&record.stem_path)?)
}

fn write_example(out_dir: &Path, record: &ExampleRecord, pair: &StemPair, options: &TranscribeConfig) -> Result<()> {
    save_wav(&pair.mix, out_dir.join(&record.out_mix))?;
    save_wav(&pair.stem, out_dir.join(&record.out_stem))?;
    let track = match transcribe_rhythm(&pair.stem, options) {
        Ok(t) => t,
        Err(Error::EmptyPrompt) => RhythmTrack::empty(pair.duration_sec(), options.components)?,
        Err(e) => return Err(e),
    };
    track.write_csv(out_dir.join(&record.out_rhythm))
}

/// Builds `n_examples` examples cycling over the usable pairs; example `i` uses the sub-seed
/// `derive_seed(seed, i)`. Writes WAVs, a rhythm CSV transcribed from each stem, and
/// `manifest.jsonl` into `out_dir`.
pub fn build_corpus(pairs: &[PairRecord], out_dir: &Path, options: &CorpusOptions) -> Result<Vec<ExampleRecord>> {
    let mut usable = Vec::new();
    for record in pairs {
        let pair = load_pair(record)?;
        if pair.duration_sec() < super::MIN_CHUNK_SEC {
            if options.strict {
                return Err(Error::SourceTooShort {
                    duration_sec: pair.duration_sec(),
                    min_sec: super::MIN_CHUNK_SEC,
                });
            }
            continue;
        }
        usable.push((record, pair));
    }
    if usable.is_empty() {
        return Err(Error::Config("no source pair is long enough to chunk".into()));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut records = Vec::with_capacity(options.n_examples);
    for index in 0..options.n_examples {
        let (source, pair) = &usable[index % usable.len()];
        let seed = derive_seed(options.seed, index as u64);
        let built = build_example(pair, seed)?;
        let record = ExampleRecord {
            index,
            mix_path: source.mix_path.clone(),
            stem_path: source.stem_path.clone(),
            seed,
            chunk: built.chunk,
            augmentation: built.augmentation,
            out_mix: format!("{index:05}_mix.wav"),
            out_stem: format!("{index:05}_stem.wav"),
            out_rhythm: format!("{index:05}_rhythm.csv"),
        };
        write_example(out_dir, &record, &built.pair, &options.transcribe)?;
        records.push(record);
    }
    write_jsonl(&out_dir.join(MANIFEST_FILE), &records)?;
    Ok(records)
}

/// Rebuilds one example from its record. The redrawn chunk and augmentation must match the
/// record, otherwise the sources changed and [`Error::Parse`] is returned.
pub fn regenerate(record: &ExampleRecord, out_dir: &Path, transcribe: &TranscribeConfig) -> Result<()> {
    let pair = load_pair(&PairRecord {
        mix_path: record.mix_path.clone(),
        stem_path: record.stem_path.clone(),
    })?;
    let built = build_example(&pair, record.seed)?;
    if built.chunk != record.chunk || built.augmentation != record.augmentation {
        return Err(Error::Parse(format!(
            "example {} does not reproduce from its seed; were the sources modified?",
            record.index
        )));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_example(out_dir, record, &built.pair, transcribe)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DurationStats {
    pub count: usize,
    pub mean_sec: f64,
    pub median_sec: f64,
    pub min_sec: f64,
    pub max_sec: f64,
}

/// Chunk durations only, without touching audio. Example `i` draws from source
/// `sources_sec[i % len]` with the same seed [`build_corpus`] would give it, so the durations
/// are exactly those of a real build over the same (usable) sources.
pub fn chunk_duration_stats(n: usize, sources_sec: &[f64], seed: u64) -> Result<DurationStats> {
    if n == 0 || sources_sec.is_empty() {
        return Err(Error::Config("need at least one draw and one source".into()));
    }
    let mut d = (0..n)
        .map(|i| {
            let source = sources_sec[i % sources_sec.len()];
            sample_chunk(source, chunk_seed(derive_seed(seed, i as u64))).map(|c| c.duration_sec)
        })
        .collect::<Result<Vec<_>>>()?;
    d.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 {
        d[n / 2]
    } else {
        (d[n / 2 - 1] + d[n / 2]) / 2.0
    };
    Ok(DurationStats {
        count: n,
        mean_sec: d.iter().sum::<f64>() / n as f64,
        median_sec: median,
        min_sec: d[0],
        max_sec: d[n - 1],
    })
}
