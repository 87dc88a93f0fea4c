use std::path::Path;

use anyhow::Result;
use serde_json::json;
use tapgroove::audio::wav_duration_sec;
use tapgroove::data::corpus::MANIFEST_FILE;
use tapgroove::data::{
    build_corpus, chunk_duration_stats, read_jsonl, regenerate, CorpusOptions, ExampleRecord, PairRecord, MIN_CHUNK_SEC,
};
use tapgroove::rhythm::TranscribeConfig;

use crate::args::{required, BuildArgs, RegenArgs};
use crate::failure::Failure;
use crate::manifest::{write_atomic, Run};

const RUN_MANIFEST: &str = "run.manifest.json";

/// Pair paths relative to the pairs file are resolved against its directory.
fn read_pairs(path: &Path) -> Result<Vec<PairRecord>> {
    let base = path.parent().unwrap_or(Path::new(""));
    let pairs: Vec<PairRecord> = read_jsonl(path)?;
    if pairs.is_empty() {
        return Err(Failure::Usage(format!("{} lists no pairs", path.display())).into());
    }
    Ok(pairs
        .into_iter()
        .map(|p| PairRecord {
            mix_path: base.join(p.mix_path),
            stem_path: base.join(p.stem_path),
        })
        .collect())
}

fn transcribe_config(k: Option<usize>, seed: u64) -> TranscribeConfig {
    let defaults = TranscribeConfig::default();
    TranscribeConfig {
        components: k.unwrap_or(defaults.components),
        seed,
        ..defaults
    }
}

pub fn build(args: BuildArgs, seed: u64) -> Result<()> {
    let pairs_path = required(&args.pairs, "--pairs")?;
    let n = required(&args.n, "--n")?;
    let strict = args.strict.unwrap_or(false);
    let pairs = read_pairs(&pairs_path)?;

    if args.dry_run.unwrap_or(false) {
        let mut sources = Vec::new();
        for p in &pairs {
            let d = wav_duration_sec(&p.mix_path)?;
            if d < MIN_CHUNK_SEC {
                if strict {
                    return Err(tapgroove::Error::SourceTooShort {
                        duration_sec: d,
                        min_sec: MIN_CHUNK_SEC,
                    }
                    .into());
                }
                continue;
            }
            sources.push(d);
        }
        if sources.is_empty() {
            return Err(Failure::Data("no source pair is long enough to chunk".into()).into());
        }
        let stats = chunk_duration_stats(n, &sources, seed)?;
        let text = serde_json::to_string_pretty(&stats)?;
        if let Some(out) = &args.out {
            std::fs::create_dir_all(out).map_err(|e| tapgroove::Error::Io { path: out.clone(), source: e })?;
            write_atomic(&out.join("duration_stats.json"), text.as_bytes())?;
        }
        println!("{text}");
        return Ok(());
    }

    let out = required(&args.out, "--out")?;
    let options = CorpusOptions {
        n_examples: n,
        seed,
        strict,
        transcribe: transcribe_config(args.k, seed),
    };
    let mut run = Run::start("data build", seed, &json!({ "n": n, "strict": strict, "transcribe": options.transcribe }))?;
    run.input("pairs", &pairs_path);
    let records = build_corpus(&pairs, &out, &options)?;
    run.output("corpus_manifest", &out.join(MANIFEST_FILE));
    run.details(json!({ "examples": records.len() }));
    run.finish(&out.join(RUN_MANIFEST))?;
    println!("{} examples -> {}", records.len(), out.display());
    Ok(())
}

pub fn regen(args: RegenArgs, seed: u64) -> Result<()> {
    let manifest = required(&args.manifest, "--manifest")?;
    let out = required(&args.out, "--out")?;
    let records: Vec<ExampleRecord> = read_jsonl(&manifest)?;
    let transcribe = transcribe_config(args.k, seed);
    let mut run = Run::start("data regen", seed, &json!({ "transcribe": transcribe }))?;
    run.input("corpus_manifest", &manifest);
    for record in &records {
        regenerate(record, &out, &transcribe)?;
    }
    run.details(json!({ "examples": records.len() }));
    run.finish(&out.join(RUN_MANIFEST))?;
    println!("{} examples -> {}", records.len(), out.display());
    Ok(())
}
