use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::json;
use tapgroove::data::corpus::MANIFEST_FILE;
use tapgroove::data::{read_jsonl, ExampleRecord};
use tapgroove::{load_wav, save_wav, RhythmTrack};
use tapgroove_model::checkpoint;
use tapgroove_model::training::{Example, TrainOptions};
use tapgroove_model::{build_sequence, codec_decode, codec_encode, make_freeze_schedule, train_step, ModelConfig, Transformer};

use super::{ensure_parent, read_track};
use crate::args::{required, GenerateArgs, TrainArgs};
use crate::failure::Failure;
use crate::manifest::{manifest_path, write_atomic, Run};

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn load_example(dir: &Path, record: &ExampleRecord, frames: usize, config: &ModelConfig) -> Result<Example> {
    let mut mix = codec_encode(&load_wav(dir.join(&record.out_mix))?)?;
    let mut drums = codec_encode(&load_wav(dir.join(&record.out_stem))?)?;
    mix.truncate(frames);
    drums.truncate(frames);
    let rhythm = RhythmTrack::read(dir.join(&record.out_rhythm))?;
    Ok(build_sequence(&mix, &drums, &rhythm, config).with_context(|| format!("example {}", record.index))?)
}

pub fn train(args: TrainArgs, seed: u64) -> Result<()> {
    let corpus = required(&args.corpus, "--corpus")?;
    let out = required(&args.out, "--out")?;
    let steps = required(&args.steps, "--steps")?;
    let config = ModelConfig {
        init_seed: seed,
        ..args.model.clone().unwrap_or_default()
    };
    config.validate()?;
    let defaults = TrainOptions::default();
    let options = TrainOptions {
        lr: args.lr.unwrap_or(defaults.lr),
        batch_size: args.batch_size.unwrap_or(defaults.batch_size),
    };
    options.validate()?;
    let frames = args.frames.unwrap_or((config.max_seq_len - 1) / 2);
    let schedule = make_freeze_schedule(&config)?;

    let records: Vec<ExampleRecord> = read_jsonl(&corpus.join(MANIFEST_FILE))?;
    if records.is_empty() {
        return Err(Failure::Data(format!("{} has no examples", corpus.display())).into());
    }
    let data = records
        .iter()
        .map(|r| load_example(&corpus, r, frames, &config))
        .collect::<Result<Vec<_>>>()?;

    let mut run = Run::start(
        "model train",
        seed,
        &json!({ "model": config, "training": options, "frames": frames, "steps": steps }),
    )?;
    run.input("corpus", &corpus);
    let mut model = Transformer::<f32>::new(config)?;
    let mut losses = Vec::with_capacity(steps);
    let n_batches = data.len().div_ceil(options.batch_size);
    for step in 0..steps {
        let b = step % n_batches;
        let batch = &data[b * options.batch_size..((b + 1) * options.batch_size).min(data.len())];
        losses.push(train_step(&mut model, batch, &schedule, options.lr)?);
    }

    ensure_parent(&out)?;
    checkpoint::save(&model, &out)?;
    let mut log = String::from("step,loss\n");
    for (i, l) in losses.iter().enumerate() {
        log.push_str(&format!("{i},{l:.8}\n"));
    }
    let log_path = with_suffix(&out, "loss.csv");
    write_atomic(&log_path, log.as_bytes())?;
    run.output("checkpoint", &out);
    run.output("loss_log", &log_path);
    run.details(json!({ "schedule": schedule, "losses": losses }));
    run.finish(&manifest_path(&out))?;
    if let Some(last) = losses.last() {
        println!("{steps} steps, final loss {last:.4} -> {}", out.display());
    }
    Ok(())
}

pub fn generate(args: GenerateArgs, seed: u64) -> Result<()> {
    let ckpt = required(&args.ckpt, "--ckpt")?;
    let mix_path = required(&args.mix, "--mix")?;
    let rhythm_path = required(&args.rhythm, "--rhythm")?;
    let out = required(&args.out, "--out")?;
    let temperature = args.temperature.unwrap_or(0.0);

    let model = checkpoint::load(&ckpt)?;
    let rhythm = read_track(&rhythm_path)?;
    let mut mix = codec_encode(&load_wav(&mix_path)?)?;
    let room = model.config().max_seq_len - 1;
    // Without an explicit length, generate as many frames as the (possibly cropped) prompt.
    let max_new = match args.max_new {
        Some(n) => n,
        None => mix.len().min(room / 2),
    };
    mix.truncate(room.saturating_sub(max_new));

    let mut run = Run::start(
        "model generate",
        seed,
        &json!({ "temperature": temperature, "max_new": max_new, "prompt_tokens": mix.len() }),
    )?;
    run.input("checkpoint", &ckpt);
    run.input("mix", &mix_path);
    run.input("rhythm", &rhythm_path);
    let tokens = tapgroove_model::generate(&model, &mix, &rhythm, max_new, seed, temperature)?;
    let audio = codec_decode(&tokens)?;

    ensure_parent(&out)?;
    save_wav(&audio, &out)?;
    let tokens_path = with_suffix(&out, "tokens.json");
    write_atomic(&tokens_path, serde_json::to_string(&tokens)?.as_bytes())?;
    run.output("audio", &out);
    run.output("tokens", &tokens_path);
    run.finish(&manifest_path(&out))?;
    println!("{} tokens -> {}", tokens.len(), out.display());
    Ok(())
}
