//! Command-line flags and the TOML file that mirrors them. Every flag may instead be given under
//! the command's table in `--config`; flags on the command line win.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use tapgroove::post::PostChainConfig;
use tapgroove_model::ModelConfig;

use crate::failure::Failure;

#[derive(Debug, Parser)]
#[command(name = "tapgroove", version, about = "Rhythm-prompted drum pipelines: extraction, evaluation, corpora and a toy generator")]
pub struct Cli {
    /// TOML file mirroring the flags; one table per command (e.g. [rhythm_extract], [model_train])
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for every stochastic component [default: 0]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rhythm features from percussive prompts
    #[command(subcommand)]
    Rhythm(RhythmCommand),
    /// Rhythm-adherence evaluation
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Post-processing chain for generated drums
    #[command(subcommand)]
    Post(PostCommand),
    /// Training corpus construction
    #[command(subcommand)]
    Data(DataCommand),
    /// Toy rhythm-conditioned drum generator
    #[command(subcommand)]
    Model(ModelCommand),
}

#[derive(Debug, Subcommand)]
pub enum RhythmCommand {
    /// Transcribe a prompt WAV into timbre-class onset events (CSV + JSON)
    Extract(ExtractArgs),
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Score generated audio against reference events, matched by file stem
    Rhythm(EvalArgs),
}

#[derive(Debug, Subcommand)]
pub enum PostCommand {
    /// Gate, transient enhancer, compressor and peak normalization
    Apply(PostArgs),
}

#[derive(Debug, Subcommand)]
pub enum DataCommand {
    /// Chunk, augment and transcribe (mix, drum stem) pairs into training examples
    Build(BuildArgs),
    /// Rebuild the examples of a corpus manifest
    Regen(RegenArgs),
}

#[derive(Debug, Subcommand)]
pub enum ModelCommand {
    /// Fine-tune the toy model on a built corpus
    Train(TrainArgs),
    /// Generate a drum track for a mix and a rhythm
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractArgs {
    /// Prompt WAV
    #[arg(long = "in", value_name = "WAV")]
    #[serde(rename = "in")]
    pub input: Option<PathBuf>,
    /// Events CSV; the JSON form is written alongside
    #[arg(long, value_name = "CSV")]
    pub out: Option<PathBuf>,
    /// Number of timbre classes [default: 3]
    #[arg(long)]
    pub k: Option<usize>,
    /// Factorization iterations [default: 300]
    #[arg(long)]
    pub iterations: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalArgs {
    /// Directory of reference event files (.csv or .json)
    #[arg(long = "ref", value_name = "DIR")]
    #[serde(rename = "ref")]
    pub reference: Option<PathBuf>,
    /// Directory of generated WAVs
    #[arg(long = "gen", value_name = "DIR")]
    #[serde(rename = "gen")]
    pub generated: Option<PathBuf>,
    /// Report JSON; a per-file CSV is written alongside
    #[arg(long, value_name = "JSON")]
    pub out: Option<PathBuf>,
    /// Run the post-processing chain on generated audio before scoring
    #[arg(long, num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    pub post_chain: Option<bool>,
    /// Seconds kept from each file [default: 9]
    #[arg(long)]
    pub truncate_sec: Option<f64>,
    /// References with fewer onsets are skipped [default: 2]
    #[arg(long)]
    pub min_onsets: Option<usize>,
    /// Onset matching tolerance [default: 0.07]
    #[arg(long)]
    pub onset_tol_sec: Option<f64>,
    /// Kick matching tolerance [default: 0.03]
    #[arg(long)]
    pub kick_tol_sec: Option<f64>,
    /// Snare matching tolerance [default: 0.1]
    #[arg(long)]
    pub snare_tol_sec: Option<f64>,
    /// Post-chain parameters (config file only)
    #[arg(skip)]
    pub chain: Option<PostChainConfig>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PostArgs {
    #[arg(long = "in", value_name = "WAV")]
    #[serde(rename = "in")]
    pub input: Option<PathBuf>,
    #[arg(long, value_name = "WAV")]
    pub out: Option<PathBuf>,
    /// Chain parameters (config file only)
    #[arg(skip)]
    pub chain: Option<PostChainConfig>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BuildArgs {
    /// JSONL of {"mix_path", "stem_path"}; relative paths resolve against its directory
    #[arg(long, value_name = "JSONL")]
    pub pairs: Option<PathBuf>,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Number of examples
    #[arg(long)]
    pub n: Option<usize>,
    /// Fail on sources shorter than 10 s instead of skipping them
    #[arg(long, num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    pub strict: Option<bool>,
    /// Only draw chunk durations and report their statistics
    #[arg(long, num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    pub dry_run: Option<bool>,
    /// Timbre classes for stem transcription [default: 3]
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegenArgs {
    /// manifest.jsonl written by `data build`
    #[arg(long, value_name = "JSONL")]
    pub manifest: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Timbre classes for stem transcription [default: 3]
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainArgs {
    /// Corpus directory written by `data build`
    #[arg(long, value_name = "DIR")]
    pub corpus: Option<PathBuf>,
    /// Checkpoint path; the loss log and run manifest are written alongside
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// SGD learning rate [default: 0.3]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Examples per step [default: 4]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Codec frames kept from each mix and stem [default: (max_seq_len - 1) / 2]
    #[arg(long)]
    pub frames: Option<usize>,
    /// Architecture (config file only)
    #[arg(skip)]
    pub model: Option<ModelConfig>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerateArgs {
    #[arg(long, value_name = "FILE")]
    pub ckpt: Option<PathBuf>,
    /// Drumless mix WAV
    #[arg(long, value_name = "WAV")]
    pub mix: Option<PathBuf>,
    /// Rhythm events (.csv or .json), times relative to the mix start
    #[arg(long, value_name = "FILE")]
    pub rhythm: Option<PathBuf>,
    /// Decoded drums WAV; the token JSON is written alongside
    #[arg(long, value_name = "WAV")]
    pub out: Option<PathBuf>,
    /// 0 is greedy [default: 0]
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Tokens to generate [default: as many as the mix prompt]
    #[arg(long)]
    pub max_new: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub rhythm_extract: ExtractArgs,
    pub eval_rhythm: EvalArgs,
    pub post_apply: PostArgs,
    pub data_build: BuildArgs,
    pub data_regen: RegenArgs,
    pub model_train: TrainArgs,
    pub model_generate: GenerateArgs,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

macro_rules! fill {
    ($cli:expr, $file:expr; $($f:ident),* $(,)?) => {
        $( if $cli.$f.is_none() { $cli.$f = $file.$f.clone(); } )*
    };
}

impl ExtractArgs {
    pub fn merged(mut self, file: &Self) -> Self {
        fill!(self, file; input, out, k, iterations);
        self
    }
}

impl EvalArgs {
    pub fn merged(mut self, file: &Self) -> Self {
        fill!(self, file; reference, generated, out, post_chain, truncate_sec, min_onsets,
              onset_tol_sec, kick_tol_sec, snare_tol_sec, chain);
        self
    }
}

impl PostArgs {
    pub fn merged(mut self, file: &Self) -> Self {
        fill!(self, file; input, out, chain);
        self
    }
}

impl BuildArgs {
    pub fn merged(mut self, file: &Self) -> Self {
        fill!(self, file; pairs, out, n, strict, dry_run, k);
        self
    }
}

impl RegenArgs {
    pub fn merged(mut self, file: &Self) -> Self {
        fill!(self, file; manifest, out, k);
        self
    }
}

impl TrainArgs {
    pub fn merged(mut self, file: &Self) -> Self {
        fill!(self, file; corpus, out, steps, lr, batch_size, frames, model);
        self
    }
}

impl GenerateArgs {
    pub fn merged(mut self, file: &Self) -> Self {
        fill!(self, file; ckpt, mix, rhythm, out, temperature, max_new);
        self
    }
}

/// A flag that has to come from somewhere.
pub fn required<T: Clone>(value: &Option<T>, flag: &str) -> Result<T> {
    value
        .clone()
        .ok_or_else(|| Failure::Usage(format!("{flag} is required (on the command line or in --config)")).into())
}
