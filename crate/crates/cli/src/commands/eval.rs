use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use tapgroove::eval::{aggregate_reports, evaluate_rhythm_adherence, macro_average, Adherence, EvalConfig, MatchReport, RhythmScores};
use tapgroove::load_wav;

use super::{ensure_parent, read_track};
use crate::args::{required, EvalArgs};
use crate::failure::Failure;
use crate::manifest::{manifest_path, sibling, write_atomic, Run};

/// Files in `dir` with one of `extensions`, keyed by stem. Earlier extensions win a tie.
fn files_by_stem(dir: &Path, extensions: &[&str]) -> Result<BTreeMap<String, PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", dir.display())))?;
    let mut out: BTreeMap<String, (usize, PathBuf)> = BTreeMap::new();
    for entry in entries {
        let path = entry?.path();
        let Some(ext) = path.extension().and_then(|e| e.to_str()) else { continue };
        let Some(rank) = extensions.iter().position(|x| x.eq_ignore_ascii_case(ext)) else { continue };
        let Some(stem) = path.file_stem().map(|s| s.to_string_lossy().into_owned()) else { continue };
        match out.get(&stem) {
            Some((r, _)) if *r <= rank => {}
            _ => {
                out.insert(stem, (rank, path));
            }
        }
    }
    Ok(out.into_iter().map(|(k, (_, p))| (k, p)).collect())
}

#[derive(Serialize)]
struct FileScores {
    stem: String,
    onset: MatchReport,
    kick: MatchReport,
    snare: MatchReport,
}

#[derive(Serialize)]
struct Skipped {
    stem: String,
    reference_onsets: usize,
}

#[derive(Serialize)]
struct Aggregate {
    onset: MatchReport,
    kick: MatchReport,
    snare: MatchReport,
}

#[derive(Serialize)]
struct Report {
    files: Vec<FileScores>,
    skipped: Vec<Skipped>,
    /// Micro average: counts summed over files.
    aggregate: Option<Aggregate>,
    macro_average: Option<Aggregate>,
}

fn combine(files: &[FileScores], f: fn(&[MatchReport]) -> tapgroove::Result<MatchReport>) -> Result<Option<Aggregate>> {
    if files.is_empty() {
        return Ok(None);
    }
    let pick = |g: fn(&FileScores) -> MatchReport| files.iter().map(g).collect::<Vec<_>>();
    Ok(Some(Aggregate {
        onset: f(&pick(|s| s.onset))?,
        kick: f(&pick(|s| s.kick))?,
        snare: f(&pick(|s| s.snare))?,
    }))
}

fn csv_summary(report: &Report) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "stem", "status", "onset_tp", "onset_fp", "onset_fn", "onset_f1", "kick_f1", "snare_f1",
    ])?;
    for s in &report.files {
        w.write_record([
            s.stem.clone(),
            "scored".into(),
            s.onset.tp.to_string(),
            s.onset.fp.to_string(),
            s.onset.fn_.to_string(),
            format!("{:.6}", s.onset.f1),
            format!("{:.6}", s.kick.f1),
            format!("{:.6}", s.snare.f1),
        ])?;
    }
    for s in &report.skipped {
        w.write_record([s.stem.as_str(), "skipped", "", "", "", "", "", ""])?;
    }
    Ok(w.into_inner()?)
}

pub fn rhythm(args: EvalArgs, seed: u64) -> Result<()> {
    let ref_dir = required(&args.reference, "--ref")?;
    let gen_dir = required(&args.generated, "--gen")?;
    let out = required(&args.out, "--out")?;
    let mut config = EvalConfig::default();
    config.transcribe.seed = seed;
    config.truncate_sec = args.truncate_sec.unwrap_or(config.truncate_sec);
    config.min_onsets = args.min_onsets.unwrap_or(config.min_onsets);
    config.onset_tol_sec = args.onset_tol_sec.unwrap_or(config.onset_tol_sec);
    config.kick_tol_sec = args.kick_tol_sec.unwrap_or(config.kick_tol_sec);
    config.snare_tol_sec = args.snare_tol_sec.unwrap_or(config.snare_tol_sec);
    if args.post_chain.unwrap_or(false) {
        config.post_chain = Some(args.chain.clone().unwrap_or_default());
    }
    config.validate()?;

    let refs = files_by_stem(&ref_dir, &["json", "csv"])?;
    let gens = files_by_stem(&gen_dir, &["wav"])?;
    let stems: Vec<&String> = refs.keys().filter(|s| gens.contains_key(*s)).collect();
    if stems.is_empty() {
        return Err(Failure::Usage(format!(
            "no file stem is shared by {} and {}",
            ref_dir.display(),
            gen_dir.display()
        ))
        .into());
    }

    let mut run = Run::start("eval rhythm", seed, &config)?;
    run.input("ref", &ref_dir);
    run.input("gen", &gen_dir);
    let mut report = Report {
        files: Vec::new(),
        skipped: Vec::new(),
        aggregate: None,
        macro_average: None,
    };
    for stem in stems {
        let track = read_track(&refs[stem])?;
        let audio = load_wav(&gens[stem])?;
        match evaluate_rhythm_adherence(&track, &audio, &config).with_context(|| format!("scoring {stem}"))? {
            Adherence::Scored(RhythmScores { onset, kick, snare }) => report.files.push(FileScores {
                stem: stem.clone(),
                onset,
                kick,
                snare,
            }),
            Adherence::Skipped { reference_onsets } => report.skipped.push(Skipped {
                stem: stem.clone(),
                reference_onsets,
            }),
        }
    }
    report.aggregate = combine(&report.files, aggregate_reports)?;
    report.macro_average = combine(&report.files, macro_average)?;

    ensure_parent(&out)?;
    write_atomic(&out, &serde_json::to_vec_pretty(&report)?)?;
    let csv_out = sibling(&out, "csv");
    write_atomic(&csv_out, &csv_summary(&report)?)?;
    run.output("report_json", &out);
    run.output("report_csv", &csv_out);
    run.finish(&manifest_path(&out))?;
    match &report.aggregate {
        Some(a) => println!(
            "{} scored, {} skipped: onset F1 {:.4}, kick F1 {:.4}, snare F1 {:.4}",
            report.files.len(),
            report.skipped.len(),
            a.onset.f1,
            a.kick.f1,
            a.snare.f1
        ),
        None => println!("0 scored, {} skipped", report.skipped.len()),
    }
    Ok(())
}
