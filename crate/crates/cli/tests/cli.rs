use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tapgroove::synth::{groove_track, sine, track_from_pairs, DrumKit};
use tapgroove::{save_wav, AudioBuffer};
use tapgroove_model::{checkpoint, make_freeze_schedule, ModelConfig, Transformer};

fn tapgroove(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tapgroove")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_groove(path: &Path, sr: u32, bars: usize) {
    let track = groove_track(110.0, bars, 3).unwrap();
    let buf = DrumKit::standard(sr, 1).render(&track, track.duration_sec()).unwrap();
    save_wav(&buf, path).unwrap();
}

#[test]
fn help_on_every_subcommand() {
    for args in [
        vec!["--help"],
        vec!["rhythm", "extract", "--help"],
        vec!["eval", "rhythm", "--help"],
        vec!["post", "apply", "--help"],
        vec!["data", "build", "--help"],
        vec!["data", "regen", "--help"],
        vec!["model", "train", "--help"],
        vec!["model", "generate", "--help"],
    ] {
        let out = tapgroove(&args);
        assert_eq!(code(&out), 0, "{args:?}");
        assert!(!out.stdout.is_empty());
    }
    assert_eq!(code(&tapgroove(&["rhythm", "extract", "--bogus"])), 2);
    assert_eq!(code(&tapgroove(&["rhythm", "extract", "--out", "x.csv"])), 2);
}

#[test]
fn extract_writes_events_and_maps_failures() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("prompt.wav");
    write_groove(&wav, 22050, 2);
    let csv = dir.path().join("out/events.csv");
    let out = tapgroove(&["rhythm", "extract", "--in", s(&wav), "--out", s(&csv), "--seed", "3"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("onset_sec,class_index,salience\n") && text.lines().count() > 1);
    assert!(dir.path().join("out/events.json").exists());
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("out/events.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["command"], "rhythm extract");

    let silent = dir.path().join("silent.wav");
    save_wav(&AudioBuffer::silence(22050, 22050).unwrap(), &silent).unwrap();
    assert_eq!(code(&tapgroove(&["rhythm", "extract", "--in", s(&silent), "--out", s(&csv)])), 3);
    let missing = dir.path().join("missing.wav");
    assert_eq!(code(&tapgroove(&["rhythm", "extract", "--in", s(&missing), "--out", s(&csv)])), 2);
}

#[test]
fn config_file_supplies_flags() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("prompt.wav");
    write_groove(&wav, 16000, 1);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        format!("seed = 4\n[rhythm_extract]\nin = {:?}\nout = {:?}\nk = 3\n", s(&wav), s(&a)),
    )
    .unwrap();
    assert_eq!(code(&tapgroove(&["--config", s(&cfg), "rhythm", "extract"])), 0);
    assert_eq!(code(&tapgroove(&["rhythm", "extract", "--in", s(&wav), "--out", s(&b), "--seed", "4"])), 0);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    std::fs::write(&cfg, "[rhythm_extract]\nnot_a_flag = 1\n").unwrap();
    assert_eq!(code(&tapgroove(&["--config", s(&cfg), "rhythm", "extract"])), 2);
    let absent = dir.path().join("absent.toml");
    assert_eq!(code(&tapgroove(&["--config", s(&absent), "rhythm", "extract"])), 2);
}

#[test]
fn eval_scores_ideal_renders_and_skips_sparse_references() {
    let dir = tempfile::tempdir().unwrap();
    let (refs, gens) = (dir.path().join("ref"), dir.path().join("gen"));
    std::fs::create_dir_all(&refs).unwrap();
    std::fs::create_dir_all(&gens).unwrap();
    for (i, bpm) in [96.0, 120.0].iter().enumerate() {
        let track = groove_track(*bpm, 2, 3).unwrap();
        track.write_csv(refs.join(format!("take{i}.csv"))).unwrap();
        let audio = DrumKit::standard(44100, i as u64).render(&track, track.duration_sec()).unwrap();
        save_wav(&audio, gens.join(format!("take{i}.wav"))).unwrap();
    }
    let lonely = track_from_pairs(&[(0.5, 0)], 2.0, 3).unwrap();
    lonely.write_json(refs.join("lonely.json")).unwrap();
    save_wav(&AudioBuffer::silence(44100, 44100).unwrap(), gens.join("lonely.wav")).unwrap();
    // Present on one side only: ignored.
    save_wav(&AudioBuffer::silence(4410, 44100).unwrap(), gens.join("orphan.wav")).unwrap();

    let report = dir.path().join("report.json");
    let out = tapgroove(&["eval", "rhythm", "--ref", s(&refs), "--gen", s(&gens), "--out", s(&report)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    for metric in ["onset", "kick", "snare"] {
        assert_eq!(r["aggregate"][metric]["f1"], 1.0, "{metric}");
    }
    assert_eq!(r["files"].as_array().unwrap().len(), 2);
    assert_eq!(r["skipped"][0]["stem"], "lonely");
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);

    let with_chain = dir.path().join("chain.json");
    let args = ["eval", "rhythm", "--ref", s(&refs), "--gen", s(&gens), "--out", s(&with_chain), "--post-chain"];
    assert_eq!(code(&tapgroove(&args)), 0);

    let empty = dir.path().join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    assert_eq!(code(&tapgroove(&["eval", "rhythm", "--ref", s(&refs), "--gen", s(&empty), "--out", s(&report)])), 2);
}

#[test]
fn post_apply_normalizes() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.wav"), dir.path().join("b.wav"));
    write_groove(&a, 44100, 1);
    assert_eq!(code(&tapgroove(&["post", "apply", "--in", s(&a), "--out", s(&b)])), 0);
    let peak = tapgroove::load_wav(&b).unwrap().peak();
    assert!((20.0 * peak.log10() + 1.0).abs() < 1e-3, "{peak}");
}

fn write_pairs(dir: &Path, seconds: &[f64]) -> PathBuf {
    let sr = 16000;
    let mut lines = String::new();
    for (i, &secs) in seconds.iter().enumerate() {
        let bars = (secs * 110.0 / 240.0).ceil() as usize;
        let track = groove_track(110.0, bars, 3).unwrap();
        let stem = DrumKit::standard(sr, i as u64).render(&track, secs).unwrap();
        let mix = AudioBuffer::from_f64(&sine(220.0 + 40.0 * i as f64, 0.2, secs, sr), sr).unwrap();
        save_wav(&mix, dir.join(format!("mix{i}.wav"))).unwrap();
        save_wav(&stem, dir.join(format!("stem{i}.wav"))).unwrap();
        lines.push_str(&format!("{{\"mix_path\":\"mix{i}.wav\",\"stem_path\":\"stem{i}.wav\"}}\n"));
    }
    let path = dir.join("pairs.jsonl");
    std::fs::write(&path, lines).unwrap();
    path
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| !p.file_name().unwrap().to_string_lossy().ends_with("manifest.json"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn corpus_build_is_deterministic_and_regenerable() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = write_pairs(dir.path(), &[12.0, 4.0]);
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for out in [&a, &b] {
        let o = tapgroove(&["data", "build", "--pairs", s(&pairs), "--out", s(out), "--n", "3", "--seed", "9"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let built = dir_bytes(&a);
    assert_eq!(built.len(), 3 * 3 + 1);
    assert_eq!(built, dir_bytes(&b));
    let manifest = a.join("manifest.jsonl");
    assert_eq!(code(&tapgroove(&["data", "regen", "--manifest", s(&manifest), "--out", s(&c), "--seed", "9"])), 0);
    let mut regenerated = dir_bytes(&c);
    regenerated.push(("manifest.jsonl".into(), std::fs::read(&manifest).unwrap()));
    regenerated.sort();
    assert_eq!(built, regenerated);

    let strict = ["data", "build", "--pairs", s(&pairs), "--out", s(&c), "--n", "3", "--strict"];
    assert_eq!(code(&tapgroove(&strict)), 3);
}

#[test]
fn dry_run_reports_mean_chunk_length() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = write_pairs(dir.path(), &[31.0]);
    let out = tapgroove(&["data", "build", "--pairs", s(&pairs), "--n", "100000", "--dry-run"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stats: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let mean = stats["mean_sec"].as_f64().unwrap();
    assert!((mean - 18.2).abs() <= 0.3, "{mean}");
}

fn tiny_model_toml(n_layers: usize) -> String {
    format!(
        "[model_train]\nsteps = 1\nbatch_size = 1\n[model_train.model]\nn_layers = {n_layers}\nd_model = 16\nn_heads = 2\nd_ff = 24\nmax_seq_len = 41\n"
    )
}

#[test]
fn train_then_generate() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = write_pairs(dir.path(), &[11.0]);
    let corpus = dir.path().join("corpus");
    assert_eq!(code(&tapgroove(&["data", "build", "--pairs", s(&pairs), "--out", s(&corpus), "--n", "1"])), 0);

    let cfg = dir.path().join("train.toml");
    std::fs::write(&cfg, tiny_model_toml(8)).unwrap();
    let ckpt = dir.path().join("model.ckpt");
    let out = tapgroove(&["--config", s(&cfg), "--seed", "5", "model", "train", "--corpus", s(&corpus), "--out", s(&ckpt)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let log = std::fs::read_to_string(dir.path().join("model.loss.csv")).unwrap();
    assert_eq!(log.lines().count(), 2);
    assert!(dir.path().join("model.manifest.json").exists());

    // Frozen layers and embeddings still equal a fresh model built from the same seed.
    let trained = checkpoint::load(&ckpt).unwrap();
    let fresh = Transformer::<f32>::new(ModelConfig {
        init_seed: 5,
        ..trained.config().clone()
    })
    .unwrap();
    let schedule = make_freeze_schedule(trained.config()).unwrap();
    let inj = trained.injection_layers().to_vec();
    for ((name, role, a), (_, _, b)) in trained.params.tensors(&inj).into_iter().zip(fresh.params.tensors(&inj)) {
        let same = a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits());
        assert_eq!(same, !role.is_trainable(&schedule), "{name}");
    }

    let mix = corpus.join("00000_mix.wav");
    let rhythm = corpus.join("00000_rhythm.csv");
    let (g1, g2) = (dir.path().join("g1.wav"), dir.path().join("g2.wav"));
    for g in [&g1, &g2] {
        let out = tapgroove(&["model", "generate", "--ckpt", s(&ckpt), "--mix", s(&mix), "--rhythm", s(&rhythm), "--out", s(g)]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(std::fs::read(&g1).unwrap(), std::fs::read(&g2).unwrap());
    let tokens: Vec<u32> = serde_json::from_slice(&std::fs::read(dir.path().join("g1.tokens.json")).unwrap()).unwrap();
    assert_eq!(tokens.len(), 20);

    let mut bytes = std::fs::read(&ckpt).unwrap();
    bytes[8] = 99;
    let old = dir.path().join("old.ckpt");
    std::fs::write(&old, bytes).unwrap();
    let args = ["model", "generate", "--ckpt", s(&old), "--mix", s(&mix), "--rhythm", s(&rhythm), "--out", s(&g1)];
    assert_eq!(code(&tapgroove(&args)), 4);

    std::fs::write(&cfg, tiny_model_toml(6)).unwrap();
    let args = ["--config", s(&cfg), "model", "train", "--corpus", s(&corpus), "--out", s(&ckpt)];
    assert_eq!(code(&tapgroove(&args)), 2);
}
