use proptest::prelude::*;
use tapgroove::audio::rms;
use tapgroove::data::augment::{add_noise, augment_buffer};
use tapgroove::data::corpus::chunk_duration_stats;
use tapgroove::data::*;
use tapgroove::rhythm::TranscribeConfig;
use tapgroove::synth::{groove_track, sine, DrumKit};
use tapgroove::{stft_magnitude, AudioBuffer};

#[test]
fn each_augmentation_is_present_a_quarter_of_the_time() {
    let n = 100_000;
    let mut counts = [0usize; 4];
    let mut none = 0;
    for seed in 0..n {
        let s = sample_augmentation(seed);
        let flags = [
            s.tempo_ratio.is_some(),
            s.pitch_semitones.is_some(),
            s.noise_snr_db.is_some(),
            s.bandpass.is_some(),
        ];
        for (c, f) in counts.iter_mut().zip(flags) {
            *c += f as usize;
        }
        none += flags.iter().all(|f| !f) as usize;
    }
    for c in counts {
        let rate = c as f64 / n as f64;
        assert!((0.24..=0.26).contains(&rate), "{rate}");
    }
    let all_absent = none as f64 / n as f64;
    assert!((all_absent - 0.75f64.powi(4)).abs() <= 0.01, "{all_absent}");
}

#[test]
fn chunk_durations_match_log_uniform_moments() {
    let stats = chunk_duration_stats(100_000, &[60.0], 7).unwrap();
    // E[X] for X log-uniform on [a, b] is (b - a) / ln(b / a); the median is sqrt(a b).
    let mean = 20.0 / 3f64.ln();
    let median = (10.0f64 * 30.0).sqrt();
    assert!((17.9..=18.5).contains(&stats.mean_sec), "{stats:?}");
    assert!((stats.mean_sec - mean).abs() <= 0.3);
    assert!((stats.median_sec - median).abs() <= 0.3);
    assert!(stats.min_sec >= 10.0 && stats.max_sec <= 30.0);
}

fn snr_db(clean: &[f64], noisy: &[f64]) -> f64 {
    let noise: Vec<f64> = noisy.iter().zip(clean).map(|(a, b)| a - b).collect();
    20.0 * (rms(clean) / rms(&noise)).log10()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn noise_hits_target_snr(snr in 20.0f64..40.0, seed in any::<u64>(), amp in 0.01f64..0.9) {
        let x = sine(200.0, amp, 0.5, 8000);
        let y = add_noise(&x, snr, seed);
        prop_assert!((snr_db(&x, &y) - snr).abs() <= 0.5);
        // Also through the buffer path, which rounds to f32.
        let buf = AudioBuffer::from_f64(&x, 8000).unwrap();
        let spec = AugmentationSpec { noise_snr_db: Some(snr), noise_seed: seed, ..Default::default() };
        let out = augment_buffer(&buf, &spec, 0).unwrap();
        prop_assert!((snr_db(&buf.to_f64(), &out.to_f64()) - snr).abs() <= 0.5);
    }

    #[test]
    fn built_pairs_have_equal_length(seed in any::<u64>()) {
        let pair = fixture_pair(10.5, 8000);
        let ex = build_example(&pair, seed).unwrap();
        prop_assert_eq!(ex.pair.mix.len(), ex.pair.stem.len());
        prop_assert_eq!(ex.pair.mix.sample_rate(), 8000);
    }
}

fn fixture_pair(secs: f64, rate: u32) -> StemPair {
    let mix = AudioBuffer::from_f64(&sine(220.0, 0.3, secs, rate), rate).unwrap();
    let track = groove_track(120.0, (secs / 2.0).ceil() as usize, 3).unwrap();
    let stem = DrumKit::standard(rate, 1).render(&track, secs).unwrap();
    let stem = AudioBuffer::new(stem.samples()[..mix.len()].to_vec(), rate).unwrap();
    StemPair::new(mix, stem).unwrap()
}

#[test]
fn tempo_ratio_sets_duration() {
    let pair = fixture_pair(10.0, 16000);
    let spec = AugmentationSpec { tempo_ratio: Some(1.1), ..Default::default() };
    let out = apply_augmentation(&pair, &spec).unwrap();
    let hop = 0.020;
    assert!((out.mix.duration_sec() - 10.0 / 1.1).abs() <= hop);
    assert_eq!(out.mix.len(), out.stem.len());
}

#[test]
fn octave_up_doubles_frequency() {
    let rate = 44100;
    let x = AudioBuffer::from_f64(&sine(440.0, 0.5, 2.0, rate), rate).unwrap();
    let pair = StemPair::new(x.clone(), x).unwrap();
    let spec = AugmentationSpec { pitch_semitones: Some(12.0), ..Default::default() };
    let out = apply_augmentation(&pair, &spec).unwrap();
    assert!((out.mix.duration_sec() - 2.0).abs() <= 0.020);
    let spec = stft_magnitude(&out.mix, 2048, 512).unwrap();
    let mean = spec.mag.mean_axis(ndarray::Axis(1)).unwrap();
    let peak = mean.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0 as i64;
    let expected = (880.0f64 * 2048.0 / rate as f64).round() as i64;
    assert!((peak - expected).abs() <= 1, "bin {peak} vs {expected}");
}

#[test]
fn corpus_regenerates_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src");
    std::fs::create_dir_all(&src).unwrap();
    let pair = fixture_pair(11.0, 8000);
    tapgroove::save_wav(&pair.mix, src.join("mix.wav")).unwrap();
    tapgroove::save_wav(&pair.stem, src.join("stem.wav")).unwrap();
    let short = fixture_pair(10.5, 8000);
    let short_mix = AudioBuffer::new(short.mix.samples()[..8000 * 5].to_vec(), 8000).unwrap();
    tapgroove::save_wav(&short_mix, src.join("short_mix.wav")).unwrap();
    tapgroove::save_wav(&short_mix, src.join("short_stem.wav")).unwrap();
    let pairs = vec![
        PairRecord { mix_path: src.join("mix.wav"), stem_path: src.join("stem.wav") },
        PairRecord { mix_path: src.join("short_mix.wav"), stem_path: src.join("short_stem.wav") },
    ];
    let options = CorpusOptions {
        n_examples: 3,
        seed: 5,
        strict: false,
        transcribe: TranscribeConfig::default(),
    };
    let a = dir.path().join("a");
    let records = build_corpus(&pairs, &a, &options).unwrap();
    assert_eq!(records.len(), 3);
    assert!(records.iter().all(|r| r.mix_path == src.join("mix.wav")));
    let from_disk: Vec<ExampleRecord> = read_jsonl(&a.join("manifest.jsonl")).unwrap();
    assert_eq!(from_disk, records);

    let b = dir.path().join("b");
    for r in &from_disk {
        regenerate(r, &b, &options.transcribe).unwrap();
        for name in [&r.out_mix, &r.out_stem, &r.out_rhythm] {
            assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap());
        }
    }

    let strict = CorpusOptions { strict: true, ..options };
    assert!(matches!(
        build_corpus(&pairs, &dir.path().join("c"), &strict),
        Err(tapgroove::Error::SourceTooShort { .. })
    ));
}
