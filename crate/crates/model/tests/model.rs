use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tapgroove::synth::track_from_pairs;
use tapgroove_model::fixture::memorization_set;
use tapgroove_model::training::{evaluate, train, train_until_memorized, TrainOptions};
use tapgroove_model::{build_sequence, generate, make_freeze_schedule, ModelConfig, RhythmConditionGrid, TokenSequence, Transformer};

fn small(n_layers: usize, seed: u64) -> ModelConfig {
    ModelConfig {
        n_layers,
        d_model: 32,
        n_heads: 4,
        d_ff: 48,
        max_seq_len: 64,
        init_seed: seed,
        ..Default::default()
    }
}

fn random_example(rng: &mut ChaCha8Rng, cfg: &ModelConfig) -> (TokenSequence, RhythmConditionGrid) {
    let mix: Vec<u32> = (0..rng.random_range(4..12)).map(|_| rng.random_range(0..4096)).collect();
    let drums: Vec<u32> = (0..rng.random_range(6..16)).map(|_| rng.random_range(0..4096)).collect();
    let mut pairs = Vec::new();
    for f in 0..drums.len() {
        if rng.random_bool(0.4) {
            pairs.push((f as f64 / 50.0, rng.random_range(0..3usize)));
        }
    }
    let rhythm = track_from_pairs(&pairs, drums.len() as f64 / 50.0, 3).unwrap();
    build_sequence(&mix, &drums, &rhythm, cfg).unwrap()
}

fn bits(m: &Transformer<f32>) -> Vec<(String, Vec<u32>)> {
    m.params
        .tensors(m.injection_layers())
        .into_iter()
        .map(|(n, _, d)| (n, d.iter().map(|v| v.to_bits()).collect()))
        .collect()
}

#[test]
fn causal_mask_over_random_draws() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..20 {
        let cfg = small(4 * rng.random_range(1..=3), trial);
        let m = Transformer::<f32>::new(cfg.clone()).unwrap();
        let (seq, grid) = random_example(&mut rng, &cfg);
        let tokens = seq.tokens();
        let base = m.forward(&tokens, &grid).unwrap();
        let t = rng.random_range(0..tokens.len());
        let mut changed = tokens.clone();
        changed[t] = (changed[t] + 1 + rng.random_range(0..4000)) % 4096;
        let other = m.forward(&changed, &grid).unwrap();
        for i in 0..tokens.len() {
            assert_eq!(base.row(i) == other.row(i), i < t, "trial {trial}, row {i}, perturbed {t}");
        }
    }
}

#[test]
fn injection_locality_over_random_draws() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    // 4 layers has no injection layer at all; 8, 12 and 16 layers inject at 4 and beyond.
    for trial in 0..20 {
        let n_layers = [4, 8, 12, 16][trial % 4];
        let cfg = small(n_layers, 100 + trial as u64);
        let mut m = Transformer::<f32>::new(cfg.clone()).unwrap();
        m.params.cond_in.fill_zero();
        let (seq, grid) = random_example(&mut rng, &cfg);
        let mut other = grid.clone();
        let frame = rng.random_range(seq.delimiter_position() + 1..seq.len());
        let class = rng.random_range(0..3);
        other.set(class, frame, grid.get(class, frame) == 0);
        let a = m.hidden_states(&seq.tokens(), &grid).unwrap();
        let b = m.hidden_states(&seq.tokens(), &other).unwrap();
        let first = m.injection_layers().iter().copied().min().unwrap_or(n_layers);
        for layer in 0..n_layers {
            assert_eq!(a[layer].data == b[layer].data, layer < first, "{n_layers} layers, layer {layer}");
        }
    }
}

#[test]
fn frozen_parameters_survive_100_steps() {
    let cfg = small(8, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let data: Vec<_> = (0..3).map(|_| random_example(&mut rng, &cfg)).collect();
    let schedule = make_freeze_schedule(&cfg).unwrap();
    let mut m = Transformer::<f32>::new(cfg.clone()).unwrap();
    let before = bits(&m);
    let options = TrainOptions { lr: 0.1, batch_size: 2 };
    train(&mut m, &data, &schedule, &options, 100).unwrap();
    let roles: Vec<_> = m.params.tensors(m.injection_layers()).into_iter().map(|(_, r, _)| r).collect();
    for ((role, (name, a)), (_, b)) in roles.iter().zip(bits(&m)).zip(before) {
        if role.is_trainable(&schedule) {
            assert_ne!(a, b, "{name} never moved");
        } else {
            assert_eq!(a, b, "{name} changed");
        }
    }
}

#[test]
fn training_is_deterministic() {
    let cfg = small(4, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let data: Vec<_> = (0..4).map(|_| random_example(&mut rng, &cfg)).collect();
    let schedule = make_freeze_schedule(&cfg).unwrap();
    let run = || {
        let mut m = Transformer::<f32>::new(cfg.clone()).unwrap();
        let losses = train(&mut m, &data, &schedule, &TrainOptions::default(), 10).unwrap();
        (losses, bits(&m))
    };
    assert_eq!(run(), run());
    let m = Transformer::<f32>::new(cfg.clone()).unwrap();
    assert_eq!(m.loss(&data).unwrap().to_bits(), m.loss(&data).unwrap().to_bits());
}

#[test]
fn greedy_generation_is_repeatable_and_sized() {
    let cfg = small(8, 7);
    let m = Transformer::<f32>::new(cfg.clone()).unwrap();
    let rhythm = track_from_pairs(&[(0.0, 0), (0.1, 1)], 0.4, 3).unwrap();
    let mix = [5, 900, 4095, 17];
    for max_new in [0, 1, 20] {
        let a = generate(&m, &mix, &rhythm, max_new, 1, 0.0).unwrap();
        assert_eq!(a.len(), max_new);
        assert_eq!(a, generate(&m, &mix, &rhythm, max_new, 2, 0.0).unwrap());
        assert!(a.iter().all(|&t| t < 4096));
    }
    let hot = generate(&m, &mix, &rhythm, 20, 3, 1.0).unwrap();
    assert_eq!(hot, generate(&m, &mix, &rhythm, 20, 3, 1.0).unwrap());
    assert!(generate(&m, &mix, &rhythm, 60, 0, 0.0).is_err());
    assert!(generate(&m, &mix, &rhythm, 4, 0, -1.0).is_err());
}

#[test]
fn memorized_targets_regenerate_exactly() {
    let cfg = small(8, 8);
    let set = memorization_set(3, 0.3, 8).unwrap();
    let data: Vec<_> = set
        .iter()
        .map(|e| build_sequence(&e.mix_tokens, &e.drum_tokens, &e.rhythm, &cfg).unwrap())
        .collect();
    let schedule = make_freeze_schedule(&cfg).unwrap();
    let mut m = Transformer::<f32>::new(cfg.clone()).unwrap();
    let options = TrainOptions { lr: 0.3, batch_size: 3 };
    let run = train_until_memorized(&mut m, &data, &schedule, &options, 0.05, 400).unwrap();
    assert!(run.converged, "{:?}", run.final_eval);
    for e in &set {
        let out = generate(&m, &e.mix_tokens, &e.rhythm, e.drum_tokens.len(), 0, 0.0).unwrap();
        assert_eq!(out, e.drum_tokens);
    }
}

fn moving_average(x: &[f64], w: usize) -> Vec<f64> {
    x.windows(w).map(|s| s.iter().sum::<f64>() / w as f64).collect()
}

#[test]
fn fixture_loss_falls_for_50_steps() {
    let cfg = ModelConfig {
        max_seq_len: 128,
        ..Default::default()
    };
    let set = memorization_set(20, 1.0, 0).unwrap();
    let data: Vec<_> = set
        .iter()
        .map(|e| build_sequence(&e.mix_tokens, &e.drum_tokens, &e.rhythm, &cfg).unwrap())
        .collect();
    let schedule = make_freeze_schedule(&cfg).unwrap();
    let mut m = Transformer::<f32>::new(cfg).unwrap();
    let options = TrainOptions { lr: 0.3, batch_size: data.len() };
    let losses = train(&mut m, &data, &schedule, &options, 50).unwrap();
    let smooth = moving_average(&losses, 5);
    for (i, w) in smooth.windows(2).enumerate() {
        assert!(w[1] <= w[0], "moving average rose at step {}: {:?}", i + 5, &losses);
    }
    assert!(evaluate(&m, &data).unwrap().loss < losses[0]);
}

