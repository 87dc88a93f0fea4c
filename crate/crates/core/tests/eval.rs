use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tapgroove::eval::*;
use tapgroove::synth::{groove_track, track_from_pairs, DrumKit};
use tapgroove::AudioBuffer;

/// Largest one-to-one matching by exhaustive search over every assignment.
fn brute_force_tp(reference: &[f64], estimate: &[f64], tol: f64) -> usize {
    fn go(i: usize, reference: &[f64], estimate: &[f64], used: &mut Vec<bool>, tol: f64) -> usize {
        if i == reference.len() {
            return 0;
        }
        let mut best = go(i + 1, reference, estimate, used, tol);
        for j in 0..estimate.len() {
            if !used[j] && (reference[i] - estimate[j]).abs() <= tol {
                used[j] = true;
                best = best.max(1 + go(i + 1, reference, estimate, used, tol));
                used[j] = false;
            }
        }
        best
    }
    go(0, reference, estimate, &mut vec![false; estimate.len()], tol)
}

fn random_onsets(rng: &mut ChaCha8Rng, max: usize) -> Vec<f64> {
    let n = rng.random_range(0..=max);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    v.sort_by(f64::total_cmp);
    v
}

#[test]
fn maximum_matching_equals_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for trial in 0..500 {
        let reference = random_onsets(&mut rng, 8);
        let estimate = random_onsets(&mut rng, 8);
        let tol = rng.random_range(0.01..0.3);
        let got = match_onsets(&reference, &estimate, tol).unwrap();
        let want = brute_force_tp(&reference, &estimate, tol);
        assert_eq!(got.tp, want, "trial {trial}: {reference:?} {estimate:?} tol {tol}");
        assert_eq!(got.fp + got.tp, estimate.len());
        assert_eq!(got.fn_ + got.tp, reference.len());
    }
}

fn sorted_vec() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..5.0, 0..12).prop_map(|mut v| {
        v.sort_by(f64::total_cmp);
        v
    })
}

proptest! {
    #[test]
    fn swapping_roles_swaps_errors(r in sorted_vec(), e in sorted_vec(), tol in 0.001f64..0.5) {
        let a = match_onsets(&r, &e, tol).unwrap();
        let b = match_onsets(&e, &r, tol).unwrap();
        prop_assert_eq!(a.tp, b.tp);
        prop_assert_eq!(a.fp, b.fn_);
        prop_assert_eq!(a.fn_, b.fp);
        prop_assert!((a.f1 - b.f1).abs() < 1e-12);
    }

    #[test]
    fn wider_tolerance_never_loses_matches(r in sorted_vec(), e in sorted_vec(), t1 in 0.001f64..0.5, t2 in 0.001f64..0.5) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        prop_assert!(match_onsets(&r, &e, lo).unwrap().tp <= match_onsets(&r, &e, hi).unwrap().tp);
    }

    #[test]
    fn rates_are_bounded(r in sorted_vec(), e in sorted_vec(), tol in 0.001f64..0.5) {
        let m = match_onsets(&r, &e, tol).unwrap();
        for v in [m.precision, m.recall, m.f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!(m.f1 <= m.precision.max(m.recall) + 1e-12);
    }
}

fn scored(a: Adherence) -> RhythmScores {
    match a {
        Adherence::Scored(s) => s,
        Adherence::Skipped { .. } => panic!("unexpected skip"),
    }
}

fn ideal_corpus() -> Vec<(tapgroove::RhythmTrack, AudioBuffer)> {
    [(120.0, 4, 0), (110.0, 4, 1), (132.0, 4, 2)]
        .into_iter()
        .map(|(bpm, bars, seed)| {
            let track = groove_track(bpm, bars, 3).unwrap();
            let audio = DrumKit::standard(44100, seed)
                .render(&track, track.duration_sec())
                .unwrap();
            (track, audio)
        })
        .collect()
}

#[test]
fn ideal_renderer_scores_perfectly() {
    let config = EvalConfig::default();
    let mut onset = Vec::new();
    let mut kick = Vec::new();
    let mut snare = Vec::new();
    for (track, audio) in ideal_corpus() {
        let s = scored(evaluate_rhythm_adherence(&track, &audio, &config).unwrap());
        onset.push(s.onset);
        kick.push(s.kick);
        snare.push(s.snare);
    }
    for (name, reports) in [("onset", onset), ("kick", kick), ("snare", snare)] {
        let agg = aggregate_reports(&reports).unwrap();
        assert_eq!(agg.f1, 1.0, "{name}: {agg:?}");
    }
}

#[test]
fn silence_corpus_scores_zero_and_short_reference_is_skipped() {
    let config = EvalConfig::default();
    let mut reports = Vec::new();
    for (track, audio) in ideal_corpus() {
        let silent = AudioBuffer::silence(audio.len(), audio.sample_rate()).unwrap();
        let s = scored(evaluate_rhythm_adherence(&track, &silent, &config).unwrap());
        assert_eq!(s.onset.fn_, track.onsets().len());
        reports.push(s);
    }
    for pick in [|s: &RhythmScores| s.onset, |s: &RhythmScores| s.kick, |s: &RhythmScores| s.snare] {
        let agg = aggregate_reports(&reports.iter().map(pick).collect::<Vec<_>>()).unwrap();
        assert_eq!((agg.tp, agg.f1), (0, 0.0));
    }

    let one = track_from_pairs(&[(1.0, 0)], 4.0, 3).unwrap();
    let audio = DrumKit::standard(44100, 0).render(&one, 4.0).unwrap();
    assert_eq!(
        evaluate_rhythm_adherence(&one, &audio, &config).unwrap(),
        Adherence::Skipped { reference_onsets: 1 }
    );
}
