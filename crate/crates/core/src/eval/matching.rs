//! One-to-one onset matching within a tolerance window, scored as precision/recall/F1.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

impl MatchReport {
    /// Derives the rates from counts, with `0/0 = 0` throughout.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = ratio(tp as f64, (tp + fp) as f64);
        let recall = ratio(tp as f64, (tp + fn_) as f64);
        let f1 = ratio(2.0 * precision * recall, precision + recall);
        Self {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        }
    }
}

const UNMATCHED: usize = usize::MAX;

/// Maximum bipartite matching (Hopcroft–Karp). `adj[l]` lists right vertices adjacent to `l`.
/// Returns `pair_left`, where `pair_left[l]` is the matched right vertex or `usize::MAX`.
pub fn hopcroft_karp(adj: &[Vec<usize>], n_right: usize) -> Vec<usize> {
    let n_left = adj.len();
    let mut pair_left = vec![UNMATCHED; n_left];
    let mut pair_right = vec![UNMATCHED; n_right];
    let mut dist = vec![0usize; n_left];

    loop {
        // BFS layering from free left vertices.
        let mut queue = VecDeque::new();
        for l in 0..n_left {
            if pair_left[l] == UNMATCHED {
                dist[l] = 0;
                queue.push_back(l);
            } else {
                dist[l] = usize::MAX;
            }
        }
        let mut found = false;
        while let Some(l) = queue.pop_front() {
            for &r in &adj[l] {
                let next = pair_right[r];
                if next == UNMATCHED {
                    found = true;
                } else if dist[next] == usize::MAX {
                    dist[next] = dist[l] + 1;
                    queue.push_back(next);
                }
            }
        }
        if !found {
            break;
        }

        fn augment(
            l: usize,
            adj: &[Vec<usize>],
            pair_left: &mut [usize],
            pair_right: &mut [usize],
            dist: &mut [usize],
        ) -> bool {
            for &r in &adj[l] {
                let next = pair_right[r];
                if next == UNMATCHED
                    || (dist[next] == dist[l] + 1 && augment(next, adj, pair_left, pair_right, dist))
                {
                    pair_left[l] = r;
                    pair_right[r] = l;
                    return true;
                }
            }
            dist[l] = usize::MAX;
            false
        }

        for l in 0..n_left {
            if pair_left[l] == UNMATCHED {
                augment(l, adj, &mut pair_left, &mut pair_right, &mut dist);
            }
        }
    }
    pair_left
}

fn check_sorted(x: &[f64]) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) || x.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Unsorted);
    }
    Ok(())
}

/// Pairs `(reference index, estimate index)` of a maximum matching where `|r − e| ≤ tol_sec`.
pub fn matched_pairs(reference: &[f64], estimate: &[f64], tol_sec: f64) -> Result<Vec<(usize, usize)>> {
    if !(tol_sec > 0.0) {
        return Err(Error::Config(format!("tolerance {tol_sec} must be positive")));
    }
    check_sorted(reference)?;
    check_sorted(estimate)?;
    // Both lists are sorted, so each reference's feasible window is found by sliding bounds.
    let mut adj = Vec::with_capacity(reference.len());
    let mut lo = 0;
    for &r in reference {
        while lo < estimate.len() && estimate[lo] < r - tol_sec {
            lo += 1;
        }
        let mut hi = lo;
        let mut row = Vec::new();
        while hi < estimate.len() && estimate[hi] <= r + tol_sec {
            if (estimate[hi] - r).abs() <= tol_sec {
                row.push(hi);
            }
            hi += 1;
        }
        adj.push(row);
    }
    let pairs = hopcroft_karp(&adj, estimate.len());
    Ok(pairs
        .into_iter()
        .enumerate()
        .filter(|&(_, e)| e != UNMATCHED)
        .collect())
}

pub fn match_onsets(reference: &[f64], estimate: &[f64], tol_sec: f64) -> Result<MatchReport> {
    let tp = matched_pairs(reference, estimate, tol_sec)?.len();
    Ok(MatchReport::from_counts(
        tp,
        estimate.len() - tp,
        reference.len() - tp,
    ))
}

/// Micro average: counts summed, rates recomputed.
pub fn aggregate_reports(reports: &[MatchReport]) -> Result<MatchReport> {
    if reports.is_empty() {
        return Err(Error::EmptyReports);
    }
    let (tp, fp, fn_) = reports
        .iter()
        .fold((0, 0, 0), |(a, b, c), r| (a + r.tp, b + r.fp, c + r.fn_));
    Ok(MatchReport::from_counts(tp, fp, fn_))
}

/// Macro average: mean of per-report precision, recall and F1; counts are summed.
pub fn macro_average(reports: &[MatchReport]) -> Result<MatchReport> {
    let micro = aggregate_reports(reports)?;
    let n = reports.len() as f64;
    let mean = |f: fn(&MatchReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    Ok(MatchReport {
        precision: mean(|r| r.precision),
        recall: mean(|r| r.recall),
        f1: mean(|r| r.f1),
        ..micro
    })
}
