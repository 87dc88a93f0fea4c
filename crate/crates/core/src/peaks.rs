//! Local-maximum picking with minimum-distance suppression.

/// Indices of local maxima of `x` strictly above `threshold`.
///
/// A plateau reports its first sample. Boundary samples only need to beat their single neighbour.
pub fn local_maxima(x: &[f64], threshold: impl Fn(usize) -> f64) -> Vec<usize> {
    let n = x.len();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        let v = x[i];
        let left_ok = i == 0 || x[i - 1] < v;
        if !left_ok {
            i += 1;
            continue;
        }
        // Walk across a plateau.
        let mut j = i;
        while j + 1 < n && x[j + 1] == v {
            j += 1;
        }
        let right_ok = j + 1 == n || x[j + 1] < v;
        if right_ok && v > threshold(i) {
            out.push(i);
        }
        i = j + 1;
    }
    out
}

/// Keeps peaks greedily from the largest down, dropping any closer than `min_gap` (in index
/// units) to an already accepted peak. Returns accepted indices in ascending order.
pub fn suppress_close(x: &[f64], candidates: &[usize], min_gap: f64) -> Vec<usize> {
    let mut by_height = candidates.to_vec();
    by_height.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
    let mut accepted: Vec<usize> = Vec::new();
    for c in by_height {
        if accepted
            .iter()
            .all(|&a| (a as f64 - c as f64).abs() >= min_gap)
        {
            accepted.push(c);
        }
    }
    accepted.sort_unstable();
    accepted
}
