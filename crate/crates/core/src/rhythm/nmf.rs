//! KL-divergence NMF with multiplicative updates.

use ndarray::{Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dsp::dot;
use crate::error::{Error, Result};
use crate::spectrogram::Spectrogram;

/// Floor added inside every update division.
pub const EPSILON: f64 = 1e-12;

/// `S ≈ W H`: timbre templates in the columns of `basis`, per-template activations in the rows
/// of `activations`.
#[derive(Debug, Clone, PartialEq)]
pub struct NmfFactors {
    /// W, `[n_bins, k]`.
    pub basis: Array2<f64>,
    /// H, `[k, n_frames]`.
    pub activations: Array2<f64>,
}

impl NmfFactors {
    pub fn new(basis: Array2<f64>, activations: Array2<f64>) -> Result<Self> {
        if basis.ncols() != activations.nrows() || basis.ncols() == 0 {
            return Err(Error::Config(format!(
                "factor shapes disagree: W has {} columns, H has {} rows",
                basis.ncols(),
                activations.nrows()
            )));
        }
        if basis.iter().chain(activations.iter()).any(|&v| !(v >= 0.0)) {
            return Err(Error::Config("factors must be nonnegative".into()));
        }
        Ok(Self { basis, activations })
    }

    pub fn components(&self) -> usize {
        self.basis.ncols()
    }

    pub fn reconstruction(&self) -> Array2<f64> {
        self.basis.dot(&self.activations)
    }

    /// Per component `(Σ_f W[f,k]) · (Σ_t H[k,t])`.
    pub fn component_energies(&self) -> Vec<f64> {
        let w = self.basis.sum_axis(Axis(0));
        let h = self.activations.sum_axis(Axis(1));
        w.iter().zip(h.iter()).map(|(a, b)| a * b).collect()
    }
}

/// Generalized KL divergence `D(S‖V) = Σ S ln(S/V) − S + V`, with `0 ln 0 = 0`.
pub fn kl_divergence(s: ArrayView2<f64>, v: ArrayView2<f64>) -> f64 {
    s.iter()
        .zip(v.iter())
        .map(|(&s, &v)| {
            if s > 0.0 {
                s * (s / v).ln() - s + v
            } else {
                v
            }
        })
        .sum()
}

/// Factorization result with the divergence recorded before the first update and after each one
/// (or only before and after the whole run, for [`nmf_factorize`]).
#[derive(Debug, Clone)]
pub struct NmfRun {
    pub factors: NmfFactors,
    pub divergence: Vec<f64>,
}

fn validate(s: ArrayView2<f64>, k: usize, n_iters: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Config("component count must be at least 1".into()));
    }
    if n_iters == 0 {
        return Err(Error::Config("iteration count must be at least 1".into()));
    }
    let (rows, cols) = s.dim();
    if k > rows.min(cols) {
        return Err(Error::RankConstraint {
            components: k,
            rows,
            cols,
        });
    }
    if s.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::Config("input matrix must be finite and nonnegative".into()));
    }
    if s.iter().all(|&v| v == 0.0) {
        return Err(Error::EmptyPrompt);
    }
    Ok(())
}

/// Runs `n_iters` rounds of Lee–Seung KL updates (H then W) from a seeded uniform(0.1, 1) start.
pub fn factorize_matrix(s: ArrayView2<f64>, k: usize, n_iters: usize, seed: u64) -> Result<NmfRun> {
    updates(s, k, n_iters, seed, true)
}

/// `out = W[f, :] · H` for one row of the reconstruction.
fn reconstruct_row(w_row: &[f64], h: &[f64], out: &mut [f64]) {
    let cols = out.len();
    out.iter_mut().for_each(|v| *v = 0.0);
    for (kk, &wv) in w_row.iter().enumerate() {
        for (o, &hv) in out.iter_mut().zip(&h[kk * cols..(kk + 1) * cols]) {
            *o += wv * hv;
        }
    }
}

fn divergence_of(s: &[f64], w: &[f64], h: &[f64], k: usize, scratch: &mut [f64]) -> f64 {
    let cols = scratch.len();
    let mut total = 0.0;
    for (f, s_row) in s.chunks_exact(cols).enumerate() {
        reconstruct_row(&w[f * k..(f + 1) * k], h, scratch);
        for (&sv, &v) in s_row.iter().zip(scratch.iter()) {
            total += if sv > 0.0 { sv * (sv / v).ln() - sv + v } else { v };
        }
    }
    total
}

// Row-at-a-time passes keep the reconstruction out of memory; with K small this is much faster
// than materializing WH and calling a general matrix product.
fn updates(s: ArrayView2<f64>, k: usize, n_iters: usize, seed: u64, record: bool) -> Result<NmfRun> {
    validate(s, k, n_iters)?;
    let (rows, cols) = s.dim();
    let s = s.as_standard_layout();
    let s = s.as_slice().expect("standard layout");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w: Vec<f64> = (0..rows * k).map(|_| rng.random_range(0.1..1.0)).collect();
    let mut h: Vec<f64> = (0..k * cols).map(|_| rng.random_range(0.1..1.0)).collect();

    let mut row = vec![0.0; cols];
    let mut numer = vec![0.0; k * cols];
    let mut divergence = Vec::with_capacity(n_iters + 1);
    divergence.push(divergence_of(s, &w, &h, k, &mut row));

    for _ in 0..n_iters {
        // H ← H ⊙ (Wᵀ (S ⊘ WH)) ⊘ (Wᵀ 1)
        numer.iter_mut().for_each(|v| *v = 0.0);
        let mut w_sum = vec![0.0; k];
        for (f, s_row) in s.chunks_exact(cols).enumerate() {
            let w_row = &w[f * k..(f + 1) * k];
            reconstruct_row(w_row, &h, &mut row);
            for (r, &sv) in row.iter_mut().zip(s_row) {
                *r = sv / (*r + EPSILON);
            }
            for (kk, &wv) in w_row.iter().enumerate() {
                w_sum[kk] += wv;
                for (n, &r) in numer[kk * cols..(kk + 1) * cols].iter_mut().zip(&row) {
                    *n += wv * r;
                }
            }
        }
        for kk in 0..k {
            let d = w_sum[kk] + EPSILON;
            for (hv, &n) in h[kk * cols..(kk + 1) * cols].iter_mut().zip(&numer[kk * cols..]) {
                *hv *= n / d;
            }
        }

        // W ← W ⊙ ((S ⊘ WH) Hᵀ) ⊘ (1 Hᵀ)
        let h_sum: Vec<f64> = h.chunks_exact(cols).map(|r| r.iter().sum()).collect();
        for (f, s_row) in s.chunks_exact(cols).enumerate() {
            reconstruct_row(&w[f * k..(f + 1) * k], &h, &mut row);
            for (r, &sv) in row.iter_mut().zip(s_row) {
                *r = sv / (*r + EPSILON);
            }
            for kk in 0..k {
                let d = dot(&row, &h[kk * cols..(kk + 1) * cols]);
                w[f * k + kk] *= d / (h_sum[kk] + EPSILON);
            }
        }

        if record {
            divergence.push(divergence_of(s, &w, &h, k, &mut row));
        }
    }
    if !record {
        divergence.push(divergence_of(s, &w, &h, k, &mut row));
    }

    Ok(NmfRun {
        factors: NmfFactors {
            basis: Array2::from_shape_vec((rows, k), w).expect("shape"),
            activations: Array2::from_shape_vec((k, cols), h).expect("shape"),
        },
        divergence,
    })
}

pub fn nmf_factorize(spec: &Spectrogram, k: usize, n_iters: usize, seed: u64) -> Result<NmfFactors> {
    updates(spec.mag.view(), k, n_iters, seed, false).map(|run| run.factors)
}

/// Component indices ordered by non-increasing energy; ties keep their original order.
pub fn energy_order(f: &NmfFactors) -> Vec<usize> {
    let energies = f.component_energies();
    let mut order: Vec<usize> = (0..energies.len()).collect();
    order.sort_by(|&a, &b| energies[b].total_cmp(&energies[a]));
    order
}

/// Permutes W columns and H rows jointly so component energy is non-increasing.
pub fn sort_components_by_energy(f: &NmfFactors) -> NmfFactors {
    let order = energy_order(f);
    NmfFactors {
        basis: f.basis.select(Axis(1), &order),
        activations: f.activations.select(Axis(0), &order),
    }
}
