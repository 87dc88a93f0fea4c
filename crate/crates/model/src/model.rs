//! Decoder-only transformer with rhythm-grid injection and manual backpropagation.
//!
//! Pre-norm blocks (causal multi-head attention, GELU feed-forward). The grid enters at the
//! input embedding through `P₀` and again at every injection layer through its own map `P_ℓ`.
//! Position `t` is conditioned on grid column `t + 1`, the frame of the token it predicts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::{make_freeze_schedule, FreezeSchedule, ModelConfig};
use crate::error::{Error, Result};
use crate::sequence::{RhythmConditionGrid, TokenSequence};
use crate::tensor::{axpy, dot, matmul, matmul_nt, matmul_tn_acc, Mat, Scalar};

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub ln1_g: Vec<T>,
    pub ln1_b: Vec<T>,
    pub wq: Mat<T>,
    pub wk: Mat<T>,
    pub wv: Mat<T>,
    pub wo: Mat<T>,
    pub ln2_g: Vec<T>,
    pub ln2_b: Vec<T>,
    pub w1: Mat<T>,
    pub b1: Vec<T>,
    pub w2: Mat<T>,
    pub b2: Vec<T>,
}

/// What a tensor belongs to; decides whether a step may touch it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Embedding,
    Condition,
    Layer(usize),
    Head,
}

impl Role {
    /// The token embedding never trains; conditioning maps and the head always do.
    pub fn is_trainable(self, schedule: &FreezeSchedule) -> bool {
        match self {
            Role::Embedding => false,
            Role::Condition | Role::Head => true,
            Role::Layer(l) => schedule.is_trainable(l),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    pub tok_emb: Mat<T>,
    /// `P₀`, applied at the input embedding.
    pub cond_in: Mat<T>,
    /// `P_ℓ` for each injection layer, ascending.
    pub cond: Vec<Mat<T>>,
    pub layers: Vec<LayerParams<T>>,
    pub lnf_g: Vec<T>,
    pub lnf_b: Vec<T>,
    pub head_w: Mat<T>,
    pub head_b: Vec<T>,
}

macro_rules! collect_tensors {
    ($p:expr, $inj:expr, $iter:ident, $($r:tt)+) => {{
        let mut out = Vec::new();
        out.push(("tok_emb".to_string(), Role::Embedding, $($r)+ $p.tok_emb.data[..]));
        out.push(("cond_in".to_string(), Role::Condition, $($r)+ $p.cond_in.data[..]));
        for (m, l) in $p.cond.$iter().zip($inj) {
            out.push((format!("cond.{l}"), Role::Condition, $($r)+ m.data[..]));
        }
        for (i, l) in $p.layers.$iter().enumerate() {
            let r = Role::Layer(i);
            out.push((format!("layers.{i}.ln1_g"), r, $($r)+ l.ln1_g[..]));
            out.push((format!("layers.{i}.ln1_b"), r, $($r)+ l.ln1_b[..]));
            out.push((format!("layers.{i}.wq"), r, $($r)+ l.wq.data[..]));
            out.push((format!("layers.{i}.wk"), r, $($r)+ l.wk.data[..]));
            out.push((format!("layers.{i}.wv"), r, $($r)+ l.wv.data[..]));
            out.push((format!("layers.{i}.wo"), r, $($r)+ l.wo.data[..]));
            out.push((format!("layers.{i}.ln2_g"), r, $($r)+ l.ln2_g[..]));
            out.push((format!("layers.{i}.ln2_b"), r, $($r)+ l.ln2_b[..]));
            out.push((format!("layers.{i}.w1"), r, $($r)+ l.w1.data[..]));
            out.push((format!("layers.{i}.b1"), r, $($r)+ l.b1[..]));
            out.push((format!("layers.{i}.w2"), r, $($r)+ l.w2.data[..]));
            out.push((format!("layers.{i}.b2"), r, $($r)+ l.b2[..]));
        }
        out.push(("lnf_g".to_string(), Role::Head, $($r)+ $p.lnf_g[..]));
        out.push(("lnf_b".to_string(), Role::Head, $($r)+ $p.lnf_b[..]));
        out.push(("head_w".to_string(), Role::Head, $($r)+ $p.head_w.data[..]));
        out.push(("head_b".to_string(), Role::Head, $($r)+ $p.head_b[..]));
        out
    }};
}

impl<T: Scalar> Params<T> {
    pub fn zeros_like(other: &Params<T>) -> Self {
        let z = |m: &Mat<T>| Mat::zeros(m.rows, m.cols);
        let zv = |v: &Vec<T>| vec![T::zero(); v.len()];
        Self {
            tok_emb: z(&other.tok_emb),
            cond_in: z(&other.cond_in),
            cond: other.cond.iter().map(z).collect(),
            layers: other
                .layers
                .iter()
                .map(|l| LayerParams {
                    ln1_g: zv(&l.ln1_g),
                    ln1_b: zv(&l.ln1_b),
                    wq: z(&l.wq),
                    wk: z(&l.wk),
                    wv: z(&l.wv),
                    wo: z(&l.wo),
                    ln2_g: zv(&l.ln2_g),
                    ln2_b: zv(&l.ln2_b),
                    w1: z(&l.w1),
                    b1: zv(&l.b1),
                    w2: z(&l.w2),
                    b2: zv(&l.b2),
                })
                .collect(),
            lnf_g: zv(&other.lnf_g),
            lnf_b: zv(&other.lnf_b),
            head_w: z(&other.head_w),
            head_b: zv(&other.head_b),
        }
    }

    /// Every tensor in declared order, flattened row-major.
    pub fn tensors(&self, injection_layers: &[usize]) -> Vec<(String, Role, &[T])> {
        collect_tensors!(self, injection_layers, iter, &)
    }

    pub fn tensors_mut(&mut self, injection_layers: &[usize]) -> Vec<(String, Role, &mut [T])> {
        collect_tensors!(self, injection_layers, iter_mut, &mut)
    }

    pub fn convert<U: Scalar>(&self) -> Params<U> {
        let cv = |v: &Vec<T>| v.iter().map(|x| U::of(x.as_f64())).collect::<Vec<U>>();
        Params {
            tok_emb: self.tok_emb.convert(),
            cond_in: self.cond_in.convert(),
            cond: self.cond.iter().map(Mat::convert).collect(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    ln1_g: cv(&l.ln1_g),
                    ln1_b: cv(&l.ln1_b),
                    wq: l.wq.convert(),
                    wk: l.wk.convert(),
                    wv: l.wv.convert(),
                    wo: l.wo.convert(),
                    ln2_g: cv(&l.ln2_g),
                    ln2_b: cv(&l.ln2_b),
                    w1: l.w1.convert(),
                    b1: cv(&l.b1),
                    w2: l.w2.convert(),
                    b2: cv(&l.b2),
                })
                .collect(),
            lnf_g: cv(&self.lnf_g),
            lnf_b: cv(&self.lnf_b),
            head_w: self.head_w.convert(),
            head_b: cv(&self.head_b),
        }
    }
}
#[derive(Debug, Clone, PartialEq)]
pub struct Transformer<T> {
    config: ModelConfig,
    injection: Vec<usize>,
    pub params: Params<T>,
}

fn normal_mat<T: Scalar>(rows: usize, cols: usize, std: f64, rng: &mut ChaCha8Rng) -> Mat<T> {
    let dist = Normal::new(0.0, std).expect("finite std");
    Mat::from_fn(rows, cols, |_, _| T::of(dist.sample(rng)))
}

fn gelu<T: Scalar>(u: T) -> T {
    let c = T::of((2.0 / std::f64::consts::PI).sqrt());
    let a = T::of(0.044715);
    let half = T::of(0.5);
    half * u * (T::one() + (c * (u + a * u * u * u)).tanh())
}

fn gelu_grad<T: Scalar>(u: T) -> T {
    let c = T::of((2.0 / std::f64::consts::PI).sqrt());
    let a = T::of(0.044715);
    let half = T::of(0.5);
    let t = (c * (u + a * u * u * u)).tanh();
    half * (T::one() + t) + half * u * (T::one() - t * t) * c * (T::one() + T::of(3.0) * a * u * u)
}

pub(crate) struct LnCache<T> {
    xhat: Mat<T>,
    rstd: Vec<T>,
}

fn layer_norm<T: Scalar>(x: &Mat<T>, g: &[T], b: &[T]) -> (Mat<T>, LnCache<T>) {
    let d = x.cols;
    let dn = T::of(d as f64);
    let mut y = Mat::zeros(x.rows, d);
    let mut xhat = Mat::zeros(x.rows, d);
    let mut rstd = Vec::with_capacity(x.rows);
    for i in 0..x.rows {
        let row = x.row(i);
        let mean = row.iter().fold(T::zero(), |s, &v| s + v) / dn;
        let var = row.iter().fold(T::zero(), |s, &v| s + (v - mean) * (v - mean)) / dn;
        let r = T::one() / (var + T::of(LN_EPS)).sqrt();
        rstd.push(r);
        let xh = xhat.row_mut(i);
        for j in 0..d {
            xh[j] = (row[j] - mean) * r;
        }
        let yr = &mut y.data[i * d..(i + 1) * d];
        for j in 0..d {
            yr[j] = g[j] * xhat.data[i * d + j] + b[j];
        }
    }
    (y, LnCache { xhat, rstd })
}

fn layer_norm_backward<T: Scalar>(
    dy: &Mat<T>,
    cache: &LnCache<T>,
    g: &[T],
    grads: Option<(&mut [T], &mut [T])>,
) -> Mat<T> {
    let d = dy.cols;
    let dn = T::of(d as f64);
    let mut dx = Mat::zeros(dy.rows, d);
    let mut dxhat = vec![T::zero(); d];
    for i in 0..dy.rows {
        let dyr = dy.row(i);
        let xh = cache.xhat.row(i);
        let mut m1 = T::zero();
        let mut m2 = T::zero();
        for j in 0..d {
            dxhat[j] = dyr[j] * g[j];
            m1 = m1 + dxhat[j];
            m2 = m2 + dxhat[j] * xh[j];
        }
        m1 = m1 / dn;
        m2 = m2 / dn;
        let r = cache.rstd[i];
        let out = dx.row_mut(i);
        for j in 0..d {
            out[j] = r * (dxhat[j] - m1 - xh[j] * m2);
        }
    }
    if let Some((dg, db)) = grads {
        for i in 0..dy.rows {
            let dyr = dy.row(i);
            let xh = cache.xhat.row(i);
            for j in 0..d {
                dg[j] = dg[j] + dyr[j] * xh[j];
                db[j] = db[j] + dyr[j];
            }
        }
    }
    dx
}

fn add_bias<T: Scalar>(m: &mut Mat<T>, b: &[T]) {
    for i in 0..m.rows {
        for (v, &bb) in m.row_mut(i).iter_mut().zip(b) {
            *v = *v + bb;
        }
    }
}

fn col_sum_acc<T: Scalar>(m: &Mat<T>, acc: &mut [T]) {
    for i in 0..m.rows {
        for (a, &v) in acc.iter_mut().zip(m.row(i)) {
            *a = *a + v;
        }
    }
}

/// Causal attention for query rows at positions `start..start + q.rows` over key/value rows
/// `0..=position`.
fn attend<T: Scalar>(
    q: &Mat<T>,
    k: &Mat<T>,
    v: &Mat<T>,
    start: usize,
    n_heads: usize,
    mut probs: Option<&mut Vec<Mat<T>>>,
) -> Mat<T> {
    let d = q.cols;
    let dh = d / n_heads;
    let scale = T::of(1.0 / (dh as f64).sqrt());
    let mut out = Mat::zeros(q.rows, d);
    let mut p = Vec::with_capacity(k.rows);
    for h in 0..n_heads {
        let hs = h * dh..(h + 1) * dh;
        for r in 0..q.rows {
            let i = start + r;
            let qi = &q.row(r)[hs.clone()];
            p.clear();
            let mut max = T::neg_infinity();
            for j in 0..=i {
                let s = dot(qi, &k.row(j)[hs.clone()]) * scale;
                max = max.max(s);
                p.push(s);
            }
            let mut sum = T::zero();
            for s in p.iter_mut() {
                *s = (*s - max).exp();
                sum = sum + *s;
            }
            let o = &mut out.row_mut(r)[hs.clone()];
            for (j, s) in p.iter_mut().enumerate() {
                *s = *s / sum;
                axpy(o, *s, &v.row(j)[hs.clone()]);
            }
            if let Some(pr) = probs.as_deref_mut() {
                pr[h].row_mut(r)[..=i].copy_from_slice(&p);
            }
        }
    }
    out
}

pub(crate) struct LayerCache<T> {
    ln1: LnCache<T>,
    a: Mat<T>,
    q: Mat<T>,
    k: Mat<T>,
    v: Mat<T>,
    probs: Vec<Mat<T>>,
    attn: Mat<T>,
    ln2: LnCache<T>,
    b: Mat<T>,
    u: Mat<T>,
    g: Mat<T>,
    out: Mat<T>,
}

/// Per-layer key/value rows of everything processed so far.
#[derive(Debug, Clone)]
pub struct DecodeState<T> {
    len: usize,
    k: Vec<Mat<T>>,
    v: Vec<Mat<T>>,
}

impl<T: Scalar> DecodeState<T> {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

pub fn positional_encoding(position: usize, d_model: usize) -> Vec<f64> {
    (0..d_model)
        .map(|j| {
            let i = (j / 2) as f64;
            let angle = position as f64 / 10000f64.powf(2.0 * i / d_model as f64);
            if j % 2 == 0 {
                angle.sin()
            } else {
                angle.cos()
            }
        })
        .collect()
}

/// Grid columns shifted one step ahead: row `t` holds column `t + 1`.
pub fn condition_rows<T: Scalar>(grid: &RhythmConditionGrid, positions: std::ops::Range<usize>) -> Mat<T> {
    let mut m = Mat::zeros(0, grid.n_classes());
    for t in positions {
        let col: Vec<T> = grid.column(t + 1).into_iter().map(|v| T::of(v as f64)).collect();
        m.push_row(&col);
    }
    m
}

impl<T: Scalar> Transformer<T> {
    pub fn new(config: ModelConfig) -> Result<Self> {
        let schedule = make_freeze_schedule(&config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let (d, f, v, kc) = (config.d_model, config.d_ff, config.vocab_size, config.rhythm_classes);
        let proj = 1.0 / (d as f64).sqrt();
        let resid = proj / (2.0 * config.n_layers as f64).sqrt();
        let tok_emb = normal_mat(v, d, 1.0, &mut rng);
        let cond_in = normal_mat(kc, d, 1.0, &mut rng);
        let injection: Vec<usize> = schedule.injection_layers.iter().copied().collect();
        let cond = injection.iter().map(|_| normal_mat(kc, d, 1.0, &mut rng)).collect();
        let layers = (0..config.n_layers)
            .map(|_| LayerParams {
                ln1_g: vec![T::one(); d],
                ln1_b: vec![T::zero(); d],
                wq: normal_mat(d, d, proj, &mut rng),
                wk: normal_mat(d, d, proj, &mut rng),
                wv: normal_mat(d, d, proj, &mut rng),
                wo: normal_mat(d, d, resid, &mut rng),
                ln2_g: vec![T::one(); d],
                ln2_b: vec![T::zero(); d],
                w1: normal_mat(d, f, proj, &mut rng),
                b1: vec![T::zero(); f],
                w2: normal_mat(f, d, resid / (f as f64 / d as f64).sqrt(), &mut rng),
                b2: vec![T::zero(); d],
            })
            .collect();
        let params = Params {
            tok_emb,
            cond_in,
            cond,
            layers,
            lnf_g: vec![T::one(); d],
            lnf_b: vec![T::zero(); d],
            head_w: normal_mat(d, v, proj, &mut rng),
            head_b: vec![T::zero(); v],
        };
        Ok(Self {
            config,
            injection,
            params,
        })
    }

    /// Rebuilds a model around existing parameters, checking every tensor's size.
    pub fn from_params(config: ModelConfig, params: Params<T>) -> Result<Self> {
        let reference = Self::new(config.clone())?;
        let expected: Vec<(String, usize)> = reference
            .params
            .tensors(&reference.injection)
            .into_iter()
            .map(|(n, _, d)| (n, d.len()))
            .collect();
        let got: Vec<(String, usize)> = params
            .tensors(&reference.injection)
            .into_iter()
            .map(|(n, _, d)| (n, d.len()))
            .collect();
        if expected != got {
            return Err(Error::Shape("parameter tensors do not match the configuration".into()));
        }
        Ok(Self {
            injection: reference.injection,
            config,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn injection_layers(&self) -> &[usize] {
        &self.injection
    }

    pub fn convert<U: Scalar>(&self) -> Transformer<U> {
        Transformer {
            config: self.config.clone(),
            injection: self.injection.clone(),
            params: self.params.convert(),
        }
    }

    pub fn new_state(&self) -> DecodeState<T> {
        let d = self.config.d_model;
        DecodeState {
            len: 0,
            k: (0..self.config.n_layers).map(|_| Mat::zeros(0, d)).collect(),
            v: (0..self.config.n_layers).map(|_| Mat::zeros(0, d)).collect(),
        }
    }

    fn check_inputs(&self, tokens: &[u32], grid: &RhythmConditionGrid) -> Result<()> {
        if tokens.len() > self.config.max_seq_len {
            return Err(Error::SequenceTooLong {
                len: tokens.len(),
                max: self.config.max_seq_len,
            });
        }
        if grid.n_frames() != tokens.len() || grid.n_classes() != self.config.rhythm_classes {
            return Err(Error::Shape(format!(
                "grid is {}×{}, expected {}×{}",
                grid.n_classes(),
                grid.n_frames(),
                self.config.rhythm_classes,
                tokens.len()
            )));
        }
        if let Some((position, &token)) = tokens
            .iter()
            .enumerate()
            .find(|(_, &t)| t as usize >= self.config.vocab_size)
        {
            return Err(Error::InvalidToken { token, position });
        }
        Ok(())
    }

    /// Runs new positions through the stack, extending `state`; returns final hidden rows
    /// (before the output norm).
    pub(crate) fn run_rows(
        &self,
        tokens: &[u32],
        conds: &Mat<T>,
        state: &mut DecodeState<T>,
        mut record: Option<&mut Vec<LayerCache<T>>>,
    ) -> Mat<T> {
        let cfg = &self.config;
        let p = &self.params;
        let start = state.len;
        let mut h = matmul(conds, &p.cond_in);
        for (r, &tok) in tokens.iter().enumerate() {
            let pe = positional_encoding(start + r, cfg.d_model);
            let emb = p.tok_emb.row(tok as usize);
            for (j, v) in h.row_mut(r).iter_mut().enumerate() {
                *v = emb[j] + T::of(pe[j]) + *v;
            }
        }
        for (l, lp) in p.layers.iter().enumerate() {
            if let Some(idx) = self.injection.iter().position(|&x| x == l) {
                h.add_assign(&matmul(conds, &p.cond[idx]));
            }
            let (a, ln1) = layer_norm(&h, &lp.ln1_g, &lp.ln1_b);
            let q = matmul(&a, &lp.wq);
            let k = matmul(&a, &lp.wk);
            let v = matmul(&a, &lp.wv);
            for r in 0..k.rows {
                state.k[l].push_row(k.row(r));
                state.v[l].push_row(v.row(r));
            }
            let mut probs = record
                .as_ref()
                .map(|_| (0..cfg.n_heads).map(|_| Mat::zeros(q.rows, state.k[l].rows)).collect::<Vec<_>>());
            let attn = attend(&q, &state.k[l], &state.v[l], start, cfg.n_heads, probs.as_mut());
            let mut h_mid = matmul(&attn, &lp.wo);
            h_mid.add_assign(&h);
            let (b, ln2) = layer_norm(&h_mid, &lp.ln2_g, &lp.ln2_b);
            let mut u = matmul(&b, &lp.w1);
            add_bias(&mut u, &lp.b1);
            let g = Mat {
                rows: u.rows,
                cols: u.cols,
                data: u.data.iter().map(|&x| gelu(x)).collect(),
            };
            let mut out = matmul(&g, &lp.w2);
            add_bias(&mut out, &lp.b2);
            out.add_assign(&h_mid);
            if let Some(rec) = record.as_deref_mut() {
                rec.push(LayerCache {
                    ln1,
                    a,
                    q,
                    k,
                    v,
                    probs: probs.unwrap_or_default(),
                    attn,
                    ln2,
                    b,
                    u,
                    g,
                    out: out.clone(),
                });
            }
            h = out;
        }
        state.len += tokens.len();
        h
    }

    fn head_logits(&self, h: &Mat<T>) -> (Mat<T>, LnCache<T>, Mat<T>) {
        let p = &self.params;
        let (z, cache) = layer_norm(h, &p.lnf_g, &p.lnf_b);
        let mut logits = matmul(&z, &p.head_w);
        add_bias(&mut logits, &p.head_b);
        (logits, cache, z)
    }

    /// Logits `[seq_len × vocab_size]`; row `t` scores the token at `t + 1`.
    pub fn forward(&self, tokens: &[u32], grid: &RhythmConditionGrid) -> Result<Mat<T>> {
        self.check_inputs(tokens, grid)?;
        let conds = condition_rows(grid, 0..tokens.len());
        let mut state = self.new_state();
        let h = self.run_rows(tokens, &conds, &mut state, None);
        Ok(self.head_logits(&h).0)
    }

    pub fn forward_sequence(&self, seq: &TokenSequence, grid: &RhythmConditionGrid) -> Result<Mat<T>> {
        self.forward(&seq.tokens(), grid)
    }

    /// Output of every layer, `[n_layers]` matrices of `[seq_len × d_model]`.
    pub fn hidden_states(&self, tokens: &[u32], grid: &RhythmConditionGrid) -> Result<Vec<Mat<T>>> {
        self.check_inputs(tokens, grid)?;
        let conds = condition_rows(grid, 0..tokens.len());
        let mut state = self.new_state();
        let mut rec = Vec::new();
        self.run_rows(tokens, &conds, &mut state, Some(&mut rec));
        Ok(rec.into_iter().map(|c| c.out).collect())
    }

    /// Feeds `tokens` at the next positions and returns the logits of the last one.
    pub fn step(&self, state: &mut DecodeState<T>, tokens: &[u32], grid: &RhythmConditionGrid) -> Result<Vec<T>> {
        let start = state.len;
        if start + tokens.len() > self.config.max_seq_len || tokens.is_empty() {
            return Err(Error::SequenceTooLong {
                len: start + tokens.len(),
                max: self.config.max_seq_len,
            });
        }
        let conds = condition_rows(grid, start..start + tokens.len());
        let h = self.run_rows(tokens, &conds, state, None);
        let last = Mat {
            rows: 1,
            cols: h.cols,
            data: h.row(h.rows - 1).to_vec(),
        };
        Ok(self.head_logits(&last).0.data)
    }

    /// Summed cross-entropy over target positions, and their count. With `grads`, adds the
    /// gradient of `scale ×` that sum, skipping weights of layers the schedule freezes.
    fn accumulate(
        &self,
        seq: &TokenSequence,
        grid: &RhythmConditionGrid,
        grads: Option<(&mut Params<T>, &FreezeSchedule, T)>,
    ) -> Result<(f64, usize)> {
        let tokens = seq.tokens();
        self.check_inputs(&tokens, grid)?;
        let n_pred = seq.target_tokens.len();
        if n_pred == 0 {
            return Err(Error::EmptyLossMask);
        }
        let cfg = &self.config;
        let p = &self.params;
        let first = seq.delimiter_position();
        let conds = condition_rows(grid, 0..tokens.len());
        let mut state = self.new_state();
        let mut caches = Vec::with_capacity(cfg.n_layers);
        let h = self.run_rows(&tokens, &conds, &mut state, grads.as_ref().map(|_| &mut caches));

        let rows = Mat {
            rows: n_pred,
            cols: h.cols,
            data: h.data[first * h.cols..(first + n_pred) * h.cols].to_vec(),
        };
        let (mut logits, lnf_cache, z) = self.head_logits(&rows);
        let mut loss = 0.0;
        for (i, &target) in seq.target_tokens.iter().enumerate() {
            let row = logits.row_mut(i);
            let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
            let mut sum = T::zero();
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum = sum + *v;
            }
            for v in row.iter_mut() {
                *v = *v / sum;
            }
            loss -= row[target as usize].as_f64().max(f64::MIN_POSITIVE).ln();
        }
        let Some((grads, schedule, scale)) = grads else {
            return Ok((loss, n_pred));
        };

        // Softmax rows become dL/dlogits.
        let mut dlogits = logits;
        for (i, &target) in seq.target_tokens.iter().enumerate() {
            let row = dlogits.row_mut(i);
            row[target as usize] = row[target as usize] - T::one();
            row.iter_mut().for_each(|v| *v = *v * scale);
        }
        matmul_tn_acc(&z, &dlogits, &mut grads.head_w);
        col_sum_acc(&dlogits, &mut grads.head_b);
        let dz = matmul_nt(&dlogits, &p.head_w);
        let dh_rows = layer_norm_backward(&dz, &lnf_cache, &p.lnf_g, Some((&mut grads.lnf_g, &mut grads.lnf_b)));
        let mut dh = Mat::zeros(tokens.len(), cfg.d_model);
        dh.data[first * cfg.d_model..(first + n_pred) * cfg.d_model].copy_from_slice(&dh_rows.data);

        for l in (0..cfg.n_layers).rev() {
            let c = &caches[l];
            let lp = &p.layers[l];
            let train = schedule.is_trainable(l);
            let gl = &mut grads.layers[l];

            // Feed-forward branch.
            let dg = matmul_nt(&dh, &lp.w2);
            let mut du = dg;
            for (d, &u) in du.data.iter_mut().zip(&c.u.data) {
                *d = *d * gelu_grad(u);
            }
            if train {
                matmul_tn_acc(&c.g, &dh, &mut gl.w2);
                col_sum_acc(&dh, &mut gl.b2);
                matmul_tn_acc(&c.b, &du, &mut gl.w1);
                col_sum_acc(&du, &mut gl.b1);
            }
            let db = matmul_nt(&du, &lp.w1);
            let ln2_grads = train.then_some((&mut gl.ln2_g[..], &mut gl.ln2_b[..]));
            let mut dh_mid = layer_norm_backward(&db, &c.ln2, &lp.ln2_g, ln2_grads);
            dh_mid.add_assign(&dh);

            // Attention branch.
            let dattn = matmul_nt(&dh_mid, &lp.wo);
            if train {
                matmul_tn_acc(&c.attn, &dh_mid, &mut gl.wo);
            }
            let (dq, dk, dv) = attention_backward(&dattn, c, cfg.n_heads);
            if train {
                matmul_tn_acc(&c.a, &dq, &mut gl.wq);
                matmul_tn_acc(&c.a, &dk, &mut gl.wk);
                matmul_tn_acc(&c.a, &dv, &mut gl.wv);
            }
            let mut da = matmul_nt(&dq, &lp.wq);
            da.add_assign(&matmul_nt(&dk, &lp.wk));
            da.add_assign(&matmul_nt(&dv, &lp.wv));
            let ln1_grads = train.then_some((&mut gl.ln1_g[..], &mut gl.ln1_b[..]));
            let mut dx = layer_norm_backward(&da, &c.ln1, &lp.ln1_g, ln1_grads);
            dx.add_assign(&dh_mid);

            if let Some(idx) = self.injection.iter().position(|&x| x == l) {
                matmul_tn_acc(&conds, &dx, &mut grads.cond[idx]);
            }
            dh = dx;
        }
        matmul_tn_acc(&conds, &dh, &mut grads.cond_in);
        Ok((loss, n_pred))
    }

    fn check_schedule(&self, schedule: &FreezeSchedule) -> Result<()> {
        let inj: Vec<usize> = schedule.injection_layers.iter().copied().collect();
        if inj != self.injection || schedule.trainable_layers.iter().any(|&l| l >= self.config.n_layers) {
            return Err(Error::Config("freeze schedule does not fit this model".into()));
        }
        Ok(())
    }

    /// Mean cross-entropy over all target tokens of the batch.
    pub fn loss(&self, batch: &[(TokenSequence, RhythmConditionGrid)]) -> Result<f64> {
        let mut total = 0.0;
        let mut count = 0;
        for (seq, grid) in batch {
            let (l, n) = self.accumulate(seq, grid, None)?;
            total += l;
            count += n;
        }
        if count == 0 {
            return Err(Error::EmptyLossMask);
        }
        Ok(total / count as f64)
    }

    /// Mean loss and its gradient. Frozen layers and the token embedding get zero gradient.
    pub fn loss_and_gradients(
        &self,
        batch: &[(TokenSequence, RhythmConditionGrid)],
        schedule: &FreezeSchedule,
    ) -> Result<(f64, Params<T>)> {
        self.check_schedule(schedule)?;
        let count: usize = batch.iter().map(|(s, _)| s.target_tokens.len()).sum();
        if batch.is_empty() || batch.iter().any(|(s, _)| s.target_tokens.is_empty()) {
            return Err(Error::EmptyLossMask);
        }
        let scale = T::of(1.0 / count as f64);
        let mut grads = Params::zeros_like(&self.params);
        let mut total = 0.0;
        for (seq, grid) in batch {
            total += self.accumulate(seq, grid, Some((&mut grads, schedule, scale)))?.0;
        }
        Ok((total / count as f64, grads))
    }

    /// Teacher-forced argmax predictions of each target token.
    pub fn predict_targets(&self, seq: &TokenSequence, grid: &RhythmConditionGrid) -> Result<Vec<u32>> {
        let logits = self.forward_sequence(seq, grid)?;
        let first = seq.delimiter_position();
        Ok((first..first + seq.target_tokens.len())
            .map(|t| argmax(logits.row(t), Some(self.config.delimiter())))
            .collect())
    }
}

/// Index of the largest value (lowest index on ties), optionally never choosing `exclude`.
pub fn argmax<T: Scalar>(row: &[T], exclude: Option<u32>) -> u32 {
    let mut best = 0usize;
    let mut best_v = T::neg_infinity();
    for (i, &v) in row.iter().enumerate() {
        if Some(i as u32) != exclude && v > best_v {
            best = i;
            best_v = v;
        }
    }
    best as u32
}

fn attention_backward<T: Scalar>(dattn: &Mat<T>, c: &LayerCache<T>, n_heads: usize) -> (Mat<T>, Mat<T>, Mat<T>) {
    let (n, d) = (dattn.rows, dattn.cols);
    let dh = d / n_heads;
    let scale = T::of(1.0 / (dh as f64).sqrt());
    let mut dq = Mat::zeros(n, d);
    let mut dk = Mat::zeros(n, d);
    let mut dv = Mat::zeros(n, d);
    let mut dp = vec![T::zero(); n];
    for h in 0..n_heads {
        let hs = h * dh..(h + 1) * dh;
        let probs = &c.probs[h];
        for i in 0..n {
            let doi = &dattn.row(i)[hs.clone()];
            let pi = &probs.row(i)[..=i];
            let mut rowdot = T::zero();
            for j in 0..=i {
                dp[j] = dot(doi, &c.v.row(j)[hs.clone()]);
                rowdot = rowdot + pi[j] * dp[j];
                axpy(&mut dv.row_mut(j)[hs.clone()], pi[j], doi);
            }
            let qi = c.q.row(i)[hs.clone()].to_vec();
            for j in 0..=i {
                let ds = pi[j] * (dp[j] - rowdot) * scale;
                axpy(&mut dq.row_mut(i)[hs.clone()], ds, &c.k.row(j)[hs.clone()]);
                axpy(&mut dk.row_mut(j)[hs.clone()], ds, &qi);
            }
        }
    }
    (dq, dk, dv)
}

/// One plain gradient-descent step on the trainable parameters; returns the pre-step loss.
pub fn train_step<T: Scalar>(
    model: &mut Transformer<T>,
    batch: &[(TokenSequence, RhythmConditionGrid)],
    schedule: &FreezeSchedule,
    lr: f64,
) -> Result<f64> {
    let (loss, grads) = model.loss_and_gradients(batch, schedule)?;
    let lr = T::of(lr);
    let injection = model.injection.clone();
    let grad_tensors = grads.tensors(&injection);
    for ((_, role, p), (_, _, g)) in model.params.tensors_mut(&injection).into_iter().zip(grad_tensors) {
        if role.is_trainable(schedule) {
            for (w, &gv) in p.iter_mut().zip(g) {
                *w = *w - lr * gv;
            }
        }
    }
    Ok(loss)
}
