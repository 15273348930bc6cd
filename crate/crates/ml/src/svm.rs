//! RBF-kernel support vector machine trained by sequential minimal optimization,
//! with one-vs-one multiclass voting.
//!
//! The binary solver keeps the error cache `F_t = Σ_s α_s y_s K(s,t) − y_t` and
//! the two thresholds `b_up = min F over I_up`, `b_low = max F over I_low`.
//! Each sweep visits samples in index order; a sample that violates the
//! optimality conditions by more than `2·tol` is paired with whichever extreme
//! (`argmin` of I_up or `argmax` of I_low) maximizes `|F_i − F_j|`. Training
//! stops once a full sweep performs no update or the duality gap proxy
//! `b_low − b_up` drops to `2·tol`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use thiserror::Error;
use wivi_core::binio::{BinError, ByteReader, ByteWriter};
use wivi_core::ActivityLabel;

pub const SVM_MAGIC: &[u8; 8] = b"WIVISVM1";
pub const SVM_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SvmError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("training data must contain both classes")]
    SingleClass,
    #[error("need at least two classes, got {0}")]
    TooFewClasses(usize),
    #[error("invalid SVM config: {0}")]
    InvalidConfig(String),
    #[error("invalid training data: {0}")]
    InvalidData(String),
    #[error(transparent)]
    Format(#[from] BinError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmConfig {
    pub gamma: f64,
    pub c: f64,
    pub tol: f64,
    /// Consecutive update-free sweeps that end training. The solver is
    /// deterministic, so any value ≥ 1 behaves identically; kept for config parity.
    pub max_passes: usize,
    /// Kernel memory budget per binary problem, MiB. Problems whose full Gram
    /// matrix fits are solved from it; larger ones use an LRU row cache.
    pub cache_mb: usize,
    /// Hard cap on pair updates, a safety net for degenerate inputs.
    pub max_updates: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            gamma: 0.143,
            c: 100.0,
            tol: 1e-3,
            max_passes: 10,
            cache_mb: 1024,
            max_updates: 2_000_000,
        }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<(), SvmError> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(self.gamma) {
            return Err(SvmError::InvalidConfig(format!("gamma {} must be > 0", self.gamma)));
        }
        if !pos(self.c) {
            return Err(SvmError::InvalidConfig(format!("c {} must be > 0", self.c)));
        }
        if !pos(self.tol) {
            return Err(SvmError::InvalidConfig(format!("tol {} must be > 0", self.tol)));
        }
        if self.max_passes == 0 {
            return Err(SvmError::InvalidConfig("max_passes must be >= 1".into()));
        }
        Ok(())
    }
}

#[inline]
fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `exp(−γ‖x−y‖²)`.
pub fn rbf_kernel(x: &[f64], y: &[f64], gamma: f64) -> Result<f64, SvmError> {
    if x.len() != y.len() {
        return Err(SvmError::Dimension {
            expected: x.len(),
            got: y.len(),
        });
    }
    Ok((-gamma * sq_dist(x, y)).exp())
}

/// Kernel rows for the solver: the whole Gram matrix when it fits the memory
/// budget (built with one GEMM via `‖x‖² + ‖y‖² − 2x·y`), otherwise an LRU
/// cache of rows computed on demand.
struct KernelCache<'a> {
    x: &'a [Vec<f64>],
    gamma: f64,
    full: Option<Vec<f64>>,
    slot_of: Vec<Option<usize>>,
    rows: Vec<Vec<f64>>,
    owner: Vec<usize>,
    last_used: Vec<u64>,
    clock: u64,
    capacity: usize,
}

fn gram_matrix(x: &[Vec<f64>], gamma: f64) -> Vec<f64> {
    let n = x.len();
    let d = x.first().map_or(0, Vec::len);
    let flat: Vec<f64> = x.iter().flatten().copied().collect();
    let sq: Vec<f64> = x.iter().map(|r| r.iter().map(|v| v * v).sum()).collect();
    let mut g = vec![0.0; n * n];
    crate::nn::tensor::gemm(n, d, n, &flat, false, &flat, true, &mut g, 0.0);
    for i in 0..n {
        let row = &mut g[i * n..(i + 1) * n];
        for (j, v) in row.iter_mut().enumerate() {
            *v = (-gamma * (sq[i] + sq[j] - 2.0 * *v).max(0.0)).exp();
        }
        row[i] = 1.0;
    }
    g
}

impl<'a> KernelCache<'a> {
    fn new(x: &'a [Vec<f64>], gamma: f64, cache_mb: usize) -> Self {
        let n = x.len();
        let budget = cache_mb << 20;
        let bytes_per_row = (n * 8).max(1);
        let full = (n * bytes_per_row <= budget).then(|| gram_matrix(x, gamma));
        let capacity = (budget / bytes_per_row).clamp(2, n.max(2));
        Self {
            x,
            gamma,
            full,
            slot_of: vec![None; n],
            rows: Vec::new(),
            owner: Vec::new(),
            last_used: Vec::new(),
            clock: 0,
            capacity,
        }
    }

    fn compute(&self, i: usize, out: &mut Vec<f64>) {
        let xi = &self.x[i];
        out.clear();
        out.extend(self.x.iter().map(|xt| (-self.gamma * sq_dist(xi, xt)).exp()));
    }

    fn slot(&mut self, i: usize) -> usize {
        self.clock += 1;
        if let Some(s) = self.slot_of[i] {
            self.last_used[s] = self.clock;
            return s;
        }
        let s = if self.rows.len() < self.capacity {
            self.rows.push(Vec::with_capacity(self.x.len()));
            self.owner.push(i);
            self.last_used.push(0);
            self.rows.len() - 1
        } else {
            let victim = (0..self.rows.len())
                .min_by_key(|&s| self.last_used[s])
                .expect("cache has at least one slot");
            self.slot_of[self.owner[victim]] = None;
            self.owner[victim] = i;
            victim
        };
        let mut row = std::mem::take(&mut self.rows[s]);
        self.compute(i, &mut row);
        self.rows[s] = row;
        self.slot_of[i] = Some(s);
        self.last_used[s] = self.clock;
        s
    }

    /// Rows `i` and `j`, both resident at once.
    fn pair(&mut self, i: usize, j: usize) -> (&[f64], &[f64]) {
        if self.full.is_some() {
            let n = self.x.len();
            let g = self.full.as_deref().expect("checked above");
            return (&g[i * n..(i + 1) * n], &g[j * n..(j + 1) * n]);
        }
        let si = self.slot(i);
        let sj = self.slot(j);
        // `slot(j)` never evicts `si`: it is the most recent entry and capacity ≥ 2.
        (&self.rows[si], &self.rows[sj])
    }
}

/// Two-class model in dual form.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryModel {
    pub support_vectors: Vec<Vec<f64>>,
    pub alphas: Vec<f64>,
    pub signs: Vec<i8>,
    pub bias: f64,
    pub gamma: f64,
}

impl BinaryModel {
    pub fn dim(&self) -> usize {
        self.support_vectors.first().map_or(0, Vec::len)
    }
}

/// Outcome of solving the dual: full α vector plus diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoSolution {
    pub alphas: Vec<f64>,
    pub bias: f64,
    pub sweeps: usize,
    pub updates: usize,
    pub converged: bool,
}

fn in_up(y: f64, a: f64, c: f64) -> bool {
    (y > 0.0 && a < c) || (y < 0.0 && a > 0.0)
}

fn in_low(y: f64, a: f64, c: f64) -> bool {
    (y > 0.0 && a > 0.0) || (y < 0.0 && a < c)
}

fn validate_xy(x: &[Vec<f64>], y: &[i8]) -> Result<usize, SvmError> {
    if x.len() != y.len() {
        return Err(SvmError::InvalidData(format!("{} rows but {} labels", x.len(), y.len())));
    }
    let d = x.first().map_or(0, Vec::len);
    if let Some(r) = x.iter().find(|r| r.len() != d) {
        return Err(SvmError::Dimension {
            expected: d,
            got: r.len(),
        });
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(SvmError::InvalidData("non-finite feature value".into()));
    }
    if y.iter().any(|&v| v != 1 && v != -1) {
        return Err(SvmError::InvalidData("labels must be +1 or -1".into()));
    }
    if !(y.contains(&1) && y.contains(&-1)) {
        return Err(SvmError::SingleClass);
    }
    Ok(d)
}

/// Solves the SVM dual for `x`, `y ∈ {−1, +1}`.
pub fn solve_smo(x: &[Vec<f64>], y: &[i8], cfg: &SvmConfig) -> Result<SmoSolution, SvmError> {
    cfg.validate()?;
    validate_xy(x, y)?;
    let n = x.len();
    let c = cfg.c;
    let yf: Vec<f64> = y.iter().map(|&v| v as f64).collect();
    let mut alpha = vec![0.0; n];
    let mut f: Vec<f64> = yf.iter().map(|v| -v).collect();
    let mut cache = KernelCache::new(x, cfg.gamma, cfg.cache_mb);

    let thresholds = |alpha: &[f64], f: &[f64]| {
        let (mut b_up, mut i_up) = (f64::INFINITY, usize::MAX);
        let (mut b_low, mut i_low) = (f64::NEG_INFINITY, usize::MAX);
        for t in 0..n {
            if in_up(yf[t], alpha[t], c) && f[t] < b_up {
                b_up = f[t];
                i_up = t;
            }
            if in_low(yf[t], alpha[t], c) && f[t] > b_low {
                b_low = f[t];
                i_low = t;
            }
        }
        (b_up, i_up, b_low, i_low)
    };

    let two_tol = 2.0 * cfg.tol;
    let mut sweeps = 0;
    let mut updates = 0;
    let mut converged = false;
    let (mut b_up, mut i_up, mut b_low, mut i_low) = thresholds(&alpha, &f);
    'outer: loop {
        sweeps += 1;
        let mut changed = 0usize;
        for i in 0..n {
            if b_low <= b_up + two_tol {
                converged = true;
                break 'outer;
            }
            let viol_up = in_up(yf[i], alpha[i], c) && f[i] < b_low - two_tol;
            let viol_low = in_low(yf[i], alpha[i], c) && f[i] > b_up + two_tol;
            if !(viol_up || viol_low) {
                continue;
            }
            // Extreme partners, best |F_i − F_j| first; equal gaps go to the lower index.
            let mut cands: Vec<usize> = Vec::with_capacity(2);
            if viol_up && i_low != i {
                cands.push(i_low);
            }
            if viol_low && i_up != i && !cands.contains(&i_up) {
                cands.push(i_up);
            }
            cands.sort_by(|&a, &b| {
                let (ga, gb) = ((f[i] - f[a]).abs(), (f[i] - f[b]).abs());
                gb.total_cmp(&ga).then(a.cmp(&b))
            });
            for j in cands {
                if take_step(i, j, &mut alpha, &mut f, &yf, c, &mut cache) {
                    changed += 1;
                    updates += 1;
                    (b_up, i_up, b_low, i_low) = thresholds(&alpha, &f);
                    if updates >= cfg.max_updates {
                        break 'outer;
                    }
                    break;
                }
            }
        }
        if changed == 0 {
            // A sweep with no update would repeat identically, so one idle
            // sweep already satisfies any `max_passes ≥ 1`.
            converged = b_low <= b_up + two_tol;
            break;
        }
    }
    let (b_up, _, b_low, _) = thresholds(&alpha, &f);
    let bias = match (b_up.is_finite(), b_low.is_finite()) {
        (true, true) => -(b_up + b_low) / 2.0,
        (true, false) => -b_up,
        (false, true) => -b_low,
        (false, false) => 0.0,
    };
    Ok(SmoSolution {
        alphas: alpha,
        bias,
        sweeps,
        updates,
        converged,
    })
}

fn take_step(
    i: usize,
    j: usize,
    alpha: &mut [f64],
    f: &mut [f64],
    y: &[f64],
    c: f64,
    cache: &mut KernelCache<'_>,
) -> bool {
    let (ai, aj) = (alpha[i], alpha[j]);
    let (yi, yj) = (y[i], y[j]);
    let s = yi * yj;
    let (lo, hi) = if s < 0.0 {
        ((aj - ai).max(0.0), (c + aj - ai).min(c))
    } else {
        ((ai + aj - c).max(0.0), (ai + aj).min(c))
    };
    if hi - lo < 1e-12 {
        return false;
    }
    let (ki, kj) = cache.pair(i, j);
    let eta = (ki[i] + kj[j] - 2.0 * ki[j]).max(1e-12);
    let mut aj_new = aj + yj * (f[i] - f[j]) / eta;
    aj_new = aj_new.clamp(lo, hi);
    if (aj_new - aj).abs() < 1e-12 * (aj + aj_new + 1e-12) {
        return false;
    }
    let mut ai_new = ai + s * (aj - aj_new);
    // snap to the box to avoid drift just outside [0, C]
    let snap = |v: f64| {
        if v < 1e-12 * c {
            0.0
        } else if v > c * (1.0 - 1e-12) {
            c
        } else {
            v
        }
    };
    aj_new = snap(aj_new);
    ai_new = snap(ai_new);
    let di = yi * (ai_new - ai);
    let dj = yj * (aj_new - aj);
    for t in 0..f.len() {
        f[t] += di * ki[t] + dj * kj[t];
    }
    alpha[i] = ai_new;
    alpha[j] = aj_new;
    true
}

/// Trains a binary RBF SVM. Only samples with `α > 0` are kept.
pub fn train_binary(x: &[Vec<f64>], y: &[i8], cfg: &SvmConfig) -> Result<BinaryModel, SvmError> {
    let sol = solve_smo(x, y, cfg)?;
    let mut m = BinaryModel {
        support_vectors: Vec::new(),
        alphas: Vec::new(),
        signs: Vec::new(),
        bias: sol.bias,
        gamma: cfg.gamma,
    };
    for (k, &a) in sol.alphas.iter().enumerate() {
        if a > 0.0 {
            m.support_vectors.push(x[k].clone());
            m.alphas.push(a);
            m.signs.push(y[k]);
        }
    }
    Ok(m)
}

/// Decision value and sign (`sign(0) = +1`).
pub fn predict_binary(m: &BinaryModel, x: &[f64]) -> Result<(f64, i8), SvmError> {
    if !m.support_vectors.is_empty() && x.len() != m.dim() {
        return Err(SvmError::Dimension {
            expected: m.dim(),
            got: x.len(),
        });
    }
    let mut score = m.bias;
    for ((sv, &a), &s) in m.support_vectors.iter().zip(&m.alphas).zip(&m.signs) {
        score += a * s as f64 * (-m.gamma * sq_dist(sv, x)).exp();
    }
    Ok((score, if score >= 0.0 { 1 } else { -1 }))
}

/// `Σα − ½ ΣΣ α_i α_j y_i y_j K_ij`.
pub fn dual_objective(x: &[Vec<f64>], y: &[i8], alphas: &[f64], gamma: f64) -> f64 {
    let mut quad = 0.0;
    for i in 0..x.len() {
        if alphas[i] == 0.0 {
            continue;
        }
        for j in 0..x.len() {
            if alphas[j] != 0.0 {
                quad += alphas[i] * alphas[j] * (y[i] * y[j]) as f64 * (-gamma * sq_dist(&x[i], &x[j])).exp();
            }
        }
    }
    alphas.iter().sum::<f64>() - 0.5 * quad
}

/// Per-dimension z-score from training statistics. Constant dimensions keep unit scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn fit(x: &[Vec<f64>]) -> Self {
        let d = x.first().map_or(0, Vec::len);
        let n = x.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for r in x {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in x {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

/// One pairwise classifier inside a [`MulticlassModel`]; support vectors are
/// indices into the model's shared pool.
#[derive(Debug, Clone, PartialEq)]
pub struct PairModel {
    /// Index (into `classes`) of the +1 class.
    pub pos: usize,
    /// Index of the −1 class.
    pub neg: usize,
    pub bias: f64,
    pub sv_index: Vec<u32>,
    /// `α_i·y_i` per support vector.
    pub coef: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MulticlassModel {
    pub config: SvmConfig,
    pub scaler: Scaler,
    pub classes: Vec<ActivityLabel>,
    pub support_vectors: Vec<Vec<f64>>,
    pub pairs: Vec<PairModel>,
    /// Free-form provenance (e.g. segmentation length), saved with the model.
    pub metadata: BTreeMap<String, String>,
}

/// Per-pair decision values for one (raw, unscaled) input.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseScores {
    pub scores: Vec<f64>,
}

impl MulticlassModel {
    pub fn dim(&self) -> usize {
        self.scaler.mean.len()
    }

    /// Pair `(a, b)` with `a < b` as class indices, in training order.
    pub fn pair_list(&self) -> Vec<(usize, usize)> {
        self.pairs.iter().map(|p| (p.pos, p.neg)).collect()
    }

    pub fn binary(&self, pair: usize) -> BinaryModel {
        let p = &self.pairs[pair];
        BinaryModel {
            support_vectors: p.sv_index.iter().map(|&k| self.support_vectors[k as usize].clone()).collect(),
            alphas: p.coef.iter().map(|c| c.abs()).collect(),
            signs: p.coef.iter().map(|&c| if c >= 0.0 { 1 } else { -1 }).collect(),
            bias: p.bias,
            gamma: self.config.gamma,
        }
    }

    pub fn pair_scores(&self, x: &[f64]) -> Result<PairwiseScores, SvmError> {
        if x.len() != self.dim() {
            return Err(SvmError::Dimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let z = self.scaler.transform(x);
        let k: Vec<f64> = self
            .support_vectors
            .iter()
            .map(|sv| (-self.config.gamma * sq_dist(sv, &z)).exp())
            .collect();
        let scores = self
            .pairs
            .iter()
            .map(|p| {
                p.sv_index
                    .iter()
                    .zip(&p.coef)
                    .fold(p.bias, |acc, (&i, &c)| acc + c * k[i as usize])
            })
            .collect();
        Ok(PairwiseScores { scores })
    }

    pub fn predict(&self, x: &[f64]) -> Result<ActivityLabel, SvmError> {
        Ok(self.classes[vote(self.classes.len(), &self.pair_list(), &self.pair_scores(x)?.scores)])
    }

    pub fn predict_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<ActivityLabel>, SvmError> {
        xs.par_iter().map(|x| self.predict(x)).collect()
    }
}

/// One-vs-one vote. Ties: larger summed `|score|` over the pairs each tied
/// class won, then lower class index.
pub fn vote(n_classes: usize, pairs: &[(usize, usize)], scores: &[f64]) -> usize {
    let mut votes = vec![0usize; n_classes];
    let mut strength = vec![0.0f64; n_classes];
    for (&(a, b), &s) in pairs.iter().zip(scores) {
        let w = if s >= 0.0 { a } else { b };
        votes[w] += 1;
        strength[w] += s.abs();
    }
    let top = *votes.iter().max().unwrap_or(&0);
    let mut best = usize::MAX;
    for k in 0..n_classes {
        if votes[k] != top {
            continue;
        }
        if best == usize::MAX || strength[k] > strength[best] {
            best = k;
        }
    }
    best
}

/// Trains all `n(n−1)/2` pairwise models (in parallel) on standardized features.
/// Classes are ordered by label; within a pair the earlier class is +1.
pub fn train_multiclass(
    x: &[Vec<f64>],
    labels: &[ActivityLabel],
    cfg: &SvmConfig,
) -> Result<MulticlassModel, SvmError> {
    cfg.validate()?;
    if x.len() != labels.len() {
        return Err(SvmError::InvalidData(format!("{} rows but {} labels", x.len(), labels.len())));
    }
    let mut classes: Vec<ActivityLabel> = labels.to_vec();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return Err(SvmError::TooFewClasses(classes.len()));
    }
    let d = x.first().map_or(0, Vec::len);
    if let Some(r) = x.iter().find(|r| r.len() != d) {
        return Err(SvmError::Dimension {
            expected: d,
            got: r.len(),
        });
    }
    let scaler = Scaler::fit(x);
    let z: Vec<Vec<f64>> = x.iter().map(|r| scaler.transform(r)).collect();
    let class_idx: Vec<usize> = labels
        .iter()
        .map(|l| classes.binary_search(l).expect("label present"))
        .collect();
    let mut pair_list = Vec::new();
    for a in 0..classes.len() {
        for b in a + 1..classes.len() {
            pair_list.push((a, b));
        }
    }
    let trained: Vec<(Vec<usize>, BinaryModel)> = pair_list
        .par_iter()
        .map(|&(a, b)| {
            let rows: Vec<usize> = (0..z.len()).filter(|&k| class_idx[k] == a || class_idx[k] == b).collect();
            let xs: Vec<Vec<f64>> = rows.iter().map(|&k| z[k].clone()).collect();
            let ys: Vec<i8> = rows.iter().map(|&k| if class_idx[k] == a { 1 } else { -1 }).collect();
            let sol = solve_smo(&xs, &ys, cfg)?;
            let mut keep = Vec::new();
            let mut m = BinaryModel {
                support_vectors: Vec::new(),
                alphas: Vec::new(),
                signs: Vec::new(),
                bias: sol.bias,
                gamma: cfg.gamma,
            };
            for (r, &al) in sol.alphas.iter().enumerate() {
                if al > 0.0 {
                    keep.push(rows[r]);
                    m.alphas.push(al);
                    m.signs.push(ys[r]);
                }
            }
            Ok((keep, m))
        })
        .collect::<Result<_, SvmError>>()?;

    // Shared pool of support vectors, in ascending training-row order.
    let mut used: Vec<usize> = trained.iter().flat_map(|(k, _)| k.iter().copied()).collect();
    used.sort_unstable();
    used.dedup();
    let pool_index: BTreeMap<usize, u32> = used.iter().enumerate().map(|(p, &r)| (r, p as u32)).collect();
    let pairs = trained
        .into_iter()
        .zip(&pair_list)
        .map(|((rows, m), &(a, b))| PairModel {
            pos: a,
            neg: b,
            bias: m.bias,
            sv_index: rows.iter().map(|r| pool_index[r]).collect(),
            coef: m.alphas.iter().zip(&m.signs).map(|(a, &s)| a * s as f64).collect(),
        })
        .collect();
    Ok(MulticlassModel {
        config: cfg.clone(),
        scaler,
        classes,
        support_vectors: used.iter().map(|&r| z[r].clone()).collect(),
        pairs,
        metadata: BTreeMap::new(),
    })
}

pub fn predict_multiclass(m: &MulticlassModel, x: &[f64]) -> Result<ActivityLabel, SvmError> {
    m.predict(x)
}

impl MulticlassModel {
    pub fn write_to(&self, w: &mut ByteWriter) {
        w.bytes(SVM_MAGIC).u32(SVM_FORMAT_VERSION);
        let c = &self.config;
        w.f64(c.gamma).f64(c.c).f64(c.tol).u64(c.max_passes as u64).u64(c.cache_mb as u64).u64(c.max_updates as u64);
        w.f64s(&self.scaler.mean).f64s(&self.scaler.std);
        w.u32(self.classes.len() as u32);
        for l in &self.classes {
            w.u8(l.id());
        }
        let d = self.dim();
        w.u32(self.support_vectors.len() as u32);
        for sv in &self.support_vectors {
            debug_assert_eq!(sv.len(), d);
            for &v in sv {
                w.f64(v);
            }
        }
        w.u32(self.pairs.len() as u32);
        for p in &self.pairs {
            w.u32(p.pos as u32).u32(p.neg as u32).f64(p.bias).u32(p.sv_index.len() as u32);
            for (&i, &cf) in p.sv_index.iter().zip(&p.coef) {
                w.u32(i).f64(cf);
            }
        }
        w.u32(self.metadata.len() as u32);
        for (k, v) in &self.metadata {
            w.str(k).str(v);
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        self.write_to(&mut w);
        w.into_inner()
    }

    pub fn read_from(r: &mut ByteReader<'_>) -> Result<Self, SvmError> {
        r.magic(SVM_MAGIC)?;
        let version = r.u32()?;
        if version != SVM_FORMAT_VERSION {
            return Err(BinError::UnsupportedVersion {
                expected: SVM_FORMAT_VERSION,
                found: version,
            }
            .into());
        }
        let config = SvmConfig {
            gamma: r.f64()?,
            c: r.f64()?,
            tol: r.f64()?,
            max_passes: r.u64()? as usize,
            cache_mb: r.u64()? as usize,
            max_updates: r.u64()? as usize,
        };
        config.validate()?;
        let mean = r.f64s()?;
        let std = r.f64s()?;
        if mean.len() != std.len() {
            return Err(r.malformed("scaler mean/std length mismatch").into());
        }
        let d = mean.len();
        let nc = r.u32()? as usize;
        let mut classes = Vec::with_capacity(nc.min(256));
        for _ in 0..nc {
            let id = r.u8()?;
            classes.push(ActivityLabel::from_id(id).ok_or_else(|| r.malformed(format!("unknown class id {id}")))?);
        }
        let nsv = r.u32()? as usize;
        if nsv.saturating_mul(d).saturating_mul(8) > r.remaining() {
            return Err(r.malformed("support vector block exceeds file size").into());
        }
        let mut support_vectors = Vec::with_capacity(nsv);
        for _ in 0..nsv {
            support_vectors.push((0..d).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?);
        }
        let np = r.u32()? as usize;
        let mut pairs = Vec::with_capacity(np.min(4096));
        for _ in 0..np {
            let pos = r.u32()? as usize;
            let neg = r.u32()? as usize;
            if pos >= nc || neg >= nc {
                return Err(r.malformed("pair references unknown class").into());
            }
            let bias = r.f64()?;
            let k = r.u32()? as usize;
            if k.saturating_mul(12) > r.remaining() {
                return Err(r.malformed("pair block exceeds file size").into());
            }
            let mut sv_index = Vec::with_capacity(k);
            let mut coef = Vec::with_capacity(k);
            for _ in 0..k {
                let i = r.u32()?;
                if i as usize >= nsv {
                    return Err(r.malformed("support vector index out of range").into());
                }
                sv_index.push(i);
                coef.push(r.f64()?);
            }
            pairs.push(PairModel {
                pos,
                neg,
                bias,
                sv_index,
                coef,
            });
        }
        let nm = r.u32()? as usize;
        let mut metadata = BTreeMap::new();
        for _ in 0..nm {
            let k = r.str()?;
            metadata.insert(k, r.str()?);
        }
        Ok(Self {
            config,
            scaler: Scaler { mean, std },
            classes,
            support_vectors,
            pairs,
            metadata,
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SvmError> {
        let mut r = ByteReader::new(bytes);
        let m = Self::read_from(&mut r)?;
        if r.remaining() != 0 {
            return Err(r.malformed("trailing bytes after model").into());
        }
        Ok(m)
    }
}
