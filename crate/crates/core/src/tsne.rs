//! Exact O(n^2) T-SNE.
//!
//! High-dimensional affinities are Gaussian with a per-point bandwidth
//! calibrated to a target perplexity; low-dimensional affinities use a
//! Student-t kernel with one degree of freedom. The embedding minimizes
//! `KL(P || Q)` by gradient descent with momentum and early exaggeration.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::manifest::StyleClass;

/// Off-diagonal joint affinities are floored here before renormalization.
pub const P_FLOOR: f64 = 1e-12;
/// Bisection stops once the row perplexity is this close to the target.
pub const PERPLEXITY_TOLERANCE: f64 = 1e-5;
pub const MAX_BISECTION_STEPS: usize = 200;
/// Duplicate inputs are perturbed by Gaussian noise of this fraction of the
/// data range.
pub const JITTER_SCALE: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum TsneError {
    #[error("need at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("perplexity {perplexity} must be below the number of points ({n})")]
    PerplexityTooLarge { perplexity: f64, n: usize },
    #[error("invalid T-SNE config: {0}")]
    InvalidConfig(String),
    #[error("row {row} has {found} features, expected {expected}")]
    Ragged {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("input contains a non-finite value at row {0}")]
    NonFiniteInput(usize),
    #[error("KL divergence became non-finite at iteration {0}")]
    NonFiniteKl(usize),
    #[error("dimension mismatch: {0}")]
    Shape(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsneConfig {
    pub out_dims: usize,
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub exaggeration: f64,
    pub exaggeration_iters: usize,
    pub momentum_initial: f64,
    pub momentum_final: f64,
    pub momentum_switch: usize,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            out_dims: 2,
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            exaggeration: 12.0,
            exaggeration_iters: 250,
            momentum_initial: 0.5,
            momentum_final: 0.8,
            momentum_switch: 250,
            seed: 0,
        }
    }
}

impl TsneConfig {
    pub fn validate(&self) -> Result<(), TsneError> {
        let bad = |msg: String| Err(TsneError::InvalidConfig(msg));
        if self.out_dims != 2 && self.out_dims != 3 {
            return bad(format!("out_dims must be 2 or 3, got {}", self.out_dims));
        }
        if !(self.perplexity > 1.0) || !self.perplexity.is_finite() {
            return bad(format!("perplexity must be > 1, got {}", self.perplexity));
        }
        if self.iterations == 0 {
            return bad("iterations must be positive".into());
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if !(self.exaggeration >= 1.0) || !self.exaggeration.is_finite() {
            return bad(format!("exaggeration must be >= 1, got {}", self.exaggeration));
        }
        for m in [self.momentum_initial, self.momentum_final] {
            if !(0.0..1.0).contains(&m) {
                return bad(format!("momentum must be in [0, 1), got {m}"));
            }
        }
        Ok(())
    }
}

/// Symmetric joint affinities, row-major `n x n`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    pub n: usize,
    pub p: Vec<f64>,
}

impl AffinityMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.n + j]
    }

    pub fn total(&self) -> f64 {
        self.p.iter().sum()
    }

    fn scaled(&self, factor: f64) -> AffinityMatrix {
        AffinityMatrix {
            n: self.n,
            p: self.p.iter().map(|v| v * factor).collect(),
        }
    }
}

/// Row-stochastic `p_{j|i}` with the bandwidth found for each row.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalAffinities {
    pub n: usize,
    pub p: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Inputs contained duplicate points and were jittered.
    pub jittered: bool,
    /// Rows whose perplexity missed the tolerance after all bisection steps.
    pub unconverged_rows: Vec<usize>,
}

fn flatten(x: &[Vec<f64>]) -> Result<(Vec<f64>, usize), TsneError> {
    let d = x.first().map(Vec::len).unwrap_or(0);
    let mut flat = Vec::with_capacity(x.len() * d);
    for (row, v) in x.iter().enumerate() {
        if v.len() != d {
            return Err(TsneError::Ragged {
                row,
                expected: d,
                found: v.len(),
            });
        }
        if v.iter().any(|f| !f.is_finite()) {
            return Err(TsneError::NonFiniteInput(row));
        }
        flat.extend_from_slice(v);
    }
    Ok((flat, d))
}

fn squared_distances(x: &[f64], n: usize, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let mut s = 0.0;
            for k in 0..d {
                let diff = x[i * d + k] - x[j * d + k];
                s += diff * diff;
            }
            out[i * n + j] = s;
            out[j * n + i] = s;
        }
    }
    out
}

fn has_duplicates(dist: &[f64], n: usize) -> bool {
    (0..n).any(|i| (i + 1..n).any(|j| dist[i * n + j] == 0.0))
}

/// Gaussian row for bandwidth `beta = 1 / (2 sigma^2)`; returns the
/// perplexity `exp(H)` of the row. Distances are shifted by their minimum so
/// the largest weight is 1.
fn gaussian_row(dist: &[f64], i: usize, beta: f64, out: &mut [f64]) -> f64 {
    let dmin = dist
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &v)| v)
        .fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    for (j, (o, &dj)) in out.iter_mut().zip(dist).enumerate() {
        *o = if j == i { 0.0 } else { (-(dj - dmin) * beta).exp() };
        sum += *o;
    }
    let mut h = 0.0;
    for o in out.iter_mut() {
        *o /= sum;
        if *o > 0.0 {
            h -= *o * o.ln();
        }
    }
    h.exp()
}

/// Calibrates a Gaussian kernel per point so the perplexity of each
/// conditional distribution matches `perplexity`.
pub fn conditional_affinities(
    x: &[Vec<f64>],
    perplexity: f64,
) -> Result<ConditionalAffinities, TsneError> {
    let n = x.len();
    if n < 3 {
        return Err(TsneError::TooFewPoints(n));
    }
    if perplexity >= n as f64 {
        return Err(TsneError::PerplexityTooLarge { perplexity, n });
    }
    let (mut flat, d) = flatten(x)?;
    let mut dist = squared_distances(&flat, n, d);

    let mut jittered = false;
    if has_duplicates(&dist, n) {
        let lo = flat.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = flat.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let range = hi - lo;
        if range > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(0x6a17);
            let noise = Normal::new(0.0, JITTER_SCALE * range).expect("positive std");
            for v in flat.iter_mut() {
                *v += noise.sample(&mut rng);
            }
            dist = squared_distances(&flat, n, d);
            jittered = true;
        }
    }

    let mut p = vec![0.0; n * n];
    let mut sigma = vec![0.0; n];
    let mut unconverged_rows = Vec::new();
    for i in 0..n {
        let row_d = &dist[i * n..(i + 1) * n];
        let row = &mut p[i * n..(i + 1) * n];
        let off: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| row_d[j]).collect();
        if off.iter().all(|&v| v == off[0]) {
            // every neighbour is equally far: any bandwidth gives the uniform row
            for (j, v) in row.iter_mut().enumerate() {
                *v = if j == i { 0.0 } else { 1.0 / (n - 1) as f64 };
            }
            sigma[i] = f64::INFINITY;
            continue;
        }

        let mut beta = 1.0;
        let mut lo = 0.0;
        let mut hi = f64::INFINITY;
        let mut converged = false;
        for _ in 0..MAX_BISECTION_STEPS {
            let perp = gaussian_row(row_d, i, beta, row);
            if (perp - perplexity).abs() < PERPLEXITY_TOLERANCE {
                converged = true;
                break;
            }
            if perp > perplexity {
                // too flat: narrow the kernel
                lo = beta;
                beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
        }
        if !converged {
            gaussian_row(row_d, i, beta, row);
            unconverged_rows.push(i);
        }
        sigma[i] = (1.0 / (2.0 * beta)).sqrt();
    }
    Ok(ConditionalAffinities {
        n,
        p,
        sigma,
        jittered,
        unconverged_rows,
    })
}

/// `P_ij = (p_{j|i} + p_{i|j}) / 2n`, floored at [`P_FLOOR`] off the
/// diagonal and renormalized to unit mass.
pub fn symmetrize(cond: &ConditionalAffinities) -> AffinityMatrix {
    let n = cond.n;
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let v = (cond.p[i * n + j] + cond.p[j * n + i]) / (2.0 * n as f64);
                p[i * n + j] = v.max(P_FLOOR);
            }
        }
    }
    let total: f64 = p.iter().sum();
    for v in p.iter_mut() {
        *v /= total;
    }
    AffinityMatrix { n, p }
}

/// Student-t weights `w_ij = 1 / (1 + |y_i - y_j|^2)` and `Q = w / sum(w)`.
pub fn low_dim_affinities(y: &[f64], n: usize, dims: usize) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(y.len(), n * dims, "Y must be n x dims");
    let mut w = vec![0.0; n * n];
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let mut d2 = 0.0;
            for k in 0..dims {
                let diff = y[i * dims + k] - y[j * dims + k];
                d2 += diff * diff;
            }
            let v = 1.0 / (1.0 + d2);
            w[i * n + j] = v;
            w[j * n + i] = v;
            sum += 2.0 * v;
        }
    }
    let q = w.iter().map(|v| v / sum).collect();
    (q, w)
}

/// `sum_{i != j} P_ij ln(P_ij / Q_ij)`.
pub fn kl_divergence(p: &AffinityMatrix, q: &[f64]) -> f64 {
    let mut kl = 0.0;
    for (idx, (&pv, &qv)) in p.p.iter().zip(q).enumerate() {
        if idx / p.n != idx % p.n && pv > 0.0 {
            kl += pv * (pv / qv).ln();
        }
    }
    kl
}

fn gradient_from(p: &AffinityMatrix, q: &[f64], w: &[f64], y: &[f64], dims: usize) -> Vec<f64> {
    let n = p.n;
    let mut grad = vec![0.0; n * dims];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let c = 4.0 * (p.p[i * n + j] - q[i * n + j]) * w[i * n + j];
            for k in 0..dims {
                grad[i * dims + k] += c * (y[i * dims + k] - y[j * dims + k]);
            }
        }
    }
    grad
}

/// `dKL/dy_i = 4 sum_j (P_ij - Q_ij) w_ij (y_i - y_j)` for row-major `Y`.
pub fn kl_gradient(p: &AffinityMatrix, y: &[f64], dims: usize) -> Result<Vec<f64>, TsneError> {
    if dims == 0 || y.len() != p.n * dims {
        return Err(TsneError::Shape(format!(
            "Y has {} values, P is {}x{} with {dims} output dims",
            y.len(),
            p.n,
            p.n
        )));
    }
    let (q, w) = low_dim_affinities(y, p.n, dims);
    Ok(gradient_from(p, &q, &w, y, dims))
}

/// KL of `P` against the Q induced by `Y`.
pub fn kl_of(p: &AffinityMatrix, y: &[f64], dims: usize) -> f64 {
    let (q, _) = low_dim_affinities(y, p.n, dims);
    kl_divergence(p, &q)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsneEmbedding {
    pub n: usize,
    pub dims: usize,
    /// Row-major `n x dims`.
    pub y: Vec<f64>,
    /// KL against the unexaggerated P after each iteration's update.
    pub kl_history: Vec<f64>,
    pub exaggeration_iters: usize,
    pub jittered: bool,
    pub unconverged_rows: Vec<usize>,
}

impl TsneEmbedding {
    pub fn point(&self, i: usize) -> &[f64] {
        &self.y[i * self.dims..(i + 1) * self.dims]
    }

    pub fn final_kl(&self) -> f64 {
        *self.kl_history.last().expect("at least one iteration")
    }

    /// KL after the first update made without exaggeration, if there was one.
    pub fn first_post_exaggeration_kl(&self) -> Option<f64> {
        self.kl_history.get(self.exaggeration_iters).copied()
    }

    /// `{id_header},x,y[,z],style` rows; `styles` may be empty to omit the
    /// style values (the column stays, blank).
    pub fn to_csv(&self, id_header: &str, ids: &[String], styles: &[StyleClass]) -> String {
        assert_eq!(ids.len(), self.n, "one id per point");
        let axes = ["x", "y", "z"];
        let mut out = id_header.to_string();
        for a in &axes[..self.dims] {
            out.push(',');
            out.push_str(a);
        }
        out.push_str(",style\n");
        for (i, id) in ids.iter().enumerate() {
            out.push_str(id);
            for v in self.point(i) {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push(',');
            if let Some(s) = styles.get(i) {
                out.push_str(s.name());
            }
            out.push('\n');
        }
        out
    }

    pub fn kl_csv(&self) -> String {
        let mut out = String::from("iteration,kl\n");
        for (i, kl) in self.kl_history.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, kl));
        }
        out
    }
}

pub fn run_tsne(x: &[Vec<f64>], config: &TsneConfig) -> Result<TsneEmbedding, TsneError> {
    config.validate()?;
    let cond = conditional_affinities(x, config.perplexity)?;
    let p = symmetrize(&cond);
    let n = p.n;
    let dims = config.out_dims;
    let exaggerated = p.scaled(config.exaggeration);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let init = Normal::new(0.0, 1e-2).expect("positive std");
    let mut y: Vec<f64> = (0..n * dims).map(|_| init.sample(&mut rng)).collect();
    recenter(&mut y, n, dims);
    let mut velocity = vec![0.0; n * dims];
    let (mut q, mut w) = low_dim_affinities(&y, n, dims);
    let mut kl_history = Vec::with_capacity(config.iterations);

    for it in 0..config.iterations {
        let target = if it < config.exaggeration_iters { &exaggerated } else { &p };
        let grad = gradient_from(target, &q, &w, &y, dims);
        let momentum = if it < config.momentum_switch {
            config.momentum_initial
        } else {
            config.momentum_final
        };
        for ((v, yv), g) in velocity.iter_mut().zip(y.iter_mut()).zip(&grad) {
            *v = momentum * *v - config.learning_rate * g;
            *yv += *v;
        }
        recenter(&mut y, n, dims);
        (q, w) = low_dim_affinities(&y, n, dims);
        let kl = kl_divergence(&p, &q);
        if !kl.is_finite() {
            return Err(TsneError::NonFiniteKl(it));
        }
        kl_history.push(kl);
    }
    Ok(TsneEmbedding {
        n,
        dims,
        y,
        kl_history,
        exaggeration_iters: config.exaggeration_iters,
        jittered: cond.jittered,
        unconverged_rows: cond.unconverged_rows,
    })
}

fn recenter(y: &mut [f64], n: usize, dims: usize) {
    for k in 0..dims {
        let mean = (0..n).map(|i| y[i * dims + k]).sum::<f64>() / n as f64;
        for i in 0..n {
            y[i * dims + k] -= mean;
        }
    }
}

/// Fraction of points whose `k` nearest embedded neighbours are mostly of
/// the point's own label (strict majority).
pub fn knn_majority_rate(emb: &TsneEmbedding, labels: &[usize], k: usize) -> f64 {
    assert_eq!(labels.len(), emb.n);
    let mut hits = 0;
    for i in 0..emb.n {
        let mut d: Vec<(f64, usize)> = (0..emb.n)
            .filter(|&j| j != i)
            .map(|j| {
                let dd: f64 = emb
                    .point(i)
                    .iter()
                    .zip(emb.point(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (dd, j)
            })
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let same = d.iter().take(k).filter(|&&(_, j)| labels[j] == labels[i]).count();
        if 2 * same > k.min(d.len()) {
            hits += 1;
        }
    }
    hits as f64 / emb.n as f64
}
