//! Maximum-likelihood training of mixtures of determinantal generating
//! circuits: pairwise statistics, greedy variable partitioning, per-group
//! leaf polynomials with softmax parameters, hand-rolled reverse-mode
//! gradients through the interpolation-based determinant, and minibatch Adam.
//!
//! This module is concrete over `f64`: training mixes statistics, RNG and
//! optimizer state where generic scalars buy nothing.

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use std::fmt::Write as _;

use crate::circuit::{Circuit, CircuitBuilder};
use crate::compose::GroupPartition;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{invert, invert_complex, lu_det, lu_det_complex, matmul, Matrix};

// ------------------------------------------------------------------------
// Pairwise statistics and partitioning

#[derive(Debug, Clone)]
pub struct PairStats {
    /// p[i] = Pr(X_i = 1) by counting.
    pub p: Vec<f64>,
    /// pp[(i, j)] = Pr(X_i = 1, X_j = 1) by counting; symmetric.
    pub pp: Matrix<f64>,
}

pub fn estimate_pairwise(rows: &[Vec<bool>]) -> Result<PairStats> {
    if rows.is_empty() {
        return Err(Error::refused("cannot estimate statistics from no data"));
    }
    let n = rows[0].len();
    let l = rows.len() as f64;
    let mut p = vec![0.0; n];
    let mut pp = Matrix::from_fn(n, n, |_, _| 0.0);
    for row in rows {
        for i in 0..n {
            if row[i] {
                p[i] += 1.0;
                for j in 0..n {
                    if row[j] {
                        pp[(i, j)] += 1.0;
                    }
                }
            }
        }
    }
    for v in &mut p {
        *v /= l;
    }
    for i in 0..n {
        for j in 0..n {
            pp[(i, j)] /= l;
        }
    }
    Ok(PairStats { p, pp })
}

/// Positive-dependence weight of a variable pair, in nats; zero when the
/// pair never co-occurs or a marginal is zero.
pub fn pair_weight(stats: &PairStats, i: usize, j: usize) -> f64 {
    let pij = stats.pp[(i, j)];
    let prod = stats.p[i] * stats.p[j];
    if pij > 0.0 && prod > 0.0 {
        pij * (pij / prod).ln()
    } else {
        0.0
    }
}

/// All pairs i < j with their weights.
pub fn pair_weights(stats: &PairStats) -> Vec<(usize, usize, f64)> {
    let n = stats.p.len();
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            out.push((i, j, pair_weight(stats, i, j)));
        }
    }
    out
}

/// Greedy partition: every variable starts alone; positive-weight pairs are
/// processed in descending weight order (ties: ascending (i, j)) and the two
/// groups merge iff the union stays within `k`.
pub fn partition(n: usize, weights: &[(usize, usize, f64)], k: usize) -> Result<GroupPartition> {
    if k == 0 {
        return Err(Error::contract("group size bound must be at least 1"));
    }
    let mut order: Vec<&(usize, usize, f64)> =
        weights.iter().filter(|&&(_, _, w)| w > 0.0).collect();
    order.sort_by(|a, b| {
        b.2.partial_cmp(&a.2)
            .unwrap()
            .then(a.0.cmp(&b.0))
            .then(a.1.cmp(&b.1))
    });
    let mut parent: Vec<usize> = (0..n).collect();
    let mut size = vec![1usize; n];
    fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &&(i, j, _) in &order {
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        if ri != rj && size[ri] + size[rj] <= k {
            let (hi, lo) = if ri < rj { (ri, rj) } else { (rj, ri) };
            parent[lo] = hi;
            size[hi] += size[lo];
        }
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n];
    for v in 0..n {
        let r = find(&mut parent, v);
        members[r].push(v);
    }
    let groups: Vec<Vec<usize>> = members.into_iter().filter(|g| !g.is_empty()).collect();
    GroupPartition::new(n, groups)
}

// ------------------------------------------------------------------------
// Leaf polynomials

/// Normalized generating circuit over k variables with zero constant term:
/// weight exp(theta[S]) / Z on every nonempty subset monomial. `theta` is
/// indexed by subset bitmask minus one.
pub fn leaf_gp(theta: &[f64]) -> Result<Circuit<f64>> {
    let k = theta.len().trailing_ones() as usize;
    if theta.is_empty() || theta.len() != (1 << k) - 1 {
        return Err(Error::contract(format!(
            "{} leaf parameters is not 2^k - 1 for any k",
            theta.len()
        )));
    }
    let z: f64 = theta.iter().map(|t| t.exp()).sum();
    let mut b = CircuitBuilder::new(k);
    let vars: Vec<usize> = (0..k).map(|i| b.var(i)).collect();
    let mut terms = Vec::new();
    for mask in 1..(1usize << k) {
        let members: Vec<usize> = (0..k).filter(|i| mask >> i & 1 == 1).map(|i| vars[i]).collect();
        let node = if members.len() == 1 { members[0] } else { b.product(members) };
        terms.push((node, theta[mask - 1].exp() / z));
    }
    b.sum(terms);
    Ok(b.build())
}

// ------------------------------------------------------------------------
// Model

/// One mixture component: a kernel factor B (the kernel is B * B^T) over the
/// groups plus leaf parameters per group, indexed subset-bitmask-minus-one.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub b: Matrix<f64>,
    pub theta: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplePgcModel {
    pub partition: GroupPartition,
    pub components: Vec<Component>,
    pub mixture_logits: Vec<f64>,
}

impl SimplePgcModel {
    pub fn n(&self) -> usize {
        self.partition.n()
    }

    /// Fresh model: B = I + 0.01 * standard normal, theta ~ normal(0, 0.1),
    /// logits zero.
    pub fn init(partition: GroupPartition, c: usize, rng: &mut impl Rng) -> Result<Self> {
        if c == 0 {
            return Err(Error::contract("a mixture needs at least one component"));
        }
        let m = partition.groups.len();
        let bnoise = Normal::new(0.0, 0.01).unwrap();
        let tnoise = Normal::new(0.0, 0.1).unwrap();
        let components = (0..c)
            .map(|_| Component {
                b: Matrix::from_fn(m, m, |i, j| {
                    (if i == j { 1.0 } else { 0.0 }) + bnoise.sample(rng)
                }),
                theta: partition
                    .groups
                    .iter()
                    .map(|g| (0..(1usize << g.len()) - 1).map(|_| tnoise.sample(rng)).collect())
                    .collect(),
            })
            .collect();
        Ok(SimplePgcModel {
            partition,
            components,
            mixture_logits: vec![0.0; c],
        })
    }

    /// Model with all parameters zero, for gradient accumulation.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for comp in &mut z.components {
            comp.b = Matrix::from_fn(comp.b.rows(), comp.b.cols(), |_, _| 0.0);
            for t in &mut comp.theta {
                t.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        z.mixture_logits.iter_mut().for_each(|v| *v = 0.0);
        z
    }

    /// self += scale * other, elementwise over all parameters.
    pub fn axpy(&mut self, other: &Self, scale: f64) {
        for (c, o) in self.components.iter_mut().zip(&other.components) {
            for i in 0..c.b.rows() {
                for j in 0..c.b.cols() {
                    c.b[(i, j)] += scale * o.b[(i, j)];
                }
            }
            for (t, ot) in c.theta.iter_mut().zip(&o.theta) {
                for (v, ov) in t.iter_mut().zip(ot) {
                    *v += scale * ov;
                }
            }
        }
        for (l, ol) in self.mixture_logits.iter_mut().zip(&other.mixture_logits) {
            *l += scale * ol;
        }
    }

    /// Flatten all parameters in a fixed order: per component B row-major
    /// then theta tables, then the logits.
    pub fn pack(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for comp in &self.components {
            for i in 0..comp.b.rows() {
                for j in 0..comp.b.cols() {
                    out.push(comp.b[(i, j)]);
                }
            }
            for t in &comp.theta {
                out.extend_from_slice(t);
            }
        }
        out.extend_from_slice(&self.mixture_logits);
        out
    }

    pub fn unpack(&mut self, params: &[f64]) {
        let mut it = params.iter();
        for comp in &mut self.components {
            for i in 0..comp.b.rows() {
                for j in 0..comp.b.cols() {
                    comp.b[(i, j)] = *it.next().expect("parameter vector too short");
                }
            }
            for t in &mut comp.theta {
                for v in t.iter_mut() {
                    *v = *it.next().expect("parameter vector too short");
                }
            }
        }
        for l in &mut self.mixture_logits {
            *l = *it.next().expect("parameter vector too short");
        }
        assert!(it.next().is_none(), "parameter vector too long");
    }
}

// ------------------------------------------------------------------------
// Likelihood and gradients

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

fn log_sum_exp(vals: &[f64]) -> f64 {
    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + vals.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Per-group on-set coefficient profile: coefs[d] is the probability weight
/// the leaf places on picking exactly d of the sample's on-variables, i.e.
/// the coefficient of t^d after the query substitution.
fn leaf_profile(theta: &[f64], on_mask: usize) -> (Vec<f64>, Vec<f64>, f64) {
    let k = theta.len().trailing_ones() as usize;
    let exps: Vec<f64> = theta.iter().map(|t| t.exp()).collect();
    let z: f64 = exps.iter().sum();
    let mut coefs = vec![0.0; k + 1];
    for mask in 1..(1usize << k) {
        if mask & !on_mask == 0 {
            coefs[mask.count_ones() as usize] += exps[mask - 1] / z;
        }
    }
    (coefs, exps, z)
}

/// Log-likelihood of one full assignment under one component, with an
/// optional gradient of the log-likelihood accumulated into `grad`.
///
/// The component's distribution composes the L-ensemble for L = B B^T over
/// the groups with the leaf polynomials; the needed top coefficient is
/// recovered by evaluating det(I + L diag(p(w))) at the (a+1)-th roots of
/// unity (a = number of ones) and inverse-DFT, then dividing by det(L + I).
/// The backward pass runs through the same interpolation points.
fn component_loglik(
    comp: &Component,
    partition: &GroupPartition,
    x: &[bool],
    grad: Option<&mut Component>,
) -> Result<f64> {
    let m = partition.groups.len();
    let l = matmul(&comp.b, &comp.b.transpose());
    let l_plus_i = Matrix::from_fn(m, m, |i, j| l[(i, j)] + if i == j { 1.0 } else { 0.0 });
    let den = lu_det(&l_plus_i);
    if !(den > 0.0) {
        return Err(Error::numerical(format!("det(L + I) = {den} is not positive")));
    }
    let a: usize = x.iter().filter(|&&b| b).count();
    let profiles: Vec<(Vec<f64>, Vec<f64>, f64)> = partition
        .groups
        .iter()
        .zip(&comp.theta)
        .map(|(group, theta)| {
            let on_mask = group
                .iter()
                .enumerate()
                .filter(|&(_, &g)| x[g])
                .fold(0usize, |acc, (li, _)| acc | 1 << li);
            leaf_profile(theta, on_mask)
        })
        .collect();
    let n_points = a + 1;
    let mut dets = Vec::with_capacity(n_points);
    let mut pvals_all = Vec::with_capacity(n_points);
    let mut mats = Vec::with_capacity(n_points);
    let mut c = Complex64::new(0.0, 0.0);
    for j in 0..n_points {
        let angle = 2.0 * std::f64::consts::PI * j as f64 / n_points as f64;
        let omega = Complex64::from_polar(1.0, angle);
        let pvals: Vec<Complex64> = profiles
            .iter()
            .map(|(coefs, _, _)| {
                coefs
                    .iter()
                    .rev()
                    .fold(Complex64::new(0.0, 0.0), |acc, &co| acc * omega + co)
            })
            .collect();
        let mat = Matrix::from_fn(m, m, |u, v| {
            let diag = if u == v { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) };
            diag + pvals[v] * l[(u, v)]
        });
        let det = lu_det_complex(&mat);
        c += det * Complex64::from_polar(1.0, -angle * a as f64);
        dets.push(det);
        pvals_all.push(pvals);
        mats.push(mat);
    }
    let lik = c.re / n_points as f64 / den;
    if !lik.is_finite() {
        return Err(Error::numerical(format!("component likelihood is {lik}")));
    }
    if lik <= 0.0 {
        // numerically extinct assignment: report a floor, no useful gradient
        return Ok(1e-300f64.ln());
    }
    if let Some(grad) = grad {
        let inv_lpi = invert(&l_plus_i)
            .ok_or_else(|| Error::numerical("L + I is numerically singular"))?;
        let mut dl = Matrix::from_fn(m, m, |_, _| 0.0);
        let mut dcoef: Vec<Vec<f64>> =
            profiles.iter().map(|(coefs, _, _)| vec![0.0; coefs.len()]).collect();
        for j in 0..n_points {
            let angle = 2.0 * std::f64::consts::PI * j as f64 / n_points as f64;
            let omega = Complex64::from_polar(1.0, angle);
            let minv = invert_complex(&mats[j])
                .ok_or_else(|| Error::numerical("interpolation matrix is singular"))?;
            let s = Complex64::from_polar(1.0, -angle * a as f64) * dets[j]
                / (n_points as f64 * den * lik);
            // cotangent of the j-th matrix: s * M^{-T}
            for u in 0..m {
                for v in 0..m {
                    let g_uv = s * minv[(v, u)];
                    dl[(u, v)] += (g_uv * pvals_all[j][v]).re;
                }
            }
            for i in 0..m {
                let mut col = Complex64::new(0.0, 0.0);
                for u in 0..m {
                    col += s * minv[(i, u)] * l[(u, i)];
                }
                let mut wpow = Complex64::new(1.0, 0.0);
                for d in 0..dcoef[i].len() {
                    dcoef[i][d] += (wpow * col).re;
                    wpow *= omega;
                }
            }
        }
        // normalization term: d log lik / dL -= (L + I)^{-T}
        for u in 0..m {
            for v in 0..m {
                dl[(u, v)] -= inv_lpi[(v, u)];
            }
        }
        // L = B B^T, so dB = (dL + dL^T) B
        for u in 0..m {
            for r in 0..comp.b.cols() {
                let mut acc = 0.0;
                for v in 0..m {
                    acc += (dl[(u, v)] + dl[(v, u)]) * comp.b[(v, r)];
                }
                grad.b[(u, r)] += acc;
            }
        }
        for (gi, group) in partition.groups.iter().enumerate() {
            let (coefs, exps, z) = &profiles[gi];
            let on_mask = group
                .iter()
                .enumerate()
                .filter(|&(_, &g)| x[g])
                .fold(0usize, |acc, (li, _)| acc | 1 << li);
            let dot: f64 = dcoef[gi].iter().zip(coefs).map(|(d, co)| d * co).sum();
            for mask in 1..(1usize << group.len()) {
                let e = exps[mask - 1] / z;
                let ind = if mask & !on_mask == 0 {
                    dcoef[gi][mask.count_ones() as usize]
                } else {
                    0.0
                };
                grad.theta[gi][mask - 1] += e * (ind - dot);
            }
        }
    }
    Ok(lik.ln())
}

/// Log-likelihood of a full assignment under the mixture.
pub fn model_log_likelihood(model: &SimplePgcModel, x: &[bool]) -> Result<f64> {
    if x.len() != model.n() {
        return Err(Error::contract(format!(
            "assignment length {} does not match {} variables",
            x.len(),
            model.n()
        )));
    }
    let logw = log_softmax(&model.mixture_logits);
    let mut lls = Vec::with_capacity(model.components.len());
    for (ci, comp) in model.components.iter().enumerate() {
        let ll = component_loglik(comp, &model.partition, x, None)
            .map_err(|e| Error::numerical(format!("component {ci}: {e}")))?;
        lls.push(logw[ci] + ll);
    }
    Ok(log_sum_exp(&lls))
}

/// Mean negative log-likelihood over rows, forward only.
pub fn avg_nll(model: &SimplePgcModel, rows: &[Vec<bool>]) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::refused("cannot average over an empty split"));
    }
    let lls: Vec<f64> = rows
        .par_iter()
        .map(|x| model_log_likelihood(model, x))
        .collect::<Result<_>>()?;
    Ok(-lls.iter().sum::<f64>() / rows.len() as f64)
}

/// Mean NLL over a batch plus its gradient with respect to every parameter,
/// as a model-shaped accumulator. Per-sample terms run in parallel; the
/// reduction is a fixed-order sequential sum, so results do not depend on
/// the thread count.
pub fn nll_and_grad(
    model: &SimplePgcModel,
    batch: &[Vec<bool>],
) -> Result<(f64, SimplePgcModel)> {
    if batch.is_empty() {
        return Err(Error::refused("cannot take a gradient over an empty batch"));
    }
    let logw = log_softmax(&model.mixture_logits);
    let per_sample: Vec<Result<(f64, SimplePgcModel)>> = batch
        .par_iter()
        .map(|x| {
            let mut grad = model.zeros_like();
            let mut lls = Vec::with_capacity(model.components.len());
            let mut comp_grads = Vec::with_capacity(model.components.len());
            for (ci, comp) in model.components.iter().enumerate() {
                let mut cg = Component {
                    b: Matrix::from_fn(comp.b.rows(), comp.b.cols(), |_, _| 0.0),
                    theta: comp.theta.iter().map(|t| vec![0.0; t.len()]).collect(),
                };
                let ll = component_loglik(comp, &model.partition, x, Some(&mut cg))
                    .map_err(|e| Error::numerical(format!("component {ci}: {e}")))?;
                lls.push(logw[ci] + ll);
                comp_grads.push(cg);
            }
            let total = log_sum_exp(&lls);
            for (ci, cg) in comp_grads.into_iter().enumerate() {
                // posterior responsibility of this component for the sample
                let r = (lls[ci] - total).exp();
                let gc = &mut grad.components[ci];
                for i in 0..gc.b.rows() {
                    for j in 0..gc.b.cols() {
                        gc.b[(i, j)] -= r * cg.b[(i, j)];
                    }
                }
                for (t, ot) in gc.theta.iter_mut().zip(&cg.theta) {
                    for (v, ov) in t.iter_mut().zip(ot) {
                        *v -= r * ov;
                    }
                }
                grad.mixture_logits[ci] = logw[ci].exp() - r;
            }
            Ok((total, grad))
        })
        .collect();
    let mut grad = model.zeros_like();
    let mut nll = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for item in per_sample {
        let (ll, g) = item?;
        nll -= ll * scale;
        grad.axpy(&g, scale);
    }
    let finite = grad.pack().iter().all(|v| v.is_finite());
    if !finite || !nll.is_finite() {
        return Err(Error::numerical("nonfinite gradient or loss"));
    }
    Ok((nll, grad))
}

// ------------------------------------------------------------------------
// Training

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Largest allowed variable-group size.
    pub k: usize,
    /// Number of mixture components.
    pub c: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub weight_decay: f64,
    pub seed: u64,
    pub k_grid: Vec<usize>,
    pub c_grid: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            k: 2,
            c: 4,
            lr: 0.05,
            epochs: 100,
            batch: 256,
            weight_decay: 1e-4,
            seed: 0,
            k_grid: vec![1, 2, 5, 7],
            c_grid: vec![1, 4, 7, 10, 20],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_nll: f64,
    pub valid_nll: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Minibatch Adam on the mean NLL with L2 weight decay, selecting the
/// best-validation-NLL epoch. Deterministic under a fixed seed and thread
/// count-independent.
pub fn train(data: &Dataset, config: &TrainConfig) -> Result<(SimplePgcModel, TrainLog)> {
    if data.train.is_empty() {
        return Err(Error::refused("empty training split"));
    }
    let stats = estimate_pairwise(&data.train)?;
    let weights = pair_weights(&stats);
    let part = partition(data.n, &weights, config.k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = SimplePgcModel::init(part, config.c, &mut rng)?;
    let mut params = model.pack();
    let mut m1 = vec![0.0; params.len()];
    let mut m2 = vec![0.0; params.len()];
    let mut step = 0usize;
    let mut log = TrainLog::default();
    let mut best = (f64::INFINITY, params.clone(), 0usize);
    let mut indices: Vec<usize> = (0..data.train.len()).collect();
    for epoch in 1..=config.epochs {
        indices.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for chunk in indices.chunks(config.batch.max(1)) {
            let batch: Vec<Vec<bool>> = chunk.iter().map(|&i| data.train[i].clone()).collect();
            model.unpack(&params);
            let (nll, grad_model) = nll_and_grad(&model, &batch)?;
            epoch_loss += nll * batch.len() as f64;
            seen += batch.len();
            let mut grad = grad_model.pack();
            for (g, p) in grad.iter_mut().zip(&params) {
                *g += config.weight_decay * p;
            }
            step += 1;
            let bc1 = 1.0 - ADAM_BETA1.powi(step as i32);
            let bc2 = 1.0 - ADAM_BETA2.powi(step as i32);
            for i in 0..params.len() {
                m1[i] = ADAM_BETA1 * m1[i] + (1.0 - ADAM_BETA1) * grad[i];
                m2[i] = ADAM_BETA2 * m2[i] + (1.0 - ADAM_BETA2) * grad[i] * grad[i];
                params[i] -= config.lr * (m1[i] / bc1) / ((m2[i] / bc2).sqrt() + ADAM_EPS);
            }
        }
        let train_nll = epoch_loss / seen as f64;
        if !train_nll.is_finite() {
            return Err(Error::numerical(format!(
                "training diverged at epoch {epoch} (NLL = {train_nll})"
            )));
        }
        model.unpack(&params);
        let valid_nll = if data.valid.is_empty() {
            train_nll
        } else {
            avg_nll(&model, &data.valid)?
        };
        log.epochs.push(EpochStats { epoch, train_nll, valid_nll });
        if valid_nll < best.0 {
            best = (valid_nll, params.clone(), epoch);
        }
    }
    log.best_epoch = best.2;
    model.unpack(&best.1);
    Ok((model, log))
}

#[derive(Debug, Clone)]
pub struct GridCell {
    pub k: usize,
    pub c: usize,
    pub valid_nll: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct GridSearchResult {
    pub cells: Vec<GridCell>,
    pub best_k: usize,
    pub best_c: usize,
    pub model: SimplePgcModel,
    pub log: TrainLog,
    pub test_nll: f64,
}

/// Train every (K, C) grid cell, select by validation NLL, and report the
/// test NLL of the selected cell only. Per-cell failures are recorded and
/// the search continues.
pub fn grid_search(data: &Dataset, config: &TrainConfig) -> Result<GridSearchResult> {
    if config.k_grid.is_empty() || config.c_grid.is_empty() {
        return Err(Error::contract("empty grid"));
    }
    let mut cells = Vec::new();
    let mut best: Option<(f64, usize, usize, SimplePgcModel, TrainLog)> = None;
    for &k in &config.k_grid {
        for &c in &config.c_grid {
            let cell_config = TrainConfig { k, c, ..config.clone() };
            match train(data, &cell_config) {
                Ok((model, log)) => {
                    let valid_nll = log
                        .epochs
                        .iter()
                        .map(|e| e.valid_nll)
                        .fold(f64::INFINITY, f64::min);
                    cells.push(GridCell { k, c, valid_nll: Some(valid_nll), error: None });
                    if best.as_ref().map_or(true, |b| valid_nll < b.0) {
                        best = Some((valid_nll, k, c, model, log));
                    }
                }
                Err(e) => {
                    cells.push(GridCell { k, c, valid_nll: None, error: Some(e.to_string()) });
                }
            }
        }
    }
    let (_, best_k, best_c, model, log) =
        best.ok_or_else(|| Error::numerical("every grid cell failed"))?;
    let test_nll = if data.test.is_empty() {
        f64::NAN
    } else {
        avg_nll(&model, &data.test)?
    };
    Ok(GridSearchResult { cells, best_k, best_c, model, log, test_nll })
}

// ------------------------------------------------------------------------
// Checkpoints

/// Versioned textual checkpoint. Numbers use Rust's shortest round-trip
/// float formatting, so reloads are bit-exact.
pub fn checkpoint_to_text(model: &SimplePgcModel) -> String {
    let mut out = String::new();
    let m = model.partition.groups.len();
    writeln!(out, "simplepgc 1").unwrap();
    writeln!(out, "n {}", model.n()).unwrap();
    writeln!(out, "groups {m}").unwrap();
    for group in &model.partition.groups {
        out.push('g');
        for &v in group {
            write!(out, " {}", v + 1).unwrap();
        }
        out.push('\n');
    }
    writeln!(
        out,
        "components {} {}",
        model.components.len(),
        model.components.first().map(|c| c.b.cols()).unwrap_or(0)
    )
    .unwrap();
    for comp in &model.components {
        out.push('b');
        for i in 0..comp.b.rows() {
            for j in 0..comp.b.cols() {
                write!(out, " {}", comp.b[(i, j)]).unwrap();
            }
        }
        out.push('\n');
        for t in &comp.theta {
            out.push('t');
            for v in t {
                write!(out, " {v}").unwrap();
            }
            out.push('\n');
        }
    }
    out.push('w');
    for l in &model.mixture_logits {
        write!(out, " {l}").unwrap();
    }
    out.push('\n');
    out
}

pub fn checkpoint_from_text(text: &str) -> Result<SimplePgcModel> {
    use crate::circuit::parse_field;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = |what: &str| {
        lines
            .next()
            .ok_or_else(|| Error::Parse { line: 0, msg: format!("missing {what} line") })
    };
    let (ln, header) = next("header")?;
    if header.trim() != "simplepgc 1" {
        return Err(Error::Parse { line: ln, msg: "expected header `simplepgc 1`".into() });
    }
    let parse_tagged = |ln: usize, line: &str, tag: &str| -> Result<Vec<String>> {
        let mut toks = line.split_whitespace();
        if toks.next() != Some(tag) {
            return Err(Error::Parse { line: ln, msg: format!("expected a `{tag}` line") });
        }
        Ok(toks.map(str::to_string).collect())
    };
    let (ln, line) = next("n")?;
    let n: usize = parse_field(
        parse_tagged(ln, line, "n")?
            .first()
            .ok_or(Error::Parse { line: ln, msg: "missing variable count".into() })?,
        ln,
    )?;
    let (ln, line) = next("groups")?;
    let m: usize = parse_field(
        parse_tagged(ln, line, "groups")?
            .first()
            .ok_or(Error::Parse { line: ln, msg: "missing group count".into() })?,
        ln,
    )?;
    let mut groups = Vec::with_capacity(m);
    for _ in 0..m {
        let (ln, line) = next("group")?;
        let toks = parse_tagged(ln, line, "g")?;
        let mut group = Vec::with_capacity(toks.len());
        for t in toks {
            let v: usize = parse_field(&t, ln)?;
            if v == 0 {
                return Err(Error::Parse { line: ln, msg: "variables are 1-based".into() });
            }
            group.push(v - 1);
        }
        groups.push(group);
    }
    let partition = GroupPartition::new(n, groups)?;
    let (ln, line) = next("components")?;
    let toks = parse_tagged(ln, line, "components")?;
    if toks.len() != 2 {
        return Err(Error::Parse { line: ln, msg: "expected `components <C> <r>`".into() });
    }
    let c: usize = parse_field(&toks[0], ln)?;
    let r: usize = parse_field(&toks[1], ln)?;
    let mut components = Vec::with_capacity(c);
    for _ in 0..c {
        let (ln, line) = next("kernel factor")?;
        let toks = parse_tagged(ln, line, "b")?;
        if toks.len() != m * r {
            return Err(Error::Parse {
                line: ln,
                msg: format!("expected {} kernel entries, got {}", m * r, toks.len()),
            });
        }
        let vals: Vec<f64> =
            toks.iter().map(|t| parse_field(t, ln)).collect::<Result<_>>()?;
        let b = Matrix::from_vec(m, r, vals);
        let mut theta = Vec::with_capacity(m);
        for group in &partition.groups {
            let (ln, line) = next("leaf parameters")?;
            let toks = parse_tagged(ln, line, "t")?;
            let want = (1usize << group.len()) - 1;
            if toks.len() != want {
                return Err(Error::Parse {
                    line: ln,
                    msg: format!("expected {} leaf parameters, got {}", want, toks.len()),
                });
            }
            theta.push(toks.iter().map(|t| parse_field(t, ln)).collect::<Result<_>>()?);
        }
        components.push(Component { b, theta });
    }
    let (ln, line) = next("logits")?;
    let toks = parse_tagged(ln, line, "w")?;
    if toks.len() != c {
        return Err(Error::Parse {
            line: ln,
            msg: format!("expected {c} mixture logits, got {}", toks.len()),
        });
    }
    let mixture_logits = toks.iter().map(|t| parse_field(t, ln)).collect::<Result<_>>()?;
    Ok(SimplePgcModel { partition, components, mixture_logits })
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    /// Joint table of the mixture by enumeration, truth-table order.
    pub fn model_joint(model: &SimplePgcModel) -> Vec<f64> {
        let n = model.n();
        (0..1usize << n)
            .map(|row| {
                let x: Vec<bool> = (0..n).map(|i| (row >> (n - 1 - i)) & 1 == 1).collect();
                model_log_likelihood(model, &x).unwrap().exp()
            })
            .collect()
    }

    /// Draw rows from a model's joint by inverse-CDF over the truth table.
    pub fn sample_rows(
        model: &SimplePgcModel,
        count: usize,
        rng: &mut impl Rng,
    ) -> Vec<Vec<bool>> {
        let n = model.n();
        let joint = model_joint(model);
        let mut cdf = Vec::with_capacity(joint.len());
        let mut acc = 0.0;
        for p in &joint {
            acc += p;
            cdf.push(acc);
        }
        (0..count)
            .map(|_| {
                let u: f64 = rng.gen_range(0.0..acc);
                let row = cdf.partition_point(|&c| c < u).min(joint.len() - 1);
                (0..n).map(|i| (row >> (n - 1 - i)) & 1 == 1).collect()
            })
            .collect()
    }

    pub fn random_model(n: usize, k: usize, c: usize, rng: &mut ChaCha8Rng) -> SimplePgcModel {
        let mut groups = Vec::new();
        let mut next = 0;
        while next < n {
            let size = k.min(n - next);
            groups.push((next..next + size).collect::<Vec<_>>());
            next += size;
        }
        let part = GroupPartition::new(n, groups).unwrap();
        let mut model = SimplePgcModel::init(part, c, rng).unwrap();
        // scatter the parameters so gradients are not near a symmetric point
        let noise = Normal::new(0.0, 0.3).unwrap();
        for comp in &mut model.components {
            for i in 0..comp.b.rows() {
                for j in 0..comp.b.cols() {
                    comp.b[(i, j)] += noise.sample(rng);
                }
            }
            for t in &mut comp.theta {
                for v in t.iter_mut() {
                    *v += noise.sample(rng);
                }
            }
        }
        for l in &mut model.mixture_logits {
            *l += noise.sample(rng);
        }
        model
    }
}
