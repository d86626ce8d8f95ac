//! Initial particle sets: synthetic truths, perturbed priors and the
//! bootstrap linear-regression sampler.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{contract, Result};
use crate::graph::{ordered_pairs, GraphEdit, WeightedDag};
use crate::posterior::ParticleSet;
use crate::rng::sub_seeds;
use crate::scalar::Scalar;

/// Random DAG: edges follow a uniformly random node order, each forward
/// pair present with probability `edge_prob`, weights `U[low, high)`.
pub fn erdos_renyi_dag<T: Scalar, R: Rng + ?Sized>(
    d: usize,
    edge_prob: f64,
    weight_low: f64,
    weight_high: f64,
    rng: &mut R,
) -> Result<WeightedDag<T>> {
    if d == 0 {
        return Err(contract("a graph needs at least one node"));
    }
    if !(0.0..=1.0).contains(&edge_prob) {
        return Err(contract("edge_prob must lie in [0, 1]"));
    }
    if !(weight_low < weight_high) {
        return Err(contract("weight_low must be below weight_high"));
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.shuffle(rng);
    let mut w = vec![T::zero(); d * d];
    for a in 0..d {
        for b in a + 1..d {
            if rng.random_bool(edge_prob) {
                w[order[a] * d + order[b]] = T::of(rng.random_range(weight_low..weight_high));
            }
        }
    }
    WeightedDag::from_dense(d, w)
}

/// Noise applied to a reference graph to build a perturbed prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbParams {
    pub flip_prob: f64,
    pub addremove_prob: f64,
    pub weight_noise_sd: f64,
    /// Weights of added edges are drawn from `U[add_low, add_high)`.
    pub add_low: f64,
    pub add_high: f64,
}

impl Default for PerturbParams {
    fn default() -> Self {
        Self { flip_prob: 0.10, addremove_prob: 0.05, weight_noise_sd: 0.20, add_low: 0.5, add_high: 1.5 }
    }
}

impl PerturbParams {
    pub fn none() -> Self {
        Self { flip_prob: 0.0, addremove_prob: 0.0, weight_noise_sd: 0.0, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        let unit = |p: f64| (0.0..=1.0).contains(&p);
        if !unit(self.flip_prob) || !unit(self.addremove_prob) {
            return Err(contract("perturbation probabilities must lie in [0, 1]"));
        }
        if !(self.weight_noise_sd >= 0.0) || !(self.add_low < self.add_high) {
            return Err(contract("need weight_noise_sd >= 0 and add_low < add_high"));
        }
        Ok(())
    }
}

fn perturb_one<T: Scalar>(w_star: &WeightedDag<T>, p: &PerturbParams, seed: u64) -> WeightedDag<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = w_star.clone();
    let originals: Vec<(usize, usize)> = w_star.edges().map(|(i, j, _)| (i, j)).collect();
    for (i, j) in originals {
        if rng.random_bool(p.flip_prob) {
            let e = GraphEdit::flip(i, j);
            if g.edit_keeps_acyclic(&e) {
                g.apply_edit_in_place(&e).expect("checked edit");
            }
        }
    }
    for (i, j) in ordered_pairs(g.d()) {
        if rng.random_bool(p.addremove_prob) {
            let e = if g.has_edge(i, j) {
                GraphEdit::remove(i, j)
            } else {
                GraphEdit::add(i, j, T::of(rng.random_range(p.add_low..p.add_high)))
            };
            if g.edit_keeps_acyclic(&e) {
                g.apply_edit_in_place(&e).expect("checked edit");
            }
        }
    }
    if p.weight_noise_sd > 0.0 {
        let noise = Normal::new(0.0, p.weight_noise_sd).expect("finite sd");
        let edges: Vec<_> = g.edges().collect();
        for (i, j, w) in edges {
            let mut v = w.as_f64() + noise.sample(&mut rng);
            while T::of(v) == T::zero() {
                v = w.as_f64() + noise.sample(&mut rng);
            }
            g.apply_edit_in_place(&GraphEdit::perturb(i, j, T::of(v))).expect("weight change keeps support");
        }
    }
    g
}

/// `s` noisy copies of `w_star` with uniform weights. Flips come first,
/// then additions and removals, then weight noise; edits that would close
/// a cycle are skipped.
pub fn perturbed_prior<T: Scalar, R: Rng + ?Sized>(
    w_star: &WeightedDag<T>,
    params: &PerturbParams,
    s: usize,
    rng: &mut R,
) -> Result<ParticleSet<T>> {
    params.validate()?;
    if s == 0 {
        return Err(contract("need at least one particle"));
    }
    let seeds = sub_seeds(rng, s);
    let particles: Vec<_> = seeds.par_iter().map(|&seed| perturb_one(w_star, params, seed)).collect();
    ParticleSet::uniform(particles)
}

/// Scale of installed edge weights in the bootstrap prior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefScale {
    /// Coefficients of the regression on standardized columns.
    #[default]
    Standardized,
    /// Standardized coefficients mapped back to the original units.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapParams {
    pub max_parents: usize,
    pub corr_k: usize,
    pub ridge: f64,
    pub coef_threshold: f64,
    pub coef_scale: CoefScale,
}

impl Default for BootstrapParams {
    fn default() -> Self {
        Self { max_parents: 3, corr_k: 6, ridge: 1e-3, coef_threshold: 1e-3, coef_scale: CoefScale::Standardized }
    }
}

impl BootstrapParams {
    fn validate(&self) -> Result<()> {
        if self.max_parents < 1 || self.corr_k < self.max_parents {
            return Err(contract("need max_parents >= 1 and corr_k >= max_parents"));
        }
        if !(self.ridge > 0.0) || !(self.coef_threshold >= 0.0) {
            return Err(contract("need ridge > 0 and coef_threshold >= 0"));
        }
        Ok(())
    }
}

/// Zero-mean unit-variance copy; constant columns become all zeros.
/// Returns the column and its standard deviation.
fn standardize(x: &[f64]) -> (Vec<f64>, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
    let sd = var.sqrt();
    if !(sd > 0.0) || !sd.is_finite() {
        return (vec![0.0; x.len()], 0.0);
    }
    (x.iter().map(|v| (v - m) / sd).collect(), sd)
}

/// Solves `a x = b` for symmetric positive definite `a` (row-major `p x p`).
fn cholesky_solve(mut a: Vec<f64>, mut b: Vec<f64>, p: usize) -> Vec<f64> {
    for k in 0..p {
        let mut diag = a[k * p + k];
        for m in 0..k {
            diag -= a[k * p + m] * a[k * p + m];
        }
        let diag = diag.max(f64::MIN_POSITIVE).sqrt();
        a[k * p + k] = diag;
        for r in k + 1..p {
            let mut v = a[r * p + k];
            for m in 0..k {
                v -= a[r * p + m] * a[k * p + m];
            }
            a[r * p + k] = v / diag;
        }
    }
    for r in 0..p {
        for m in 0..r {
            b[r] -= a[r * p + m] * b[m];
        }
        b[r] /= a[r * p + r];
    }
    for r in (0..p).rev() {
        for m in r + 1..p {
            b[r] -= a[m * p + r] * b[m];
        }
        b[r] /= a[r * p + r];
    }
    b
}

/// Ridge regression of `y` on the columns `parents` (all standardized).
fn ridge_fit(cols: &[Vec<f64>], parents: &[usize], y: &[f64], ridge: f64) -> Vec<f64> {
    let p = parents.len();
    let mut a = vec![0.0; p * p];
    let mut b = vec![0.0; p];
    for (r, &pr) in parents.iter().enumerate() {
        b[r] = cols[pr].iter().zip(y).map(|(u, v)| u * v).sum();
        for (c, &pc) in parents.iter().enumerate().take(r + 1) {
            let v: f64 = cols[pr].iter().zip(&cols[pc]).map(|(u, v)| u * v).sum();
            a[r * p + c] = v;
            a[c * p + r] = v;
        }
        a[r * p + r] += ridge;
    }
    cholesky_solve(a, b, p)
}

/// Indices into `items` of the `k` largest `|score|`, ties by position.
fn top_abs(scores: &[(usize, f64)], k: usize) -> Vec<(usize, f64)> {
    let mut v = scores.to_vec();
    v.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));
    v.truncate(k);
    v
}

fn bootstrap_one<T: Scalar>(x: &DataMatrix, p: &BootstrapParams, seed: u64) -> WeightedDag<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, d) = (x.n(), x.d());
    let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    let mut cols = Vec::with_capacity(d);
    let mut sds = Vec::with_capacity(d);
    for c in 0..d {
        let raw: Vec<f64> = rows.iter().map(|&r| x.get(r, c)).collect();
        let (z, sd) = standardize(&raw);
        cols.push(z);
        sds.push(sd);
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.shuffle(&mut rng);

    let nf = n as f64;
    let mut w = vec![T::zero(); d * d];
    for (pos, &target) in order.iter().enumerate() {
        if pos == 0 {
            continue;
        }
        let corr: Vec<(usize, f64)> = order[..pos]
            .iter()
            .map(|&c| (c, cols[c].iter().zip(&cols[target]).map(|(u, v)| u * v).sum::<f64>() / nf))
            .collect();
        let screened = top_abs(&corr, p.corr_k);
        let parents: Vec<usize> = top_abs(&screened, p.max_parents).into_iter().map(|(c, _)| c).collect();
        let beta = ridge_fit(&cols, &parents, &cols[target], p.ridge);
        for (&par, &b) in parents.iter().zip(&beta) {
            let coef = match p.coef_scale {
                CoefScale::Standardized => b,
                CoefScale::Raw if sds[par] > 0.0 => b * sds[target] / sds[par],
                CoefScale::Raw => 0.0,
            };
            if coef.abs() > p.coef_threshold && T::of(coef) != T::zero() {
                w[par * d + target] = T::of(coef);
            }
        }
    }
    let g = WeightedDag::from_dense(d, w).expect("edges follow a fixed order");
    g.with_names(x.names().to_vec()).expect("one name per column")
}

/// Bootstrap linear DAG sampler over observational data. Each particle
/// resamples the rows, draws a variable order, and regresses each variable
/// on its most correlated predecessors.
pub fn bootstrap_linear_prior<T: Scalar, R: Rng + ?Sized>(
    x: &DataMatrix,
    params: &BootstrapParams,
    s: usize,
    rng: &mut R,
) -> Result<ParticleSet<T>> {
    params.validate()?;
    if x.n() < 2 || x.d() == 0 {
        return Err(contract("bootstrap prior needs at least two rows and one column"));
    }
    if s == 0 {
        return Err(contract("need at least one particle"));
    }
    let seeds = sub_seeds(rng, s);
    let particles: Vec<_> = seeds.par_iter().map(|&seed| bootstrap_one(x, params, seed)).collect();
    ParticleSet::uniform(particles)
}
