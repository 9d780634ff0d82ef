//! Dictionary-learning + orthogonal-matching-pursuit completion baseline.
//!
//! Training actions are vectorized into rows of a matrix `D`; the dictionary
//! `V` (atoms as unit-norm rows) comes from online matrix factorization
//! `min 0.5 ||D - U V||^2 + alpha ||U||_1`, alternating a sparse-coding step
//! for `U` with a least-squares atom update for `V`. Completion encodes the
//! observed coordinates of a test vector with OMP and reads the full
//! reconstruction off the dictionary.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::ActionSequence;
use crate::nn::array::Tensor;
use crate::nn::checkpoint;
use crate::util::derive_seed;
use crate::{Error, Result};

/// A learned dictionary: `atoms x dim`, rows unit Euclidean norm.
#[derive(Clone, Debug)]
pub struct Dictionary {
    pub atoms: usize,
    pub dim: usize,
    /// Row-major `atoms x dim`.
    pub v: Vec<f64>,
}

impl Dictionary {
    #[inline]
    pub fn atom(&self, k: usize) -> &[f64] {
        &self.v[k * self.dim..(k + 1) * self.dim]
    }

    pub fn check_unit_norms(&self, tol: f64) -> Result<()> {
        for k in 0..self.atoms {
            let norm = l2(self.atom(k));
            if (norm - 1.0).abs() > tol {
                return Err(Error::Numeric(format!("atom {k} has norm {norm}, expected 1")));
            }
        }
        Ok(())
    }

    /// Same manifest + f32-blob format as model checkpoints. Atoms are
    /// renormalized to exactly unit norm after the f32 round trip.
    pub fn save(&self, path: &Path) -> Result<()> {
        let data: Vec<f32> = self.v.iter().map(|&x| x as f32).collect();
        let tensor = Tensor::from_vec(&[self.atoms, self.dim], data)?;
        let mut meta = BTreeMap::new();
        meta.insert("model".to_string(), "dictionary".to_string());
        checkpoint::save_entries(path, &[("dictionary.atoms", &tensor, false)], &meta)
    }

    pub fn load(path: &Path) -> Result<Dictionary> {
        let (entries, _) = checkpoint::load_entries(path)?;
        let entry = entries
            .iter()
            .find(|e| e.name == "dictionary.atoms")
            .ok_or_else(|| Error::Data(format!("{}: no dictionary entry", path.display())))?;
        let shape = entry.tensor.shape();
        if shape.len() != 2 {
            return Err(Error::Data(format!("{}: dictionary must be rank 2", path.display())));
        }
        let (atoms, dim) = (shape[0], shape[1]);
        let mut v: Vec<f64> = entry.tensor.data().iter().map(|&x| x as f64).collect();
        for k in 0..atoms {
            let row = &mut v[k * dim..(k + 1) * dim];
            let norm = l2(row);
            if norm > 0.0 {
                row.iter_mut().for_each(|x| *x /= norm);
            }
        }
        Ok(Dictionary { atoms, dim, v })
    }
}

/// A sparse code over the dictionary: coefficient per atom, mostly zero.
#[derive(Clone, Debug)]
pub struct SparseCode {
    pub coefficients: Vec<f64>,
    /// Selected atoms in selection order.
    pub support: Vec<usize>,
    /// Final residual norm on the observed coordinates.
    pub residual_norm: f64,
    /// Set when a rank-deficient selection forced an early stop.
    pub rank_deficient: bool,
}

impl SparseCode {
    pub fn sparsity(&self) -> usize {
        self.support.len()
    }
}

/// Sparse-coding step used inside dictionary learning.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "method")]
pub enum CodingStep {
    /// Coordinate-descent lasso with the factorization's own alpha.
    Lasso,
    /// OMP with a fixed sparsity budget.
    Omp { sparsity: usize },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DictLearnConfig {
    pub atoms: usize,
    pub alpha: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub seed: u64,
    pub coder: CodingStep,
}

impl Default for DictLearnConfig {
    fn default() -> Self {
        DictLearnConfig {
            atoms: 500,
            alpha: 1.0,
            batch_size: 10,
            iterations: 500,
            seed: 0,
            coder: CodingStep::Lasso,
        }
    }
}

pub struct DictLearnOutcome {
    pub dictionary: Dictionary,
    /// Mini-batch objective (0.5 residual^2 + alpha * l1) per iteration.
    pub objective_log: Vec<f64>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct OmpConfig {
    /// Maximum atoms to select.
    pub sparsity: usize,
    /// Stop when the observed residual norm falls below this.
    pub residual_tol: f64,
}

impl Default for OmpConfig {
    fn default() -> Self {
        OmpConfig { sparsity: 20, residual_tol: 1e-4 }
    }
}

fn l2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Learn a dictionary from vectorized training rows (each `dim` long).
pub fn learn_dictionary(rows: &[Vec<f64>], cfg: &DictLearnConfig) -> Result<DictLearnOutcome> {
    if rows.is_empty() {
        return Err(Error::Data("dictionary learning needs a non-empty training set".into()));
    }
    let dim = rows[0].len();
    if rows.iter().any(|r| r.len() != dim) {
        return Err(Error::Shape("training rows have inconsistent lengths".into()));
    }
    if cfg.atoms == 0 || cfg.batch_size == 0 || cfg.iterations == 0 {
        return Err(Error::Config("dictionary config has a zero-sized field".into()));
    }
    let mut warnings = Vec::new();
    if rows.len() < cfg.atoms {
        warnings.push(format!(
            "training set has {} rows for {} atoms; at least as many rows as atoms is recommended",
            rows.len(),
            cfg.atoms
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "dict-init"));
    let n = cfg.atoms;
    let mut v = vec![0.0f64; n * dim];
    for k in 0..n {
        // seed atoms from training rows (cycled), unit-normalized; degenerate
        // rows fall back to random directions
        let row = &rows[k % rows.len()];
        let norm = l2(row);
        let atom = &mut v[k * dim..(k + 1) * dim];
        if norm > 1e-12 {
            for (a, r) in atom.iter_mut().zip(row) {
                *a = r / norm;
            }
            // break exact duplicates with a small seeded rotation
            if k >= rows.len() {
                for a in atom.iter_mut() {
                    *a += rng.gen_range(-0.1..0.1);
                }
                let nn = l2(atom);
                atom.iter_mut().for_each(|a| *a /= nn);
            }
        } else {
            random_unit(atom, &mut rng);
        }
    }
    let mut dict = Dictionary { atoms: n, dim, v };

    // sufficient statistics of the factorization
    let mut stat_a = vec![0.0f64; n * n];
    let mut stat_b = vec![0.0f64; dim * n];
    let mut objective_log = Vec::with_capacity(cfg.iterations);
    let mut batch_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "dict-batches"));

    for _it in 0..cfg.iterations {
        let mut batch_obj = 0.0;
        for _ in 0..cfg.batch_size {
            let ri = batch_rng.gen_range(0..rows.len());
            let x = &rows[ri];
            let (theta, support, obj) = code_row(x, &dict, cfg)?;
            batch_obj += obj;
            for &k in &support {
                for &k2 in &support {
                    stat_a[k * n + k2] += theta[k] * theta[k2];
                }
            }
            for &k in &support {
                let t = theta[k];
                for (d, xv) in x.iter().enumerate() {
                    stat_b[d * n + k] += xv * t;
                }
            }
        }
        objective_log.push(batch_obj / cfg.batch_size as f64);

        // block-coordinate atom update with renormalization
        for k in 0..n {
            let akk = stat_a[k * n + k];
            if akk <= 1e-12 {
                continue;
            }
            let mut u = vec![0.0f64; dim];
            for (d, uv) in u.iter_mut().enumerate() {
                // b_k - V^T a_k, accumulated over atoms
                let mut s = stat_b[d * n + k];
                for k2 in 0..n {
                    s -= dict.v[k2 * dim + d] * stat_a[k2 * n + k];
                }
                *uv = dict.v[k * dim + d] + s / akk;
            }
            let norm = l2(&u);
            let atom = &mut dict.v[k * dim..(k + 1) * dim];
            if norm > 1e-12 {
                for (a, uv) in atom.iter_mut().zip(&u) {
                    *a = uv / norm;
                }
            } else {
                random_unit(atom, &mut rng);
            }
        }
    }
    dict.check_unit_norms(1e-9)?;
    Ok(DictLearnOutcome { dictionary: dict, objective_log, warnings })
}

fn random_unit(out: &mut [f64], rng: &mut ChaCha8Rng) {
    loop {
        for o in out.iter_mut() {
            *o = rng.gen_range(-1.0..1.0);
        }
        let norm = l2(out);
        if norm > 1e-6 {
            out.iter_mut().for_each(|o| *o /= norm);
            return;
        }
    }
}

/// One sparse-coding step; returns (dense coefficients, support, objective).
fn code_row(x: &[f64], dict: &Dictionary, cfg: &DictLearnConfig) -> Result<(Vec<f64>, Vec<usize>, f64)> {
    let theta = match cfg.coder {
        CodingStep::Lasso => lasso_cd(x, dict, cfg.alpha, 30, 1e-8),
        CodingStep::Omp { sparsity } => {
            let code = omp_encode(x, dict, None, &OmpConfig { sparsity, residual_tol: 1e-8 })?;
            code.coefficients
        }
    };
    let support: Vec<usize> = theta
        .iter()
        .enumerate()
        .filter(|(_, t)| **t != 0.0)
        .map(|(k, _)| k)
        .collect();
    let mut resid = x.to_vec();
    for &k in &support {
        let t = theta[k];
        for (r, a) in resid.iter_mut().zip(dict.atom(k)) {
            *r -= t * a;
        }
    }
    let l1: f64 = theta.iter().map(|t| t.abs()).sum();
    let obj = 0.5 * resid.iter().map(|r| r * r).sum::<f64>() + cfg.alpha * l1;
    Ok((theta, support, obj))
}

/// Coordinate-descent lasso on unit-norm atoms:
/// `min 0.5 ||x - V^T theta||^2 + alpha ||theta||_1`.
fn lasso_cd(x: &[f64], dict: &Dictionary, alpha: f64, max_sweeps: usize, tol: f64) -> Vec<f64> {
    let n = dict.atoms;
    let mut theta = vec![0.0f64; n];
    let mut resid = x.to_vec();
    for _ in 0..max_sweeps {
        let mut max_delta = 0.0f64;
        for k in 0..n {
            let atom = dict.atom(k);
            // rho = <atom, resid> + theta_k (atoms are unit norm)
            let rho = dot(atom, &resid) + theta[k];
            let new = soft_threshold(rho, alpha);
            let delta = theta[k] - new;
            if delta != 0.0 {
                for (r, a) in resid.iter_mut().zip(atom) {
                    *r += delta * a;
                }
                theta[k] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        if max_delta < tol {
            break;
        }
    }
    theta
}

#[inline]
fn soft_threshold(x: f64, alpha: f64) -> f64 {
    if x > alpha {
        x - alpha
    } else if x < -alpha {
        x + alpha
    } else {
        0.0
    }
}

/// Greedy OMP on the observed coordinates of `y`.
///
/// `observed`, when given, flags which coordinates of `y` are real
/// measurements; atoms are restricted to that support for both correlation
/// and the least-squares refits, so zero-filled rows cannot bias selection.
pub fn omp_encode(
    y: &[f64],
    dict: &Dictionary,
    observed: Option<&[bool]>,
    cfg: &OmpConfig,
) -> Result<SparseCode> {
    if y.len() != dict.dim {
        return Err(Error::Shape(format!(
            "omp: signal has {} coordinates, dictionary has {}",
            y.len(),
            dict.dim
        )));
    }
    if cfg.sparsity > dict.atoms {
        return Err(Error::Config(format!(
            "omp: sparsity {} exceeds {} atoms",
            cfg.sparsity,
            dict.atoms
        )));
    }
    if let Some(obs) = observed {
        if obs.len() != dict.dim {
            return Err(Error::Shape(format!(
                "omp: observation mask has {} coordinates, dictionary has {}",
                obs.len(),
                dict.dim
            )));
        }
    }
    let obs_idx: Vec<usize> = match observed {
        Some(obs) => (0..dict.dim).filter(|&i| obs[i]).collect(),
        None => (0..dict.dim).collect(),
    };
    if obs_idx.is_empty() {
        return Err(Error::Data("omp: no observed coordinates".into()));
    }
    let y_obs: Vec<f64> = obs_idx.iter().map(|&i| y[i]).collect();
    // atoms restricted to the observed support
    let restricted: Vec<Vec<f64>> = (0..dict.atoms)
        .map(|k| obs_idx.iter().map(|&i| dict.atom(k)[i]).collect())
        .collect();

    let mut residual = y_obs.clone();
    let mut support: Vec<usize> = Vec::new();
    let mut coefficients = vec![0.0f64; dict.atoms];
    let mut rank_deficient = false;

    while support.len() < cfg.sparsity && l2(&residual) > cfg.residual_tol {
        // most correlated unselected atom
        let mut best = None;
        let mut best_corr = 0.0f64;
        for k in 0..dict.atoms {
            if support.contains(&k) {
                continue;
            }
            let c = dot(&restricted[k], &residual).abs();
            if c > best_corr {
                best_corr = c;
                best = Some(k);
            }
        }
        let Some(k_new) = best else { break };
        if best_corr <= 1e-14 {
            break;
        }
        support.push(k_new);

        match least_squares_on(&restricted, &support, &y_obs) {
            Some(theta_s) => {
                residual = y_obs.clone();
                for (si, &k) in support.iter().enumerate() {
                    for (r, a) in residual.iter_mut().zip(&restricted[k]) {
                        *r -= theta_s[si] * a;
                    }
                }
                for c in coefficients.iter_mut() {
                    *c = 0.0;
                }
                for (si, &k) in support.iter().enumerate() {
                    coefficients[k] = theta_s[si];
                }
            }
            None => {
                // rank-deficient selection: drop the new atom and stop
                support.pop();
                rank_deficient = true;
                break;
            }
        }
    }
    Ok(SparseCode { coefficients, support, residual_norm: l2(&residual), rank_deficient })
}

/// Normal-equation least squares over the selected atoms; `None` when the
/// Gram matrix is numerically rank-deficient.
fn least_squares_on(restricted: &[Vec<f64>], support: &[usize], y: &[f64]) -> Option<Vec<f64>> {
    let s = support.len();
    let mut gram = vec![0.0f64; s * s];
    let mut rhs = vec![0.0f64; s];
    for (i, &ki) in support.iter().enumerate() {
        rhs[i] = dot(&restricted[ki], y);
        for (j, &kj) in support.iter().enumerate() {
            gram[i * s + j] = dot(&restricted[ki], &restricted[kj]);
        }
    }
    // Cholesky with a rank-deficiency guard
    let mut l = vec![0.0f64; s * s];
    let scale = (0..s).map(|i| gram[i * s + i].abs()).fold(0.0f64, f64::max).max(1.0);
    for i in 0..s {
        for j in 0..=i {
            let mut sum = gram[i * s + j];
            for k in 0..j {
                sum -= l[i * s + k] * l[j * s + k];
            }
            if i == j {
                if sum <= 1e-12 * scale {
                    return None;
                }
                l[i * s + i] = sum.sqrt();
            } else {
                l[i * s + j] = sum / l[j * s + j];
            }
        }
    }
    // forward/back substitution
    let mut w = vec![0.0f64; s];
    for i in 0..s {
        let mut sum = rhs[i];
        for k in 0..i {
            sum -= l[i * s + k] * w[k];
        }
        w[i] = sum / l[i * s + i];
    }
    let mut theta = vec![0.0f64; s];
    for i in (0..s).rev() {
        let mut sum = w[i];
        for k in i + 1..s {
            sum -= l[k * s + i] * theta[k];
        }
        theta[i] = sum / l[i * s + i];
    }
    Some(theta)
}

/// Linear reconstruction from a sparse code: `x_hat = sum_k theta_k V_k`.
pub fn sc_reconstruct(code: &SparseCode, dict: &Dictionary) -> Vec<f64> {
    let mut out = vec![0.0f64; dict.dim];
    for &k in &code.support {
        let t = code.coefficients[k];
        for (o, a) in out.iter_mut().zip(dict.atom(k)) {
            *o += t * a;
        }
    }
    out
}

/// Vectorize an action (row-major `3J x N` coordinates) for the dictionary.
pub fn vectorize_sequence(seq: &ActionSequence) -> Vec<f64> {
    seq.coords().to_vec()
}

/// Rebuild an action from a reconstructed vector.
pub fn devectorize_sequence(v: Vec<f64>, joints: usize, frames: usize) -> Result<ActionSequence> {
    ActionSequence::from_coords(joints, frames, v)
}
