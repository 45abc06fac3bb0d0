//! Shapley attributions for a black-box predictor.
//!
//! A coalition `S` of features is scored by the interventional value
//! `v(S) = mean_b f(x_S, b_{not S})`: features in `S` take the explained
//! instance's values, the rest come from each background row in turn.
//!
//! [`exact_shapley`] enumerates every coalition. [`kernel_shap`] fits the
//! additive model `g(z) = phi_0 + sum_j phi_j z_j` to coalition values by
//! weighted least squares under the Shapley kernel
//! `pi(z) = (M - 1) / (C(M, |z|) |z| (M - |z|))`. The empty and full
//! coalitions carry infinite weight and are imposed as constraints instead:
//! `phi_0 = v(empty)` and `sum_j phi_j = f(x) - phi_0`, the latter by
//! eliminating the last attribution from the regression.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::FlowTable;
use crate::error::{Error, Result};
use crate::predictor::Predictor;
use crate::rng::{derive_seed, derive_seed_bytes, SeededRng};
use crate::scalar::Scalar;

/// Largest feature count [`exact_shapley`] accepts (2^20 coalition values).
pub const MAX_EXACT_FEATURES: usize = 20;
/// Largest feature count for which `n_samples = 0` enumerates every coalition.
pub const MAX_ENUMERATED_FEATURES: usize = 15;
/// Added to the diagonal of the normal equations.
pub const RIDGE: f64 = 1e-10;
const MAX_ATTEMPTS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapExplanation<T> {
    pub feature_names: Vec<String>,
    pub feature_values: Vec<T>,
    pub phi: Vec<T>,
    pub base_value: T,
    pub prediction: T,
}

impl<T: Scalar> ShapExplanation<T> {
    /// `base_value + sum(phi) - prediction`.
    pub fn efficiency_residual(&self) -> T {
        self.base_value + self.phi.iter().copied().sum::<T>() - self.prediction
    }

    pub fn n_features(&self) -> usize {
        self.phi.len()
    }
}

/// Interventional coalition value of one instance against a background set.
pub struct InterventionalValue<'a, T, M: ?Sized> {
    model: &'a M,
    x: &'a [T],
    background: &'a [Vec<T>],
}

impl<'a, T: Scalar, M: Predictor<T> + ?Sized> InterventionalValue<'a, T, M> {
    pub fn new(model: &'a M, x: &'a [T], background: &'a [Vec<T>]) -> Result<Self> {
        if background.is_empty() {
            return Err(Error::invalid("background must have at least one row"));
        }
        if let Some(row) = background.iter().find(|r| r.len() != x.len()) {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: row.len(),
            });
        }
        Ok(Self { model, x, background })
    }

    /// Mean model output over background rows with the coalition's features
    /// replaced by the instance's values.
    pub fn value(&self, coalition: &[bool]) -> T {
        let mut hybrid = self.x.to_vec();
        let mut total = T::zero();
        for row in self.background {
            for (j, h) in hybrid.iter_mut().enumerate() {
                *h = if coalition[j] { self.x[j] } else { row[j] };
            }
            total += self.model.predict(&hybrid);
        }
        total / T::lit(self.background.len() as f64)
    }
}

fn mask_to_coalition(mask: usize, p: usize) -> Vec<bool> {
    (0..p).map(|j| mask >> j & 1 == 1).collect()
}

/// `n choose k` as a float.
fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Shapley values by full enumeration of the `2^p` coalitions:
/// `phi_j = sum_{S not containing j} |S|! (p - |S| - 1)! / p! * (v(S + j) - v(S))`.
pub fn exact_shapley<T, F>(value_fn: F, p: usize) -> Result<Vec<T>>
where
    T: Scalar,
    F: Fn(&[bool]) -> T + Sync,
{
    if p == 0 || p > MAX_EXACT_FEATURES {
        return Err(Error::invalid(format!(
            "exact enumeration supports 1..={MAX_EXACT_FEATURES} features, got {p}"
        )));
    }
    let values: Vec<T> = (0..1usize << p)
        .into_par_iter()
        .map(|mask| value_fn(&mask_to_coalition(mask, p)))
        .collect();
    // |S|! (p - |S| - 1)! / p! = 1 / (p * C(p - 1, |S|))
    let weights: Vec<T> = (0..p)
        .map(|s| T::lit(1.0 / (p as f64 * binomial(p - 1, s))))
        .collect();
    let mut phi = vec![T::zero(); p];
    for (j, phi_j) in phi.iter_mut().enumerate() {
        let bit = 1usize << j;
        for mask in (0..1usize << p).filter(|m| m & bit == 0) {
            let size = mask.count_ones() as usize;
            *phi_j += weights[size] * (values[mask | bit] - values[mask]);
        }
    }
    Ok(phi)
}

/// Kernel SHAP explanation of one instance.
///
/// `n_samples = 0` enumerates every coalition (at most
/// [`MAX_ENUMERATED_FEATURES`] features); otherwise `n_samples >= p + 2`
/// coalitions are drawn in complementary pairs with probability proportional
/// to the Shapley kernel and merged by accumulated count. A budget that
/// covers every coalition falls back to enumeration.
pub fn kernel_shap<T, M>(
    model: &M,
    x: &[T],
    background: &FlowTable<T>,
    n_samples: usize,
    seed: u64,
) -> Result<ShapExplanation<T>>
where
    T: Scalar,
    M: Predictor<T> + ?Sized,
{
    let p = background.n_features();
    if x.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("explained instance".into()));
    }
    let value = InterventionalValue::new(model, x, background.rows())?;
    let prediction = model.predict(x);
    let base_value = value.value(&vec![false; p]);
    let explanation = |phi| ShapExplanation {
        feature_names: background.feature_names().to_vec(),
        feature_values: x.to_vec(),
        phi,
        base_value,
        prediction,
    };
    let total = prediction - base_value;
    if p == 1 {
        return Ok(explanation(vec![total]));
    }

    let enumerate = if n_samples == 0 {
        if p > MAX_ENUMERATED_FEATURES {
            return Err(Error::invalid(format!(
                "full enumeration needs at most {MAX_ENUMERATED_FEATURES} features, got {p}; pass n_samples"
            )));
        }
        true
    } else {
        if n_samples < p + 2 {
            return Err(Error::invalid(format!(
                "n_samples must be 0 or at least p + 2 = {}",
                p + 2
            )));
        }
        p < 63 && n_samples as u64 >= (1u64 << p) - 2
    };

    for attempt in 0..MAX_ATTEMPTS {
        let coalitions = if enumerate {
            enumerate_coalitions(p)
        } else {
            let attempt_seed = if attempt == 0 {
                seed
            } else {
                derive_seed(seed, &format!("retry-{attempt}"))
            };
            sample_coalitions(p, n_samples, attempt_seed)
        };
        let values: Vec<T> = coalitions
            .par_iter()
            .map(|(mask, _)| value.value(mask))
            .collect();
        match solve_constrained(&coalitions, &values, base_value, total, p) {
            Some(phi) => return Ok(explanation(phi)),
            None if enumerate => break,
            None => continue,
        }
    }
    Err(Error::Singular {
        attempts: if enumerate { 1 } else { MAX_ATTEMPTS },
    })
}

/// Every proper non-empty coalition with its normalized kernel weight.
fn enumerate_coalitions(p: usize) -> Vec<(Vec<bool>, f64)> {
    let mut out: Vec<(Vec<bool>, f64)> = (1..(1usize << p) - 1)
        .map(|mask| {
            let s = mask.count_ones() as usize;
            let w = (p - 1) as f64 / (binomial(p, s) * (s * (p - s)) as f64);
            (mask_to_coalition(mask, p), w)
        })
        .collect();
    normalize(&mut out);
    out
}

/// Draws coalition sizes from `q(s) ∝ (p - 1) / (s (p - s))` and a uniform
/// subset of that size, adding each draw together with its complement. A
/// single coalition's selection probability is then proportional to its
/// kernel weight, so merged draw counts serve as regression weights.
fn sample_coalitions(p: usize, n_samples: usize, seed: u64) -> Vec<(Vec<bool>, f64)> {
    let mut rng = SeededRng::new(seed);
    let size_weights: Vec<f64> = (1..p).map(|s| 1.0 / (s * (p - s)) as f64).collect();
    let total: f64 = size_weights.iter().sum();
    let mut cdf = Vec::with_capacity(size_weights.len());
    let mut acc = 0.0;
    for w in &size_weights {
        acc += w / total;
        cdf.push(acc);
    }
    let mut counts: BTreeMap<Vec<bool>, f64> = BTreeMap::new();
    let mut drawn = 0;
    while drawn < n_samples {
        let u = rng.uniform();
        let size = 1 + cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1);
        let mut mask = vec![false; p];
        for j in rng.sample_indices(p, size) {
            mask[j] = true;
        }
        let complement: Vec<bool> = mask.iter().map(|b| !b).collect();
        *counts.entry(mask).or_insert(0.0) += 1.0;
        drawn += 1;
        if drawn < n_samples {
            *counts.entry(complement).or_insert(0.0) += 1.0;
            drawn += 1;
        }
    }
    let mut out: Vec<(Vec<bool>, f64)> = counts.into_iter().collect();
    normalize(&mut out);
    out
}

fn normalize(coalitions: &mut [(Vec<bool>, f64)]) {
    let total: f64 = coalitions.iter().map(|(_, w)| w).sum();
    for (_, w) in coalitions.iter_mut() {
        *w /= total;
    }
}

/// Weighted least squares with `phi_{p-1} = total - sum_{j<p-1} phi_j`
/// substituted in. Returns `None` when the design is rank deficient.
fn solve_constrained<T: Scalar>(
    coalitions: &[(Vec<bool>, f64)],
    values: &[T],
    base_value: T,
    total: T,
    p: usize,
) -> Option<Vec<T>> {
    let k = p - 1;
    let mut gram = vec![vec![T::zero(); k]; k];
    let mut rhs = vec![T::zero(); k];
    let indicator = |b: bool| if b { T::one() } else { T::zero() };
    let mut design = vec![T::zero(); k];
    for ((mask, w), &v) in coalitions.iter().zip(values) {
        let w = T::lit(*w);
        let last = indicator(mask[k]);
        let target = v - base_value - last * total;
        for (j, d) in design.iter_mut().enumerate() {
            *d = indicator(mask[j]) - last;
        }
        for a in 0..k {
            if design[a] == T::zero() {
                continue;
            }
            let wa = w * design[a];
            rhs[a] += wa * target;
            for b in 0..k {
                gram[a][b] += wa * design[b];
            }
        }
    }
    if is_rank_deficient(&gram) {
        return None;
    }
    for (a, row) in gram.iter_mut().enumerate() {
        row[a] += T::lit(RIDGE);
    }
    let beta = solve_linear(gram, rhs)?;
    let mut phi = beta;
    let partial: T = phi.iter().copied().sum();
    phi.push(total - partial);
    Some(phi)
}

fn pivot_tolerance<T: Scalar>(matrix: &[Vec<T>]) -> T {
    let scale = matrix
        .iter()
        .enumerate()
        .map(|(i, r)| r[i].abs())
        .fold(T::zero(), |a, b| a.max(b));
    let rel = (T::epsilon().as_f64() * 100.0 * matrix.len() as f64).max(1e-13);
    scale * T::lit(rel)
}

#[allow(clippy::needless_range_loop)]
fn is_rank_deficient<T: Scalar>(matrix: &[Vec<T>]) -> bool {
    let tol = pivot_tolerance(matrix);
    let mut m = matrix.to_vec();
    let n = m.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&a, &b| m[a][col].abs().partial_cmp(&m[b][col].abs()).unwrap())
            .unwrap();
        if m[pivot][col].abs() <= tol {
            return true;
        }
        m.swap(col, pivot);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            for c in col..n {
                let v = m[col][c];
                m[r][c] -= f * v;
            }
        }
    }
    false
}

/// Gaussian elimination with partial pivoting.
#[allow(clippy::needless_range_loop)]
fn solve_linear<T: Scalar>(mut a: Vec<Vec<T>>, mut b: Vec<T>) -> Option<Vec<T>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())?;
        if a[pivot][col] == T::zero() || !a[pivot][col].is_finite() {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f == T::zero() {
                continue;
            }
            for c in col..n {
                let v = a[col][c];
                a[r][c] -= f * v;
            }
            let v = b[col];
            b[r] -= f * v;
        }
    }
    let mut x = vec![T::zero(); n];
    for r in (0..n).rev() {
        let tail: T = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - tail) / a[r][r];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Explains every row of `table`. Each row's sampling seed is derived from
/// `seed` and the row's contents, so identical rows get identical
/// explanations.
pub fn batch_explain<T, M>(
    model: &M,
    table: &FlowTable<T>,
    background: &FlowTable<T>,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<ShapExplanation<T>>>
where
    T: Scalar,
    M: Predictor<T> + ?Sized,
{
    if table.feature_names() != background.feature_names() {
        return Err(Error::invalid("explained table and background have different features"));
    }
    table
        .rows()
        .par_iter()
        .map(|row| {
            let bytes: Vec<u8> = row.iter().flat_map(|v| v.as_f64().to_bits().to_le_bytes()).collect();
            kernel_shap(model, row, background, n_samples, derive_seed_bytes(seed, &bytes))
        })
        .collect()
}
