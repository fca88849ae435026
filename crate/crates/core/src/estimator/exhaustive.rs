//! Brute-force least-squares decoder, usable only on tiny problems.
//!
//! For every size-`k` subset `T` the decoder fits each `Y_i` on the columns
//! of `Φ_i` indexed by `T` (minimum-norm least squares, so rank-deficient
//! blocks are fine) and keeps the subset with the smallest total residual.
//! When `m ≤ k` every generic `T` fits exactly and the residual carries no
//! information; the decoder then falls back to the lexicographic tie rule.

use nalgebra::{DMatrix, DVector};

use super::{EstimateMethod, SupportEstimate};
use crate::error::{Error, Result};
use crate::model::ProblemInstance;

/// Largest number of candidate subsets the decoder will enumerate.
pub const EXHAUSTIVE_LIMIT: u128 = 1_000_000;

/// Residuals within this fraction of `Σ‖Y_i‖²` count as ties.
const TIE_RTOL: f64 = 1e-9;

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for j in 0..k {
        acc = acc.saturating_mul((n - j) as u128) / (j as u128 + 1);
    }
    acc
}

/// `Σ_i ‖Y_i − Φ_{i,T} x̂_{i,T}‖²` for the subset `cols`.
pub fn subset_residual(instance: &ProblemInstance, cols: &[usize]) -> f64 {
    let m = instance.config.m;
    let ms = &instance.measurements;
    let mut total = 0.0;
    for (phi, y) in ms.matrices.iter().zip(&ms.observations) {
        let a = DMatrix::from_fn(m, cols.len(), |r, c| phi[(r, cols[c])]);
        let b = DVector::from_column_slice(y);
        let svd = a.clone().svd(true, true);
        let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
        let eps = smax * m.max(cols.len()) as f64 * f64::EPSILON;
        let fit = svd.solve(&b, eps).expect("both singular bases were computed");
        total += (b - a * fit).norm_squared();
    }
    total
}

/// Least-squares exhaustive search over all `C(d, k)` supports.
pub fn exhaustive_decoder(instance: &ProblemInstance) -> Result<SupportEstimate> {
    let (d, k) = (instance.config.d, instance.config.k);
    let count = binomial(d, k);
    if count > EXHAUSTIVE_LIMIT {
        return Err(Error::TooLarge {
            what: "exhaustive search space C(d, k)",
            size: count,
            limit: EXHAUSTIVE_LIMIT,
        });
    }
    let energy: f64 = instance
        .measurements
        .observations
        .iter()
        .map(|y| y.iter().map(|v| v * v).sum::<f64>())
        .sum();
    let tol = TIE_RTOL * energy;

    let mut subset: Vec<usize> = (0..k).collect();
    let mut best = subset.clone();
    let mut best_residual = f64::INFINITY;
    loop {
        let r = subset_residual(instance, &subset);
        if r < best_residual - tol {
            best_residual = r;
            best.clone_from(&subset);
        }
        if !next_combination(&mut subset, d) {
            break;
        }
    }
    Ok(SupportEstimate {
        indices: best,
        method: EstimateMethod::TopK,
    })
}

/// Advances to the next subset in lexicographic order; false after the last.
fn next_combination(subset: &mut [usize], d: usize) -> bool {
    let k = subset.len();
    let Some(pos) = (0..k).rev().find(|&j| subset[j] < d - k + j) else {
        return false;
    };
    subset[pos] += 1;
    for j in pos + 1..k {
        subset[j] = subset[j - 1] + 1;
    }
    true
}
