use rand_distr::{ChiSquared, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{rosenthal_bound, BoundConstants};
use crate::error::{Error, Result};
use crate::rng::StreamKey;

const BATCH: usize = 4096;
const TAG_CUBE: u64 = 0xcb3;
const TAG_ROSENTHAL: u64 = 0x7051;

fn chi(m: usize) -> Result<ChiSquared<f64>> {
    if m == 0 {
        return Err(Error::Argument("m must be positive".into()));
    }
    ChiSquared::new(m as f64).map_err(|e| Error::Argument(e.to_string()))
}

/// `E V³ = m(m+2)(m+4)` for `V ~ χ²_m`.
fn cube_mean(m: usize) -> f64 {
    let m = m as f64;
    m * (m + 2.0) * (m + 4.0)
}

/// Sum of `f(V³ − EV³)` over `draws` independent `V ~ χ²_m`, reduced in batch order.
fn sum_over_cubes(m: usize, draws: usize, key: StreamKey, f: impl Fn(f64) -> f64 + Sync) -> Result<f64> {
    let dist = chi(m)?;
    let mean = cube_mean(m);
    let parts: Vec<f64> = (0..draws.div_ceil(BATCH))
        .into_par_iter()
        .map(|b| {
            let mut rng = key.rng(b as u64);
            let len = BATCH.min(draws - b * BATCH);
            (0..len).map(|_| f(dist.sample(&mut rng).powi(3) - mean)).sum::<f64>()
        })
        .collect();
    Ok(parts.iter().sum())
}

/// Monte Carlo estimate of `‖V³ − EV³‖₂` for `V ~ χ²_m`.
pub fn empirical_cube_deviation_norm(m: usize, draws: usize, seed: u64) -> Result<f64> {
    if draws == 0 {
        return Err(Error::Argument("draws must be positive".into()));
    }
    let key = StreamKey::root(seed).child(TAG_CUBE).child(m as u64);
    Ok((sum_over_cubes(m, draws, key, |z| z * z)? / draws as f64).sqrt())
}

/// Empirical side of Rosenthal's inequality for `Z_i = V_i³ − EV³`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RosenthalCheck {
    pub p: f64,
    pub n: usize,
    /// `‖Σ_{i≤n} Z_i‖_p`.
    pub sum_norm: f64,
    /// `‖Z‖_p`.
    pub lp_norm: f64,
    /// `‖Z‖₂`.
    pub l2_norm: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Estimates `‖Σ_{i≤n} Z_i‖_p`, `‖Z‖_p` and `‖Z‖₂` from `replications` sums
/// and compares the first with Rosenthal's bound built from the other two.
pub fn empirical_rosenthal_sum(
    p: f64,
    n: usize,
    m: usize,
    replications: usize,
    constants: &BoundConstants,
    seed: u64,
) -> Result<RosenthalCheck> {
    if n == 0 || replications == 0 {
        return Err(Error::Argument("n and replications must be positive".into()));
    }
    let dist = chi(m)?;
    let mean = cube_mean(m);
    let key = StreamKey::root(seed)
        .child(TAG_ROSENTHAL)
        .child(n as u64)
        .child(m as u64);
    // Per replication: |ΣZ|^p, Σ|Z|^p, ΣZ².
    let rows: Vec<[f64; 3]> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = key.rng(r as u64);
            let mut acc = [0.0; 3];
            let mut s = 0.0;
            for _ in 0..n {
                let z = dist.sample(&mut rng).powi(3) - mean;
                s += z;
                acc[1] += z.abs().powf(p);
                acc[2] += z * z;
            }
            acc[0] = s.abs().powf(p);
            acc
        })
        .collect();
    let total = |j: usize| rows.iter().map(|row| row[j]).sum::<f64>();
    let r = replications as f64;
    let sum_norm = (total(0) / r).powf(1.0 / p);
    let lp_norm = (total(1) / (r * n as f64)).powf(1.0 / p);
    let l2_norm = (total(2) / (r * n as f64)).sqrt();
    let bound = rosenthal_bound(p, n, lp_norm, l2_norm, constants)?;
    Ok(RosenthalCheck {
        p,
        n,
        sum_norm,
        lp_norm,
        l2_norm,
        bound,
        pass: sum_norm <= bound,
    })
}
