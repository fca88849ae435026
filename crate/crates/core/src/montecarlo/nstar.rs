use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::stats::SuccessEstimate;
use super::trial::estimate_success_batch;
use crate::error::{Error, Result};
use crate::model::ProblemConfig;

/// Result of an `n*` search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NStar {
    Found(u64),
    /// `n_max` was reached without meeting the target rate.
    NotFound {
        last_n: u64,
        last_rate: f64,
    },
}

impl NStar {
    pub fn value(&self) -> Option<u64> {
        match self {
            NStar::Found(n) => Some(*n),
            NStar::NotFound { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NStarSearch {
    pub nstar: NStar,
    /// Every probed `n` with its estimate, in increasing `n`.
    pub probes: Vec<(u64, SuccessEstimate)>,
}

impl NStarSearch {
    pub fn rate_at(&self, n: u64) -> Option<f64> {
        self.probes.iter().find(|(p, _)| *p == n).map(|(_, e)| e.rate)
    }
}

/// First trial index of the batch used at sample size `n`. Each `n` gets
/// its own block of `2^32` trial indices, so probes use fresh trials.
fn batch_start(n: u64) -> u64 {
    n << 32
}

/// Smallest `n ≤ n_max` whose empirical success rate reaches `1 - δ`.
///
/// Doubles `n` from 1 until the target is met, then bisects between the last
/// failing and first passing sizes. Success is assumed monotone in `n`; the
/// returned `N` always satisfies `rate(N) ≥ 1-δ` and, for `N > 1`,
/// `rate(N-1) < 1-δ` on the same trial batches.
pub fn find_nstar(base: &ProblemConfig, delta: f64, trials: u64, n_max: u64) -> Result<NStarSearch> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::config("delta", "must lie in (0, 1)"));
    }
    if trials < 100 {
        return Err(Error::config(
            "trials",
            "n* searches need at least 100 trials per probe",
        ));
    }
    if n_max == 0 || n_max >= 1 << 31 {
        return Err(Error::config("n_max", "must lie in 1..2^31"));
    }
    let target = 1.0 - delta;
    let mut cache: BTreeMap<u64, SuccessEstimate> = BTreeMap::new();
    let mut probe = |n: u64| -> Result<SuccessEstimate> {
        if let Some(e) = cache.get(&n) {
            return Ok(*e);
        }
        let cfg = base.clone().with_samples(n as usize);
        let e = estimate_success_batch(&cfg, batch_start(n), trials)?;
        cache.insert(n, e);
        Ok(e)
    };

    let mut lo = 0u64;
    let mut n = 1u64;
    let hi = loop {
        let e = probe(n)?;
        if e.meets(target) {
            break n;
        }
        if n >= n_max {
            return Ok(NStarSearch {
                nstar: NStar::NotFound {
                    last_n: n,
                    last_rate: e.rate,
                },
                probes: cache.into_iter().collect(),
            });
        }
        lo = n;
        n = (2 * n).min(n_max);
    };
    let mut hi = hi;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if probe(mid)?.meets(target) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(NStarSearch {
        nstar: NStar::Found(hi),
        probes: cache.into_iter().collect(),
    })
}

/// One point of the phase-transition sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub d: usize,
    pub k: usize,
    pub m: usize,
    pub sigma2: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub delta: f64,
    pub trials: u64,
    pub master_seed: u64,
    pub nstar: NStar,
    /// `m < 2 log(d/δ)`.
    pub outside_regime: bool,
}

impl SweepRecord {
    pub fn k_over_m(&self) -> f64 {
        self.k as f64 / self.m as f64
    }
}

/// Runs [`find_nstar`] for every `m` in `m_list`, in order, with the same master seed.
pub fn sweep_phase_transition(
    base: &ProblemConfig,
    m_list: &[usize],
    delta: f64,
    trials: u64,
    n_max: u64,
) -> Result<Vec<SweepRecord>> {
    if m_list.is_empty() {
        return Err(Error::config("m_list", "must not be empty"));
    }
    let mut out = Vec::with_capacity(m_list.len());
    for &m in m_list {
        let mut cfg = base.clone();
        cfg.m = m;
        let search = find_nstar(&cfg, delta, trials, n_max)?;
        out.push(SweepRecord {
            d: cfg.d,
            k: cfg.k,
            m,
            sigma2: cfg.sigma2,
            x_min: cfg.x_min,
            x_max: cfg.x_max,
            delta,
            trials,
            master_seed: cfg.seed,
            nstar: search.nstar,
            outside_regime: (m as f64) < 2.0 * (cfg.d as f64 / delta).ln(),
        });
    }
    Ok(out)
}

/// Least-squares line through `(ln x, ln y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub points: usize,
}

/// Fits `ln n* = a + b ln(k/m)` over the found points with `k/m` in `[lo, hi]`.
pub fn fit_log_log_slope(records: &[SweepRecord], lo: f64, hi: f64) -> Option<LineFit> {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| (lo..=hi).contains(&r.k_over_m()))
        .filter_map(|r| r.nstar.value().map(|n| (r.k_over_m().ln(), (n as f64).ln())))
        .collect();
    fit_line(&pts)
}

pub(crate) fn fit_line(pts: &[(f64, f64)]) -> Option<LineFit> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some(LineFit {
        slope,
        intercept: my - slope * mx,
        points: pts.len(),
    })
}
