//! The closed-form second-moment support estimator.
//!
//! For every sample the proxy `X̂_iu = ⟨Φ_iu, Y_i⟩` correlates column `u`
//! with the observation. Averaging the squared proxies over samples gives
//! the per-coordinate statistic `λ̃_u = (1/n) Σ_i X̂_iu²`, which is larger on
//! the support. The shipped decision rule keeps the `k` largest entries; a
//! threshold rule is provided for diagnostics.
//!
//! All reductions run in index order, so the streaming accumulator used by
//! the Monte Carlo engine reproduces the batch path bit for bit.

mod exhaustive;

pub use exhaustive::{exhaustive_decoder, subset_residual, EXHAUSTIVE_LIMIT};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ProblemInstance, Support};

/// Proxy samples `X̂_iu`, stored row-major as `n × d`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxySamples {
    n: usize,
    d: usize,
    values: Vec<f64>,
}

impl ProxySamples {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if n == 0 || rows.iter().any(|r| r.len() != d) {
            return Err(Error::Argument(
                "proxy rows must be nonempty and of equal length".into(),
            ));
        }
        Ok(ProxySamples {
            n,
            d,
            values: rows.into_iter().flatten().collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Proxies of sample `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn get(&self, i: usize, u: usize) -> f64 {
        self.values[i * self.d + u]
    }
}

/// Writes `⟨column u of Φ, y⟩` for every `u` into `out`. `phi` is column-major `m × d`.
pub fn correlate_columns(phi: &[f64], m: usize, y: &[f64], out: &mut [f64]) {
    for (u, slot) in out.iter_mut().enumerate() {
        let col = &phi[u * m..(u + 1) * m];
        let mut acc = 0.0;
        for r in 0..m {
            acc += col[r] * y[r];
        }
        *slot = acc;
    }
}

pub fn proxy_samples(instance: &ProblemInstance) -> ProxySamples {
    let (n, m, d) = (instance.config.n, instance.config.m, instance.config.d);
    let ms = &instance.measurements;
    let mut values = vec![0.0; n * d];
    for (i, row) in values.chunks_exact_mut(d).enumerate() {
        correlate_columns(ms.matrices[i].as_slice(), m, &ms.observations[i], row);
    }
    ProxySamples { n, d, values }
}

/// `λ̃`, the per-coordinate sample second moment of the proxies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportStatistic {
    lambda_tilde: Vec<f64>,
}

impl SupportStatistic {
    pub fn from_values(lambda_tilde: Vec<f64>) -> Result<Self> {
        if let Some(v) = lambda_tilde.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Argument(format!(
                "statistic entry {v} is not a nonnegative finite number"
            )));
        }
        Ok(SupportStatistic { lambda_tilde })
    }

    pub fn values(&self) -> &[f64] {
        &self.lambda_tilde
    }

    pub fn d(&self) -> usize {
        self.lambda_tilde.len()
    }

    /// `(min over S, max over the complement)`; the max is `-∞` when `S` is everything.
    pub fn support_margin(&self, support: &Support) -> (f64, f64) {
        let mut min_in = f64::INFINITY;
        let mut max_out = f64::NEG_INFINITY;
        for (u, &v) in self.lambda_tilde.iter().enumerate() {
            if support.contains(u) {
                min_in = min_in.min(v);
            } else {
                max_out = max_out.max(v);
            }
        }
        (min_in, max_out)
    }
}

pub fn support_statistic(proxies: &ProxySamples) -> SupportStatistic {
    let mut acc = StatisticAccumulator::new(proxies.d());
    for i in 0..proxies.n() {
        acc.add(proxies.row(i));
    }
    acc.finish()
}

/// Streaming form of [`support_statistic`]: feed proxy rows in sample order.
#[derive(Debug, Clone)]
pub struct StatisticAccumulator {
    sums: Vec<f64>,
    samples: usize,
}

impl StatisticAccumulator {
    pub fn new(d: usize) -> Self {
        StatisticAccumulator {
            sums: vec![0.0; d],
            samples: 0,
        }
    }

    pub fn add(&mut self, proxies: &[f64]) {
        for (s, &x) in self.sums.iter_mut().zip(proxies) {
            *s += x * x;
        }
        self.samples += 1;
    }

    pub fn finish(self) -> SupportStatistic {
        let n = self.samples.max(1) as f64;
        SupportStatistic {
            lambda_tilde: self.sums.into_iter().map(|s| s / n).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EstimateMethod {
    TopK,
    Threshold(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportEstimate {
    pub indices: Vec<usize>,
    pub method: EstimateMethod,
}

impl SupportEstimate {
    pub fn matches(&self, support: &Support) -> bool {
        self.indices == support.indices()
    }
}

/// The `k` largest entries of `λ̃`, ties to the lowest index, returned sorted.
pub fn top_k_support(stat: &SupportStatistic, k: usize) -> Result<SupportEstimate> {
    let d = stat.d();
    if k == 0 || k > d {
        return Err(Error::Argument(format!("k = {k} must lie in 1..={d}")));
    }
    let v = stat.values();
    let mut order: Vec<usize> = (0..d).collect();
    // Stable sort: equal values keep increasing index order.
    order.sort_by(|&a, &b| v[b].total_cmp(&v[a]));
    let mut indices = order[..k].to_vec();
    indices.sort_unstable();
    Ok(SupportEstimate {
        indices,
        method: EstimateMethod::TopK,
    })
}

/// Every `u` with `λ̃_u ≥ τ`.
pub fn threshold_support(stat: &SupportStatistic, tau: f64) -> SupportEstimate {
    SupportEstimate {
        indices: (0..stat.d()).filter(|&u| stat.values()[u] >= tau).collect(),
        method: EstimateMethod::Threshold(tau),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MeasurementSet, ProblemConfig, SignalSet, SupportMode};
    use nalgebra::DMatrix;

    fn stat(v: &[f64]) -> SupportStatistic {
        SupportStatistic::from_values(v.to_vec()).unwrap()
    }

    fn hand_instance(m: usize, d: usize, phi_rows: &[&[f64]], x: Vec<f64>, w: Vec<f64>) -> ProblemInstance {
        let support: Vec<usize> = (0..d).filter(|&u| x[u] != 0.0).collect();
        let k = support.len();
        let cfg = ProblemConfig::new(d, k, m, 1)
            .with_magnitudes(
                x.iter()
                    .filter(|v| **v != 0.0)
                    .fold(f64::INFINITY, |a, b| a.min(b.abs())),
                10.0,
            )
            .with_noise(1.0)
            .with_support_mode(SupportMode::Fixed(support.clone()));
        let phi = DMatrix::from_fn(m, d, |r, c| phi_rows[r][c]);
        let y: Vec<f64> = (0..m)
            .map(|r| (0..d).map(|c| phi[(r, c)] * x[c]).sum::<f64>() + w[r])
            .collect();
        ProblemInstance::from_parts(
            cfg.clone(),
            Support::new(support, d, k).unwrap(),
            SignalSet { vectors: vec![x] },
            MeasurementSet {
                matrices: vec![phi],
                noises: vec![w],
                observations: vec![y],
            },
        )
        .unwrap()
    }

    #[test]
    fn proxy_identity_measurement() {
        let inst = hand_instance(2, 2, &[&[1.0, 0.0], &[0.0, 1.0]], vec![3.0, 0.0], vec![0.0, 0.0]);
        assert_eq!(proxy_samples(&inst).row(0), &[3.0, 0.0]);
    }

    #[test]
    fn proxy_single_row() {
        let inst = hand_instance(1, 2, &[&[1.0, 1.0]], vec![2.0, 0.0], vec![0.0]);
        assert_eq!(inst.measurements.observations[0], vec![2.0]);
        assert_eq!(proxy_samples(&inst).row(0), &[2.0, 2.0]);
    }

    #[test]
    fn proxy_noise_passthrough() {
        let inst = hand_instance(1, 2, &[&[1.0, 0.0]], vec![2.0, 0.0], vec![1.0]);
        assert_eq!(inst.measurements.observations[0], vec![3.0]);
        assert_eq!(proxy_samples(&inst).row(0), &[3.0, 0.0]);
    }

    #[test]
    fn statistic_is_mean_square() {
        let p = ProxySamples::from_rows(vec![vec![3.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(support_statistic(&p).values(), &[5.0, 0.0]);
        let zero = ProxySamples::from_rows(vec![vec![0.0; 3]; 4]).unwrap();
        assert_eq!(support_statistic(&zero).values(), &[0.0; 3]);
    }

    #[test]
    fn statistic_rejects_negative_or_nan() {
        assert!(SupportStatistic::from_values(vec![1.0, -0.5]).is_err());
        assert!(SupportStatistic::from_values(vec![f64::NAN]).is_err());
    }

    #[test]
    fn top_k_examples() {
        assert_eq!(top_k_support(&stat(&[5.0, 0.0, 2.0]), 2).unwrap().indices, vec![0, 2]);
        assert_eq!(top_k_support(&stat(&[1.0, 1.0, 0.0]), 1).unwrap().indices, vec![0]);
        assert_eq!(
            top_k_support(&stat(&[0.0, 0.0, 0.0]), 3).unwrap().indices,
            vec![0, 1, 2]
        );
        assert_eq!(
            top_k_support(&stat(&[0.0, 2.0, 2.0, 2.0]), 2).unwrap().indices,
            vec![1, 2]
        );
        assert!(top_k_support(&stat(&[1.0, 2.0]), 3).is_err());
        assert!(top_k_support(&stat(&[1.0, 2.0]), 0).is_err());
    }

    #[test]
    fn threshold_examples() {
        let s = stat(&[5.0, 0.0, 2.0]);
        assert_eq!(threshold_support(&s, 1.5).indices, vec![0, 2]);
        assert_eq!(threshold_support(&s, -1.0).indices, vec![0, 1, 2]);
        assert!(threshold_support(&s, 1e300).indices.is_empty());
        assert_eq!(threshold_support(&s, 2.0).indices, vec![0, 2]);
    }

    #[test]
    fn margin_of_statistic() {
        let s = stat(&[5.0, 0.5, 2.0, 1.0]);
        let support = Support::new(vec![0, 2], 4, 2).unwrap();
        assert_eq!(s.support_margin(&support), (2.0, 1.0));
    }

    #[test]
    fn streaming_matches_batch_bit_for_bit() {
        let cfg = ProblemConfig::new(30, 5, 3, 40).with_noise(0.2).with_seed(8);
        let inst = ProblemInstance::generate(&cfg, 3).unwrap();
        let batch = support_statistic(&proxy_samples(&inst));
        let mut acc = StatisticAccumulator::new(cfg.d);
        let mut row = vec![0.0; cfg.d];
        for i in 0..cfg.n {
            correlate_columns(
                inst.measurements.matrices[i].as_slice(),
                cfg.m,
                &inst.measurements.observations[i],
                &mut row,
            );
            acc.add(&row);
        }
        let streamed = acc.finish();
        assert!(batch
            .values()
            .iter()
            .zip(streamed.values())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn noiseless_on_support_mean_is_fourth_moment() {
        // d=2, k=1, S={0}, x=1, m=8, n=500: E λ̃_0 = E‖Φ_iu‖⁴ = 1 + 2/m.
        let (m, n, reps) = (8usize, 500usize, 1000u64);
        let cfg = ProblemConfig::new(2, 1, m, n)
            .with_support_mode(SupportMode::Fixed(vec![0]))
            .with_seed(1234);
        let vals: Vec<f64> = (0..reps)
            .map(|t| support_statistic(&proxy_samples(&ProblemInstance::generate(&cfg, t).unwrap())).values()[0])
            .collect();
        let mean = vals.iter().sum::<f64>() / reps as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        let se = (var / reps as f64).sqrt();
        let target = 1.0 + 2.0 / m as f64;
        assert!((mean - target).abs() < 3.0 * se, "mean {mean} target {target} se {se}");
    }
}
