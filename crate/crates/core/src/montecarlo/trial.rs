use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::SuccessEstimate;
use crate::error::Result;
use crate::estimator::{correlate_columns, top_k_support, StatisticAccumulator};
use crate::model::{gen_support, InstanceStreams, ProblemConfig, SampleBuffers};

/// Outcome of one recovery attempt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    /// The top-k estimate equals the true support.
    pub success: bool,
    /// `min_{u ∈ S} λ̃_u`.
    pub min_in: f64,
    /// `max_{u ∉ S} λ̃_u` (`-∞` when `k = d`).
    pub max_out: f64,
    pub master_seed: u64,
    pub trial_index: u64,
}

/// Generates trial `trial_index` and runs the estimator on it.
///
/// Samples are drawn and folded into `λ̃` one at a time, so memory stays at
/// one `m × d` matrix regardless of `n`. The result is bit-identical to
/// running the estimator on `ProblemInstance::generate(config, trial_index)`.
pub fn run_trial(config: &ProblemConfig, trial_index: u64) -> Result<TrialResult> {
    config.validate()?;
    let (m, d) = (config.m, config.d);
    let streams = InstanceStreams::new(config.seed, trial_index);
    let support = gen_support(config, &mut streams.support_rng())?;
    let mut buf = SampleBuffers::new(config);
    let mut acc = StatisticAccumulator::new(d);
    let mut proxies = vec![0.0; d];
    for i in 0..config.n {
        buf.fill(config, &support, &streams, i);
        correlate_columns(&buf.phi, m, &buf.y, &mut proxies);
        acc.add(&proxies);
    }
    let stat = acc.finish();
    let estimate = top_k_support(&stat, config.k)?;
    let (min_in, max_out) = stat.support_margin(&support);
    Ok(TrialResult {
        success: estimate.matches(&support),
        min_in,
        max_out,
        master_seed: config.seed,
        trial_index,
    })
}

/// Runs trials `first_index .. first_index + trials` in parallel.
pub fn estimate_success_batch(config: &ProblemConfig, first_index: u64, trials: u64) -> Result<SuccessEstimate> {
    assert!(trials >= 1, "at least one trial is required");
    config.validate()?;
    let results: Vec<TrialResult> = (0..trials)
        .into_par_iter()
        .map(|t| run_trial(config, first_index + t))
        .collect::<Result<_>>()?;
    let successes = results.iter().filter(|r| r.success).count() as u64;
    Ok(SuccessEstimate::from_counts(successes, trials))
}

/// Runs trials `0..trials`.
pub fn estimate_success(config: &ProblemConfig, trials: u64) -> Result<SuccessEstimate> {
    estimate_success_batch(config, 0, trials)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{proxy_samples, support_statistic, top_k_support};
    use crate::model::ProblemInstance;

    #[test]
    fn matches_batch_pipeline() {
        let cfg = ProblemConfig::new(15, 3, 4, 25).with_noise(0.1).with_seed(5);
        for t in 0..5 {
            let r = run_trial(&cfg, t).unwrap();
            let inst = ProblemInstance::generate(&cfg, t).unwrap();
            let stat = support_statistic(&proxy_samples(&inst));
            let (lo, hi) = stat.support_margin(&inst.support);
            assert_eq!(r.min_in.to_bits(), lo.to_bits());
            assert_eq!(r.max_out.to_bits(), hi.to_bits());
            assert_eq!(r.success, top_k_support(&stat, 3).unwrap().matches(&inst.support));
        }
    }

    #[test]
    fn deterministic() {
        let cfg = ProblemConfig::new(20, 4, 3, 30).with_seed(1);
        assert_eq!(run_trial(&cfg, 9).unwrap(), run_trial(&cfg, 9).unwrap());
    }

    #[test]
    fn strict_margin_implies_success() {
        let cfg = ProblemConfig::new(12, 3, 2, 20).with_seed(3);
        for t in 0..100 {
            let r = run_trial(&cfg, t).unwrap();
            if r.min_in > r.max_out {
                assert!(r.success);
            }
            if !r.success {
                assert!(r.min_in <= r.max_out);
            }
        }
    }

    #[test]
    fn easy_problem_succeeds() {
        let cfg = ProblemConfig::new(2, 1, 2, 200).with_seed(4);
        let e = estimate_success(&cfg, 500).unwrap();
        assert!(e.rate >= 0.99, "{e:?}");
    }

    #[test]
    fn swamped_noise_is_chance_level() {
        let cfg = ProblemConfig::new(20, 1, 2, 1).with_noise(1e6).with_seed(8);
        let e = estimate_success(&cfg, 1000).unwrap();
        assert!((e.rate - 0.05).abs() <= 0.03, "{e:?}");
    }

    #[test]
    fn thread_count_does_not_matter() {
        let cfg = ProblemConfig::new(16, 4, 2, 40).with_seed(12);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let a = one.install(|| estimate_success(&cfg, 64).unwrap());
        let b = three.install(|| estimate_success(&cfg, 64).unwrap());
        assert_eq!(a, b);
    }
}
