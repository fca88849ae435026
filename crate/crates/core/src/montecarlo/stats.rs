use serde::{Deserialize, Serialize};

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

/// Empirical success probability with a 95% Wilson score interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuccessEstimate {
    pub trials: u64,
    pub successes: u64,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl SuccessEstimate {
    pub fn from_counts(successes: u64, trials: u64) -> Self {
        assert!(
            trials > 0 && successes <= trials,
            "need 0 <= successes <= trials, trials > 0"
        );
        let rate = successes as f64 / trials as f64;
        let (ci_low, ci_high) = wilson_interval(successes, trials);
        SuccessEstimate {
            trials,
            successes,
            rate,
            ci_low,
            ci_high,
        }
    }

    /// `rate ≥ target`, evaluated on counts to avoid rounding at the boundary.
    pub fn meets(&self, target: f64) -> bool {
        self.successes as f64 >= target * self.trials as f64 - 1e-9
    }
}

pub fn wilson_interval(successes: u64, trials: u64) -> (f64, f64) {
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0).min(p), (center + half).min(1.0).max(p))
}

/// `sqrt(p(1-p)/n)`.
pub fn binomial_std_err(p: f64, n: u64) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn wilson_half_rate() {
        let e = SuccessEstimate::from_counts(50, 100);
        assert_eq!(e.rate, 0.5);
        assert!((e.ci_low - 0.404).abs() < 5e-4, "{}", e.ci_low);
        assert!((e.ci_high - 0.596).abs() < 5e-4, "{}", e.ci_high);
    }

    #[test]
    fn wilson_all_success() {
        for n in [500, 1000, 5000] {
            let e = SuccessEstimate::from_counts(n, n);
            assert_eq!(e.rate, 1.0);
            assert_eq!(e.ci_high, 1.0);
            assert!(e.ci_low > 0.99 && e.ci_low < 1.0);
        }
        let none = SuccessEstimate::from_counts(0, 10);
        assert_eq!(none.ci_low, 0.0);
        assert!(none.ci_high > 0.0);
    }

    #[test]
    fn width_shrinks_like_root_n() {
        let a = SuccessEstimate::from_counts(300, 400);
        let b = SuccessEstimate::from_counts(600, 800);
        let r = (b.ci_high - b.ci_low) / (a.ci_high - a.ci_low);
        assert!(
            (r - std::f64::consts::FRAC_1_SQRT_2).abs() < 0.1 * std::f64::consts::FRAC_1_SQRT_2,
            "{r}"
        );
    }

    #[test]
    fn wilson_coverage_on_bernoulli_stream() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let (p, trials, reps) = (0.4, 300u64, 4000);
        let covered = (0..reps)
            .filter(|_| {
                let s = (0..trials).filter(|_| rng.random::<f64>() < p).count() as u64;
                let (lo, hi) = wilson_interval(s, trials);
                lo <= p && p <= hi
            })
            .count();
        let coverage = covered as f64 / reps as f64;
        assert!((0.93..=0.97).contains(&coverage), "coverage {coverage}");
    }

    #[test]
    fn meets_target_on_counts() {
        let e = SuccessEstimate::from_counts(134, 201);
        assert!(e.meets(2.0 / 3.0));
        assert!(!SuccessEstimate::from_counts(133, 201).meets(2.0 / 3.0));
    }
}
