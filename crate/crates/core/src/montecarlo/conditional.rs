use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{ConditionalMoments, ProxyConditioning};
use crate::error::{Error, Result};
use crate::model::{gen_support, InstanceStreams, ProblemConfig, SampleBuffers};
use crate::rng::StreamKey;

const TAG_PROXY: u64 = 0xc0d1;
const TAG_STAT: u64 = 0xc0d2;

/// One sample's signal and its columns `u`, `u'`.
struct Conditioning {
    support: Vec<usize>,
    u: usize,
    u_prime: usize,
    /// `x` restricted to `support`.
    x: Vec<f64>,
    col_u: Vec<f64>,
    col_u_prime: Vec<f64>,
}

impl Conditioning {
    fn params(&self) -> ProxyConditioning {
        let pos = self.support.iter().position(|&v| v == self.u).unwrap();
        ProxyConditioning {
            norm_u: sq_norm(&self.col_u),
            norm_u_prime: sq_norm(&self.col_u_prime),
            x_u: self.x[pos],
            support_energy: sq_norm(&self.x),
        }
    }

    /// Returns `(X̂_u, X̂_u')` from two independent redraws: the first keeps
    /// column `u` and redraws the other support columns, the second redraws
    /// every support column. Noise is redrawn in both.
    fn redraw<R: Rng>(&self, m: usize, sigma: f64, rng: &mut R, y: &mut [f64]) -> (f64, f64) {
        self.observe(m, sigma, rng, y, true);
        let on = dot(&self.col_u, y);
        self.observe(m, sigma, rng, y, false);
        (on, dot(&self.col_u_prime, y))
    }

    fn observe<R: Rng>(&self, m: usize, sigma: f64, rng: &mut R, y: &mut [f64], keep_u: bool) {
        let scale = (1.0 / m as f64).sqrt();
        y.iter_mut().for_each(|v| *v = 0.0);
        for (&v, &xv) in self.support.iter().zip(&self.x) {
            if keep_u && v == self.u {
                for (yr, c) in y.iter_mut().zip(&self.col_u) {
                    *yr += c * xv;
                }
            } else {
                for yr in y.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *yr += z * scale * xv;
                }
            }
        }
        for yr in y.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *yr += sigma * z;
        }
    }
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Draws sample `i` of trial `trial` and conditions on its smallest on-support
/// and smallest off-support columns.
fn conditioning(config: &ProblemConfig, trial: u64, i: usize) -> Result<Conditioning> {
    config.validate()?;
    if config.k == config.d {
        return Err(Error::Argument(
            "conditioning needs an off-support column (k < d)".into(),
        ));
    }
    let streams = InstanceStreams::new(config.seed, trial);
    let support = gen_support(config, &mut streams.support_rng())?;
    let mut buf = SampleBuffers::new(config);
    buf.fill(config, &support, &streams, i);
    let m = config.m;
    let u = support.indices()[0];
    let u_prime = support.complement(config.d)[0];
    Ok(Conditioning {
        x: support.indices().iter().map(|&v| buf.x[v]).collect(),
        support: support.indices().to_vec(),
        u,
        u_prime,
        col_u: buf.column(m, u).to_vec(),
        col_u_prime: buf.column(m, u_prime).to_vec(),
    })
}

fn mean_var(values: &[f64]) -> (f64, f64) {
    let r = values.len() as f64;
    let mean = values.iter().sum::<f64>() / r;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0);
    (mean, var)
}

/// Simulated against predicted conditional moments of one proxy pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProxyMomentCheck {
    pub u: usize,
    pub u_prime: usize,
    pub replications: usize,
    /// `μ_i`, the conditional mean of `X̂_iu`; that of `X̂_iu'` is 0.
    pub mu_i: f64,
    pub nu2_i: f64,
    pub nu2p_i: f64,
    pub mean_on: f64,
    pub var_on: f64,
    pub mean_off: f64,
    pub var_off: f64,
    /// Standard errors of the four estimates above, from the predicted variances.
    pub std_errs: [f64; 4],
    /// Every estimate is within 3 standard errors of its prediction.
    pub pass: bool,
}

/// Checks the conditional law of `X̂_iu` and `X̂_iu'` for sample `i` of trial 0.
///
/// The signal is held fixed. For `X̂_iu` the column `u` (smallest support
/// index) is kept and the other support columns and the noise are redrawn;
/// for `X̂_iu'` (`u'` the smallest off-support index) only column `u'` is
/// kept. Each is redrawn `replications` times.
pub fn conditional_proxy_check(config: &ProblemConfig, i: usize, replications: usize) -> Result<ProxyMomentCheck> {
    if replications < 2 {
        return Err(Error::config("replications", "must be at least 2"));
    }
    if i >= config.n {
        return Err(Error::Argument(format!(
            "sample {i} is out of range for n = {}",
            config.n
        )));
    }
    let cond = conditioning(config, 0, i)?;
    let cm = ConditionalMoments::from_samples(&[cond.params()], config.m, config.sigma2);
    let key = StreamKey::root(config.seed).child(TAG_PROXY).child(i as u64);
    let (m, sigma) = (config.m, config.sigma());
    let draws: Vec<(f64, f64)> = (0..replications)
        .into_par_iter()
        .map_init(|| vec![0.0; m], |y, r| cond.redraw(m, sigma, &mut key.rng(r as u64), y))
        .collect();
    let on: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let off: Vec<f64> = draws.iter().map(|d| d.1).collect();
    let (mean_on, var_on) = mean_var(&on);
    let (mean_off, var_off) = mean_var(&off);
    let (mu_i, nu2_i, nu2p_i) = (cm.mu_i[0], cm.nu2_i[0], cm.nu2p_i[0]);
    let r = replications as f64;
    let var_se = (2.0 / (r - 1.0)).sqrt();
    let std_errs = [(nu2_i / r).sqrt(), nu2_i * var_se, (nu2p_i / r).sqrt(), nu2p_i * var_se];
    let diffs = [mean_on - mu_i, var_on - nu2_i, mean_off, var_off - nu2p_i];
    let pass = diffs.iter().zip(&std_errs).all(|(d, s)| d.abs() <= 3.0 * s);
    Ok(ProxyMomentCheck {
        u: cond.u,
        u_prime: cond.u_prime,
        replications,
        mu_i,
        nu2_i,
        nu2p_i,
        mean_on,
        var_on,
        mean_off,
        var_off,
        std_errs,
        pass,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatisticMeanCheck {
    pub mu: f64,
    pub mu_prime: f64,
    pub mean_on: f64,
    pub mean_off: f64,
    /// Empirical standard errors of the two means.
    pub std_errs: [f64; 2],
    pub pass: bool,
}

/// Checks `E[λ̃_u | Φ_iu, i ≤ n]` and `E[λ̃_u' | Φ_iu', i ≤ n]` for trial 0,
/// redrawing as in [`conditional_proxy_check`] for every sample.
pub fn conditional_statistic_check(config: &ProblemConfig, replications: usize) -> Result<StatisticMeanCheck> {
    if replications < 2 {
        return Err(Error::config("replications", "must be at least 2"));
    }
    let conds = (0..config.n)
        .map(|i| conditioning(config, 0, i))
        .collect::<Result<Vec<_>>>()?;
    let params: Vec<ProxyConditioning> = conds.iter().map(Conditioning::params).collect();
    let cm = ConditionalMoments::from_samples(&params, config.m, config.sigma2);
    let key = StreamKey::root(config.seed).child(TAG_STAT);
    let (m, sigma, n) = (config.m, config.sigma(), config.n as f64);
    let draws: Vec<(f64, f64)> = (0..replications)
        .into_par_iter()
        .map_init(
            || vec![0.0; m],
            |y, r| {
                let mut rng = key.rng(r as u64);
                let (mut on, mut off) = (0.0, 0.0);
                for c in &conds {
                    let (a, b) = c.redraw(m, sigma, &mut rng, y);
                    on += a * a;
                    off += b * b;
                }
                (on / n, off / n)
            },
        )
        .collect();
    let on: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let off: Vec<f64> = draws.iter().map(|d| d.1).collect();
    let (mean_on, var_on) = mean_var(&on);
    let (mean_off, var_off) = mean_var(&off);
    let r = replications as f64;
    let std_errs = [(var_on / r).sqrt(), (var_off / r).sqrt()];
    let pass = (mean_on - cm.mu).abs() <= 3.0 * std_errs[0] && (mean_off - cm.mu_prime).abs() <= 3.0 * std_errs[1];
    Ok(StatisticMeanCheck {
        mu: cm.mu,
        mu_prime: cm.mu_prime,
        mean_on,
        mean_off,
        std_errs,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SignalMode;

    #[test]
    fn noiseless_proxy_moments() {
        let cfg = ProblemConfig::new(12, 3, 5, 4).with_seed(21);
        let c = conditional_proxy_check(&cfg, 2, 10_000).unwrap();
        assert!(c.pass, "{c:?}");
        assert!(c.u != c.u_prime);
    }

    #[test]
    fn noisy_signed_proxy_moments() {
        let cfg = ProblemConfig::new(20, 4, 3, 2)
            .with_magnitudes(0.5, 2.0)
            .with_signal_mode(SignalMode::UniformMagnitudeRandomSign)
            .with_noise(0.3)
            .with_seed(2);
        let c = conditional_proxy_check(&cfg, 1, 10_000).unwrap();
        assert!(c.pass, "{c:?}");
    }

    #[test]
    fn single_support_index_has_only_noise_variance() {
        let cfg = ProblemConfig::new(5, 1, 4, 1).with_seed(3);
        let c = conditional_proxy_check(&cfg, 0, 100).unwrap();
        assert_eq!(c.nu2_i, 0.0);
        assert!(c.var_on.abs() < 1e-20);
        assert!((c.mean_on - c.mu_i).abs() < 1e-12);
    }

    #[test]
    fn statistic_means() {
        let cfg = ProblemConfig::new(16, 4, 4, 30).with_noise(0.2).with_seed(23);
        let c = conditional_statistic_check(&cfg, 4000).unwrap();
        assert!(c.pass, "{c:?}");
        assert!(c.mu > c.mu_prime);
    }

    #[test]
    fn full_support_is_rejected() {
        let cfg = ProblemConfig::new(3, 3, 2, 1);
        assert!(conditional_proxy_check(&cfg, 0, 100).is_err());
    }
}
