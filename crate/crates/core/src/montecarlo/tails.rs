use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    chisq_lower_tail_bound, chisq_upper_tail_bound, column_norm_moment, heavy_tail_bound_q2, heavy_tail_bound_q3,
    max_chisq_bound, BoundConstants,
};
use crate::error::{Error, Result};
use crate::rng::StreamKey;

/// Replications used to estimate `E max_i ‖Φ_iu‖²` for the max-norm probe.
pub const MU_MAX_REPLICATIONS: usize = 10_000;

const BATCH: usize = 1024;
const TAG_TAIL: u64 = 0x7a11;
const TAG_MU_MAX: u64 = 0x3a4d;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tail {
    Upper,
    Lower,
}

/// The random variable whose exceedance frequency is measured.
///
/// `V_i ~ χ²_m` are independent and `‖Φ_iu‖² = V_i / m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailStatistic {
    /// `|(1/n)Σ(‖Φ_iu‖⁴ − E‖Φ_iu‖⁴)|`.
    SumChiSq4,
    /// `|(1/n)Σ(‖Φ_iu‖⁶ − E‖Φ_iu‖⁶)|`.
    SumChiSq6,
    /// `max_i ‖Φ_iu‖² − μ_max`, with `μ_max` estimated on an independent stream.
    MaxChiSq,
    /// `±((1/n)ΣX_i² − (σ² + μ²))` for `X_i ~ N(μ, σ²)`, sign set by `tail`.
    NoncentralChiSqMean { mu: f64, sigma2: f64, tail: Tail },
}

impl TailStatistic {
    fn code(&self) -> u64 {
        match self {
            TailStatistic::SumChiSq4 => 1,
            TailStatistic::SumChiSq6 => 2,
            TailStatistic::MaxChiSq => 3,
            TailStatistic::NoncentralChiSqMean { tail: Tail::Upper, .. } => 4,
            TailStatistic::NoncentralChiSqMean { tail: Tail::Lower, .. } => 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailProbe {
    pub statistic: TailStatistic,
    pub n: usize,
    /// Ignored by [`TailStatistic::NoncentralChiSqMean`].
    pub m: usize,
    pub t_grid: Vec<f64>,
    pub replications: usize,
}

impl TailProbe {
    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("n", "must be at least 1"));
        }
        if self.m == 0 {
            return Err(Error::config("m", "must be at least 1"));
        }
        if self.replications == 0 {
            return Err(Error::config("replications", "must be at least 1"));
        }
        if let Some(t) = self.t_grid.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
            return Err(Error::config("t", format!("{t} is not a finite nonnegative real")));
        }
        if let TailStatistic::NoncentralChiSqMean { mu, sigma2, .. } = self.statistic {
            if !mu.is_finite() {
                return Err(Error::config("mu", "must be finite"));
            }
            if !(sigma2.is_finite() && sigma2 > 0.0) {
                return Err(Error::config("sigma2", "must be positive"));
            }
        }
        Ok(())
    }

    fn key(&self, seed: u64) -> StreamKey {
        let mut key = StreamKey::root(seed)
            .child(TAG_TAIL)
            .child(self.statistic.code())
            .child(self.n as u64)
            .child(self.m as u64);
        if let TailStatistic::NoncentralChiSqMean { mu, sigma2, .. } = self.statistic {
            key = key.child(mu.to_bits()).child(sigma2.to_bits());
        }
        key
    }
}

/// Empirical exceedance frequency at one `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailPoint {
    pub t: f64,
    pub frequency: f64,
    /// `sqrt(p(1-p)/R)` at the observed frequency.
    pub std_err: f64,
}

fn chisq_norm(dist: &ChiSquared<f64>, m: f64, rng: &mut ChaCha8Rng) -> f64 {
    dist.sample(rng) / m
}

/// `E max_i ‖Φ_iu‖²` over `n` independent columns, by simulation.
pub fn estimate_mu_max(n: usize, m: usize, replications: usize, seed: u64) -> Result<f64> {
    if n == 0 || m == 0 || replications == 0 {
        return Err(Error::Argument("n, m and replications must be positive".into()));
    }
    let key = StreamKey::root(seed).child(TAG_MU_MAX).child(n as u64).child(m as u64);
    let dist = ChiSquared::new(m as f64).map_err(|e| Error::Argument(e.to_string()))?;
    let mf = m as f64;
    let sums: Vec<f64> = batches(replications)
        .into_par_iter()
        .map(|(b, len)| {
            let mut rng = key.rng(b as u64);
            (0..len)
                .map(|_| (0..n).map(|_| chisq_norm(&dist, mf, &mut rng)).fold(f64::MIN, f64::max))
                .sum::<f64>()
        })
        .collect();
    Ok(sums.iter().sum::<f64>() / replications as f64)
}

fn batches(replications: usize) -> Vec<(usize, usize)> {
    (0..replications.div_ceil(BATCH))
        .map(|b| (b, BATCH.min(replications - b * BATCH)))
        .collect()
}

/// Draws every replication of the probe's statistic, in replication order.
fn draw_statistic(probe: &TailProbe, seed: u64, mu_max: f64) -> Result<Vec<f64>> {
    let key = probe.key(seed);
    let (n, m) = (probe.n, probe.m as f64);
    let dist = ChiSquared::new(m).map_err(|e| Error::Argument(e.to_string()))?;
    let stat = probe.statistic;
    let chunks: Vec<Vec<f64>> = batches(probe.replications)
        .into_par_iter()
        .map(|(b, len)| {
            let mut rng = key.rng(b as u64);
            (0..len)
                .map(|_| match stat {
                    TailStatistic::SumChiSq4 | TailStatistic::SumChiSq6 => {
                        let q = if stat == TailStatistic::SumChiSq4 { 2 } else { 3 };
                        let mean = column_norm_moment(probe.m, q);
                        let s: f64 = (0..n)
                            .map(|_| chisq_norm(&dist, m, &mut rng).powi(q as i32) - mean)
                            .sum();
                        (s / n as f64).abs()
                    }
                    TailStatistic::MaxChiSq => {
                        (0..n).map(|_| chisq_norm(&dist, m, &mut rng)).fold(f64::MIN, f64::max) - mu_max
                    }
                    TailStatistic::NoncentralChiSqMean { mu, sigma2, tail } => {
                        let sigma = sigma2.sqrt();
                        let s: f64 = (0..n)
                            .map(|_| {
                                let z: f64 = rng.sample(StandardNormal);
                                (mu + sigma * z).powi(2)
                            })
                            .sum();
                        let dev = s / n as f64 - (sigma2 + mu * mu);
                        match tail {
                            Tail::Upper => dev,
                            Tail::Lower => -dev,
                        }
                    }
                })
                .collect()
        })
        .collect();
    Ok(chunks.concat())
}

fn mu_max_for(probe: &TailProbe, seed: u64) -> Result<Option<f64>> {
    match probe.statistic {
        // E max ≥ E ‖Φ_iu‖² = 1; the clamp only absorbs simulation error at n = 1.
        TailStatistic::MaxChiSq => Ok(Some(
            estimate_mu_max(probe.n, probe.m, MU_MAX_REPLICATIONS, seed)?.max(1.0),
        )),
        _ => Ok(None),
    }
}

fn frequencies(values: &[f64], t_grid: &[f64]) -> Vec<TailPoint> {
    let r = values.len() as f64;
    t_grid
        .iter()
        .map(|&t| {
            let hits = values.iter().filter(|&&v| v >= t).count() as f64;
            let p = hits / r;
            TailPoint {
                t,
                frequency: p,
                std_err: (p * (1.0 - p) / r).sqrt(),
            }
        })
        .collect()
}

/// Frequency of `{statistic ≥ t}` for each `t` of the probe's grid.
pub fn empirical_tail(probe: &TailProbe, seed: u64) -> Result<Vec<TailPoint>> {
    probe.validate()?;
    let mu_max = mu_max_for(probe, seed)?;
    let values = draw_statistic(probe, seed, mu_max.unwrap_or(0.0))?;
    Ok(frequencies(&values, &probe.t_grid))
}

/// Which analytic bound a probe is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundSelector {
    HeavyQ3,
    HeavyQ2,
    MaxChisq,
    ChisqUpper,
    ChisqLower,
}

impl BoundSelector {
    pub const ALL: [BoundSelector; 5] = [
        BoundSelector::HeavyQ3,
        BoundSelector::HeavyQ2,
        BoundSelector::MaxChisq,
        BoundSelector::ChisqUpper,
        BoundSelector::ChisqLower,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            BoundSelector::HeavyQ3 => "heavy_q3",
            BoundSelector::HeavyQ2 => "heavy_q2",
            BoundSelector::MaxChisq => "max_chisq",
            BoundSelector::ChisqUpper => "chisq_upper",
            BoundSelector::ChisqLower => "chisq_lower",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }

    /// The statistic this bound controls.
    pub fn matches(&self, statistic: &TailStatistic) -> bool {
        matches!(
            (self, statistic),
            (BoundSelector::HeavyQ3, TailStatistic::SumChiSq6)
                | (BoundSelector::HeavyQ2, TailStatistic::SumChiSq4)
                | (BoundSelector::MaxChisq, TailStatistic::MaxChiSq)
                | (
                    BoundSelector::ChisqUpper,
                    TailStatistic::NoncentralChiSqMean { tail: Tail::Upper, .. }
                )
                | (
                    BoundSelector::ChisqLower,
                    TailStatistic::NoncentralChiSqMean { tail: Tail::Lower, .. }
                )
        )
    }

    /// The probe statistic this bound controls, for the noncentral case at `(mu, sigma2)`.
    pub fn statistic(&self, mu: f64, sigma2: f64) -> TailStatistic {
        match self {
            BoundSelector::HeavyQ3 => TailStatistic::SumChiSq6,
            BoundSelector::HeavyQ2 => TailStatistic::SumChiSq4,
            BoundSelector::MaxChisq => TailStatistic::MaxChiSq,
            BoundSelector::ChisqUpper => TailStatistic::NoncentralChiSqMean {
                mu,
                sigma2,
                tail: Tail::Upper,
            },
            BoundSelector::ChisqLower => TailStatistic::NoncentralChiSqMean {
                mu,
                sigma2,
                tail: Tail::Lower,
            },
        }
    }
}

fn analytic(
    probe: &TailProbe,
    selector: BoundSelector,
    constants: &BoundConstants,
    mu_max: Option<f64>,
    t: f64,
) -> Result<f64> {
    let (n, m) = (probe.n, probe.m);
    match (selector, probe.statistic) {
        (BoundSelector::HeavyQ3, _) => heavy_tail_bound_q3(n, m, t, constants),
        (BoundSelector::HeavyQ2, _) => heavy_tail_bound_q2(n, m, t, constants),
        (BoundSelector::MaxChisq, _) => max_chisq_bound(n, m, mu_max.unwrap_or(1.0), t),
        (BoundSelector::ChisqUpper, TailStatistic::NoncentralChiSqMean { mu, sigma2, .. }) => {
            chisq_upper_tail_bound(&vec![mu; n], &vec![sigma2; n], t)
        }
        (BoundSelector::ChisqLower, TailStatistic::NoncentralChiSqMean { mu, sigma2, .. }) => {
            chisq_lower_tail_bound(&vec![mu; n], &vec![sigma2; n], t)
        }
        _ => unreachable!("selector checked against the statistic"),
    }
}

/// One row of a dominance check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub t: f64,
    pub empirical: f64,
    pub std_err: f64,
    pub analytic: f64,
    /// `empirical ≤ analytic + 3 std_err`.
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub selector: BoundSelector,
    pub n: usize,
    pub m: usize,
    /// The simulated `E max_i ‖Φ_iu‖²` used on both sides of the max-norm check.
    pub mu_max: Option<f64>,
    pub checks: Vec<BoundCheck>,
    pub pass: bool,
}

fn check_points(
    probe: &TailProbe,
    selector: BoundSelector,
    constants: &BoundConstants,
    mu_max: Option<f64>,
    points: &[TailPoint],
) -> Result<BoundReport> {
    let checks = points
        .iter()
        .map(|p| {
            let a = analytic(probe, selector, constants, mu_max, p.t)?;
            Ok(BoundCheck {
                t: p.t,
                empirical: p.frequency,
                std_err: p.std_err,
                analytic: a,
                pass: p.frequency <= a + 3.0 * p.std_err,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BoundReport {
        selector,
        n: probe.n,
        m: probe.m,
        mu_max,
        pass: checks.iter().all(|c| c.pass),
        checks,
    })
}

/// Compares the empirical tail of `probe` with the analytic bound named by `selector`.
pub fn verify_bound(
    probe: &TailProbe,
    selector: BoundSelector,
    constants: &BoundConstants,
    seed: u64,
) -> Result<BoundReport> {
    if !selector.matches(&probe.statistic) {
        return Err(Error::Argument(format!(
            "bound {} does not control the statistic {:?}",
            selector.name(),
            probe.statistic
        )));
    }
    constants.validate()?;
    if probe.t_grid.is_empty() {
        return Ok(BoundReport {
            selector,
            n: probe.n,
            m: probe.m,
            mu_max: None,
            checks: Vec::new(),
            pass: true,
        });
    }
    probe.validate()?;
    let mu_max = mu_max_for(probe, seed)?;
    let values = draw_statistic(probe, seed, mu_max.unwrap_or(0.0))?;
    let points = frequencies(&values, &probe.t_grid);
    check_points(probe, selector, constants, mu_max, &points)
}

/// The heavy-tail reference grid: `n ∈ {10, 100}`, `m ∈ {4, 16}`,
/// `t ∈ {0.1, 0.3, 1.0}`, for both the fourth- and sixth-power averages.
pub fn reference_heavy_grid(replications: usize) -> Vec<(TailProbe, BoundSelector)> {
    let mut out = Vec::new();
    for selector in [BoundSelector::HeavyQ3, BoundSelector::HeavyQ2] {
        for n in [10, 100] {
            for m in [4, 16] {
                out.push((
                    TailProbe {
                        statistic: selector.statistic(0.0, 1.0),
                        n,
                        m,
                        t_grid: vec![0.1, 0.3, 1.0],
                        replications,
                    },
                    selector,
                ));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeavyCalibration {
    /// Largest grid value passing every reference check, if any.
    pub c_heavy: Option<f64>,
    /// Every grid value with its overall verdict.
    pub grid: Vec<(f64, bool)>,
}

/// Calibrates the heavy-tail constant on the grid `{2⁻⁶, …, 2⁶}`.
///
/// The bound `exp(-C·r)` tightens as `C` grows, so every `C` below a
/// passing one also passes; the informative value is the largest `C` that
/// still dominates the reference simulation. The simulated tails are drawn
/// once and reused for every `C`.
pub fn calibrate_c_heavy(replications: usize, seed: u64) -> Result<HeavyCalibration> {
    let grid = reference_heavy_grid(replications);
    let sims = grid
        .iter()
        .map(|(probe, _)| empirical_tail(probe, seed))
        .collect::<Result<Vec<_>>>()?;
    let mut out = HeavyCalibration {
        c_heavy: None,
        grid: Vec::new(),
    };
    for e in -6..=6 {
        let c = 2f64.powi(e);
        let constants = BoundConstants {
            c_heavy: c,
            ..BoundConstants::default()
        };
        let mut pass = true;
        for ((probe, selector), points) in grid.iter().zip(&sims) {
            pass &= check_points(probe, *selector, &constants, None, points)?.pass;
        }
        if pass {
            out.c_heavy = Some(c);
        }
        out.grid.push((c, pass));
    }
    Ok(out)
}
