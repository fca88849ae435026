//! Closed-form evaluators for the analysis of the second-moment estimator.
//!
//! Conditioning on column `u` of every `Φ_i` makes each proxy `X̂_iu`
//! Gaussian, so `λ̃_u` is an average of noncentral chi-square variables.
//! This module evaluates:
//!
//! - the conditional means and variances of the proxies and of `λ̃`,
//! - the window of thresholds `τ` for which both conditional error
//!   probabilities stay below `δ/(3d)`,
//! - the ensemble separation condition, which only involves column norms,
//! - the noncentral chi-square tail bounds, the heavy-tailed bounds for
//!   averages of `‖Φ_iu‖⁴` and `‖Φ_iu‖⁶`, the union bound for the largest
//!   column norm, Rosenthal's moment inequality, and
//! - the resulting sample-complexity upper bound.
//!
//! Every probability bound is clamped to 1. Absolute constants are carried
//! in [`BoundConstants`]; their values are not known in closed form and are
//! calibrated by simulation (see [`crate::montecarlo::calibrate_c_heavy`]).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ProblemConfig, ProblemInstance};

/// Absolute constants of the bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundConstants {
    /// `C` in the heavy-tailed bounds for averages of `‖Φ_iu‖⁴` and `‖Φ_iu‖⁶`.
    pub c_heavy: f64,
    /// `c` in the sample-complexity formula.
    pub c_sample: f64,
    /// `c` in Rosenthal's inequality.
    pub rosenthal_c: f64,
}

impl Default for BoundConstants {
    fn default() -> Self {
        BoundConstants {
            c_heavy: 1.0,
            c_sample: 1.0,
            rosenthal_c: 1.0,
        }
    }
}

impl BoundConstants {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("c_heavy", self.c_heavy),
            ("c_sample", self.c_sample),
            ("rosenthal_c", self.rosenthal_c),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(name, "must be a positive finite number"));
            }
        }
        Ok(())
    }
}

fn check_t(t: f64) -> Result<()> {
    if t.is_nan() || t < 0.0 {
        return Err(Error::Argument(format!("deviation t = {t} must be nonnegative")));
    }
    Ok(())
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Argument(format!("delta = {delta} must lie in (0, 1)")));
    }
    Ok(())
}

fn clamp_prob(exponent: f64) -> f64 {
    (-exponent).exp().min(1.0)
}

/// `E‖Φ_iu‖^{2q} = Π_{j<q} (1 + 2j/m)` for `m‖Φ_iu‖² ~ χ²_m`.
pub fn column_norm_moment(m: usize, q: u32) -> f64 {
    (0..q).map(|j| 1.0 + 2.0 * j as f64 / m as f64).product()
}

/// Conditional moments of the proxies for an on-support `u` and an off-support `u'`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalMoments {
    /// `μ_i = ‖Φ_iu‖² x_iu`.
    pub mu_i: Vec<f64>,
    /// `ν_i²`, conditional variance of `X̂_iu`.
    pub nu2_i: Vec<f64>,
    /// `ν_i'²`, conditional variance of `X̂_iu'`.
    pub nu2p_i: Vec<f64>,
    /// `E[λ̃_u | Φ_iu, i ∈ [n]]`.
    pub mu: f64,
    /// `E[λ̃_u' | Φ_iu', i ∈ [n]]`.
    pub mu_prime: f64,
}

/// Per-sample inputs of [`ConditionalMoments`], without reference to a full instance.
#[derive(Debug, Clone, Copy)]
pub struct ProxyConditioning {
    /// `‖Φ_iu‖²`.
    pub norm_u: f64,
    /// `‖Φ_iu'‖²`.
    pub norm_u_prime: f64,
    /// `x_iu`.
    pub x_u: f64,
    /// `Σ_{v ∈ S} x_iv²`.
    pub support_energy: f64,
}

impl ConditionalMoments {
    pub fn from_samples(samples: &[ProxyConditioning], m: usize, sigma2: f64) -> Self {
        let inv_m = 1.0 / m as f64;
        let n = samples.len() as f64;
        let mut out = ConditionalMoments {
            mu_i: Vec::with_capacity(samples.len()),
            nu2_i: Vec::with_capacity(samples.len()),
            nu2p_i: Vec::with_capacity(samples.len()),
            mu: 0.0,
            mu_prime: 0.0,
        };
        let (mut mu_sum, mut mu_prime_sum) = (0.0, 0.0);
        for s in samples {
            let others = s.support_energy - s.x_u * s.x_u;
            let mu_i = s.norm_u * s.x_u;
            let nu2 = s.norm_u * inv_m * others + sigma2 * s.norm_u;
            let nu2p = s.norm_u_prime * inv_m * s.support_energy + sigma2 * s.norm_u_prime;
            mu_sum += s.x_u * s.x_u * s.norm_u * s.norm_u + s.norm_u * (inv_m * others + sigma2);
            mu_prime_sum += s.norm_u_prime * (inv_m * s.support_energy + sigma2);
            out.mu_i.push(mu_i);
            out.nu2_i.push(nu2);
            out.nu2p_i.push(nu2p);
        }
        out.mu = mu_sum / n;
        out.mu_prime = mu_prime_sum / n;
        out
    }

    pub fn n(&self) -> usize {
        self.mu_i.len()
    }
}

pub fn conditional_moments(instance: &ProblemInstance, u: usize, u_prime: usize) -> Result<ConditionalMoments> {
    check_pair(instance, u, u_prime)?;
    let ms = &instance.measurements;
    let samples: Vec<ProxyConditioning> = (0..instance.config.n)
        .map(|i| {
            let x = &instance.signals.vectors[i];
            ProxyConditioning {
                norm_u: ms.column_sq_norm(i, u),
                norm_u_prime: ms.column_sq_norm(i, u_prime),
                x_u: x[u],
                support_energy: instance.support.indices().iter().map(|&v| x[v] * x[v]).sum(),
            }
        })
        .collect();
    Ok(ConditionalMoments::from_samples(
        &samples,
        instance.config.m,
        instance.config.sigma2,
    ))
}

fn check_pair(instance: &ProblemInstance, u: usize, u_prime: usize) -> Result<()> {
    let d = instance.config.d;
    if u >= d || !instance.support.contains(u) {
        return Err(Error::Argument(format!("u = {u} is not in the support")));
    }
    if u_prime >= d || instance.support.contains(u_prime) {
        return Err(Error::Argument(format!(
            "u' = {u_prime} must be an off-support index below d = {d}"
        )));
    }
    Ok(())
}

/// Admissible thresholds: `τ ∈ [tau_low, tau_high]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdWindow {
    pub tau_low: f64,
    pub tau_high: f64,
}

impl ThresholdWindow {
    /// Nonempty exactly when the separation requirement on `μ - μ'` holds strictly.
    pub fn is_nonempty(&self) -> bool {
        self.tau_low < self.tau_high
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.tau_low + self.tau_high)
    }
}

/// Thresholds keeping both conditional error probabilities below `δ/(3d)`.
pub fn threshold_window(cm: &ConditionalMoments, n: usize, d: usize, delta: f64) -> Result<ThresholdWindow> {
    check_delta(delta)?;
    if n == 0 || cm.n() != n {
        return Err(Error::Argument(format!(
            "moments hold {} samples, expected n = {n}",
            cm.n()
        )));
    }
    let log_factor = (3.0 * d as f64 / delta).ln();
    let nf = n as f64;
    let on_spread: f64 = cm
        .mu_i
        .iter()
        .zip(&cm.nu2_i)
        .map(|(mu, nu2)| nu2 * nu2 + mu * mu * nu2)
        .sum();
    let off_spread: f64 = cm.nu2p_i.iter().map(|v| v * v).sum();
    let off_max = cm.nu2p_i.iter().copied().fold(0.0, f64::max);
    let tau_high = cm.mu - (4.0 / (nf * nf) * on_spread * log_factor).sqrt();
    let gauss = (16.0 / (nf * nf) * off_spread * log_factor).sqrt();
    let exp = 8.0 / nf * off_max * log_factor;
    Ok(ThresholdWindow {
        tau_low: cm.mu_prime + gauss.max(exp),
        tau_high,
    })
}

/// Aggregates of squared column norms `‖Φ_iu‖²` over the samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnMoments {
    pub n: usize,
    pub sum2: f64,
    pub sum4: f64,
    pub sum6: f64,
    pub max2: f64,
}

impl ColumnMoments {
    pub fn from_sq_norms(norms: &[f64]) -> Self {
        let mut cm = ColumnMoments {
            n: norms.len(),
            sum2: 0.0,
            sum4: 0.0,
            sum6: 0.0,
            max2: 0.0,
        };
        for &a in norms {
            cm.sum2 += a;
            cm.sum4 += a * a;
            cm.sum6 += a * a * a;
            cm.max2 = cm.max2.max(a);
        }
        cm
    }

    /// Aggregates with every power replaced by its expectation; `max2` is set to 1.
    pub fn expected(n: usize, m: usize) -> Self {
        let nf = n as f64;
        ColumnMoments {
            n,
            sum2: nf,
            sum4: nf * column_norm_moment(m, 2),
            sum6: nf * column_norm_moment(m, 3),
            max2: 1.0,
        }
    }
}

/// Parameters of the separation condition other than the column norms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparationParams {
    pub k: usize,
    pub m: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub sigma2: f64,
    /// `log(3d/δ)`.
    pub log_factor: f64,
}

impl SeparationParams {
    pub fn new(config: &ProblemConfig, delta: f64) -> Result<Self> {
        check_delta(delta)?;
        Ok(SeparationParams {
            k: config.k,
            m: config.m,
            x_min: config.x_min,
            x_max: config.x_max,
            sigma2: config.sigma2,
            log_factor: (3.0 * config.d as f64 / delta).ln(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub lhs: f64,
    pub rhs_terms: [f64; 4],
    pub rhs: f64,
    pub satisfied: bool,
}

/// Evaluates the separation inequality from column-norm aggregates of an
/// on-support column `u` and an off-support column `u'`.
pub fn separation_from_moments(on: &ColumnMoments, off: &ColumnMoments, p: &SeparationParams) -> SeparationReport {
    let n = on.n as f64;
    let m = p.m as f64;
    let snr = p.sigma2 / (p.x_max * p.x_max);
    let a = (p.k as f64 - 1.0) / m + snr;
    let b = p.k as f64 / m + snr;
    let l = p.log_factor;
    let ratio = (p.x_min * p.x_min) / (p.x_max * p.x_max);

    let lhs = ratio * (on.sum4 - on.sum2 / m) / n;
    let rhs_terms = [
        (4.0 / (n * n) * a * a * on.sum4 * l).sqrt(),
        (4.0 / (n * n) * a * on.sum6 * l).sqrt(),
        (16.0 / (n * n) * b * b * off.sum4 * l).sqrt(),
        8.0 / n * b * off.max2 * l,
    ];
    let rhs = rhs_terms.iter().sum::<f64>();
    SeparationReport {
        lhs,
        rhs_terms,
        rhs,
        satisfied: lhs > rhs,
    }
}

pub fn separation_condition(
    instance: &ProblemInstance,
    delta: f64,
    u: usize,
    u_prime: usize,
) -> Result<SeparationReport> {
    check_pair(instance, u, u_prime)?;
    let params = SeparationParams::new(&instance.config, delta)?;
    let ms = &instance.measurements;
    let n = instance.config.n;
    let on: Vec<f64> = (0..n).map(|i| ms.column_sq_norm(i, u)).collect();
    let off: Vec<f64> = (0..n).map(|i| ms.column_sq_norm(i, u_prime)).collect();
    Ok(separation_from_moments(
        &ColumnMoments::from_sq_norms(&on),
        &ColumnMoments::from_sq_norms(&off),
        &params,
    ))
}

fn chisq_spread(mu: &[f64], sigma2: &[f64]) -> Result<(f64, f64)> {
    if mu.is_empty() || mu.len() != sigma2.len() {
        return Err(Error::Argument(
            "mean and variance lists must be nonempty and of equal length".into(),
        ));
    }
    if sigma2.iter().any(|s| !(s.is_finite() && *s >= 0.0)) || mu.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument("means must be finite and variances nonnegative".into()));
    }
    let spread: f64 = mu.iter().zip(sigma2).map(|(m, s)| s * s + s * m * m).sum();
    let max_var = sigma2.iter().copied().fold(0.0, f64::max);
    if max_var == 0.0 {
        return Err(Error::Degenerate("all variances are zero"));
    }
    Ok((spread, max_var))
}

/// Bound on `P((1/n)ΣX_i² ≤ (1/n)Σ(σ_i²+μ_i²) − t)` for independent `X_i ~ N(μ_i, σ_i²)`.
pub fn chisq_lower_tail_bound(mu: &[f64], sigma2: &[f64], t: f64) -> Result<f64> {
    check_t(t)?;
    let (spread, _) = chisq_spread(mu, sigma2)?;
    let n = mu.len() as f64;
    Ok(clamp_prob(n * n * t * t / (4.0 * spread)))
}

/// Bound on `P((1/n)ΣX_i² ≥ (1/n)Σ(σ_i²+μ_i²) + t)` for independent `X_i ~ N(μ_i, σ_i²)`.
pub fn chisq_upper_tail_bound(mu: &[f64], sigma2: &[f64], t: f64) -> Result<f64> {
    check_t(t)?;
    let (spread, max_var) = chisq_spread(mu, sigma2)?;
    let n = mu.len() as f64;
    let gauss = n * n * t * t / (16.0 * spread);
    let exp = n * t / (8.0 * max_var);
    Ok(clamp_prob(gauss.min(exp)))
}

/// Bound on `P(|(1/n)Σ(‖Φ_iu‖⁶ − E‖Φ_iu‖⁶)| ≥ t)`.
pub fn heavy_tail_bound_q3(n: usize, m: usize, t: f64, constants: &BoundConstants) -> Result<f64> {
    check_t(t)?;
    let (n, m) = (n as f64, m as f64);
    let nt = n * t;
    let rate = nt.min((m.powi(3) * nt).powf(0.25)).min(nt * t);
    Ok(clamp_prob(constants.c_heavy * rate))
}

/// Bound on `P(|(1/n)Σ(‖Φ_iu‖⁴ − E‖Φ_iu‖⁴)| ≥ t)`.
pub fn heavy_tail_bound_q2(n: usize, m: usize, t: f64, constants: &BoundConstants) -> Result<f64> {
    check_t(t)?;
    let (n, m) = (n as f64, m as f64);
    let nt = n * t;
    let rate = nt.min((m * m * nt).cbrt()).min(nt * t);
    Ok(clamp_prob(constants.c_heavy * rate))
}

/// Union bound on `P(max_i ‖Φ_iu‖² ≥ μ_max + t)`, with `μ_max = E max_i ‖Φ_iu‖²`.
pub fn max_chisq_bound(n: usize, m: usize, mu_max: f64, t: f64) -> Result<f64> {
    check_t(t)?;
    if !(mu_max >= 1.0 && mu_max.is_finite()) {
        return Err(Error::Argument(format!(
            "mu_max = {mu_max} must be at least 1, the mean of each column norm"
        )));
    }
    let excess = mu_max + t - 1.0;
    let exponent = m as f64 / 8.0 * (excess * excess).min(excess);
    Ok((n as f64 * (-exponent).exp()).min(1.0))
}

/// Rosenthal's bound on `‖Σ_{i≤n} Z_i‖_p` for i.i.d. centered `Z_i`.
pub fn rosenthal_bound(p: f64, n: usize, lp_norm: f64, l2_norm: f64, constants: &BoundConstants) -> Result<f64> {
    if p.is_nan() || p < 2.0 {
        return Err(Error::Argument(format!("p = {p} must be at least 2")));
    }
    if !(lp_norm >= 0.0 && l2_norm >= 0.0) {
        return Err(Error::Argument("norms must be nonnegative".into()));
    }
    let n = n as f64;
    Ok(constants.rosenthal_c * (p * n.powf(1.0 / p) * lp_norm + (p * n).sqrt() * l2_norm))
}

/// `2⁶(3p + m/2)³`, a bound on `‖V³ − EV³‖_p` for `V ~ χ²_m`.
pub fn chisq_cube_moment_bound(p: f64, m: usize) -> Result<f64> {
    if p.is_nan() || p < 2.0 {
        return Err(Error::Argument(format!("p = {p} must be at least 2")));
    }
    Ok(64.0 * (3.0 * p + m as f64 / 2.0).powi(3))
}

/// Inputs of the sample-complexity upper bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleComplexityQuery {
    pub k: usize,
    pub m: usize,
    pub d: usize,
    pub delta: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub sigma2: f64,
}

impl SampleComplexityQuery {
    pub fn from_config(config: &ProblemConfig, delta: f64) -> Self {
        SampleComplexityQuery {
            k: config.k,
            m: config.m,
            d: config.d,
            delta,
            x_min: config.x_min,
            x_max: config.x_max,
            sigma2: config.sigma2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleComplexity {
    /// The formula before rounding up.
    pub value: f64,
    pub n: u64,
    /// `m < 2 log(d/δ)`: outside the regime where the guarantee is stated.
    pub outside_regime: bool,
}

/// `n = ⌈c (x_max/x_min)⁴ max{A, A²} log(d/δ)⌉` with `A = k/m + σ²/x_max²`.
pub fn sample_complexity_upper(q: &SampleComplexityQuery, constants: &BoundConstants) -> Result<SampleComplexity> {
    check_delta(q.delta)?;
    if q.k == 0 || q.m == 0 || q.d == 0 {
        return Err(Error::Argument("k, m and d must be positive".into()));
    }
    if !(q.x_min > 0.0 && q.x_max >= q.x_min && q.sigma2 >= 0.0) {
        return Err(Error::Argument("need 0 < x_min <= x_max and sigma2 >= 0".into()));
    }
    let log_term = (q.d as f64 / q.delta).ln();
    let a = q.k as f64 / q.m as f64 + q.sigma2 / (q.x_max * q.x_max);
    let ratio4 = (q.x_max / q.x_min).powi(4);
    let value = constants.c_sample * ratio4 * (a * log_term).max(a * a * log_term);
    Ok(SampleComplexity {
        value,
        n: value.ceil().max(1.0) as u64,
        outside_regime: (q.m as f64) < 2.0 * log_term,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MeasurementSet, SignalSet, Support, SupportMode};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    const UNIT: BoundConstants = BoundConstants {
        c_heavy: 1.0,
        c_sample: 1.0,
        rosenthal_c: 1.0,
    };

    #[test]
    fn chisq_tail_examples() {
        assert_relative_eq!(
            chisq_lower_tail_bound(&[0.0], &[1.0], 2.0).unwrap(),
            (-1.0f64).exp(),
            max_relative = 1e-14
        );
        assert_relative_eq!(
            chisq_lower_tail_bound(&[0.0; 4], &[1.0; 4], 1.0).unwrap(),
            (-1.0f64).exp(),
            max_relative = 1e-14
        );
        assert_relative_eq!(
            chisq_upper_tail_bound(&[0.0], &[1.0], 2.0).unwrap(),
            0.778_800_783_071_404_9,
            max_relative = 1e-14
        );
        assert_eq!(chisq_lower_tail_bound(&[0.0], &[1.0], 0.0).unwrap(), 1.0);
        assert_eq!(chisq_upper_tail_bound(&[0.0], &[1.0], 1e-300).unwrap(), 1.0);
    }

    #[test]
    fn chisq_tail_errors() {
        assert!(matches!(
            chisq_lower_tail_bound(&[1.0], &[0.0], 1.0),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            chisq_upper_tail_bound(&[1.0, 2.0], &[0.0, 0.0], 1.0),
            Err(Error::Degenerate(_))
        ));
        assert!(chisq_upper_tail_bound(&[1.0], &[1.0, 1.0], 1.0).is_err());
        assert!(chisq_upper_tail_bound(&[], &[], 1.0).is_err());
        assert!(chisq_upper_tail_bound(&[0.0], &[1.0], -1.0).is_err());
    }

    #[test]
    fn heavy_tail_examples() {
        let q3 = heavy_tail_bound_q3(100, 9, 0.5, &UNIT).unwrap();
        let rate3 = (729.0f64 * 50.0).powf(0.25);
        assert_relative_eq!(rate3, 13.82, epsilon = 5e-3);
        assert_relative_eq!(q3, (-rate3).exp(), max_relative = 1e-12);
        let q2 = heavy_tail_bound_q2(100, 10, 0.5, &UNIT).unwrap();
        let rate2 = 5000.0f64.cbrt();
        assert_relative_eq!(rate2, 17.10, epsilon = 5e-3);
        assert_relative_eq!(q2, (-rate2).exp(), max_relative = 1e-12);
        assert_eq!(heavy_tail_bound_q3(100, 9, 0.0, &UNIT).unwrap(), 1.0);
        assert_eq!(heavy_tail_bound_q2(100, 9, 0.0, &UNIT).unwrap(), 1.0);
    }

    #[test]
    fn max_chisq_examples() {
        assert_relative_eq!(
            max_chisq_bound(1, 8, 1.0, 1.0).unwrap(),
            (-1.0f64).exp(),
            max_relative = 1e-14
        );
        let one = max_chisq_bound(1, 8, 1.0, 3.0).unwrap();
        let two = max_chisq_bound(2, 8, 1.0, 3.0).unwrap();
        assert_relative_eq!(two, 2.0 * one, max_relative = 1e-14);
        assert!(max_chisq_bound(1, 8, 0.9, 1.0).is_err());
    }

    #[test]
    fn rosenthal_examples() {
        assert_relative_eq!(
            rosenthal_bound(2.0, 1, 1.0, 1.0, &UNIT).unwrap(),
            2.0 + 2f64.sqrt(),
            max_relative = 1e-14
        );
        assert_eq!(rosenthal_bound(3.0, 10, 0.0, 0.0, &UNIT).unwrap(), 0.0);
        assert!(rosenthal_bound(1.5, 1, 1.0, 1.0, &UNIT).is_err());
    }

    #[test]
    fn cube_moment_examples() {
        assert_eq!(chisq_cube_moment_bound(2.0, 2).unwrap(), 21952.0);
        assert_eq!(chisq_cube_moment_bound(2.0, 4).unwrap(), 32768.0);
        assert!(chisq_cube_moment_bound(2.5, 4).unwrap() > 32768.0);
        assert!(chisq_cube_moment_bound(2.0, 5).unwrap() > 32768.0);
        assert!(chisq_cube_moment_bound(1.0, 4).is_err());
    }

    fn sc(k: usize, m: usize, d: usize, delta: f64, sigma2: f64) -> SampleComplexity {
        let q = SampleComplexityQuery {
            k,
            m,
            d,
            delta,
            x_min: 1.0,
            x_max: 1.0,
            sigma2,
        };
        sample_complexity_upper(&q, &UNIT).unwrap()
    }

    #[test]
    fn sample_complexity_examples() {
        let r = sc(10, 2, 100, 0.1, 0.0);
        assert_relative_eq!(r.value, 25.0 * 1000f64.ln(), max_relative = 1e-14);
        assert_eq!(r.n, 173);
        assert!(r.outside_regime);

        // A ≤ 1: linear term.
        let lin = sc(4, 8, 100, 0.1, 0.0);
        assert_eq!(lin.n, (0.5 * 1000f64.ln()).ceil() as u64);
        assert!(!sc(4, 16, 100, 0.1, 0.0).outside_regime);

        // Deep regime: halving m quadruples the formula.
        let ratio = sc(40, 5, 100, 0.1, 0.0).value / sc(40, 10, 100, 0.1, 0.0).value;
        assert_relative_eq!(ratio, 4.0, max_relative = 1e-14);

        let bad = SampleComplexityQuery {
            k: 1,
            m: 1,
            d: 2,
            delta: 1.0,
            x_min: 1.0,
            x_max: 1.0,
            sigma2: 0.0,
        };
        assert!(sample_complexity_upper(&bad, &UNIT).is_err());
    }

    #[test]
    fn separation_hand_example() {
        let p = SeparationParams {
            k: 1,
            m: 1,
            x_min: 1.0,
            x_max: 1.0,
            sigma2: 0.0,
            log_factor: 1.0,
        };
        let ones = ColumnMoments::from_sq_norms(&[1.0]);
        let r = separation_from_moments(&ones, &ones, &p);
        assert_eq!(r.lhs, 0.0);
        assert_eq!(r.rhs_terms, [0.0, 0.0, 4.0, 8.0]);
        assert_eq!(r.rhs, 12.0);
        assert!(!r.satisfied);
    }

    #[test]
    fn separation_lhs_vanishes_with_x_min() {
        let mut p = SeparationParams {
            k: 3,
            m: 4,
            x_min: 1.0,
            x_max: 1.0,
            sigma2: 0.1,
            log_factor: 2.0,
        };
        let on = ColumnMoments::from_sq_norms(&[1.2, 0.9, 1.1]);
        let off = ColumnMoments::from_sq_norms(&[0.8, 1.0, 1.3]);
        let rhs = separation_from_moments(&on, &off, &p).rhs;
        p.x_min = 1e-9;
        let r = separation_from_moments(&on, &off, &p);
        assert!(r.lhs.abs() < 1e-15);
        assert_eq!(r.rhs, rhs);
        assert!(!r.satisfied);
    }

    #[test]
    fn separation_at_expected_moments() {
        for m in [1, 3, 8, 50] {
            let p = SeparationParams {
                k: 5,
                m,
                x_min: 0.5,
                x_max: 2.0,
                sigma2: 0.0,
                log_factor: 1.0,
            };
            let e = ColumnMoments::expected(40, m);
            let r = separation_from_moments(&e, &e, &p);
            assert_relative_eq!(r.lhs, (0.25f64 * 0.25) * (1.0 + 1.0 / m as f64), max_relative = 1e-14);
        }
        assert_relative_eq!(column_norm_moment(4, 2), 1.5);
        assert_relative_eq!(column_norm_moment(4, 3), 1.0 + 6.0 / 4.0 + 8.0 / 16.0);
    }

    /// `n = 1`, `m = 1`, `d = 3`, all columns equal to 1, `S = {0, 1}`, `x = 1` on `S`.
    fn unit_instance() -> ProblemInstance {
        let cfg = ProblemConfig::new(3, 2, 1, 1).with_support_mode(SupportMode::Fixed(vec![0, 1]));
        ProblemInstance::from_parts(
            cfg,
            Support::new(vec![0, 1], 3, 2).unwrap(),
            SignalSet {
                vectors: vec![vec![1.0, 1.0, 0.0]],
            },
            MeasurementSet {
                matrices: vec![DMatrix::from_element(1, 3, 1.0)],
                noises: vec![vec![0.0]],
                observations: vec![vec![2.0]],
            },
        )
        .unwrap()
    }

    #[test]
    fn conditional_moments_hand_example() {
        let cm = conditional_moments(&unit_instance(), 0, 2).unwrap();
        assert_eq!(cm.mu_i, vec![1.0]);
        assert_eq!(cm.nu2_i, vec![1.0]);
        assert_eq!(cm.nu2p_i, vec![2.0]);
        assert_eq!(cm.mu, 2.0);
        assert_eq!(cm.mu_prime, 2.0);
    }

    #[test]
    fn conditional_moments_rejects_bad_pairs() {
        let inst = unit_instance();
        assert!(conditional_moments(&inst, 2, 0).is_err());
        assert!(conditional_moments(&inst, 0, 1).is_err());
        assert!(conditional_moments(&inst, 0, 3).is_err());
        assert!(separation_condition(&inst, 0.1, 2, 2).is_err());
    }

    #[test]
    fn conditional_moments_single_noiseless_coordinate() {
        let cfg = ProblemConfig::new(5, 1, 3, 6).with_magnitudes(0.7, 0.7).with_seed(2);
        let inst = ProblemInstance::generate(&cfg, 0).unwrap();
        let u = inst.support.indices()[0];
        let up = inst.support.complement(5)[0];
        let cm = conditional_moments(&inst, u, up).unwrap();
        assert!(cm.nu2_i.iter().all(|&v| v == 0.0));
        let expect: f64 = (0..cfg.n)
            .map(|i| 0.49 * inst.measurements.column_sq_norm(i, u).powi(2))
            .sum::<f64>()
            / cfg.n as f64;
        assert_relative_eq!(cm.mu, expect, max_relative = 1e-14);
    }

    #[test]
    fn degenerate_window_is_between_means() {
        let cm = ConditionalMoments {
            mu_i: vec![1.3, 0.4],
            nu2_i: vec![0.0, 0.0],
            nu2p_i: vec![0.0, 0.0],
            mu: 1.5,
            mu_prime: 0.2,
        };
        let w = threshold_window(&cm, 2, 10, 0.1).unwrap();
        assert_eq!((w.tau_low, w.tau_high), (0.2, 1.5));
        assert!(w.is_nonempty());
        let flipped = ConditionalMoments { mu: 0.1, ..cm };
        assert!(!threshold_window(&flipped, 2, 10, 0.1).unwrap().is_nonempty());
        assert!(threshold_window(&flipped, 3, 10, 0.1).is_err());
        assert!(threshold_window(&flipped, 2, 10, 1.0).is_err());
    }

    #[test]
    fn window_endpoints_meet_per_coordinate_budget() {
        let cfg = ProblemConfig::new(20, 2, 8, 4000).with_noise(0.05).with_seed(6);
        let inst = ProblemInstance::generate(&cfg, 0).unwrap();
        let (u, up) = (inst.support.indices()[0], inst.support.complement(20)[0]);
        let cm = conditional_moments(&inst, u, up).unwrap();
        let delta = 0.1;
        let w = threshold_window(&cm, cfg.n, cfg.d, delta).unwrap();
        assert!(w.is_nonempty(), "{w:?}");
        let budget = delta / (3.0 * cfg.d as f64);
        for tau in [w.tau_low, w.midpoint(), w.tau_high] {
            let miss = chisq_lower_tail_bound(&cm.mu_i, &cm.nu2_i, cm.mu - tau).unwrap();
            let false_alarm = chisq_upper_tail_bound(&vec![0.0; cfg.n], &cm.nu2p_i, tau - cm.mu_prime).unwrap();
            assert!(miss <= budget * (1.0 + 1e-9), "miss {miss} at {tau}");
            assert!(
                false_alarm <= budget * (1.0 + 1e-9),
                "false alarm {false_alarm} at {tau}"
            );
        }
    }

    #[test]
    fn doubling_n_shrinks_window_margins() {
        let base = ConditionalMoments {
            mu_i: vec![1.1, 0.9, 1.3],
            nu2_i: vec![0.4, 0.2, 0.5],
            nu2p_i: vec![0.3, 0.6, 0.2],
            mu: 1.5,
            mu_prime: 0.4,
        };
        let doubled = ConditionalMoments {
            mu_i: base.mu_i.repeat(2),
            nu2_i: base.nu2_i.repeat(2),
            nu2p_i: base.nu2p_i.repeat(2),
            ..base.clone()
        };
        let a = threshold_window(&base, 3, 50, 0.2).unwrap();
        let b = threshold_window(&doubled, 6, 50, 0.2).unwrap();
        for (before, after) in [
            (base.mu - a.tau_high, base.mu - b.tau_high),
            (a.tau_low - base.mu_prime, b.tau_low - base.mu_prime),
        ] {
            let r = after / before;
            assert!(
                (0.5 - 1e-12..=std::f64::consts::FRAC_1_SQRT_2 + 1e-12).contains(&r),
                "ratio {r}"
            );
        }
    }
}
