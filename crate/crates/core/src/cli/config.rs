//! Experiment configuration files.
//!
//! A config is a TOML document with one table per concern. Unknown keys are
//! rejected everywhere so that a misspelt parameter cannot silently fall
//! back to its default.
//!
//! ```toml
//! [problem]
//! d = 128
//! k = 20
//! m = 8
//! n = 100
//! seed = 7
//!
//! [experiment]
//! delta = 0.333
//! trials = 200
//!
//! [sweep]
//! m_list = [4, 5, 6, 8, 10, 13]
//! ```

use serde::{Deserialize, Serialize};

use crate::bounds::BoundConstants;
use crate::error::{Error, Result};
use crate::model::{ProblemConfig, SignalMode, SupportMode};
use crate::montecarlo::{BoundSelector, TailProbe};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<ProblemSection>,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub constants: BoundConstants,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub nstar: NStarSection,
    #[serde(default)]
    pub verify_bounds: VerifyBoundsSection,
    #[serde(default)]
    pub verify_separation: VerifySeparationSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalModeName {
    ConstantMax,
    #[default]
    ConstantMin,
    UniformMagnitudeRandomSign,
    FixedVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub d: usize,
    pub k: usize,
    pub m: usize,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "unit")]
    pub x_min: f64,
    #[serde(default = "unit")]
    pub x_max: f64,
    #[serde(default)]
    pub sigma2: f64,
    #[serde(default)]
    pub signal_mode: SignalModeName,
    /// Signal values for `signal_mode = "fixed_vector"`, in increasing support order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal_pattern: Option<Vec<f64>>,
    /// A fixed support; drawn uniformly when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<Vec<usize>>,
    #[serde(default)]
    pub seed: u64,
}

fn default_n() -> usize {
    1
}

fn unit() -> f64 {
    1.0
}

impl ProblemSection {
    pub fn to_problem(&self) -> Result<ProblemConfig> {
        let signal_mode = match (self.signal_mode, &self.signal_pattern) {
            (SignalModeName::FixedVector, Some(p)) => SignalMode::FixedVector(p.clone()),
            (SignalModeName::FixedVector, None) => {
                return Err(Error::config(
                    "signal_pattern",
                    "required when signal_mode = \"fixed_vector\"",
                ))
            }
            (_, Some(_)) => {
                return Err(Error::config(
                    "signal_pattern",
                    "only allowed with signal_mode = \"fixed_vector\"",
                ))
            }
            (SignalModeName::ConstantMax, None) => SignalMode::ConstantMax,
            (SignalModeName::ConstantMin, None) => SignalMode::ConstantMin,
            (SignalModeName::UniformMagnitudeRandomSign, None) => SignalMode::UniformMagnitudeRandomSign,
        };
        let support_mode = match &self.support {
            Some(s) => SupportMode::Fixed(s.clone()),
            None => SupportMode::UniformRandom,
        };
        let cfg = ProblemConfig::new(self.d, self.k, self.m, self.n)
            .with_magnitudes(self.x_min, self.x_max)
            .with_noise(self.sigma2)
            .with_signal_mode(signal_mode)
            .with_support_mode(support_mode)
            .with_seed(self.seed);
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    /// Target error probability.
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Trials per estimate (instances for `verify-separation`).
    #[serde(default = "default_trials")]
    pub trials: u64,
    /// Output path; `--out` and `--stdout` take precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

fn default_delta() -> f64 {
    0.1
}

fn default_trials() -> u64 {
    200
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            delta: default_delta(),
            trials: default_trials(),
            output: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default)]
    pub m_list: Vec<usize>,
    #[serde(default = "default_n_max")]
    pub n_max: u64,
    /// Range of `k/m` used for the log-log slope fit.
    #[serde(default = "default_window")]
    pub slope_window: [f64; 2],
}

fn default_n_max() -> u64 {
    1 << 20
}

fn default_window() -> [f64; 2] {
    [1.5, 5.0]
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            m_list: Vec::new(),
            n_max: default_n_max(),
            slope_window: default_window(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NStarSection {
    #[serde(default = "default_n_max")]
    pub n_max: u64,
}

impl Default for NStarSection {
    fn default() -> Self {
        NStarSection { n_max: default_n_max() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyBoundsSection {
    #[serde(default)]
    pub seed: u64,
    /// Default replications for probes that do not set their own.
    #[serde(default = "default_replications")]
    pub replications: usize,
    /// Also run the heavy-tail constant calibration and report its result.
    #[serde(default)]
    pub calibrate_c_heavy: bool,
    #[serde(default)]
    pub probe: Vec<ProbeSection>,
}

fn default_replications() -> usize {
    100_000
}

impl Default for VerifyBoundsSection {
    fn default() -> Self {
        VerifyBoundsSection {
            seed: 0,
            replications: default_replications(),
            calibrate_c_heavy: false,
            probe: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSection {
    /// One of `heavy_q3`, `heavy_q2`, `max_chisq`, `chisq_upper`, `chisq_lower`.
    pub lemma: String,
    pub n: usize,
    #[serde(default = "default_probe_m")]
    pub m: usize,
    pub t: Vec<f64>,
    /// Mean of each Gaussian for the noncentral chi-square probes.
    #[serde(default)]
    pub mu: f64,
    /// Variance of each Gaussian for the noncentral chi-square probes.
    #[serde(default = "unit")]
    pub sigma2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replications: Option<usize>,
}

fn default_probe_m() -> usize {
    1
}

impl ProbeSection {
    pub fn to_probe(&self, default_replications: usize) -> Result<(TailProbe, BoundSelector)> {
        let selector = BoundSelector::from_name(&self.lemma).ok_or_else(|| {
            let names: Vec<&str> = BoundSelector::ALL.iter().map(|s| s.name()).collect();
            Error::config(
                "lemma",
                format!("unknown bound `{}`; expected one of {}", self.lemma, names.join(", ")),
            )
        })?;
        let replications = self.replications.unwrap_or(default_replications);
        if replications == 0 {
            return Err(Error::config("replications", "must be at least 1"));
        }
        Ok((
            TailProbe {
                statistic: selector.statistic(self.mu, self.sigma2),
                n: self.n,
                m: self.m,
                t_grid: self.t.clone(),
                replications,
            },
            selector,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySeparationSection {
    /// When set, `n = ⌈n_factor · f⌉` where `f` is the sample-complexity
    /// bound with the configured (or calibrated) `c_sample`; otherwise
    /// `problem.n` is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_factor: Option<f64>,
    /// Calibrate `c_sample` on an independent seed before verifying.
    #[serde(default)]
    pub calibrate_c_sample: bool,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::config("config", e.to_string().trim_end()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks the fields shared by every subcommand.
    pub fn validate(&self) -> Result<()> {
        let delta = self.experiment.delta;
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::config("delta", format!("{delta} is not in (0, 1)")));
        }
        if self.experiment.trials == 0 {
            return Err(Error::config("trials", "must be at least 1"));
        }
        self.constants.validate()?;
        if let Some(p) = &self.problem {
            if p.seed > i64::MAX as u64 {
                return Err(Error::config("seed", "must be below 2^63"));
            }
        }
        if self.verify_bounds.seed > i64::MAX as u64 {
            return Err(Error::config("seed", "must be below 2^63"));
        }
        let [lo, hi] = self.sweep.slope_window;
        if !(lo > 0.0 && lo < hi) {
            return Err(Error::config("slope_window", "must be [low, high] with 0 < low < high"));
        }
        if let Some(f) = self.verify_separation.n_factor {
            if !(f.is_finite() && f > 0.0) {
                return Err(Error::config("n_factor", "must be positive"));
            }
        }
        Ok(())
    }

    pub fn problem(&self) -> Result<ProblemConfig> {
        self.problem
            .as_ref()
            .ok_or_else(|| Error::config("problem", "this subcommand needs a [problem] table"))?
            .to_problem()
    }

    /// Replaces every seed in the file.
    pub fn override_seed(&mut self, seed: u64) {
        if let Some(p) = &mut self.problem {
            p.seed = seed;
        }
        self.verify_bounds.seed = seed;
    }

    /// The resolved configuration as TOML, without the output path.
    pub fn resolved(&self) -> String {
        let mut c = self.clone();
        c.experiment.output = None;
        toml::to_string(&c).expect("config serializes")
    }
}
