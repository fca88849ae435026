//! Problem configuration, domain types and random instance generation.
//!
//! An instance consists of a support `S ⊂ [d]` with `|S| = k`, signals
//! `x_1..x_n` supported on `S` with magnitudes in `[x_min, x_max]`, and
//! per-sample measurements `Y_i = Φ_i x_i + W_i` where `Φ_i` has i.i.d.
//! `N(0, 1/m)` entries and `W_i` has i.i.d. `N(0, σ²)` entries.
//!
//! Randomness is organised per trial: the trial's [`StreamKey`] owns one
//! stream for the support and two streams per sample (signal, measurement),
//! so samples can be generated in parallel and in any order.

use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamKey;

/// How the on-support signal values are chosen.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalMode {
    /// Every on-support entry equals `x_max`.
    ConstantMax,
    /// Every on-support entry equals `x_min`.
    #[default]
    ConstantMin,
    /// Magnitude uniform on `[x_min, x_max]`, independent uniform sign.
    UniformMagnitudeRandomSign,
    /// The given values, in increasing support order, repeated for every sample.
    FixedVector(Vec<f64>),
}

impl SignalMode {
    pub fn name(&self) -> &'static str {
        match self {
            SignalMode::ConstantMax => "constant_max",
            SignalMode::ConstantMin => "constant_min",
            SignalMode::UniformMagnitudeRandomSign => "uniform_magnitude_random_sign",
            SignalMode::FixedVector(_) => "fixed_vector",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportMode {
    /// Uniform over all `C(d, k)` subsets.
    #[default]
    UniformRandom,
    Fixed(Vec<usize>),
}

/// Scalar parameters of one recovery problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub d: usize,
    pub k: usize,
    pub m: usize,
    pub n: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub sigma2: f64,
    pub signal_mode: SignalMode,
    pub support_mode: SupportMode,
    pub seed: u64,
}

impl ProblemConfig {
    /// Noiseless, unit-magnitude configuration with a uniformly random support.
    pub fn new(d: usize, k: usize, m: usize, n: usize) -> Self {
        ProblemConfig {
            d,
            k,
            m,
            n,
            x_min: 1.0,
            x_max: 1.0,
            sigma2: 0.0,
            signal_mode: SignalMode::default(),
            support_mode: SupportMode::default(),
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_samples(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn with_magnitudes(mut self, x_min: f64, x_max: f64) -> Self {
        self.x_min = x_min;
        self.x_max = x_max;
        self
    }

    pub fn with_noise(mut self, sigma2: f64) -> Self {
        self.sigma2 = sigma2;
        self
    }

    pub fn with_signal_mode(mut self, mode: SignalMode) -> Self {
        self.signal_mode = mode;
        self
    }

    pub fn with_support_mode(mut self, mode: SupportMode) -> Self {
        self.support_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::config("d", "must be at least 1"));
        }
        if self.k == 0 || self.k > self.d {
            return Err(Error::config("k", format!("must satisfy 1 <= k <= d = {}", self.d)));
        }
        if self.m == 0 {
            return Err(Error::config("m", "must be at least 1"));
        }
        if self.n == 0 {
            return Err(Error::config("n", "must be at least 1"));
        }
        if !(self.x_min.is_finite() && self.x_min > 0.0) {
            return Err(Error::config("x_min", "must be a positive finite number"));
        }
        if !(self.x_max.is_finite() && self.x_max >= self.x_min) {
            return Err(Error::config("x_max", "must be finite and at least x_min"));
        }
        if !(self.sigma2.is_finite() && self.sigma2 >= 0.0) {
            return Err(Error::config("sigma2", "must be a nonnegative finite number"));
        }
        if let SupportMode::Fixed(indices) = &self.support_mode {
            Support::new(indices.clone(), self.d, self.k)?;
        }
        if let SignalMode::FixedVector(values) = &self.signal_mode {
            if values.len() != self.k {
                return Err(Error::config(
                    "signal_pattern",
                    format!("has {} entries, expected k = {}", values.len(), self.k),
                ));
            }
            if let Some(v) = values.iter().find(|v| !self.magnitude_in_range(**v)) {
                return Err(Error::config(
                    "signal_pattern",
                    format!("entry {v} has magnitude outside [x_min, x_max]"),
                ));
            }
        }
        Ok(())
    }

    fn magnitude_in_range(&self, v: f64) -> bool {
        let a = v.abs();
        a >= self.x_min && a <= self.x_max
    }

    /// `σ`, the noise standard deviation.
    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }
}

/// The common support: a strictly increasing list of `k` indices in `[0, d)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Support(Vec<usize>);

impl Support {
    /// Sorts and validates `indices` as a size-`k` subset of `[0, d)`.
    pub fn new(mut indices: Vec<usize>, d: usize, k: usize) -> Result<Self> {
        if indices.len() != k {
            return Err(Error::config(
                "support",
                format!("has {} indices, expected k = {k}", indices.len()),
            ));
        }
        if let Some(&u) = indices.iter().find(|&&u| u >= d) {
            return Err(Error::config(
                "support",
                format!("index {u} is out of range for d = {d}"),
            ));
        }
        indices.sort_unstable();
        if let Some(w) = indices.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::config("support", format!("index {} appears twice", w[0])));
        }
        Ok(Support(indices))
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, u: usize) -> bool {
        self.0.binary_search(&u).is_ok()
    }

    /// Indices of `[0, d)` not in the support, increasing.
    pub fn complement(&self, d: usize) -> Vec<usize> {
        (0..d).filter(|&u| !self.contains(u)).collect()
    }
}

/// The `n` signal vectors `x_1..x_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSet {
    pub vectors: Vec<Vec<f64>>,
}

impl SignalSet {
    pub fn check(&self, config: &ProblemConfig, support: &Support) -> Result<()> {
        if self.vectors.len() != config.n {
            return Err(Error::Argument(format!(
                "signal set has {} vectors, expected n = {}",
                self.vectors.len(),
                config.n
            )));
        }
        for (i, x) in self.vectors.iter().enumerate() {
            if x.len() != config.d {
                return Err(Error::Argument(format!(
                    "signal {i} has length {}, expected {}",
                    x.len(),
                    config.d
                )));
            }
            for (u, &v) in x.iter().enumerate() {
                let ok = if support.contains(u) {
                    config.magnitude_in_range(v)
                } else {
                    v == 0.0
                };
                if !ok {
                    return Err(Error::Argument(format!(
                        "signal {i} entry {u} = {v} violates the signal assumption"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Matrices `Φ_i` (m × d), noises `W_i` and observations `Y_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub matrices: Vec<DMatrix<f64>>,
    pub noises: Vec<Vec<f64>>,
    pub observations: Vec<Vec<f64>>,
}

impl MeasurementSet {
    pub fn check(&self, config: &ProblemConfig, signals: &SignalSet) -> Result<()> {
        let n = config.n;
        if self.matrices.len() != n || self.noises.len() != n || self.observations.len() != n {
            return Err(Error::Argument("measurement set does not hold n samples".into()));
        }
        for i in 0..n {
            let phi = &self.matrices[i];
            if phi.nrows() != config.m || phi.ncols() != config.d {
                return Err(Error::Argument(format!(
                    "matrix {i} has shape {}x{}",
                    phi.nrows(),
                    phi.ncols()
                )));
            }
            if self.noises[i].len() != config.m || self.observations[i].len() != config.m {
                return Err(Error::Argument(format!("sample {i} noise/observation length mismatch")));
            }
            let x = &signals.vectors[i];
            for r in 0..config.m {
                let clean: f64 = (0..config.d).map(|c| phi[(r, c)] * x[c]).sum();
                let expect = clean + self.noises[i][r];
                let got = self.observations[i][r];
                let scale = clean.abs() + self.noises[i][r].abs() + f64::MIN_POSITIVE;
                if (got - expect).abs() > 1e-10 * scale.max(1.0) {
                    return Err(Error::Argument(format!("sample {i} row {r}: Y != Phi x + W")));
                }
            }
        }
        Ok(())
    }

    /// `‖Φ_iu‖²`, the squared norm of column `u` of `Φ_i`.
    pub fn column_sq_norm(&self, i: usize, u: usize) -> f64 {
        self.matrices[i].column(u).iter().map(|v| v * v).sum()
    }
}

/// One realization of the recovery problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub config: ProblemConfig,
    pub support: Support,
    pub signals: SignalSet,
    pub measurements: MeasurementSet,
}

impl ProblemInstance {
    /// Generates the instance for `trial_index` under `config.seed`.
    ///
    /// Samples are generated in parallel; every sample reads only its own
    /// streams, so the result is independent of the thread count.
    pub fn generate(config: &ProblemConfig, trial_index: u64) -> Result<Self> {
        config.validate()?;
        let streams = InstanceStreams::new(config.seed, trial_index);
        let support = gen_support(config, &mut streams.support_rng())?;
        let samples: Vec<_> = (0..config.n)
            .into_par_iter()
            .map(|i| {
                let mut buf = SampleBuffers::new(config);
                buf.fill(config, &support, &streams, i);
                buf
            })
            .collect();
        let mut vectors = Vec::with_capacity(config.n);
        let mut matrices = Vec::with_capacity(config.n);
        let mut noises = Vec::with_capacity(config.n);
        let mut observations = Vec::with_capacity(config.n);
        for s in samples {
            vectors.push(s.x);
            matrices.push(DMatrix::from_vec(config.m, config.d, s.phi));
            noises.push(s.noise);
            observations.push(s.y);
        }
        Ok(ProblemInstance {
            config: config.clone(),
            support,
            signals: SignalSet { vectors },
            measurements: MeasurementSet {
                matrices,
                noises,
                observations,
            },
        })
    }

    /// Assembles an instance from explicit parts, checking every invariant.
    pub fn from_parts(
        config: ProblemConfig,
        support: Support,
        signals: SignalSet,
        measurements: MeasurementSet,
    ) -> Result<Self> {
        let inst = ProblemInstance {
            config,
            support,
            signals,
            measurements,
        };
        inst.check()?;
        Ok(inst)
    }

    pub fn check(&self) -> Result<()> {
        self.config.validate()?;
        if self.support.len() != self.config.k || self.support.indices().iter().any(|&u| u >= self.config.d) {
            return Err(Error::Argument("support inconsistent with configuration".into()));
        }
        self.signals.check(&self.config, &self.support)?;
        self.measurements.check(&self.config, &self.signals)
    }

    /// Serializes to a self-describing JSON document. Reals round-trip exactly.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&InstanceDump::from(self)).expect("instance dump is always serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let dump: InstanceDump =
            serde_json::from_str(text).map_err(|e| Error::Argument(format!("malformed instance dump: {e}")))?;
        dump.into_instance()
    }
}

/// The streams owned by one trial.
#[derive(Debug, Clone, Copy)]
pub struct InstanceStreams {
    key: StreamKey,
}

impl InstanceStreams {
    pub fn new(master_seed: u64, trial_index: u64) -> Self {
        InstanceStreams {
            key: StreamKey::root(master_seed).child(trial_index),
        }
    }

    pub fn support_rng(&self) -> rand_chacha::ChaCha8Rng {
        self.key.rng(0)
    }

    pub fn signal_rng(&self, sample: usize) -> rand_chacha::ChaCha8Rng {
        self.key.rng(2 * sample as u64 + 1)
    }

    pub fn measurement_rng(&self, sample: usize) -> rand_chacha::ChaCha8Rng {
        self.key.rng(2 * sample as u64 + 2)
    }
}

/// Reusable storage for one sample; `phi` is column-major `m × d`.
#[derive(Debug, Clone)]
pub struct SampleBuffers {
    pub x: Vec<f64>,
    pub phi: Vec<f64>,
    pub noise: Vec<f64>,
    pub y: Vec<f64>,
}

impl SampleBuffers {
    pub fn new(config: &ProblemConfig) -> Self {
        SampleBuffers {
            x: vec![0.0; config.d],
            phi: vec![0.0; config.m * config.d],
            noise: vec![0.0; config.m],
            y: vec![0.0; config.m],
        }
    }

    /// Draws sample `i` of the trial owning `streams`.
    pub fn fill(&mut self, config: &ProblemConfig, support: &Support, streams: &InstanceStreams, i: usize) {
        fill_signal(config, support, &mut streams.signal_rng(i), &mut self.x);
        fill_measurement(
            config,
            support,
            &self.x,
            &mut streams.measurement_rng(i),
            &mut self.phi,
            &mut self.noise,
            &mut self.y,
        );
    }

    /// Column `u` of `Φ_i`.
    pub fn column(&self, m: usize, u: usize) -> &[f64] {
        &self.phi[u * m..(u + 1) * m]
    }
}

/// Draws the support.
pub fn gen_support<R: Rng + ?Sized>(config: &ProblemConfig, rng: &mut R) -> Result<Support> {
    match &config.support_mode {
        SupportMode::Fixed(indices) => Support::new(indices.clone(), config.d, config.k),
        SupportMode::UniformRandom => {
            let indices = index::sample(rng, config.d, config.k).into_vec();
            Support::new(indices, config.d, config.k)
        }
    }
}

fn fill_signal<R: Rng + ?Sized>(config: &ProblemConfig, support: &Support, rng: &mut R, x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v = 0.0);
    for (j, &u) in support.indices().iter().enumerate() {
        x[u] = match &config.signal_mode {
            SignalMode::ConstantMax => config.x_max,
            SignalMode::ConstantMin => config.x_min,
            SignalMode::UniformMagnitudeRandomSign => {
                let mag = rng.random_range(config.x_min..=config.x_max);
                if rng.random::<bool>() {
                    mag
                } else {
                    -mag
                }
            }
            SignalMode::FixedVector(values) => values[j],
        };
    }
}

fn fill_measurement<R: Rng + ?Sized>(
    config: &ProblemConfig,
    support: &Support,
    x: &[f64],
    rng: &mut R,
    phi: &mut [f64],
    noise: &mut [f64],
    y: &mut [f64],
) {
    let m = config.m;
    let scale = (1.0 / m as f64).sqrt();
    for v in phi.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *v = z * scale;
    }
    // Standard-normal draws are always consumed so that Φ and the noise
    // pattern do not depend on σ.
    let sigma = config.sigma();
    for w in noise.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *w = sigma * z;
    }
    for r in 0..m {
        let mut acc = 0.0;
        for &u in support.indices() {
            acc += phi[u * m + r] * x[u];
        }
        y[r] = acc + noise[r];
    }
}

/// Draws all `n` signal vectors from a single stream.
pub fn gen_signals<R: Rng + ?Sized>(config: &ProblemConfig, support: &Support, rng: &mut R) -> Result<SignalSet> {
    config.validate()?;
    if support.len() != config.k {
        return Err(Error::Argument("support size differs from k".into()));
    }
    let vectors = (0..config.n)
        .map(|_| {
            let mut x = vec![0.0; config.d];
            fill_signal(config, support, rng, &mut x);
            x
        })
        .collect();
    Ok(SignalSet { vectors })
}

/// Draws `Φ_i`, `W_i` and forms `Y_i = Φ_i x_i + W_i` for every signal, from a single stream.
pub fn gen_measurements<R: Rng + ?Sized>(config: &ProblemConfig, signals: &SignalSet, rng: &mut R) -> MeasurementSet {
    let (m, d) = (config.m, config.d);
    let mut out = MeasurementSet {
        matrices: Vec::with_capacity(signals.vectors.len()),
        noises: Vec::with_capacity(signals.vectors.len()),
        observations: Vec::with_capacity(signals.vectors.len()),
    };
    for x in &signals.vectors {
        assert_eq!(x.len(), d, "signal length must equal d");
        // The full column range acts as the support here; off-support entries are zero.
        let nonzero: Vec<usize> = (0..d).filter(|&u| x[u] != 0.0).collect();
        let support = Support(nonzero);
        let mut phi = vec![0.0; m * d];
        let mut noise = vec![0.0; m];
        let mut y = vec![0.0; m];
        fill_measurement(config, &support, x, rng, &mut phi, &mut noise, &mut y);
        out.matrices.push(DMatrix::from_vec(m, d, phi));
        out.noises.push(noise);
        out.observations.push(y);
    }
    out
}

#[derive(Serialize, Deserialize)]
struct SampleDump {
    x: Vec<f64>,
    /// Column-major entries of `Φ_i`.
    phi: Vec<f64>,
    noise: Vec<f64>,
    y: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct InstanceDump {
    format: String,
    config: ProblemConfig,
    support: Vec<usize>,
    rows: usize,
    cols: usize,
    samples: Vec<SampleDump>,
}

const DUMP_FORMAT: &str = "suprec-instance/1";

impl From<&ProblemInstance> for InstanceDump {
    fn from(inst: &ProblemInstance) -> Self {
        let ms = &inst.measurements;
        let samples = (0..inst.config.n)
            .map(|i| SampleDump {
                x: inst.signals.vectors[i].clone(),
                phi: ms.matrices[i].as_slice().to_vec(),
                noise: ms.noises[i].clone(),
                y: ms.observations[i].clone(),
            })
            .collect();
        InstanceDump {
            format: DUMP_FORMAT.to_string(),
            config: inst.config.clone(),
            support: inst.support.indices().to_vec(),
            rows: inst.config.m,
            cols: inst.config.d,
            samples,
        }
    }
}

impl InstanceDump {
    fn into_instance(self) -> Result<ProblemInstance> {
        if self.format != DUMP_FORMAT {
            return Err(Error::Argument(format!("unknown dump format `{}`", self.format)));
        }
        let support = Support::new(self.support, self.config.d, self.config.k)?;
        let mut vectors = Vec::new();
        let mut matrices = Vec::new();
        let mut noises = Vec::new();
        let mut observations = Vec::new();
        for s in self.samples {
            if s.phi.len() != self.rows * self.cols {
                return Err(Error::Argument("matrix entry count does not match its shape".into()));
            }
            vectors.push(s.x);
            matrices.push(DMatrix::from_vec(self.rows, self.cols, s.phi));
            noises.push(s.noise);
            observations.push(s.y);
        }
        ProblemInstance::from_parts(
            self.config,
            support,
            SignalSet { vectors },
            MeasurementSet {
                matrices,
                noises,
                observations,
            },
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn full_support_when_k_equals_d() {
        for mode in [SupportMode::UniformRandom, SupportMode::Fixed(vec![2, 0, 1])] {
            let cfg = ProblemConfig::new(3, 3, 2, 1).with_support_mode(mode);
            assert_eq!(gen_support(&cfg, &mut rng(1)).unwrap().indices(), &[0, 1, 2]);
        }
    }

    #[test]
    fn fixed_support_is_sorted() {
        let cfg = ProblemConfig::new(5, 2, 2, 1).with_support_mode(SupportMode::Fixed(vec![4, 1]));
        assert_eq!(gen_support(&cfg, &mut rng(1)).unwrap().indices(), &[1, 4]);
    }

    #[test]
    fn fixed_support_errors() {
        for bad in [vec![1], vec![1, 5], vec![2, 2]] {
            let cfg = ProblemConfig::new(5, 2, 2, 1).with_support_mode(SupportMode::Fixed(bad));
            assert!(matches!(gen_support(&cfg, &mut rng(1)), Err(Error::Config { .. })));
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn uniform_support_marginals() {
        let cfg = ProblemConfig::new(4, 1, 2, 1);
        let mut r = rng(11);
        let mut counts = [0usize; 4];
        let draws = 100_000;
        for _ in 0..draws {
            counts[gen_support(&cfg, &mut r).unwrap().indices()[0]] += 1;
        }
        for c in counts {
            assert!((c as f64 / draws as f64 - 0.25).abs() < 0.01, "{counts:?}");
        }
    }

    #[test]
    fn constant_max_signals() {
        let cfg = ProblemConfig::new(3, 1, 2, 2)
            .with_signal_mode(SignalMode::ConstantMax)
            .with_support_mode(SupportMode::Fixed(vec![2]));
        let support = gen_support(&cfg, &mut rng(0)).unwrap();
        let s = gen_signals(&cfg, &support, &mut rng(0)).unwrap();
        assert_eq!(s.vectors, vec![vec![0.0, 0.0, 1.0]; 2]);
    }

    #[test]
    fn random_sign_signal_moments() {
        let cfg = ProblemConfig::new(10, 10, 1, 10_000)
            .with_magnitudes(1.0, 2.0)
            .with_signal_mode(SignalMode::UniformMagnitudeRandomSign);
        let support = gen_support(&cfg, &mut rng(0)).unwrap();
        let s = gen_signals(&cfg, &support, &mut rng(5)).unwrap();
        s.check(&cfg, &support).unwrap();
        let all: Vec<f64> = s.vectors.iter().flatten().copied().collect();
        assert_eq!(all.len(), 100_000);
        let mean_abs = all.iter().map(|v| v.abs()).sum::<f64>() / all.len() as f64;
        let mean_sign = all.iter().map(|v| v.signum()).sum::<f64>() / all.len() as f64;
        assert!((mean_abs - 1.5).abs() < 0.01, "{mean_abs}");
        assert!(mean_sign.abs() < 0.01, "{mean_sign}");
    }

    #[test]
    fn fixed_vector_validation() {
        let base = ProblemConfig::new(4, 2, 2, 3).with_magnitudes(1.0, 2.0);
        assert!(base
            .clone()
            .with_signal_mode(SignalMode::FixedVector(vec![1.5, -2.0]))
            .validate()
            .is_ok());
        assert!(base
            .clone()
            .with_signal_mode(SignalMode::FixedVector(vec![2.5, 1.0]))
            .validate()
            .is_err());
        assert!(base
            .clone()
            .with_signal_mode(SignalMode::FixedVector(vec![1.0]))
            .validate()
            .is_err());
        let cfg = base
            .with_signal_mode(SignalMode::FixedVector(vec![1.5, -2.0]))
            .with_support_mode(SupportMode::Fixed(vec![3, 0]));
        let inst = ProblemInstance::generate(&cfg, 0).unwrap();
        for x in &inst.signals.vectors {
            assert_eq!(x, &vec![1.5, 0.0, 0.0, -2.0]);
        }
    }

    #[test]
    fn every_mode_passes_its_invariants() {
        let modes = [
            SignalMode::ConstantMax,
            SignalMode::ConstantMin,
            SignalMode::UniformMagnitudeRandomSign,
            SignalMode::FixedVector(vec![0.7, -0.9, 0.5]),
        ];
        for mode in modes {
            let cfg = ProblemConfig::new(9, 3, 4, 6)
                .with_magnitudes(0.5, 0.9)
                .with_noise(0.3)
                .with_signal_mode(mode)
                .with_seed(4);
            ProblemInstance::generate(&cfg, 2).unwrap().check().unwrap();
        }
    }

    #[test]
    fn config_validation_names_fields() {
        let cases = [
            (ProblemConfig::new(3, 4, 1, 1), "k"),
            (ProblemConfig::new(3, 0, 1, 1), "k"),
            (ProblemConfig::new(3, 1, 0, 1), "m"),
            (ProblemConfig::new(3, 1, 1, 0), "n"),
            (ProblemConfig::new(3, 1, 1, 1).with_magnitudes(0.0, 1.0), "x_min"),
            (ProblemConfig::new(3, 1, 1, 1).with_magnitudes(2.0, 1.0), "x_max"),
            (ProblemConfig::new(3, 1, 1, 1).with_noise(-1.0), "sigma2"),
        ];
        for (cfg, field) in cases {
            match cfg.validate() {
                Err(Error::Config { field: f, .. }) => assert_eq!(f, field),
                other => panic!("expected config error on {field}, got {other:?}"),
            }
        }
    }

    #[test]
    fn zero_noise_gives_clean_observations() {
        let cfg = ProblemConfig::new(8, 3, 4, 5).with_seed(9);
        let inst = ProblemInstance::generate(&cfg, 0).unwrap();
        for i in 0..cfg.n {
            assert!(inst.measurements.noises[i].iter().all(|&w| w == 0.0));
            let phi = &inst.measurements.matrices[i];
            let y = phi * nalgebra::DVector::from_vec(inst.signals.vectors[i].clone());
            for r in 0..cfg.m {
                assert!((y[r] - inst.measurements.observations[i][r]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn measurement_entry_variance() {
        let cfg = ProblemConfig::new(25, 1, 4, 1000).with_seed(3);
        let inst = ProblemInstance::generate(&cfg, 0).unwrap();
        let entries: Vec<f64> = inst
            .measurements
            .matrices
            .iter()
            .flat_map(|p| p.iter().copied())
            .collect();
        assert_eq!(entries.len(), 100_000);
        let mean = entries.iter().sum::<f64>() / entries.len() as f64;
        let var = entries.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (entries.len() - 1) as f64;
        assert!((var - 0.25).abs() < 0.005, "{var}");
    }

    #[test]
    fn column_norm_is_scaled_chi_square() {
        // m‖Φ_iu‖² ~ χ²_m: mean m, variance 2m.
        let m = 6;
        let cfg = ProblemConfig::new(100, 1, m, 1000).with_seed(21);
        let inst = ProblemInstance::generate(&cfg, 0).unwrap();
        let mut v = Vec::with_capacity(100_000);
        for i in 0..cfg.n {
            for u in 0..cfg.d {
                v.push(m as f64 * inst.measurements.column_sq_norm(i, u));
            }
        }
        let count = v.len() as f64;
        let mean = v.iter().sum::<f64>() / count;
        let var = v.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (count - 1.0);
        let mean_se = (2.0 * m as f64 / count).sqrt();
        assert!((mean - m as f64).abs() < 3.0 * mean_se, "mean {mean}");
        // Var of the sample variance of χ²_m: (μ4 - σ⁴)/N with μ4 = 12m(m+4) + 4m² for χ²_m.
        let mu4 = 12.0 * m as f64 * (m as f64 + 4.0) + 4.0 * (m * m) as f64;
        let var_se = ((mu4 - 4.0 * (m * m) as f64) / count).sqrt();
        assert!((var - 2.0 * m as f64).abs() < 3.0 * var_se, "var {var}");
        // E‖Φ_iu‖² = 1.
        let norm_mean = mean / m as f64;
        assert!((norm_mean - 1.0).abs() < 3.0 * mean_se / m as f64);
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = ProblemConfig::new(12, 3, 3, 7)
            .with_noise(0.5)
            .with_signal_mode(SignalMode::UniformMagnitudeRandomSign)
            .with_magnitudes(0.5, 1.5)
            .with_seed(99);
        let a = ProblemInstance::generate(&cfg, 4).unwrap();
        let b = ProblemInstance::generate(&cfg, 4).unwrap();
        assert_eq!(a, b);
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c = single.install(|| ProblemInstance::generate(&cfg, 4).unwrap());
        assert_eq!(a, c);
        assert_ne!(a, ProblemInstance::generate(&cfg, 5).unwrap());
    }

    #[test]
    fn scaling_signal_and_noise_scales_observations() {
        let cfg = ProblemConfig::new(10, 3, 4, 5)
            .with_noise(0.3)
            .with_magnitudes(0.5, 0.8)
            .with_signal_mode(SignalMode::UniformMagnitudeRandomSign)
            .with_seed(17);
        let c = 2.0;
        let scaled = cfg.clone().with_noise(0.3 * c * c).with_magnitudes(0.5 * c, 0.8 * c);
        let a = ProblemInstance::generate(&cfg, 1).unwrap();
        let b = ProblemInstance::generate(&scaled, 1).unwrap();
        assert_eq!(a.measurements.matrices, b.measurements.matrices);
        for i in 0..cfg.n {
            for r in 0..cfg.m {
                assert_eq!(b.measurements.observations[i][r], c * a.measurements.observations[i][r]);
            }
        }
    }

    #[test]
    fn dump_round_trips_bit_exactly() {
        let cfg = ProblemConfig::new(6, 2, 3, 4)
            .with_noise(0.1)
            .with_signal_mode(SignalMode::UniformMagnitudeRandomSign)
            .with_magnitudes(0.3, 0.7)
            .with_seed(5);
        let inst = ProblemInstance::generate(&cfg, 0).unwrap();
        let back = ProblemInstance::from_json(&inst.to_json()).unwrap();
        assert_eq!(inst, back);
        for (a, b) in inst.measurements.matrices.iter().zip(&back.measurements.matrices) {
            assert!(a.iter().zip(b.iter()).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }
}
