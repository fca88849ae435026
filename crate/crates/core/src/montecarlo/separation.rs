use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    sample_complexity_upper, separation_from_moments, BoundConstants, ColumnMoments, SampleComplexityQuery,
    SeparationParams,
};
use crate::error::{Error, Result};
use crate::model::{gen_support, InstanceStreams, ProblemConfig, SampleBuffers};

/// Largest `d·k` for which every on/off pair is evaluated per instance.
pub const SEPARATION_PAIR_LIMIT: u128 = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationSummary {
    /// Per instance: the condition holds for every `(u, u') ∈ S × Sᶜ`.
    pub satisfied: Vec<bool>,
    pub fraction: f64,
}

/// Column-norm aggregates of instance `index`, for every column.
fn instance_moments(config: &ProblemConfig, index: u64) -> Result<(Vec<usize>, Vec<ColumnMoments>)> {
    let (m, d) = (config.m, config.d);
    let streams = InstanceStreams::new(config.seed, index);
    let support = gen_support(config, &mut streams.support_rng())?;
    let mut buf = SampleBuffers::new(config);
    let mut cols = vec![ColumnMoments::from_sq_norms(&[]); d];
    for i in 0..config.n {
        buf.fill(config, &support, &streams, i);
        for (u, cm) in cols.iter_mut().enumerate() {
            let a: f64 = buf.column(m, u).iter().map(|v| v * v).sum();
            cm.n += 1;
            cm.sum2 += a;
            cm.sum4 += a * a;
            cm.sum6 += a * a * a;
            cm.max2 = cm.max2.max(a);
        }
    }
    Ok((support.indices().to_vec(), cols))
}

/// Fraction of instances `0..instances` on which the separation condition
/// holds for all on/off pairs.
///
/// Instance `j` is drawn exactly as `ProblemInstance::generate(config, j)`,
/// but only column norms are kept.
pub fn verify_separation(config: &ProblemConfig, delta: f64, instances: u64) -> Result<SeparationSummary> {
    config.validate()?;
    let params = SeparationParams::new(config, delta)?;
    let pairs = config.d as u128 * config.k as u128;
    if pairs > SEPARATION_PAIR_LIMIT {
        return Err(Error::TooLarge {
            what: "separation pairs d*k",
            size: pairs,
            limit: SEPARATION_PAIR_LIMIT,
        });
    }
    if instances == 0 {
        return Err(Error::config("trials", "must be at least 1"));
    }
    let satisfied = (0..instances)
        .into_par_iter()
        .map(|j| {
            let (support, cols) = instance_moments(config, j)?;
            let mut in_support = vec![false; config.d];
            support.iter().for_each(|&u| in_support[u] = true);
            Ok(support.iter().all(|&u| {
                (0..config.d)
                    .filter(|&v| !in_support[v])
                    .all(|v| separation_from_moments(&cols[u], &cols[v], &params).satisfied)
            }))
        })
        .collect::<Result<Vec<bool>>>()?;
    let fraction = satisfied.iter().filter(|&&s| s).count() as f64 / instances as f64;
    Ok(SeparationSummary { satisfied, fraction })
}

/// One grid point of the sample-constant calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    pub c: f64,
    pub n: u64,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleCalibration {
    /// Smallest grid value whose sample size meets the target, if any.
    pub c_sample: Option<f64>,
    pub grid: Vec<CalibrationPoint>,
}

/// Smallest `c ∈ {2⁻⁴, 2⁻³, …, 2^16}` for which `n = ⌈c·f⌉` samples make
/// the separation condition hold on a `1-δ` fraction of instances, where
/// `f` is the sample-complexity formula with unit constant.
///
/// The grid is scanned upward and stops at the first passing value.
pub fn calibrate_c_sample(config: &ProblemConfig, delta: f64, instances: u64) -> Result<SampleCalibration> {
    let mut out = SampleCalibration {
        c_sample: None,
        grid: Vec::new(),
    };
    for e in -4..=16 {
        let c = 2f64.powi(e);
        let constants = BoundConstants {
            c_sample: c,
            ..BoundConstants::default()
        };
        let n = sample_complexity_upper(&SampleComplexityQuery::from_config(config, delta), &constants)?.n;
        let summary = verify_separation(&config.clone().with_samples(n as usize), delta, instances)?;
        out.grid.push(CalibrationPoint {
            c,
            n,
            fraction: summary.fraction,
        });
        if summary.fraction >= 1.0 - delta {
            out.c_sample = Some(c);
            break;
        }
    }
    Ok(out)
}
