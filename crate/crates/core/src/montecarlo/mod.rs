//! Parallel Monte Carlo engine.
//!
//! Trials, replications and instances are embarrassingly parallel. Each unit
//! of work draws only from its own [`StreamKey`](crate::rng::StreamKey) path
//! and results are reduced in index order, so every number produced here is
//! a function of the master seed and the configuration alone; the size of
//! the rayon pool never matters.

mod conditional;
mod moments;
mod nstar;
mod separation;
mod stats;
mod tails;
mod trial;

pub use conditional::{conditional_proxy_check, conditional_statistic_check, ProxyMomentCheck, StatisticMeanCheck};
pub use moments::{empirical_cube_deviation_norm, empirical_rosenthal_sum, RosenthalCheck};
pub use nstar::{find_nstar, fit_log_log_slope, sweep_phase_transition, LineFit, NStar, NStarSearch, SweepRecord};
pub use separation::{
    calibrate_c_sample, verify_separation, CalibrationPoint, SampleCalibration, SeparationSummary,
    SEPARATION_PAIR_LIMIT,
};
pub use stats::{binomial_std_err, wilson_interval, SuccessEstimate};
pub use tails::{
    calibrate_c_heavy, empirical_tail, estimate_mu_max, reference_heavy_grid, verify_bound, BoundCheck, BoundReport,
    BoundSelector, HeavyCalibration, Tail, TailPoint, TailProbe, TailStatistic, MU_MAX_REPLICATIONS,
};
pub use trial::{estimate_success, estimate_success_batch, run_trial, TrialResult};
