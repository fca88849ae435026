//! Joint support recovery from multiple Gaussian linear measurements.
//!
//! Each of `n` samples `x_i ∈ ℝ^d` shares a common support `S` of size `k`
//! and is observed through its own `m × d` Gaussian matrix,
//! `Y_i = Φ_i x_i + W_i`. The crate provides:
//!
//! - [`model`]: problem configuration and reproducible instance generation.
//! - [`estimator`]: the closed-form second-moment estimator (proxy samples,
//!   per-coordinate statistic, top-k and threshold rules) plus a brute-force
//!   least-squares decoder for tiny problems.
//! - [`bounds`]: closed-form evaluators for the conditional moments, the
//!   threshold window, the ensemble separation condition and the tail and
//!   moment bounds used in the sample-complexity analysis.
//! - [`montecarlo`]: a parallel, seed-reproducible experiment engine that
//!   estimates success rates, searches for the empirical sample complexity
//!   `n*` and checks every bound against simulation.
//! - [`cli`]: the `suprec` command-line front end.

pub mod bounds;
pub mod cli;
pub mod error;
pub mod estimator;
pub mod model;
pub mod montecarlo;
pub mod rng;

pub use error::{Error, Result};
