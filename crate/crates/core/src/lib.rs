//! Time-warped growth processes.
//!
//! Observed price trajectories are modelled as `X(t) = Z(h(t))`, where `Z`
//! grows exponentially at a series-specific rate and `h` is an unconstrained
//! (possibly nonmonotone) time-warping function. The crate estimates growth
//! rates on an automatically selected undisturbed window, recovers the warps,
//! decomposes them by functional principal component analysis and runs a
//! Monte Carlo study of the whole pipeline.

pub mod error;
pub mod fpca;
pub mod growthfit;
pub mod quadrature;
pub mod simulate;
pub mod timeseries;
pub mod warping;

pub use error::{Error, Result};
pub use fpca::{FpcaModel, ModesOfVariation, ScoreRegression};
pub use growthfit::{IntervalSearchResult, WindowFit};
pub use simulate::{SimReport, SimTruth};
pub use timeseries::{Panel, PriceSeries, TimeGrid};
pub use warping::{WarpFunction, WarpSet};
