//! Joint estimation of arc travel times and route-choice preferences from
//! trip records that may lack paths, destinations, or observed durations.
//!
//! The model couples a multinomial route-choice distribution over all paths
//! of a road network (expressed through a value function solved as a linear
//! system) with a positive observation density for trip durations. Missing
//! record fields are marginalised by Monte Carlo, and both the arc travel
//! times and the choice weights are fit by projected stochastic gradient
//! ascent with score-function gradient estimators.

pub mod choice;
pub mod data;
pub mod estimator;
pub mod inference;
pub mod linalg;
pub mod mixture;
pub mod network;
pub mod numeric;
pub mod parallel;

mod error;

pub use error::{Error, Result};
