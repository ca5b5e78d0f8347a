//! Survival probabilities, reproduction numbers and Monte Carlo oracles for
//! branching-process epidemics under delayed contact tracing.

pub mod approx;
pub mod cli;
pub mod curve;
pub mod endemic;
pub mod error;
pub mod grid;
pub mod kappa;
pub mod mc;
pub mod model;
pub mod presets;
pub mod quad;

pub use approx::{FirstOrderResult, RctBreakdown};
pub use curve::{CurveSource, Direction, Generation, KappaCurve, Mode, TraceConfig};
pub use error::{Error, Result};
pub use grid::Grid;
pub use kappa::SolverSettings;
pub use model::{kappa_hat, AgeProfile, DelayKernel, Rates};
