//! Power split, UxNB placement and their alternation.

pub mod bcd;
pub mod placement;
pub mod power;

pub use bcd::{bcd_optimize, optimize_scheme, BcdOptions, BcdProblem, OptimizationTrace, OptimizeMode, OuterIteration};
pub use placement::{compile_placement_step, placement_step, PlacementOptions, PlacementStep, ScaState};
pub use power::{bisection_power, compile_power_feasibility, BisectionOptions, BisectionOutcome, PowerProblem};
