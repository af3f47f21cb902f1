//! Training loop and evaluation drivers.

pub mod config;
pub mod eval;
pub mod sweep;
pub mod train;

pub use config::{DemapperNoise, EntropyEstimator, Mode, TrainConfig};
pub use train::{build_loss, loss_from_vars, train, train_problem, Problem, TraceRow, TrainOutcome};
pub use eval::{evaluate, parse_power_grid, EvalChannel, EvalSettings, Evaluation, FrameResult, Scheme, Selection};
pub use sweep::{blocklength_sweep, render_sweep, SweepRow};
