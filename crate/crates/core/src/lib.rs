//! Minimum-fuel low-thrust trajectory optimization by successive
//! convexification, with time-dilation mesh adaptation and trust regions
//! scaled by a state-transition-tensor nonlinearity index.

pub mod autodiff;
pub mod conic;
pub mod config;
pub mod discretization;
pub mod dynamics;
pub mod error;
pub mod nonlinearity;
pub mod ode;
pub mod problem;
pub mod report;
pub mod runner;
pub mod scvx;
pub mod subproblem;

pub use conic::{ConicProgram, ConicSolution, SolveStatus, SolverOptions};
pub use config::{load_config, CaseConfig, LoadedConfig, Overrides, SweepConfig};
pub use discretization::{ReferenceTrajectory, SegmentLinearization};
pub use dynamics::{Dynamics, Model, ScalingSet, State};
pub use error::{Error, Result};
pub use ode::IntegratorOptions;
pub use problem::ProblemDef;
pub use report::{RunLabel, Summary, SweepRow};
pub use runner::{run_case, run_sweep, CaseOutcome};
pub use scvx::{run, IterationRecord, MeshMode, NlMode, RunResult, ScvxOptions};
