//! Wear-leveling-aware active cell balancing.
//!
//! A series battery pack is driven through known missions. Between drive
//! segments an inductive balancer can move small charge packets between
//! cells. The planner decides how many transfer cycles to run in each idle
//! period so that no cell leaves its usable charge window, while keeping the
//! most-used cell's Ah throughput (and so its aging) as low as possible.
//!
//! Modules, bottom up:
//!
//! - [`cell`]: cell parameters, charge evolution, aging.
//! - [`mission`]: piecewise-constant missions and unbalanced prediction.
//! - [`physics`]: charge per transfer cycle and cycle times.
//! - [`ilp`], [`solver`]: integer programs and solver adapters.
//! - [`optimizer`]: the WLA and opportunistic programs, a plan checker and a
//!   brute-force oracle.
//! - [`strategies`]: the none / opportunistic / WLA policies.
//! - [`scenario`]: seeded road graphs, missions and cell spread.
//! - [`harness`]: lifespan simulation and comparison.
//! - [`config`], [`output`]: run configuration and result files.

pub mod cell;
pub mod config;
pub mod error;
pub mod harness;
pub mod ilp;
pub mod mission;
pub mod optimizer;
pub mod output;
pub mod physics;
pub mod scenario;
pub mod solver;
pub mod strategies;

pub use cell::{AgingParams, CellParams, CellState, PackConfig, VoltageMap};
pub use config::RunConfig;
pub use error::{Error, Result};
pub use harness::{compare, run_grid, simulate_lifespan, SimConfig, SimResult, UsagePattern};
pub use mission::{Mission, Segment};
pub use physics::ArchParams;
pub use scenario::{Scenario, ScenarioConfig};
pub use solver::{MicrolpAdapter, SolveStatus, SolverAdapter};
pub use strategies::StrategyKind;

/// The guide's chapters, compiled so that their code blocks run as doctests.
#[cfg(doctest)]
pub mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/cells.md")]
    pub mod cells {}
    #[doc = include_str!("../../../book/src/missions.md")]
    pub mod missions {}
    #[doc = include_str!("../../../book/src/physics.md")]
    pub mod physics {}
    #[doc = include_str!("../../../book/src/planning.md")]
    pub mod planning {}
    #[doc = include_str!("../../../book/src/strategies.md")]
    pub mod strategies {}
    #[doc = include_str!("../../../book/src/scenarios.md")]
    pub mod scenarios {}
    #[doc = include_str!("../../../book/src/lifespan.md")]
    pub mod lifespan {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
