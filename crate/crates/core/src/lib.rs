//! Iterative linear-quadratic games (iLQGame) for N-player discrete-time
//! dynamic games, producing feedback or open-loop Nash equilibrium
//! trajectories, together with a curvilinear racing game built on top.

pub mod costs;
pub mod dynamics;
pub mod error;
pub mod export;
pub mod game;
pub mod linalg;
pub mod lq;
pub mod racing;
pub mod scenario;
pub mod solver;
pub mod track;

pub use dynamics::{GGDiamond, JointState, PlayerInput, PlayerState};
pub use error::{Error, Result};
pub use game::{DynamicGame, LinearQuadraticGame};
pub use lq::{LqApproximation, StrategySet};
pub use scenario::{RacingScenario, ScenarioSweep};
pub use solver::{GameTrajectory, SolveReport, SolverMode, SolverSettings};
pub use track::{Track, TrackSegment};
