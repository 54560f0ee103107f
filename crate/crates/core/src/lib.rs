//! Best-arm identification in linear bandits with a sampling-based min-player.
//!
//! The crate is split the way an experiment is assembled: [`instances`]
//! describes a problem, [`design`] solves the allocation problems that define
//! its difficulty, [`algorithms`] holds the identification strategies and
//! [`harness`] runs seeded repetitions and aggregates the results.

pub mod algorithms;
pub mod design;
pub mod error;
pub mod harness;
pub mod instances;
pub mod learners;
pub mod linalg;
pub mod rng;
pub mod sampling;

pub use algorithms::{PosteriorState, Strategy, StrategyConfig, StrategyKind, StrategyStep};
pub use design::DesignWeights;
pub use error::{Error, Result};
pub use instances::{Instance, TargetId, TargetSet, ThetaSpace};
pub use linalg::{SpdState, Vector};
pub use rng::RngStream;
