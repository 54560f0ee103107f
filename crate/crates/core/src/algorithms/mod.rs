//! Identification strategies.
//!
//! Every strategy is stepped one sample at a time through [`Strategy`], which
//! lets the harness treat PEPS and the baselines uniformly. All of them share
//! the same least-squares plumbing ([`PosteriorState`]) so comparisons isolate
//! how each one chooses the next arm.

mod baselines;
mod config;
mod glrt;
mod peps;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::{argmax_oracle, Instance, TargetId};
use crate::linalg::{check_dim, SpdState, Vector};
use crate::rng::RngStream;
use crate::sampling::PosteriorSpec;

pub use baselines::{FixedWeight, LinGame, LinTs};
pub use config::{Mode, StrategyConfig, StrategyKind};
pub use glrt::glrt_statistic;
pub use peps::{
    doubling_run, eta_lambda_for, eta_p_for, C3Variant, DoublingPeps, EpochResult, Peps,
    PepsConfig, StepSize, TheoreticalConstants,
};

/// Regularized least-squares state: `V_t = I + sum x x^T`, `S_t = sum x y`,
/// `theta_hat = V_t^-1 S_t`.
#[derive(Clone, Debug)]
pub struct PosteriorState {
    precision: SpdState,
    s: Vector,
    theta_hat: Vector,
    t: usize,
}

impl PosteriorState {
    pub fn new(dim: usize) -> Self {
        PosteriorState {
            precision: SpdState::identity(dim),
            s: Vector::zeros(dim),
            theta_hat: Vector::zeros(dim),
            t: 0,
        }
    }

    /// State with a given precision and response sum. The sample counter
    /// starts at zero.
    pub fn from_parts(precision: SpdState, s: Vector) -> Self {
        let theta_hat = precision.vinv() * &s;
        PosteriorState {
            precision,
            s,
            theta_hat,
            t: 0,
        }
    }

    pub fn precision(&self) -> &SpdState {
        &self.precision
    }

    pub fn theta_hat(&self) -> &Vector {
        &self.theta_hat
    }

    pub fn response_sum(&self) -> &Vector {
        &self.s
    }

    /// Number of observations absorbed.
    pub fn samples(&self) -> usize {
        self.t
    }

    pub fn update(&mut self, x: &Vector, y: f64) -> Result<()> {
        check_dim(self.s.len(), x.len())?;
        if !y.is_finite() {
            return Err(Error::Input(format!("non-finite observation {y}")));
        }
        self.precision.rank_one_update(x)?;
        self.s.axpy(y, x, 1.0);
        self.theta_hat = self.precision.vinv() * &self.s;
        self.t += 1;
        Ok(())
    }

    /// `N(theta_hat, scale * V^-1)`.
    pub fn spec(&self, scale: f64) -> Result<PosteriorSpec<'_>> {
        PosteriorSpec::new(&self.theta_hat, &self.precision, scale)
    }

    /// Ensures the cached factor of `V^-1` is usable, rebuilding the inverse
    /// from `V` once if it is not.
    pub(crate) fn ensure_factor(&mut self) -> Result<()> {
        if self.precision.inverse_factor().is_err() {
            log::warn!("rebuilding V^-1 after a failed factorization");
            self.precision.rebuild()?;
            self.precision.inverse_factor()?;
        }
        Ok(())
    }
}

/// Per-step diagnostics.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepAux {
    /// The rejection loop ran out of budget.
    pub exhausted: bool,
    /// Distribution the arm was drawn from, when randomized.
    pub sampling_law: Option<Vec<f64>>,
    /// Gains fed to the max-player learner.
    pub gains: Option<Vec<f64>>,
    /// The parameter the gains were measured against.
    pub challenger: Option<Vec<f64>>,
}

/// Record of one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct StrategyStep {
    pub t: usize,
    pub chosen_arm: usize,
    pub z_hat: TargetId,
    pub rejections_used: usize,
    pub aux: StepAux,
}

/// A sequential identification strategy.
pub trait Strategy: Send {
    fn label(&self) -> &str;

    /// Takes one sample from the instance.
    fn step(&mut self, instance: &Instance, rng: &mut RngStream) -> Result<StrategyStep>;

    /// The least-squares state that defines the reported posterior.
    fn posterior(&self) -> &PosteriorState;

    /// Scale of the reported posterior covariance `scale * V^-1`.
    fn posterior_scale(&self) -> f64 {
        1.0
    }
}

/// Draws `y = <theta*, x> + noise`.
pub(crate) fn observe(instance: &Instance, arm: usize, rng: &mut RngStream) -> f64 {
    use rand::Rng;
    let x = &instance.arms()[arm];
    let eps: f64 = rng.sample(rand_distr::StandardNormal);
    x.dot(instance.theta_star()) + instance.noise_std() * eps
}

/// Current recommendation of a least-squares state.
pub(crate) fn empirical_best(instance: &Instance, state: &PosteriorState) -> Result<TargetId> {
    Ok(argmax_oracle(instance.targets(), state.theta_hat())?.0)
}

/// `(x^T d)^2` for every arm.
pub(crate) fn directional_gains(arms: &[Vector], d: &Vector) -> Vec<f64> {
    arms.iter()
        .map(|x| {
            let p = x.dot(d);
            p * p
        })
        .collect()
}

/// Forced-exploration rate `t^-alpha`.
pub(crate) fn exploration_rate(t: usize, alpha: f64) -> f64 {
    (t as f64).powf(-alpha)
}
