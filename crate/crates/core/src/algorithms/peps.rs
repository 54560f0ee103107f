//! PEPS: top-two sampling against a no-regret max-player, and its
//! doubling-trick wrapper.

use serde::{Deserialize, Serialize};

use super::{
    directional_gains, empirical_best, exploration_rate, observe, PosteriorState, StepAux,
    Strategy, StrategyStep,
};
use crate::design::{g_optimal, DesignWeights};
use crate::error::{Error, Result};
use crate::instances::{argmax_oracle, Instance, TargetId, ThetaSpace};
use crate::learners::{AdaHedge, Hedge, Learner, LearnerKind};
use crate::linalg::Vector;
use crate::rng::RngStream;
use crate::sampling::{
    posterior_confidence, sample_alternative, sample_theta_space, DEFAULT_REJECTION_BUDGET,
};

/// Tolerance used when computing the exploration design.
const G_DESIGN_TOL: f64 = 1e-6;

/// A step size that is either given or derived from the theoretical constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSize {
    Auto,
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PepsConfig {
    /// Horizon `T`; only used to bound gains and in diagnostics.
    pub horizon: usize,
    /// Forced-exploration exponent, `gamma_t = t^-alpha`.
    pub alpha: f64,
    pub eta_lambda: StepSize,
    pub eta_p: StepSize,
    pub learner: LearnerKind,
    pub forced_exploration: bool,
    pub theta_space: ThetaSpace,
    pub rejection_budget: usize,
}

impl PepsConfig {
    /// Fixed horizon, AdaHedge, `eta_p = 1`, unbounded parameter space and no
    /// forced exploration.
    pub fn practical(horizon: usize) -> Self {
        PepsConfig {
            horizon,
            alpha: 0.25,
            eta_lambda: StepSize::Auto,
            eta_p: StepSize::Fixed(1.0),
            learner: LearnerKind::AdaHedge,
            forced_exploration: false,
            theta_space: ThetaSpace::Unbounded,
            rejection_budget: DEFAULT_REJECTION_BUDGET,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::config("horizon must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(Error::config(format!("alpha must lie in (0, 1/2), got {}", self.alpha)));
        }
        if self.rejection_budget == 0 {
            return Err(Error::config("rejection budget must be at least 1"));
        }
        for (name, s) in [("eta_lambda", self.eta_lambda), ("eta_p", self.eta_p)] {
            if let StepSize::Fixed(v) = s {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::config(format!("{name} must be positive, got {v}")));
                }
            }
        }
        if let ThetaSpace::Ball { radius } = self.theta_space {
            if !(radius > 0.0 && radius.is_finite()) {
                return Err(Error::config(format!("ball radius must be positive, got {radius}")));
            }
        }
        Ok(())
    }
}

/// Which definition of the gain bound `C_3` drives the step sizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum C3Variant {
    /// `Delta_max + L^2 sqrt(d log(T l^2))`.
    #[default]
    Simple,
    /// `B_X + Delta_max + L^2 beta(T, l^2)`.
    Confidence,
}

/// Problem constants for the doubling schedule. Only defined on a ball.
#[derive(Clone, Debug, PartialEq)]
pub struct TheoreticalConstants {
    pub b: f64,
    pub l: f64,
    pub delta_max: f64,
    pub dim: usize,
    pub n_arms: usize,
    pub variant: C3Variant,
}

impl TheoreticalConstants {
    pub fn new(instance: &Instance, space: ThetaSpace, variant: C3Variant) -> Result<Self> {
        let radius = match space {
            ThetaSpace::Ball { radius } => radius,
            ThetaSpace::Unbounded => {
                return Err(Error::config(
                    "theoretical constants need a bounded parameter space; use practical mode for Theta = R^d",
                ))
            }
        };
        if radius < instance.theta_star().norm() {
            return Err(Error::config(format!(
                "ball radius {radius} is smaller than ||theta*|| = {}",
                instance.theta_star().norm()
            )));
        }
        let l = instance.max_arm_norm();
        Ok(TheoreticalConstants {
            b: radius,
            l,
            delta_max: instance.delta_max(space).expect("ball has finite width"),
            dim: instance.dim(),
            n_arms: instance.arms().len(),
            variant,
        })
    }

    /// `beta(t, 1/delta) = B + sqrt(2 log(1/delta) + d log((d + t L^2) / d))`.
    pub fn beta(&self, t: f64, inv_delta: f64) -> f64 {
        let d = self.dim as f64;
        self.b + (2.0 * inv_delta.ln() + d * ((d + t * self.l * self.l) / d).ln()).sqrt()
    }

    /// `C_{3,l}` for epoch `l` with horizon `2^l`. The `l^2` factor uses
    /// `max(l, 1)` so that epoch zero is defined.
    pub fn c3(&self, epoch: u32) -> f64 {
        let horizon = 2f64.powi(epoch as i32);
        let l2 = f64::from(epoch.max(1)).powi(2);
        let d = self.dim as f64;
        match self.variant {
            C3Variant::Simple => {
                self.delta_max + self.l * self.l * (d * (horizon * l2).ln()).sqrt()
            }
            C3Variant::Confidence => {
                self.l * self.b + self.delta_max + self.l * self.l * self.beta(horizon, l2)
            }
        }
    }

    pub fn eta_lambda(&self, epoch: u32) -> f64 {
        eta_lambda_for(self.n_arms, self.c3(epoch), 2f64.powi(epoch as i32))
    }

    pub fn eta_p(&self, epoch: u32) -> f64 {
        eta_p_for(self.dim, self.c3(epoch), 2f64.powi(epoch as i32))
    }
}

/// `sqrt(log|X| / (C3^2 T))`.
pub fn eta_lambda_for(n_arms: usize, c3: f64, horizon: f64) -> f64 {
    ((n_arms as f64).ln() / (c3 * c3 * horizon)).sqrt()
}

/// `sqrt(d log(T C3) / (C3^2 T))`, with the logarithm floored at one so the
/// step stays positive when `T C3 < e`.
pub fn eta_p_for(dim: usize, c3: f64, horizon: f64) -> f64 {
    let log = (horizon * c3).max(std::f64::consts::E).ln();
    (dim as f64 * log / (c3 * c3 * horizon)).sqrt()
}

pub struct Peps {
    label: String,
    config: PepsConfig,
    eta_p: f64,
    state: PosteriorState,
    learner: Learner,
    g_design: Option<DesignWeights>,
    t: usize,
}

impl Peps {
    pub fn new(instance: &Instance, config: PepsConfig) -> Result<Self> {
        config.validate()?;
        if instance.targets().len() < 2 {
            return Err(Error::DegenerateTarget("nothing to identify with a single target".into()));
        }
        let eta_p = match config.eta_p {
            StepSize::Fixed(v) => v,
            StepSize::Auto => {
                return Err(Error::config("eta_p must be resolved before constructing PEPS"))
            }
        };
        let k = instance.arms().len();
        let learner = match config.learner {
            LearnerKind::AdaHedge => Learner::AdaHedge(AdaHedge::new(k)?),
            LearnerKind::Hedge => match config.eta_lambda {
                StepSize::Fixed(eta) => Learner::Hedge(Hedge::new(k, eta)?),
                StepSize::Auto => {
                    return Err(Error::config("hedge needs an explicit eta_lambda outside theoretical mode"))
                }
            },
        };
        let g_design = if config.forced_exploration {
            Some(g_optimal(instance.arms(), G_DESIGN_TOL)?)
        } else {
            None
        };
        Ok(Peps {
            label: "peps".into(),
            config,
            eta_p,
            state: PosteriorState::new(instance.dim()),
            learner,
            g_design,
            t: 0,
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn config(&self) -> &PepsConfig {
        &self.config
    }

    pub fn learner(&self) -> &Learner {
        &self.learner
    }

    pub fn g_design(&self) -> Option<&DesignWeights> {
        self.g_design.as_ref()
    }

    /// Samples `theta~` from `N(theta_hat, V^-1)` restricted to the parameter
    /// space and returns it with the target it selects. On a ball whose
    /// rejection budget runs out, the radial projection of `theta_hat` is used.
    pub fn finalize(&mut self, instance: &Instance, rng: &mut RngStream) -> Result<(Vector, TargetId)> {
        self.state.ensure_factor()?;
        let spec = self.state.spec(1.0)?;
        let report = sample_theta_space(rng, spec, self.config.theta_space, self.config.rejection_budget)?;
        let theta = match report.sample {
            Some(s) => s,
            None => {
                let radius = match self.config.theta_space {
                    ThetaSpace::Ball { radius } => radius,
                    ThetaSpace::Unbounded => unreachable!("unbounded sampling never exhausts"),
                };
                log::info!("finalization exhausted its budget; projecting the estimate onto the ball");
                let th = self.state.theta_hat();
                let n = th.norm();
                if n > radius {
                    th * (radius / n)
                } else {
                    th.clone()
                }
            }
        };
        let (z, _) = argmax_oracle(instance.targets(), &theta)?;
        Ok((theta, z))
    }
}

impl Strategy for Peps {
    fn label(&self) -> &str {
        &self.label
    }

    fn step(&mut self, instance: &Instance, rng: &mut RngStream) -> Result<StrategyStep> {
        self.t += 1;
        let t = self.t;
        let z_hat = empirical_best(instance, &self.state)?;

        self.state.ensure_factor()?;
        let spec = self.state.spec(1.0 / self.eta_p)?;
        let report = sample_alternative(
            rng,
            spec,
            instance.targets(),
            &z_hat,
            self.config.rejection_budget,
        )?;

        let lambda = self.learner.distribution();
        let law = match &self.g_design {
            Some(g) => lambda.mix(g, exploration_rate(t, self.config.alpha)),
            None => lambda,
        };
        let arm = law.sample(rng);
        let y = observe(instance, arm, rng);

        let (gains, challenger) = match &report.sample {
            Some(theta) => {
                let diff = theta - self.state.theta_hat();
                (directional_gains(instance.arms(), &diff), Some(theta.iter().copied().collect()))
            }
            None => {
                log::debug!("rejection budget exhausted at t={t}; {z_hat} provisionally confirmed");
                (vec![0.0; instance.arms().len()], None)
            }
        };

        self.state.update(&instance.arms()[arm], y)?;
        self.learner.update(&gains)?;

        Ok(StrategyStep {
            t,
            chosen_arm: arm,
            z_hat,
            rejections_used: report.draws_used,
            aux: StepAux {
                exhausted: report.exhausted,
                sampling_law: Some(law.as_slice().to_vec()),
                gains: Some(gains),
                challenger,
            },
        })
    }

    fn posterior(&self) -> &PosteriorState {
        &self.state
    }
}

/// Outcome of one epoch of the doubling schedule.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochResult {
    pub epoch: u32,
    pub horizon: usize,
    pub eta_lambda: f64,
    pub eta_p: f64,
    pub z_out: TargetId,
    pub correct: bool,
    /// Posterior probability that the oracle returns the true best target.
    pub posterior_confidence: f64,
    /// `V` at the first step of the epoch was the identity.
    pub started_fresh: bool,
}

/// PEPS configuration for one epoch of the doubling schedule.
fn epoch_config(
    constants: &TheoreticalConstants,
    epoch: u32,
    space: ThetaSpace,
    rejection_budget: usize,
) -> PepsConfig {
    PepsConfig {
        horizon: 1usize << epoch,
        alpha: 0.25,
        eta_lambda: StepSize::Fixed(constants.eta_lambda(epoch)),
        eta_p: StepSize::Fixed(constants.eta_p(epoch)),
        learner: LearnerKind::Hedge,
        forced_exploration: true,
        theta_space: space,
        rejection_budget,
    }
}

/// Runs fresh PEPS instances with horizons `1, 2, 4, .., 2^max_epoch`.
pub fn doubling_run(
    instance: &Instance,
    rng: &mut RngStream,
    max_epoch: u32,
    space: ThetaSpace,
    variant: C3Variant,
    mc_draws: usize,
) -> Result<Vec<EpochResult>> {
    if max_epoch > 30 {
        return Err(Error::config(format!("max_epoch must be at most 30, got {max_epoch}")));
    }
    let constants = TheoreticalConstants::new(instance, space, variant)?;
    let mut out = Vec::with_capacity(max_epoch as usize + 1);
    for epoch in 0..=max_epoch {
        let config = epoch_config(&constants, epoch, space, DEFAULT_REJECTION_BUDGET);
        let (eta_lambda, eta_p) = (constants.eta_lambda(epoch), constants.eta_p(epoch));
        let horizon = config.horizon;
        let mut peps = Peps::new(instance, config)?;
        let started_fresh = peps.posterior().samples() == 0
            && *peps.posterior().precision().v() == nalgebra::DMatrix::identity(instance.dim(), instance.dim());
        for _ in 0..horizon {
            peps.step(instance, rng)?;
        }
        let (_, z_out) = peps.finalize(instance, rng)?;
        let spec = peps.posterior().spec(1.0)?;
        let conf = posterior_confidence(rng, spec, instance.targets(), instance.best_target(), mc_draws)?;
        out.push(EpochResult {
            epoch,
            horizon,
            eta_lambda,
            eta_p,
            correct: &z_out == instance.best_target(),
            z_out,
            posterior_confidence: conf.value,
            started_fresh,
        });
    }
    Ok(out)
}

/// The doubling schedule as a step-wise strategy. The reported posterior is
/// that of the last completed epoch (the current one during epoch zero).
pub struct DoublingPeps {
    label: String,
    constants: TheoreticalConstants,
    space: ThetaSpace,
    rejection_budget: usize,
    epoch: u32,
    steps_in_epoch: usize,
    current: Peps,
    completed: Option<PosteriorState>,
    t: usize,
}

impl DoublingPeps {
    pub fn new(
        instance: &Instance,
        space: ThetaSpace,
        variant: C3Variant,
        rejection_budget: usize,
    ) -> Result<Self> {
        let constants = TheoreticalConstants::new(instance, space, variant)?;
        let current = Peps::new(instance, epoch_config(&constants, 0, space, rejection_budget))?;
        Ok(DoublingPeps {
            label: "peps-doubling".into(),
            constants,
            space,
            rejection_budget,
            epoch: 0,
            steps_in_epoch: 0,
            current,
            completed: None,
            t: 0,
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn epoch(&self) -> u32 {
        self.epoch
    }
}

impl Strategy for DoublingPeps {
    fn label(&self) -> &str {
        &self.label
    }

    fn step(&mut self, instance: &Instance, rng: &mut RngStream) -> Result<StrategyStep> {
        if self.steps_in_epoch == self.current.config().horizon {
            if self.epoch >= 30 {
                return Err(Error::config("doubling schedule exceeded 30 epochs"));
            }
            self.completed = Some(self.current.posterior().clone());
            self.epoch += 1;
            self.steps_in_epoch = 0;
            self.current = Peps::new(
                instance,
                epoch_config(&self.constants, self.epoch, self.space, self.rejection_budget),
            )?;
        }
        let mut step = self.current.step(instance, rng)?;
        self.steps_in_epoch += 1;
        self.t += 1;
        step.t = self.t;
        Ok(step)
    }

    fn posterior(&self) -> &PosteriorState {
        self.completed.as_ref().unwrap_or_else(|| self.current.posterior())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{make_soare, make_topk, TargetSet};
    use crate::linalg::vector;
    use crate::rng::stream;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    #[test]
    fn single_target_is_rejected() {
        let arms = vec![vector(vec![1.0]).unwrap()];
        let inst = Instance::new("one", arms.clone(), TargetSet::Explicit(arms), vector(vec![1.0]).unwrap(), 1.0)
            .unwrap();
        assert!(matches!(
            Peps::new(&inst, PepsConfig::practical(10)),
            Err(Error::DegenerateTarget(_))
        ));
    }

    #[test]
    fn config_validation() {
        let inst = make_soare(0.3).unwrap();
        let mut c = PepsConfig::practical(10);
        c.alpha = 0.5;
        assert!(matches!(Peps::new(&inst, c), Err(Error::Config(_))));
        let mut c = PepsConfig::practical(10);
        c.learner = LearnerKind::Hedge;
        assert!(matches!(Peps::new(&inst, c), Err(Error::Config(_))));
        let mut c = PepsConfig::practical(10);
        c.eta_p = StepSize::Auto;
        assert!(matches!(Peps::new(&inst, c), Err(Error::Config(_))));
    }

    #[test]
    fn forced_exploration_lower_bound() {
        let inst = make_soare(0.5).unwrap();
        let mut config = PepsConfig::practical(200);
        config.forced_exploration = true;
        let mut peps = Peps::new(&inst, config).unwrap();
        let g = peps.g_design().unwrap().clone();
        let mut rng = stream(1);
        for _ in 0..200 {
            let step = peps.step(&inst, &mut rng).unwrap();
            let gamma = (step.t as f64).powf(-0.25);
            let law = step.aux.sampling_law.unwrap();
            for (l, gx) in law.iter().zip(g.as_slice()) {
                assert!(*l >= gamma * gx * (1.0 - 1e-15));
            }
        }
    }

    #[test]
    fn determinism() {
        let inst = make_soare(0.5).unwrap();
        let run = || {
            let mut peps = Peps::new(&inst, PepsConfig::practical(100)).unwrap();
            let mut rng = stream(42);
            (0..100).map(|_| peps.step(&inst, &mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn state_identity_and_gains() {
        let inst = make_topk(5, 2).unwrap();
        let mut peps = Peps::new(&inst, PepsConfig::practical(300)).unwrap();
        let mut rng = stream(3);
        let d = inst.dim();
        let mut v = DMatrix::<f64>::identity(d, d);
        for _ in 0..300 {
            let theta_before = peps.posterior().theta_hat().clone();
            let step = peps.step(&inst, &mut rng).unwrap();
            let x = &inst.arms()[step.chosen_arm];
            v += x * x.transpose();
            let gains = step.aux.gains.unwrap();
            assert!(gains.iter().all(|g| *g >= 0.0));
            if let Some(ch) = step.aux.challenger {
                let diff = Vector::from_vec(ch) - &theta_before;
                for (g, arm) in gains.iter().zip(inst.arms()) {
                    assert_abs_diff_eq!(*g, arm.dot(&diff).powi(2), epsilon = 1e-12);
                }
            }
        }
        assert!((peps.posterior().precision().v() - &v).amax() < 1e-9);
        let theta = v.clone().lu().solve(peps.posterior().response_sum()).unwrap();
        assert!((peps.posterior().theta_hat() - theta).amax() < 1e-9);
    }

    #[test]
    fn finalize_unbounded_and_concentrated() {
        let inst = make_soare(0.5).unwrap();
        let mut peps = Peps::new(&inst, PepsConfig::practical(5)).unwrap();
        let mut rng = stream(4);
        let (theta, z) = peps.finalize(&inst, &mut rng).unwrap();
        assert_eq!(argmax_oracle(inst.targets(), &theta).unwrap().0, z);
    }

    #[test]
    fn doubling_constants() {
        assert_abs_diff_eq!(eta_lambda_for(3, 2.0, 4.0), (3f64.ln() / 16.0).sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(eta_lambda_for(3, 2.0, 4.0), 0.2620, epsilon = 1e-4);
        let inst = make_soare(0.5).unwrap();
        assert!(matches!(
            TheoreticalConstants::new(&inst, ThetaSpace::Unbounded, C3Variant::Simple),
            Err(Error::Config(_))
        ));
        let c = TheoreticalConstants::new(&inst, ThetaSpace::Ball { radius: 2.0 }, C3Variant::Simple).unwrap();
        assert_abs_diff_eq!(c.delta_max, 4.0, epsilon = 1e-12);
        // epoch 2: T = 4, l^2 = 4, C3 = 4 + sqrt(2 ln 16)
        assert_abs_diff_eq!(c.c3(2), 4.0 + (2.0 * 16f64.ln()).sqrt(), epsilon = 1e-12);
        let alt = TheoreticalConstants::new(&inst, ThetaSpace::Ball { radius: 2.0 }, C3Variant::Confidence).unwrap();
        assert!(alt.c3(2) > c.c3(2));
        assert!(c.eta_p(0) > 0.0);
    }

    #[test]
    fn doubling_epochs_restart() {
        let inst = make_soare(0.5).unwrap();
        let mut rng = stream(8);
        let res = doubling_run(&inst, &mut rng, 3, ThetaSpace::Ball { radius: 2.0 }, C3Variant::Simple, 200)
            .unwrap();
        let horizons: Vec<usize> = res.iter().map(|r| r.horizon).collect();
        assert_eq!(horizons, vec![1, 2, 4, 8]);
        assert!(res.iter().all(|r| r.started_fresh));
        assert!(matches!(
            doubling_run(&inst, &mut rng, 3, ThetaSpace::Unbounded, C3Variant::Simple, 10),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn doubling_strategy_switches_epochs() {
        let inst = make_soare(0.5).unwrap();
        let mut s = DoublingPeps::new(&inst, ThetaSpace::Ball { radius: 2.0 }, C3Variant::Simple, 1000).unwrap();
        let mut rng = stream(2);
        for _ in 0..15 {
            s.step(&inst, &mut rng).unwrap();
        }
        // 1 + 2 + 4 + 8 = 15 samples complete epochs 0..=3.
        assert_eq!(s.epoch(), 3);
        s.step(&inst, &mut rng).unwrap();
        assert_eq!(s.epoch(), 4);
        assert_eq!(s.posterior().samples(), 8);
    }
}
