//! Baseline strategies: linear Thompson sampling, the projection-based game
//! and a fixed allocation.

use super::{
    directional_gains, empirical_best, exploration_rate, observe, PosteriorState, StepAux,
    Strategy, StrategyStep,
};
use crate::design::{closest_alternative, g_optimal, DesignWeights};
use crate::error::{Error, Result};
use crate::instances::Instance;
use crate::learners::{AdaHedge, Hedge, Learner, LearnerKind};
use crate::linalg::Vector;
use crate::rng::RngStream;

/// Thompson sampling over the arms: draw `theta ~ N(theta_hat, V^-1)` and pull
/// the arm that is best for it. Only meaningful when targets are the arms.
pub struct LinTs {
    label: String,
    state: PosteriorState,
    t: usize,
}

impl LinTs {
    pub fn new(instance: &Instance) -> Result<Self> {
        if !instance.targets_are_arms() {
            return Err(Error::config(
                "linear Thompson sampling needs the target set to equal the arm set",
            ));
        }
        Ok(LinTs {
            label: "lints".into(),
            state: PosteriorState::new(instance.dim()),
            t: 0,
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }
}

fn argmax_arm(arms: &[Vector], theta: &Vector) -> usize {
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (i, x) in arms.iter().enumerate() {
        let v = x.dot(theta);
        if v > best_value {
            best_value = v;
            best = i;
        }
    }
    best
}

impl Strategy for LinTs {
    fn label(&self) -> &str {
        &self.label
    }

    fn step(&mut self, instance: &Instance, rng: &mut RngStream) -> Result<StrategyStep> {
        self.t += 1;
        let z_hat = empirical_best(instance, &self.state)?;
        self.state.ensure_factor()?;
        let theta = self
            .state
            .precision()
            .sample_gaussian(rng, self.state.theta_hat(), 1.0)?;
        let arm = argmax_arm(instance.arms(), &theta);
        let y = observe(instance, arm, rng);
        self.state.update(&instance.arms()[arm], y)?;
        Ok(StrategyStep {
            t: self.t,
            chosen_arm: arm,
            z_hat,
            rejections_used: 0,
            aux: StepAux {
                challenger: Some(theta.iter().copied().collect()),
                ..StepAux::default()
            },
        })
    }

    fn posterior(&self) -> &PosteriorState {
        &self.state
    }
}

/// Game baseline whose min-player projects `theta_hat` onto the closest
/// alternative in the `A(lambda_t)` metric instead of sampling it.
pub struct LinGame {
    label: String,
    state: PosteriorState,
    learner: Learner,
    g_design: Option<DesignWeights>,
    alpha: f64,
    t: usize,
}

impl LinGame {
    /// `eta_lambda` is required for Hedge and ignored by AdaHedge.
    pub fn new(
        instance: &Instance,
        learner: LearnerKind,
        eta_lambda: Option<f64>,
        forced_exploration: bool,
        alpha: f64,
    ) -> Result<Self> {
        if instance.targets().len() < 2 {
            return Err(Error::DegenerateTarget("nothing to identify with a single target".into()));
        }
        if !(alpha > 0.0 && alpha < 0.5) {
            return Err(Error::config(format!("alpha must lie in (0, 1/2), got {alpha}")));
        }
        let k = instance.arms().len();
        let learner = match learner {
            LearnerKind::AdaHedge => Learner::AdaHedge(AdaHedge::new(k)?),
            LearnerKind::Hedge => {
                let eta = eta_lambda.ok_or_else(|| Error::config("hedge needs eta_lambda"))?;
                Learner::Hedge(Hedge::new(k, eta)?)
            }
        };
        let g_design = if forced_exploration {
            Some(g_optimal(instance.arms(), 1e-6)?)
        } else {
            None
        };
        Ok(LinGame {
            label: "lingame".into(),
            state: PosteriorState::new(instance.dim()),
            learner,
            g_design,
            alpha,
            t: 0,
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }
}

impl Strategy for LinGame {
    fn label(&self) -> &str {
        &self.label
    }

    fn step(&mut self, instance: &Instance, rng: &mut RngStream) -> Result<StrategyStep> {
        self.t += 1;
        let t = self.t;
        let z_hat = empirical_best(instance, &self.state)?;
        let lambda = self.learner.distribution();
        let alt = closest_alternative(&lambda, instance.arms(), self.state.theta_hat(), instance.targets())?;
        let diff = self.state.theta_hat() - &alt.minimizer;
        let gains = directional_gains(instance.arms(), &diff);

        let law = match &self.g_design {
            Some(g) => lambda.mix(g, exploration_rate(t, self.alpha)),
            None => lambda,
        };
        let arm = law.sample(rng);
        let y = observe(instance, arm, rng);
        self.state.update(&instance.arms()[arm], y)?;
        self.learner.update(&gains)?;

        Ok(StrategyStep {
            t,
            chosen_arm: arm,
            z_hat,
            rejections_used: 0,
            aux: StepAux {
                exhausted: false,
                sampling_law: Some(law.as_slice().to_vec()),
                gains: Some(gains),
                challenger: Some(alt.minimizer.iter().copied().collect()),
            },
        })
    }

    fn posterior(&self) -> &PosteriorState {
        &self.state
    }
}

/// Draws arms iid from a fixed design.
pub struct FixedWeight {
    label: String,
    lambda: DesignWeights,
    state: PosteriorState,
    t: usize,
}

impl FixedWeight {
    pub fn new(instance: &Instance, lambda: DesignWeights) -> Result<Self> {
        if lambda.len() != instance.arms().len() {
            return Err(Error::Dimension {
                expected: instance.arms().len(),
                got: lambda.len(),
            });
        }
        Ok(FixedWeight {
            label: "fixed".into(),
            lambda,
            state: PosteriorState::new(instance.dim()),
            t: 0,
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn weights(&self) -> &DesignWeights {
        &self.lambda
    }
}

impl Strategy for FixedWeight {
    fn label(&self) -> &str {
        &self.label
    }

    fn step(&mut self, instance: &Instance, rng: &mut RngStream) -> Result<StrategyStep> {
        self.t += 1;
        let z_hat = empirical_best(instance, &self.state)?;
        let arm = self.lambda.sample(rng);
        let y = observe(instance, arm, rng);
        self.state.update(&instance.arms()[arm], y)?;
        Ok(StrategyStep {
            t: self.t,
            chosen_arm: arm,
            z_hat,
            rejections_used: 0,
            aux: StepAux::default(),
        })
    }

    fn posterior(&self) -> &PosteriorState {
        &self.state
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{make_soare, make_topk, TargetSet};
    use crate::linalg::vector;
    use crate::rng::stream;
    use nalgebra::DMatrix;

    fn two_arms(theta: Vec<f64>) -> Instance {
        let arms = vec![vector(vec![1.0, 0.0]).unwrap(), vector(vec![0.0, 1.0]).unwrap()];
        Instance::new("e1e2", arms.clone(), TargetSet::Explicit(arms), vector(theta).unwrap(), 1.0).unwrap()
    }

    #[test]
    fn lints_rejects_topk() {
        let inst = make_topk(5, 2).unwrap();
        assert!(matches!(LinTs::new(&inst), Err(Error::Config(_))));
    }

    #[test]
    fn lints_symmetric_at_prior() {
        let inst = two_arms(vec![1.0, 0.0]);
        let arms = inst.arms();
        let state = PosteriorState::new(2);
        let mut rng = stream(11);
        let n = 10_000;
        let mut first = 0;
        for _ in 0..n {
            let theta = state.precision().sample_gaussian(&mut rng, state.theta_hat(), 1.0).unwrap();
            if argmax_arm(arms, &theta) == 0 {
                first += 1;
            }
        }
        let freq = first as f64 / n as f64;
        assert!((freq - 0.5).abs() < 0.02, "{freq}");
    }

    #[test]
    fn lints_concentrated_picks_argmax() {
        let inst = make_soare(0.5).unwrap();
        let v = DMatrix::<f64>::identity(2, 2) * 1e6;
        let precision = crate::linalg::SpdState::from_matrix(v).unwrap();
        let mean = vector(vec![0.3, 1.0]).unwrap();
        let target = argmax_arm(inst.arms(), &mean);
        let mut rng = stream(5);
        let hits = (0..10_000)
            .filter(|_| argmax_arm(inst.arms(), &precision.sample_gaussian(&mut rng, &mean, 1.0).unwrap()) == target)
            .count();
        assert!(hits as f64 / 1e4 >= 0.999);
    }

    #[test]
    fn lingame_gains_and_boundary() {
        let inst = two_arms(vec![1.0, 0.2]);
        let mut s = LinGame::new(&inst, LearnerKind::AdaHedge, None, false, 0.25).unwrap();
        let mut rng = stream(6);
        for _ in 0..300 {
            let theta_hat = s.posterior().theta_hat().clone();
            let step = s.step(&inst, &mut rng).unwrap();
            let alt = Vector::from_vec(step.aux.challenger.unwrap());
            let gains = step.aux.gains.unwrap();
            for (g, x) in gains.iter().zip(inst.arms()) {
                let p = x.dot(&(&theta_hat - &alt));
                assert_eq!(*g, p * p);
            }
            // Only informative once theta_hat has left the origin.
            if theta_hat.norm() > 0.0 && (theta_hat[0] - theta_hat[1]).abs() > 1e-12 {
                assert!((alt[0] - alt[1]).abs() < 1e-8, "{alt}");
            }
        }
    }

    #[test]
    fn fixed_point_mass() {
        let inst = two_arms(vec![1.0, 0.0]);
        let mut s = FixedWeight::new(&inst, DesignWeights::point_mass(2, 0)).unwrap();
        let mut rng = stream(0);
        for _ in 0..50 {
            s.step(&inst, &mut rng).unwrap();
        }
        let v = s.posterior().precision().v();
        assert_eq!(v[(0, 0)], 51.0);
        assert_eq!(v[(1, 1)], 1.0);
        assert_eq!(v[(0, 1)], 0.0);
    }

    #[test]
    fn fixed_empirical_allocation() {
        let inst = make_soare(0.5).unwrap();
        let lambda = DesignWeights::new(vec![0.2, 0.5, 0.3]).unwrap();
        let mut s = FixedWeight::new(&inst, lambda.clone()).unwrap();
        let mut rng = stream(9);
        let t = 10_000;
        let mut counts = vec![0.0; 3];
        for _ in 0..t {
            counts[s.step(&inst, &mut rng).unwrap().chosen_arm] += 1.0;
        }
        let emp = DesignWeights::normalized(counts).unwrap();
        assert!(emp.tv_distance(&lambda) <= 3.0 * (3.0 / t as f64).sqrt());
    }
}
