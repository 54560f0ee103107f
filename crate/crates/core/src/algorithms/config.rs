use std::fmt;

use serde::{Deserialize, Serialize};

use super::{C3Variant, DoublingPeps, FixedWeight, LinGame, LinTs, Peps, PepsConfig, StepSize, Strategy};
use crate::design::{g_optimal, tau_star, DesignWeights, TAU_STAR_ITERS};
use crate::error::{Error, Result};
use crate::instances::{Instance, ThetaSpace};
use crate::learners::LearnerKind;
use crate::sampling::DEFAULT_REJECTION_BUDGET;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Peps,
    #[serde(alias = "lin_ts")]
    Lints,
    #[serde(alias = "lin_game")]
    Lingame,
    Fixed,
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StrategyKind::Peps => "peps",
            StrategyKind::Lints => "lints",
            StrategyKind::Lingame => "lingame",
            StrategyKind::Fixed => "fixed",
        })
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "peps" => Ok(StrategyKind::Peps),
            "lints" | "lin_ts" | "ts" => Ok(StrategyKind::Lints),
            "lingame" | "lin_game" => Ok(StrategyKind::Lingame),
            "fixed" => Ok(StrategyKind::Fixed),
            other => Err(Error::config(format!("unknown strategy '{other}'"))),
        }
    }
}

/// `practical`: fixed horizon, AdaHedge, `eta_p = 1`. `theoretical`: the
/// doubling schedule with derived step sizes on a ball.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Practical,
    Theoretical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedDesign {
    /// The optimal allocation of the identification game.
    TauStar,
    GOptimal,
    Uniform,
}

/// Allocation used by the fixed-weight strategy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaSpec {
    Named(NamedDesign),
    Weights(Vec<f64>),
}

impl Default for LambdaSpec {
    fn default() -> Self {
        LambdaSpec::Named(NamedDesign::TauStar)
    }
}

impl LambdaSpec {
    pub fn resolve(&self, instance: &Instance) -> Result<DesignWeights> {
        match self {
            LambdaSpec::Named(NamedDesign::TauStar) => {
                let sol = tau_star(instance, TAU_STAR_ITERS, 1e-6)?;
                Ok(sol.lambda_star)
            }
            LambdaSpec::Named(NamedDesign::GOptimal) => g_optimal(instance.arms(), 1e-9),
            LambdaSpec::Named(NamedDesign::Uniform) => Ok(DesignWeights::uniform(instance.arms().len())),
            LambdaSpec::Weights(w) => {
                if w.len() != instance.arms().len() {
                    return Err(Error::config(format!(
                        "fixed design has {} weights for {} arms",
                        w.len(),
                        instance.arms().len()
                    )));
                }
                DesignWeights::new(w.clone())
            }
        }
    }
}

/// One strategy entry of an experiment configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyConfig {
    pub strategy: StrategyKind,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learner: Option<LearnerKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejection_budget: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_space: Option<ThetaSpace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forced_exploration: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<LambdaSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c3_variant: Option<C3Variant>,
}

impl StrategyConfig {
    pub fn new(strategy: StrategyKind) -> Self {
        StrategyConfig {
            strategy,
            mode: Mode::Practical,
            label: None,
            alpha: None,
            eta_p: None,
            eta_lambda: None,
            learner: None,
            rejection_budget: None,
            theta_space: None,
            forced_exploration: None,
            lambda: None,
            c3_variant: None,
        }
    }

    /// Name used in result files.
    pub fn label(&self) -> String {
        match &self.label {
            Some(l) => l.clone(),
            None => match (self.strategy, self.mode) {
                (StrategyKind::Peps, Mode::Theoretical) => "peps-doubling".into(),
                (k, _) => k.to_string(),
            },
        }
    }

    pub fn rejection_budget(&self) -> usize {
        self.rejection_budget.unwrap_or(DEFAULT_REJECTION_BUDGET)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == Mode::Theoretical {
            if self.strategy != StrategyKind::Peps {
                return Err(Error::config(format!("theoretical mode is only defined for peps, not {}", self.strategy)));
            }
            if self.eta_p.is_some() || self.eta_lambda.is_some() {
                return Err(Error::config("theoretical mode derives eta_p and eta_lambda; remove them"));
            }
            if !matches!(self.theta_space, Some(ThetaSpace::Ball { .. })) {
                return Err(Error::config(
                    "theoretical mode needs theta_space = ball; use practical mode for Theta = R^d",
                ));
            }
        }
        if self.lambda.is_some() && self.strategy != StrategyKind::Fixed {
            return Err(Error::config("lambda is only used by the fixed strategy"));
        }
        Ok(())
    }

    /// Copy with instance-dependent inputs computed once, so that building a
    /// strategy per repetition stays cheap.
    pub fn prepared(&self, instance: &Instance) -> Result<StrategyConfig> {
        let mut out = self.clone();
        if self.strategy == StrategyKind::Fixed {
            let lambda = self.lambda.clone().unwrap_or_default().resolve(instance)?;
            out.lambda = Some(LambdaSpec::Weights(lambda.as_slice().to_vec()));
        }
        Ok(out)
    }

    /// Builds a fresh strategy for the instance.
    pub fn build(&self, instance: &Instance, horizon: usize) -> Result<Box<dyn Strategy>> {
        self.validate()?;
        let label = self.label();
        let alpha = self.alpha.unwrap_or(0.25);
        Ok(match (self.strategy, self.mode) {
            (StrategyKind::Peps, Mode::Practical) => {
                let mut c = PepsConfig::practical(horizon);
                c.alpha = alpha;
                c.eta_p = StepSize::Fixed(self.eta_p.unwrap_or(1.0));
                if let Some(eta) = self.eta_lambda {
                    c.eta_lambda = StepSize::Fixed(eta);
                }
                c.learner = self.learner.unwrap_or_default();
                c.forced_exploration = self.forced_exploration.unwrap_or(false);
                c.theta_space = self.theta_space.unwrap_or_default();
                c.rejection_budget = self.rejection_budget();
                Box::new(Peps::new(instance, c)?.with_label(label))
            }
            (StrategyKind::Peps, Mode::Theoretical) => Box::new(
                DoublingPeps::new(
                    instance,
                    self.theta_space.unwrap_or_default(),
                    self.c3_variant.unwrap_or_default(),
                    self.rejection_budget(),
                )?
                .with_label(label),
            ),
            (StrategyKind::Lints, _) => Box::new(LinTs::new(instance)?.with_label(label)),
            (StrategyKind::Lingame, _) => Box::new(
                LinGame::new(
                    instance,
                    self.learner.unwrap_or_default(),
                    self.eta_lambda,
                    self.forced_exploration.unwrap_or(false),
                    alpha,
                )?
                .with_label(label),
            ),
            (StrategyKind::Fixed, _) => {
                let lambda = self.lambda.clone().unwrap_or_default().resolve(instance)?;
                Box::new(FixedWeight::new(instance, lambda)?.with_label(label))
            }
        })
    }
}
