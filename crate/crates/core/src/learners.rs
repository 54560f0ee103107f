//! No-regret learners over the arm simplex.
//!
//! Both learners consume *gains* (larger is better). [`Hedge`] exponentiates
//! them with a fixed step size; [`AdaHedge`] negates them into losses and
//! follows the recurrences of de Rooij, van Erven, Grünwald and Koolen
//! ("Follow the leader if you can, hedge if you must", 2014).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::design::DesignWeights;
use crate::error::{Error, Result};

fn check_gains(gains: &[f64], k: usize) -> Result<()> {
    if gains.len() != k {
        return Err(Error::Dimension {
            expected: k,
            got: gains.len(),
        });
    }
    if let Some(g) = gains.iter().find(|g| !g.is_finite()) {
        return Err(Error::Input(format!("non-finite gain {g}")));
    }
    Ok(())
}

/// Exponential weights with a fixed step size.
#[derive(Clone, Debug)]
pub struct Hedge {
    log_weights: Vec<f64>,
    eta: f64,
    t: usize,
    gain_bound: Option<f64>,
}

impl Hedge {
    pub fn new(k: usize, eta: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::config("hedge needs at least one expert"));
        }
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::config(format!("hedge step size must be positive, got {eta}")));
        }
        Ok(Hedge {
            log_weights: vec![0.0; k],
            eta,
            t: 0,
            gain_bound: None,
        })
    }

    /// Gains larger than `bound` in magnitude are logged, not clamped.
    pub fn with_gain_bound(mut self, bound: f64) -> Self {
        self.gain_bound = Some(bound);
        self
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn rounds(&self) -> usize {
        self.t
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    /// `log w += eta * g`, then shift so the largest log-weight is zero.
    pub fn update(&mut self, gains: &[f64]) -> Result<()> {
        check_gains(gains, self.log_weights.len())?;
        if let Some(b) = self.gain_bound {
            if gains.iter().any(|g| g.abs() > b) {
                log::warn!("hedge gain exceeds configured bound {b}");
            }
        }
        for (w, g) in self.log_weights.iter_mut().zip(gains) {
            *w += self.eta * g;
        }
        let max = self.log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for w in self.log_weights.iter_mut() {
            *w -= max;
        }
        self.t += 1;
        Ok(())
    }

    pub fn distribution(&self) -> DesignWeights {
        let raw: Vec<f64> = self.log_weights.iter().map(|w| w.exp()).collect();
        let s: f64 = raw.iter().sum();
        DesignWeights::new(raw.into_iter().map(|w| w / s).collect())
            .expect("softmax of finite log-weights is a simplex point")
    }
}

/// AdaHedge: Hedge with step size `ln K / Delta`, where `Delta` accumulates
/// the mixability gaps. While `Delta = 0` the learner follows the leader,
/// spreading mass uniformly over the experts with the smallest cumulative
/// loss.
#[derive(Clone, Debug)]
pub struct AdaHedge {
    cumulative_loss: Vec<f64>,
    delta: f64,
    last_gap: f64,
    t: usize,
}

impl AdaHedge {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::config("adahedge needs at least one expert"));
        }
        Ok(AdaHedge {
            cumulative_loss: vec![0.0; k],
            delta: 0.0,
            last_gap: 0.0,
            t: 0,
        })
    }

    pub fn rounds(&self) -> usize {
        self.t
    }

    /// Accumulated mixability gap.
    pub fn mixability_gap_sum(&self) -> f64 {
        self.delta
    }

    /// Mixability gap of the most recent round.
    pub fn last_gap(&self) -> f64 {
        self.last_gap
    }

    pub fn cumulative_gains(&self) -> Vec<f64> {
        self.cumulative_loss.iter().map(|l| -l).collect()
    }

    fn eta(&self) -> f64 {
        let k = self.cumulative_loss.len() as f64;
        if self.delta > 0.0 {
            k.ln() / self.delta
        } else {
            f64::INFINITY
        }
    }

    /// Weights and mix loss for cumulative losses `l` at rate `eta`.
    fn mix(eta: f64, l: &[f64]) -> (Vec<f64>, f64) {
        let min = l.iter().copied().fold(f64::INFINITY, f64::min);
        let mut w: Vec<f64> = if eta == f64::INFINITY {
            l.iter().map(|&v| if v == min { 1.0 } else { 0.0 }).collect()
        } else {
            l.iter().map(|&v| (-eta * (v - min)).exp()).collect()
        };
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= s);
        let m = if eta == f64::INFINITY {
            min
        } else {
            min - (s / l.len() as f64).ln() / eta
        };
        (w, m)
    }

    pub fn update(&mut self, gains: &[f64]) -> Result<()> {
        check_gains(gains, self.cumulative_loss.len())?;
        let eta = self.eta();
        let (w, m_prev) = AdaHedge::mix(eta, &self.cumulative_loss);
        let expected: f64 = w.iter().zip(gains).map(|(w, g)| -w * g).sum();
        for (l, g) in self.cumulative_loss.iter_mut().zip(gains) {
            *l -= g;
        }
        let (_, m) = AdaHedge::mix(eta, &self.cumulative_loss);
        // Jensen guarantees a nonnegative gap; clip rounding noise.
        let gap = (expected - (m - m_prev)).max(0.0);
        self.last_gap = gap;
        self.delta += gap;
        self.t += 1;
        Ok(())
    }

    pub fn distribution(&self) -> DesignWeights {
        let (w, _) = AdaHedge::mix(self.eta(), &self.cumulative_loss);
        DesignWeights::new(w).expect("mix weights form a simplex point")
    }
}

/// Which max-player learner a strategy uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    Hedge,
    #[default]
    #[serde(rename = "adahedge", alias = "ada_hedge")]
    AdaHedge,
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LearnerKind::Hedge => f.write_str("hedge"),
            LearnerKind::AdaHedge => f.write_str("adahedge"),
        }
    }
}

/// Either learner behind one interface.
#[derive(Clone, Debug)]
pub enum Learner {
    Hedge(Hedge),
    AdaHedge(AdaHedge),
}

impl Learner {
    pub fn update(&mut self, gains: &[f64]) -> Result<()> {
        match self {
            Learner::Hedge(h) => h.update(gains),
            Learner::AdaHedge(a) => a.update(gains),
        }
    }

    pub fn distribution(&self) -> DesignWeights {
        match self {
            Learner::Hedge(h) => h.distribution(),
            Learner::AdaHedge(a) => a.distribution(),
        }
    }
}
