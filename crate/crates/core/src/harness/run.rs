use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::metrics::{ErrorRow, MetricRow};
use crate::algorithms::{PosteriorState, Strategy, StrategyConfig, StrategyStep};
use crate::error::{Error, Result};
use crate::instances::{argmax_oracle, Instance, TargetId};
use crate::rng::{substream, RngStream};
use crate::sampling::{posterior_confidence, Confidence};

/// Environment variable that overrides the worker count.
pub const THREADS_ENV: &str = "BANDIT_THREADS";

/// Everything needed to replay one repetition.
#[derive(Clone, Debug)]
pub struct RepetitionSpec<'a> {
    pub instance: &'a Instance,
    pub instance_id: &'a str,
    pub strategy: &'a StrategyConfig,
    pub master_seed: u64,
    pub repetition: u64,
    pub t_max: usize,
    pub checkpoints: &'a [usize],
    pub mc_draws: usize,
}

/// Called after every step with the step record and the strategy state.
pub type StepObserver<'o> = dyn FnMut(&StrategyStep, &dyn Strategy) + 'o;

/// `P(oracle(theta) = z_ref)` under the strategy's reported posterior.
pub fn confidence_of(
    state: &PosteriorState,
    scale: f64,
    instance: &Instance,
    z_ref: &TargetId,
    rng: &mut RngStream,
    draws: usize,
) -> Result<Confidence> {
    match posterior_confidence(rng, state.spec(scale)?, instance.targets(), z_ref, draws) {
        Err(Error::Numerical(msg)) => {
            log::warn!("confidence estimate failed ({msg}); rebuilding the posterior factor");
            let mut fixed = state.clone();
            fixed.ensure_factor()?;
            posterior_confidence(rng, fixed.spec(scale)?, instance.targets(), z_ref, draws)
        }
        other => other,
    }
}

/// Runs one repetition and returns its checkpoint rows. On failure, the step
/// at which it happened is returned with the error.
pub fn run_repetition(
    spec: &RepetitionSpec<'_>,
    mut observer: Option<&mut StepObserver<'_>>,
) -> std::result::Result<Vec<MetricRow>, (usize, Error)> {
    let label = spec.strategy.label();
    let mut strategy = spec
        .strategy
        .build(spec.instance, spec.t_max)
        .map_err(|e| (0, e))?;
    let mut rng = substream(spec.master_seed, &label, spec.repetition);
    let mut conf_rng = substream(spec.master_seed, &format!("{label}/confidence"), spec.repetition);
    let z_star = spec.instance.best_target();

    let mut rows = Vec::with_capacity(spec.checkpoints.len());
    let mut next = spec.checkpoints.iter().peekable();
    let mut rejections: u64 = 0;
    let mut wall_ms = 0.0;
    for t in 1..=spec.t_max {
        let start = Instant::now();
        let step = strategy.step(spec.instance, &mut rng).map_err(|e| (t, e))?;
        wall_ms += start.elapsed().as_secs_f64() * 1e3;
        rejections += step.rejections_used as u64;
        if let Some(obs) = observer.as_mut() {
            obs(&step, strategy.as_ref());
        }
        if next.peek() == Some(&&t) {
            next.next();
            let state = strategy.posterior();
            let conf = confidence_of(
                state,
                strategy.posterior_scale(),
                spec.instance,
                z_star,
                &mut conf_rng,
                spec.mc_draws,
            )
            .map_err(|e| (t, e))?;
            let (z_hat, _) = argmax_oracle(spec.instance.targets(), state.theta_hat()).map_err(|e| (t, e))?;
            rows.push(MetricRow {
                instance_id: spec.instance_id.to_string(),
                strategy: label.clone(),
                seed: spec.repetition,
                t,
                posterior_confidence: conf.value,
                z_hat_correct: u8::from(&z_hat == z_star),
                rejections_cumulative: rejections,
                wall_ms,
            });
        }
    }
    Ok(rows)
}

/// Settings recorded alongside results so that they can be interpreted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub instance_id: String,
    pub instance_name: String,
    pub t_max: usize,
    pub repetitions: usize,
    pub master_seed: u64,
    pub mc_draws: usize,
    /// Whether confidences use the closed form (two targets) or Monte Carlo.
    pub exact_confidence: bool,
    pub rejection_budgets: Vec<(String, usize)>,
    pub checkpoints: Vec<usize>,
    pub delta_levels: Vec<f64>,
    pub threads: usize,
}

/// Rows of every repetition, ordered by strategy then repetition.
#[derive(Clone, Debug)]
pub struct ResultStore {
    pub metadata: RunMetadata,
    pub rows: Vec<MetricRow>,
    pub errors: Vec<ErrorRow>,
}

/// Worker count: `BANDIT_THREADS` if set, otherwise all cores.
pub fn worker_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

pub fn run_experiment(config: &ExperimentConfig, instance: &Instance) -> Result<ResultStore> {
    config.validate()?;
    let checkpoints = config.checkpoints()?;
    let instance_id = config.instance_id.clone().unwrap_or_else(|| instance.name.clone());
    let strategies = config
        .strategies
        .iter()
        .map(|s| s.prepared(instance))
        .collect::<Result<Vec<_>>>()?;
    // Surface configuration errors once instead of per repetition.
    for s in &strategies {
        s.build(instance, config.t_max)?;
    }

    let threads = worker_count();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;

    let jobs: Vec<(usize, u64)> = (0..strategies.len())
        .flat_map(|s| (0..config.repetitions as u64).map(move |r| (s, r)))
        .collect();
    let outcomes: Vec<std::result::Result<Vec<MetricRow>, ErrorRow>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(s, rep)| {
                let spec = RepetitionSpec {
                    instance,
                    instance_id: &instance_id,
                    strategy: &strategies[s],
                    master_seed: config.master_seed,
                    repetition: rep,
                    t_max: config.t_max,
                    checkpoints: &checkpoints,
                    mc_draws: config.mc_draws,
                };
                run_repetition(&spec, None).map_err(|(t, e)| {
                    log::error!("{} repetition {rep} failed at t={t}: {e}", strategies[s].label());
                    ErrorRow {
                        instance_id: instance_id.clone(),
                        strategy: strategies[s].label(),
                        seed: rep,
                        t,
                        error: e.to_string(),
                    }
                })
            })
            .collect()
    });

    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => rows.extend(r),
            Err(e) => errors.push(e),
        }
    }
    Ok(ResultStore {
        metadata: RunMetadata {
            instance_name: instance.name.clone(),
            instance_id,
            t_max: config.t_max,
            repetitions: config.repetitions,
            master_seed: config.master_seed,
            mc_draws: config.mc_draws,
            exact_confidence: instance.targets().len() == 2,
            rejection_budgets: strategies.iter().map(|s| (s.label(), s.rejection_budget())).collect(),
            checkpoints,
            delta_levels: config.delta_levels.clone(),
            threads,
        },
        rows,
        errors,
    })
}
