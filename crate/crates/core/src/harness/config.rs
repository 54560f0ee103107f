use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::algorithms::StrategyConfig;
use crate::error::{Error, Result};
use crate::instances::{make_soare, make_sphere, make_topk, Instance};
use crate::rng::stream;
use crate::sampling::DEFAULT_MC_DRAWS;

/// Where an experiment's instance comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum InstanceSpec {
    /// An instance JSON file, relative to the config file's directory.
    File { path: PathBuf },
    /// An instance document embedded in the config.
    Inline { instance: serde_json::Value },
    Soare { omega: f64 },
    Sphere { d: usize, n_arms: usize, seed: u64 },
    Topk { d: usize, k: usize },
}

impl InstanceSpec {
    pub fn load(&self, base_dir: Option<&Path>) -> Result<Instance> {
        match self {
            InstanceSpec::File { path } => {
                let full = match base_dir {
                    Some(dir) if path.is_relative() => dir.join(path),
                    _ => path.clone(),
                };
                Instance::from_json(&std::fs::read_to_string(&full)?)
            }
            InstanceSpec::Inline { instance } => Instance::from_json(&instance.to_string()),
            InstanceSpec::Soare { omega } => make_soare(*omega),
            InstanceSpec::Sphere { d, n_arms, seed } => make_sphere(&mut stream(*seed), *d, *n_arms),
            InstanceSpec::Topk { d, k } => make_topk(*d, *k),
        }
    }
}

/// Times at which metrics are recorded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Checkpoints {
    List(Vec<usize>),
    Stride { stride: usize },
}

impl Checkpoints {
    /// Every 10 steps up to 1000, every 100 after that, plus `t_max`.
    pub fn default_schedule(t_max: usize) -> Vec<usize> {
        let mut out: Vec<usize> = (1..=100).map(|i| 10 * i).take_while(|t| *t <= t_max).collect();
        out.extend((11..).map(|i| 100 * i).take_while(|t| *t <= t_max));
        if out.last() != Some(&t_max) {
            out.push(t_max);
        }
        out
    }

    pub fn resolve(&self, t_max: usize) -> Result<Vec<usize>> {
        match self {
            Checkpoints::Stride { stride } => {
                if *stride == 0 {
                    return Err(Error::config("checkpoint stride must be positive"));
                }
                let mut out: Vec<usize> = (1..).map(|i| i * stride).take_while(|t| *t <= t_max).collect();
                if out.last() != Some(&t_max) {
                    out.push(t_max);
                }
                Ok(out)
            }
            Checkpoints::List(list) => {
                if list.is_empty() {
                    return Err(Error::config("checkpoint list is empty"));
                }
                if list[0] == 0 || list.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::config("checkpoints must be positive and strictly increasing"));
                }
                if *list.last().unwrap() > t_max {
                    return Err(Error::config(format!("checkpoint {} exceeds T_max = {t_max}", list.last().unwrap())));
                }
                Ok(list.clone())
            }
        }
    }
}

fn default_mc_draws() -> usize {
    DEFAULT_MC_DRAWS
}

fn default_delta_levels() -> Vec<f64> {
    vec![0.1, 0.05, 0.01]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Identifier written to the `instance_id` column; defaults to the
    /// instance name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance_id: Option<String>,
    pub instance: InstanceSpec,
    pub strategies: Vec<StrategyConfig>,
    #[serde(rename = "T_max", alias = "t_max")]
    pub t_max: usize,
    pub repetitions: usize,
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoints: Option<Checkpoints>,
    #[serde(default = "default_mc_draws")]
    pub mc_draws: usize,
    #[serde(default = "default_delta_levels")]
    pub delta_levels: Vec<f64>,
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<(Self, Option<PathBuf>)> {
        let text = std::fs::read_to_string(path)?;
        let config: ExperimentConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok((config, path.parent().map(Path::to_path_buf)))
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::config("repetitions must be at least 1"));
        }
        if self.t_max == 0 {
            return Err(Error::config("T_max must be at least 1"));
        }
        if self.mc_draws == 0 {
            return Err(Error::config("mc_draws must be at least 1"));
        }
        if self.strategies.is_empty() {
            return Err(Error::config("no strategies configured"));
        }
        if let Some(bad) = self.delta_levels.iter().find(|d| !(**d > 0.0 && **d < 1.0)) {
            return Err(Error::config(format!("delta levels must lie in (0, 1), got {bad}")));
        }
        let mut labels: Vec<String> = self.strategies.iter().map(StrategyConfig::label).collect();
        labels.sort();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::config(format!("duplicate strategy label '{}'", w[0])));
        }
        for s in &self.strategies {
            s.validate()?;
        }
        self.checkpoints()?;
        Ok(())
    }

    pub fn checkpoints(&self) -> Result<Vec<usize>> {
        match &self.checkpoints {
            Some(c) => c.resolve(self.t_max),
            None => Ok(Checkpoints::default_schedule(self.t_max)),
        }
    }
}
