use std::fmt;

use serde::{Serialize, Serializer};

use super::metrics::MetricRow;
use super::run::RunMetadata;

/// Cross-repetition statistics at one checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeriesPoint {
    pub t: usize,
    pub n: usize,
    pub mean_confidence: f64,
    /// Standard error of the mean confidence; zero when `n = 1`.
    pub se_confidence: f64,
    pub rate_correct: f64,
    pub mean_rejections: f64,
    pub mean_wall_ms: f64,
}

/// The rows of one (instance, strategy) pair, summarized per checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Series {
    pub instance_id: String,
    pub strategy: String,
    pub points: Vec<SeriesPoint>,
}

/// Groups rows by instance and strategy in order of first appearance, then by
/// checkpoint in increasing `t`. Sums run in row order, so results computed
/// from a CSV match those computed from memory exactly.
pub fn series(rows: &[MetricRow]) -> Vec<Series> {
    struct Acc {
        t: usize,
        n: usize,
        conf: f64,
        conf_sq: f64,
        correct: f64,
        rejections: f64,
        wall: f64,
    }
    let mut groups: Vec<(String, String, Vec<Acc>)> = Vec::new();
    for r in rows {
        let gi = match groups
            .iter()
            .position(|(i, s, _)| *i == r.instance_id && *s == r.strategy)
        {
            Some(i) => i,
            None => {
                groups.push((r.instance_id.clone(), r.strategy.clone(), Vec::new()));
                groups.len() - 1
            }
        };
        let accs = &mut groups[gi].2;
        let ai = match accs.binary_search_by_key(&r.t, |a| a.t) {
            Ok(i) => i,
            Err(i) => {
                accs.insert(
                    i,
                    Acc {
                        t: r.t,
                        n: 0,
                        conf: 0.0,
                        conf_sq: 0.0,
                        correct: 0.0,
                        rejections: 0.0,
                        wall: 0.0,
                    },
                );
                i
            }
        };
        let a = &mut accs[ai];
        a.n += 1;
        a.conf += r.posterior_confidence;
        a.conf_sq += r.posterior_confidence * r.posterior_confidence;
        a.correct += f64::from(r.z_hat_correct);
        a.rejections += r.rejections_cumulative as f64;
        a.wall += r.wall_ms;
    }
    groups
        .into_iter()
        .map(|(instance_id, strategy, accs)| Series {
            instance_id,
            strategy,
            points: accs
                .into_iter()
                .map(|a| {
                    let n = a.n as f64;
                    let mean = a.conf / n;
                    let se = if a.n > 1 {
                        let var = ((a.conf_sq - n * mean * mean) / (n - 1.0)).max(0.0);
                        (var / n).sqrt()
                    } else {
                        0.0
                    };
                    SeriesPoint {
                        t: a.t,
                        n: a.n,
                        mean_confidence: mean,
                        se_confidence: se,
                        rate_correct: a.correct / n,
                        mean_rejections: a.rejections / n,
                        mean_wall_ms: a.wall / n,
                    }
                })
                .collect(),
        })
        .collect()
}

/// First checkpoint at which the mean confidence exceeds `1 - delta`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Crossing {
    At(usize),
    /// Never crossed within the horizon.
    Never { t_max: usize },
}

impl Crossing {
    pub fn time(&self) -> Option<usize> {
        match self {
            Crossing::At(t) => Some(*t),
            Crossing::Never { .. } => None,
        }
    }
}

impl fmt::Display for Crossing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Crossing::At(t) => write!(f, "{t}"),
            Crossing::Never { t_max } => write!(f, ">{t_max}"),
        }
    }
}

impl Serialize for Crossing {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Crossing::At(t) => s.serialize_u64(*t as u64),
            Crossing::Never { .. } => s.serialize_str(&self.to_string()),
        }
    }
}

/// Crossing time of a single series; strict on the confidence, first
/// qualifying checkpoint on time.
pub fn crossing(points: &[SeriesPoint], delta: f64, t_max: usize) -> Crossing {
    points
        .iter()
        .find(|p| p.mean_confidence > 1.0 - delta)
        .map_or(Crossing::Never { t_max }, |p| Crossing::At(p.t))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TableEntry {
    pub instance_id: String,
    pub strategy: String,
    pub delta: f64,
    pub samples: Crossing,
}

/// Samples needed for the mean posterior confidence to exceed `1 - delta`,
/// per instance and strategy.
pub fn samples_to_delta(rows: &[MetricRow], delta: f64, t_max: usize) -> Vec<TableEntry> {
    series(rows)
        .into_iter()
        .map(|s| TableEntry {
            samples: crossing(&s.points, delta, t_max),
            instance_id: s.instance_id,
            strategy: s.strategy,
            delta,
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub metadata: RunMetadata,
    pub table: Vec<TableEntry>,
    pub rows: usize,
    pub failed_repetitions: usize,
}

impl Summary {
    pub fn new(metadata: &RunMetadata, rows: &[MetricRow], failed: usize) -> Self {
        let table = metadata
            .delta_levels
            .iter()
            .flat_map(|d| samples_to_delta(rows, *d, metadata.t_max))
            .collect();
        Summary {
            metadata: metadata.clone(),
            table,
            rows: rows.len(),
            failed_repetitions: failed,
        }
    }

    /// Plain-text table with one row per strategy and one column per delta.
    pub fn render_table(&self) -> String {
        let mut strategies: Vec<&str> = Vec::new();
        for e in &self.table {
            if !strategies.contains(&e.strategy.as_str()) {
                strategies.push(&e.strategy);
            }
        }
        let mut out = format!("{:<16}", "strategy");
        for d in &self.metadata.delta_levels {
            out.push_str(&format!("{:>12}", format!("delta={d}")));
        }
        out.push('\n');
        for s in strategies {
            out.push_str(&format!("{s:<16}"));
            for d in &self.metadata.delta_levels {
                let cell = self
                    .table
                    .iter()
                    .find(|e| e.strategy == s && e.delta == *d)
                    .map_or(String::from("-"), |e| e.samples.to_string());
                out.push_str(&format!("{cell:>12}"));
            }
            out.push('\n');
        }
        out
    }
}
