//! Benchmark problem instances and the argmax oracle over the target set.

use std::f64::consts::FRAC_PI_2;
use std::fmt;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_dim, vector, Vector};

/// Largest target set that may be enumerated explicitly.
pub const MAX_ENUMERATED_TARGETS: usize = 1_000_000;

/// The set of candidate answers `Z`.
#[derive(Clone, Debug, PartialEq)]
pub enum TargetSet {
    Explicit(Vec<Vector>),
    /// All indicator vectors of `k`-subsets of `{0, .., d-1}`.
    TopK { d: usize, k: usize },
}

/// Identity of one element of a [`TargetSet`].
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetId {
    Index(usize),
    /// Sorted zero-based coordinates of a top-k subset.
    Subset(Vec<usize>),
}

impl fmt::Display for TargetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetId::Index(i) => write!(f, "{i}"),
            TargetId::Subset(s) => {
                let parts: Vec<String> = s.iter().map(|i| i.to_string()).collect();
                write!(f, "{{{}}}", parts.join(","))
            }
        }
    }
}

/// Parameter space `Theta`.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThetaSpace {
    #[default]
    Unbounded,
    Ball { radius: f64 },
}

impl TargetSet {
    pub fn dim(&self) -> Option<usize> {
        match self {
            TargetSet::Explicit(v) => v.first().map(|z| z.len()),
            TargetSet::TopK { d, .. } => Some(*d),
        }
    }

    /// Number of targets; saturates at `usize::MAX`.
    pub fn len(&self) -> usize {
        match self {
            TargetSet::Explicit(v) => v.len(),
            TargetSet::TopK { d, k } => binomial(*d, *k),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The vector for a target id.
    pub fn vector(&self, id: &TargetId) -> Result<Vector> {
        match (self, id) {
            (TargetSet::Explicit(v), TargetId::Index(i)) => v
                .get(*i)
                .cloned()
                .ok_or_else(|| Error::Input(format!("target index {i} out of range"))),
            (TargetSet::TopK { d, k }, TargetId::Subset(s)) => {
                if s.len() != *k || s.iter().any(|&i| i >= *d) {
                    return Err(Error::Input(format!("invalid top-{k} subset {id}")));
                }
                let mut z = Vector::zeros(*d);
                for &i in s {
                    z[i] = 1.0;
                }
                Ok(z)
            }
            _ => Err(Error::Input(format!("target id {id} does not match target set kind"))),
        }
    }

    /// Every target with its id. Refuses sets larger than
    /// [`MAX_ENUMERATED_TARGETS`].
    pub fn enumerate(&self) -> Result<Vec<(TargetId, Vector)>> {
        let n = self.len();
        if n > MAX_ENUMERATED_TARGETS {
            return Err(Error::config(format!("refusing to enumerate {n} targets")));
        }
        match self {
            TargetSet::Explicit(v) => Ok(v
                .iter()
                .enumerate()
                .map(|(i, z)| (TargetId::Index(i), z.clone()))
                .collect()),
            TargetSet::TopK { d, k } => {
                let mut out = Vec::with_capacity(n);
                let mut subset: Vec<usize> = (0..*k).collect();
                loop {
                    let id = TargetId::Subset(subset.clone());
                    let z = self.vector(&id)?;
                    out.push((id, z));
                    if !next_combination(&mut subset, *d) {
                        break;
                    }
                }
                Ok(out)
            }
        }
    }
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > usize::MAX as u128 {
            return usize::MAX;
        }
    }
    acc as usize
}

/// Advances a sorted combination in lexicographic order.
pub(crate) fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    for i in (0..k).rev() {
        if c[i] < n - k + i {
            c[i] += 1;
            for j in (i + 1)..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Maximizer of `z^T theta` over the target set and its value.
///
/// Ties resolve to the lowest index, or for top-k to the lexicographically
/// smallest subset. Top-k is solved by sorting, without enumeration.
pub fn argmax_oracle(targets: &TargetSet, theta: &Vector) -> Result<(TargetId, f64)> {
    match targets {
        TargetSet::Explicit(zs) => {
            let first = zs
                .first()
                .ok_or_else(|| Error::config("empty target set"))?;
            check_dim(first.len(), theta.len())?;
            let mut best = 0;
            let mut best_val = first.dot(theta);
            for (i, z) in zs.iter().enumerate().skip(1) {
                let val = z.dot(theta);
                if val > best_val {
                    best = i;
                    best_val = val;
                }
            }
            Ok((TargetId::Index(best), best_val))
        }
        TargetSet::TopK { d, k } => {
            check_dim(*d, theta.len())?;
            if *k == 0 || *k > *d {
                return Err(Error::config("empty target set"));
            }
            let subset = top_k_indices(theta.as_slice(), *k);
            let value = subset.iter().map(|&i| theta[i]).sum();
            Ok((TargetId::Subset(subset), value))
        }
    }
}

/// Indices of the `k` largest entries, lowest index first among ties,
/// returned in ascending order.
pub(crate) fn top_k_indices(values: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut subset = order[..k].to_vec();
    subset.sort_unstable();
    subset
}

/// A linear best-arm identification problem.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub name: String,
    dim: usize,
    arms: Vec<Vector>,
    targets: TargetSet,
    theta_star: Vector,
    noise_std: f64,
    best: TargetId,
    best_value: f64,
    delta_min: f64,
}

impl Instance {
    /// Validates and assembles an instance.
    pub fn new(
        name: impl Into<String>,
        arms: Vec<Vector>,
        targets: TargetSet,
        theta_star: Vector,
        noise_std: f64,
    ) -> Result<Self> {
        let dim = theta_star.len();
        if dim == 0 {
            return Err(Error::config("instance dimension must be positive"));
        }
        if arms.is_empty() {
            return Err(Error::config("instance has no arms"));
        }
        for x in &arms {
            check_dim(dim, x.len())?;
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Input("non-finite arm entry".into()));
            }
        }
        match targets.dim() {
            None => return Err(Error::config("empty target set")),
            Some(d) => check_dim(dim, d)?,
        }
        if let TargetSet::TopK { d, k } = targets {
            if k == 0 || k >= d {
                return Err(Error::config(format!("top-k requires 1 <= k < d, got k={k}, d={d}")));
            }
        }
        if let TargetSet::Explicit(zs) = &targets {
            for z in zs {
                check_dim(dim, z.len())?;
            }
        }
        if !(noise_std > 0.0 && noise_std.is_finite()) {
            return Err(Error::config(format!("noise_std must be positive, got {noise_std}")));
        }
        check_span(&arms, &targets, dim)?;
        let (best, best_value) = argmax_oracle(&targets, &theta_star)?;
        let delta_min = min_gap(&targets, &theta_star, &best, best_value)?;
        if !(delta_min > 0.0) {
            return Err(Error::config("the best target is not unique"));
        }
        Ok(Instance {
            name: name.into(),
            dim,
            arms,
            targets,
            theta_star,
            noise_std,
            best,
            best_value,
            delta_min,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn arms(&self) -> &[Vector] {
        &self.arms
    }

    pub fn targets(&self) -> &TargetSet {
        &self.targets
    }

    pub fn theta_star(&self) -> &Vector {
        &self.theta_star
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn best_target(&self) -> &TargetId {
        &self.best
    }

    pub fn best_value(&self) -> f64 {
        self.best_value
    }

    /// Smallest gap `<theta*, z* - z>` over `z != z*`.
    pub fn delta_min(&self) -> f64 {
        self.delta_min
    }

    /// `L = max_x ||x||_2`.
    pub fn max_arm_norm(&self) -> f64 {
        self.arms.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }

    /// `max_x max_{theta, theta'} |x^T (theta - theta')| = 2 L B` on a ball,
    /// undefined for an unbounded parameter space.
    pub fn delta_max(&self, space: ThetaSpace) -> Option<f64> {
        match space {
            ThetaSpace::Unbounded => None,
            ThetaSpace::Ball { radius } => Some(2.0 * self.max_arm_norm() * radius),
        }
    }

    /// True when the target set is exactly the arm set.
    pub fn targets_are_arms(&self) -> bool {
        match &self.targets {
            TargetSet::Explicit(zs) => zs == &self.arms,
            TargetSet::TopK { .. } => false,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&InstanceFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: InstanceFile = serde_json::from_str(text)?;
        file.into_instance()
    }
}

fn min_gap(targets: &TargetSet, theta: &Vector, best: &TargetId, best_value: f64) -> Result<f64> {
    match targets {
        TargetSet::Explicit(zs) => {
            if zs.len() < 2 {
                return Ok(f64::INFINITY);
            }
            let best_idx = match best {
                TargetId::Index(i) => *i,
                TargetId::Subset(_) => unreachable!("explicit targets yield index ids"),
            };
            Ok(zs
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != best_idx)
                .map(|(_, z)| best_value - z.dot(theta))
                .fold(f64::INFINITY, f64::min))
        }
        TargetSet::TopK { k, .. } => {
            let mut sorted: Vec<f64> = theta.iter().copied().collect();
            sorted.sort_by(|a, b| b.total_cmp(a));
            Ok(sorted[*k - 1] - sorted[*k])
        }
    }
}

/// Every target must lie in the column span of the arm matrix.
fn check_span(arms: &[Vector], targets: &TargetSet, dim: usize) -> Result<()> {
    let x = DMatrix::from_columns(arms);
    let svd = x.clone().svd(true, true);
    let residual = |z: &Vector| -> Result<f64> {
        let coef = svd
            .solve(z, 1e-12)
            .map_err(|e| Error::numerical(format!("least squares failed: {e}")))?;
        Ok((&x * coef - z).norm())
    };
    let probes: Vec<Vector> = match targets {
        TargetSet::Explicit(zs) => zs.clone(),
        // Every top-k target is a sum of basis vectors; checking those suffices.
        TargetSet::TopK { d, .. } => (0..*d)
            .map(|i| {
                let mut e = Vector::zeros(dim);
                e[i] = 1.0;
                e
            })
            .collect(),
    };
    for z in &probes {
        let r = residual(z)?;
        if r >= 1e-8 {
            return Err(Error::config(format!(
                "target {z:?} is outside the span of the arms (residual {r:e})"
            )));
        }
    }
    Ok(())
}

/// The classic two-dimensional instance: `e1`, `e2` and an informative arm
/// at angle `omega`; `theta* = e1`.
pub fn make_soare(omega: f64) -> Result<Instance> {
    if !(omega > 0.0 && omega < FRAC_PI_2) {
        return Err(Error::config(format!("omega must lie in (0, pi/2), got {omega}")));
    }
    let arms = vec![
        vector(vec![1.0, 0.0])?,
        vector(vec![0.0, 1.0])?,
        vector(vec![omega.cos(), omega.sin()])?,
    ];
    let theta = vector(vec![1.0, 0.0])?;
    Instance::new(
        format!("soare-{omega}"),
        arms.clone(),
        TargetSet::Explicit(arms),
        theta,
        1.0,
    )
}

/// `n_arms` arms uniform on the unit sphere; `theta*` sits just off the first
/// arm of the closest pair, towards the second.
pub fn make_sphere<R: Rng + ?Sized>(rng: &mut R, d: usize, n_arms: usize) -> Result<Instance> {
    if d < 2 || n_arms <= d {
        return Err(Error::config(format!("sphere requires n_arms > d >= 2, got d={d}, n_arms={n_arms}")));
    }
    loop {
        let arms: Vec<Vector> = (0..n_arms)
            .map(|_| {
                let g = Vector::from_fn(d, |_, _| rng.sample(StandardNormal));
                let n = g.norm();
                g / n
            })
            .collect();
        let (mut bi, mut bj, mut best) = (0, 1, f64::INFINITY);
        for i in 0..n_arms {
            for j in (i + 1)..n_arms {
                let dist = (&arms[i] - &arms[j]).norm();
                if dist < best {
                    best = dist;
                    bi = i;
                    bj = j;
                }
            }
        }
        if best == 0.0 {
            log::warn!("sphere instance has coincident arms; redrawing");
            continue;
        }
        let theta = &arms[bi] + (&arms[bj] - &arms[bi]) * 0.01;
        return Instance::new(
            format!("sphere-d{d}-n{n_arms}"),
            arms.clone(),
            TargetSet::Explicit(arms),
            theta,
            1.0,
        );
    }
}

/// Top-k identification over the standard basis with
/// `theta*_i = 1 - 0.05 (i - 1)`.
pub fn make_topk(d: usize, k: usize) -> Result<Instance> {
    if k == 0 || k >= d {
        return Err(Error::config(format!("top-k requires 1 <= k < d, got k={k}, d={d}")));
    }
    if d > 20 {
        return Err(Error::config(format!("top-k requires d <= 20 to keep gaps positive, got {d}")));
    }
    let arms: Vec<Vector> = (0..d)
        .map(|i| {
            let mut e = Vector::zeros(d);
            e[i] = 1.0;
            e
        })
        .collect();
    let theta = Vector::from_fn(d, |i, _| 1.0 - 0.05 * i as f64);
    Instance::new(format!("topk-d{d}-k{k}"), arms, TargetSet::TopK { d, k }, theta, 1.0)
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum TargetFile {
    Explicit { vectors: Vec<Vec<f64>> },
    Topk { d: usize, k: usize },
}

/// On-disk form of an [`Instance`].
#[derive(Serialize, Deserialize)]
struct InstanceFile {
    #[serde(default)]
    name: String,
    dim: usize,
    arms: Vec<Vec<f64>>,
    targets: TargetFile,
    theta_star: Vec<f64>,
    noise_std: f64,
}

impl From<&Instance> for InstanceFile {
    fn from(inst: &Instance) -> Self {
        let rows = |vs: &[Vector]| vs.iter().map(|v| v.iter().copied().collect()).collect();
        InstanceFile {
            name: inst.name.clone(),
            dim: inst.dim,
            arms: rows(&inst.arms),
            targets: match &inst.targets {
                TargetSet::Explicit(zs) => TargetFile::Explicit { vectors: rows(zs) },
                TargetSet::TopK { d, k } => TargetFile::Topk { d: *d, k: *k },
            },
            theta_star: inst.theta_star.iter().copied().collect(),
            noise_std: inst.noise_std,
        }
    }
}

impl InstanceFile {
    fn into_instance(self) -> Result<Instance> {
        let vecs = |rows: Vec<Vec<f64>>| rows.into_iter().map(vector).collect::<Result<Vec<_>>>();
        let theta = vector(self.theta_star)?;
        check_dim(self.dim, theta.len())?;
        let targets = match self.targets {
            TargetFile::Explicit { vectors } => TargetSet::Explicit(vecs(vectors)?),
            TargetFile::Topk { d, k } => TargetSet::TopK { d, k },
        };
        Instance::new(self.name, vecs(self.arms)?, targets, theta, self.noise_std)
    }
}
