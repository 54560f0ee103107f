//! Convex design computations over the arm simplex.
//!
//! * [`g_optimal`]: the design minimizing the worst-case leverage
//!   `max_x ||x||^2_{A(lambda)^-1}`, certified by the Kiefer–Wolfowitz bound.
//! * [`best_response`] / [`closest_alternative`]: closed-form projection of a
//!   parameter onto the halfspaces where another target wins, in the
//!   `A(lambda)` metric.
//! * [`tau_star`]: the max-min allocation game value.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::instances::{argmax_oracle, Instance, TargetId, TargetSet};
use crate::linalg::{check_dim, design_matrix, quad_form, Vector};

/// Ridge added to `A(lambda)` before inversion.
pub const DESIGN_RIDGE: f64 = 1e-10;

/// A probability vector over the arms.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignWeights(Vec<f64>);

impl DesignWeights {
    /// Validates a simplex point. Entries in `[-1e-12, 0)` are clamped to zero.
    pub fn new(mut weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Input("empty weight vector".into()));
        }
        for w in weights.iter_mut() {
            if !w.is_finite() || *w < -1e-12 {
                return Err(Error::Input(format!("invalid design weight {w}")));
            }
            if *w < 0.0 {
                *w = 0.0;
            }
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Input(format!("design weights sum to {sum}, not 1")));
        }
        Ok(DesignWeights(weights))
    }

    /// Normalizes nonnegative weights with positive total.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) {
            return Err(Error::Input(format!("cannot normalize weights with total {sum}")));
        }
        DesignWeights::new(weights.into_iter().map(|w| w / sum).collect())
    }

    pub fn uniform(n: usize) -> Self {
        DesignWeights(vec![1.0 / n as f64; n])
    }

    pub fn point_mass(n: usize, i: usize) -> Self {
        let mut w = vec![0.0; n];
        w[i] = 1.0;
        DesignWeights(w)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `(1 - gamma) self + gamma other`.
    pub fn mix(&self, other: &DesignWeights, gamma: f64) -> DesignWeights {
        DesignWeights(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| (1.0 - gamma) * a + gamma * b)
                .collect(),
        )
    }

    /// Draws an arm index by inversion of the cumulative weights.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (i, &w) in self.0.iter().enumerate() {
            if w > 0.0 {
                acc += w;
                last_positive = i;
                if u < acc {
                    return i;
                }
            }
        }
        last_positive
    }

    /// `A(lambda) = sum_x lambda_x x x^T`.
    pub fn matrix(&self, arms: &[Vector]) -> DMatrix<f64> {
        design_matrix(arms, &self.0)
    }

    /// Total variation distance.
    pub fn tv_distance(&self, other: &DesignWeights) -> f64 {
        0.5 * self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }
}

/// Leverages `x^T A(lambda)^-1 x` of every arm.
pub fn leverages(arms: &[Vector], lambda: &DesignWeights) -> Result<Vec<f64>> {
    let inv = lambda
        .matrix(arms)
        .cholesky()
        .ok_or_else(|| Error::numerical("design matrix is singular"))?
        .inverse();
    Ok(arms.iter().map(|x| quad_form(&inv, x)).collect())
}

fn rank(arms: &[Vector]) -> usize {
    let x = DMatrix::from_columns(arms);
    let sv = x.singular_values();
    let top = sv.max();
    sv.iter().filter(|s| **s > 1e-10 * top.max(1e-300)).count()
}

/// G-optimal design. The returned weights satisfy
/// `d <= max_x ||x||^2_{A^-1} <= d (1 + tol)`.
///
/// Wolfe–Atwood iterations with away steps (Todd–Yildirim): either move mass
/// towards the arm of largest leverage or away from the supported arm of
/// smallest leverage, each with exact line search on `log det A`.
pub fn g_optimal(arms: &[Vector], tol: f64) -> Result<DesignWeights> {
    if !(tol > 0.0) {
        return Err(Error::Input(format!("tolerance must be positive, got {tol}")));
    }
    let d = arms
        .first()
        .ok_or_else(|| Error::Input("empty arm set".into()))?
        .len();
    for x in arms {
        check_dim(d, x.len())?;
    }
    let r = rank(arms);
    if r < d {
        return Err(Error::Rank { dim: d, rank: r });
    }
    let df = d as f64;
    let n = arms.len();
    let mut u = vec![1.0 / n as f64; n];
    const MAX_ITERS: usize = 1_000_000;
    for _ in 0..MAX_ITERS {
        let lambda = DesignWeights(u.clone());
        let lev = leverages(arms, &lambda)?;
        let (jp, wp) = argmax(&lev);
        let (jm, wm) = lev
            .iter()
            .enumerate()
            .filter(|(i, _)| u[*i] > 0.0)
            .map(|(i, w)| (i, *w))
            .fold((usize::MAX, f64::INFINITY), |acc, (i, w)| if w < acc.1 { (i, w) } else { acc });
        let eps_plus = wp / df - 1.0;
        if eps_plus <= tol {
            return DesignWeights::new(u);
        }
        let eps_minus = 1.0 - wm / df;
        if eps_plus >= eps_minus || u[jm] >= 1.0 {
            let step = (wp - df) / (df * (wp - 1.0));
            for v in u.iter_mut() {
                *v *= 1.0 - step;
            }
            u[jp] += step;
        } else {
            let drop = u[jm] / (1.0 - u[jm]);
            let step = if wm > 1.0 {
                ((df - wm) / (df * (wm - 1.0))).min(drop)
            } else {
                drop
            };
            for v in u.iter_mut() {
                *v *= 1.0 + step;
            }
            u[jm] -= step;
            if step == drop || u[jm] < 1e-15 {
                u[jm] = 0.0;
            }
        }
        let s: f64 = u.iter().sum();
        for v in u.iter_mut() {
            *v /= s;
        }
    }
    Err(Error::numerical("G-optimal design did not converge"))
}

fn argmax(v: &[f64]) -> (usize, f64) {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &w)| if w > acc.1 { (i, w) } else { acc })
}

/// Closest point of one alternative halfspace.
#[derive(Clone, Debug, PartialEq)]
pub struct BestResponse {
    /// `1/2 ||theta - theta_ref||^2_{A(lambda)}` at the minimizer.
    pub value: f64,
    pub minimizer: Vector,
    /// The competitor defining the halfspace.
    pub target: TargetId,
}

/// Inverse of a regularized design matrix, reused across alternatives.
#[derive(Clone, Debug)]
pub struct AlternativeMetric {
    inv: DMatrix<f64>,
}

impl AlternativeMetric {
    pub fn new(lambda: &DesignWeights, arms: &[Vector]) -> Result<Self> {
        if lambda.len() != arms.len() {
            return Err(Error::Dimension {
                expected: arms.len(),
                got: lambda.len(),
            });
        }
        AlternativeMetric::from_matrix(lambda.matrix(arms))
    }

    /// Uses an arbitrary positive semidefinite metric matrix.
    pub fn from_matrix(mut a: DMatrix<f64>) -> Result<Self> {
        let d = a.nrows();
        for i in 0..d {
            a[(i, i)] += DESIGN_RIDGE;
        }
        let inv = a
            .cholesky()
            .ok_or_else(|| Error::numerical("design matrix is not positive definite"))?
            .inverse();
        Ok(AlternativeMetric { inv })
    }

    /// Projection of `theta_ref` onto `{theta : <z_star - z, theta> <= 0}`.
    pub fn best_response(
        &self,
        theta_ref: &Vector,
        z_star: &Vector,
        z: &Vector,
        target: TargetId,
    ) -> Result<BestResponse> {
        check_dim(self.inv.nrows(), theta_ref.len())?;
        check_dim(theta_ref.len(), z_star.len())?;
        check_dim(theta_ref.len(), z.len())?;
        let v = z_star - z;
        if v.iter().all(|c| *c == 0.0) {
            return Err(Error::DegenerateTarget(format!(
                "competitor {target} coincides with the reference target"
            )));
        }
        Ok(self.project(theta_ref, &v, target))
    }

    fn project(&self, theta_ref: &Vector, v: &Vector, target: TargetId) -> BestResponse {
        let g = theta_ref.dot(v);
        if g <= 0.0 {
            return BestResponse {
                value: 0.0,
                minimizer: theta_ref.clone(),
                target,
            };
        }
        let w = &self.inv * v;
        let q = v.dot(&w);
        BestResponse {
            value: g * g / (2.0 * q),
            minimizer: theta_ref - w * (g / q),
            target,
        }
    }
}

/// Closed-form minimizer of `1/2 ||theta - theta_ref||^2_{A(lambda)}` over
/// the halfspace where `z` beats `z_star`.
pub fn best_response(
    lambda: &DesignWeights,
    arms: &[Vector],
    theta_ref: &Vector,
    z_star: &Vector,
    z: &Vector,
    target: TargetId,
) -> Result<BestResponse> {
    AlternativeMetric::new(lambda, arms)?.best_response(theta_ref, z_star, z, target)
}

/// The competitors searched for a closest alternative, as `(id, z_ref - z)`.
///
/// For top-k sets only single swaps are visited: with a diagonal design any
/// multi-swap halfspace is farther than its closest constituent swap.
pub(crate) fn competitor_directions(
    targets: &TargetSet,
    reference: &TargetId,
) -> Result<Vec<(TargetId, Vector)>> {
    match (targets, reference) {
        (TargetSet::Explicit(zs), TargetId::Index(r)) => {
            if zs.len() < 2 {
                return Err(Error::DegenerateTarget("target set has a single element".into()));
            }
            let zr = &zs[*r];
            Ok(zs
                .iter()
                .enumerate()
                .filter(|(i, _)| i != r)
                .map(|(i, z)| (TargetId::Index(i), zr - z))
                .collect())
        }
        (TargetSet::TopK { d, k }, TargetId::Subset(s)) => {
            let mut inside = vec![false; *d];
            for &i in s {
                inside[i] = true;
            }
            let mut out = Vec::with_capacity(k * (d - k));
            for &i in s {
                for j in 0..*d {
                    if inside[j] {
                        continue;
                    }
                    let mut swapped: Vec<usize> = s.iter().map(|&a| if a == i { j } else { a }).collect();
                    swapped.sort_unstable();
                    let mut v = DVector::zeros(*d);
                    v[i] = 1.0;
                    v[j] = -1.0;
                    out.push((TargetId::Subset(swapped), v));
                }
            }
            if out.is_empty() {
                return Err(Error::DegenerateTarget("target set has a single element".into()));
            }
            Ok(out)
        }
        _ => Err(Error::Input("target id does not match the target set".into())),
    }
}

/// Minimum-value best response over every competitor of the target that is
/// optimal for `theta_ref`.
pub fn closest_alternative(
    lambda: &DesignWeights,
    arms: &[Vector],
    theta_ref: &Vector,
    targets: &TargetSet,
) -> Result<BestResponse> {
    let metric = AlternativeMetric::new(lambda, arms)?;
    closest_alternative_in(&metric, theta_ref, targets)
}

/// [`closest_alternative`] with a precomputed metric.
pub fn closest_alternative_in(
    metric: &AlternativeMetric,
    theta_ref: &Vector,
    targets: &TargetSet,
) -> Result<BestResponse> {
    let (z_hat, _) = argmax_oracle(targets, theta_ref)?;
    let mut best: Option<BestResponse> = None;
    for (id, v) in competitor_directions(targets, &z_hat)? {
        if v.iter().all(|c| *c == 0.0) {
            return Err(Error::DegenerateTarget(format!("competitor {id} duplicates {z_hat}")));
        }
        let br = metric.project(theta_ref, &v, id);
        if best.as_ref().is_none_or(|b| br.value < b.value) {
            best = Some(br);
        }
    }
    best.ok_or_else(|| Error::DegenerateTarget("no competitor".into()))
}

/// Outcome of the allocation game.
#[derive(Clone, Debug)]
pub struct GameSolution {
    pub tau_star: f64,
    pub lambda_star: DesignWeights,
    /// Certified upper bound minus the attained value.
    pub duality_gap_estimate: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Value of `min_z 1/2 ||theta - theta*||^2_{A(lambda)}` over the
/// alternative halfspaces, for a fixed `lambda`.
pub fn game_value(instance: &Instance, lambda: &DesignWeights) -> Result<f64> {
    let metric = AlternativeMetric::new(lambda, instance.arms())?;
    Ok(closest_alternative_in(&metric, instance.theta_star(), instance.targets())?.value)
}

/// Default iteration count for [`tau_star`].
pub const TAU_STAR_ITERS: usize = 2000;

/// Solves `max_lambda min_{z != z*} 1/2 ||theta - theta*||^2_{A(lambda)}`.
///
/// Frank–Wolfe ascent with step `2/(k+2)` on a soft-min smoothing of the
/// inner minimum; the smoothing temperature shrinks with the iteration count
/// so that several nearly active alternatives share the ascent direction.
/// Every iteration produces a certified upper bound
/// `max_x sum_z p_z 1/2 (x^T (theta* - theta_z))^2`, since any mixture of
/// alternative parameters bounds the game value from above. Iteration stops
/// once that gap falls below `tol` relative to the attained value.
pub fn tau_star(instance: &Instance, iters: usize, tol: f64) -> Result<GameSolution> {
    let arms = instance.arms();
    let theta = instance.theta_star();
    let dirs = competitor_directions(instance.targets(), instance.best_target())?;
    let n = arms.len();
    let mut lambda = vec![1.0 / n as f64; n];
    let mut best_value = f64::NEG_INFINITY;
    let mut best_lambda = lambda.clone();
    let mut best_upper = f64::INFINITY;
    let mut avg_gains = vec![0.0; n];
    let mut avg_weight = 0.0;
    let mut iterations = 0;
    let mut converged = false;

    let mut values = vec![0.0; dirs.len()];
    let mut gains = vec![vec![0.0; n]; dirs.len()];
    for it in 0..iters.max(1) {
        iterations = it + 1;
        let weights = DesignWeights(lambda.clone());
        let metric = AlternativeMetric::new(&weights, arms)?;
        for (k, (id, v)) in dirs.iter().enumerate() {
            let br = metric.project(theta, v, id.clone());
            values[k] = br.value;
            let diff = theta - &br.minimizer;
            for (x, g) in arms.iter().zip(gains[k].iter_mut()) {
                let p = x.dot(&diff);
                *g = 0.5 * p * p;
            }
        }
        let f = values.iter().copied().fold(f64::INFINITY, f64::min);
        if f > best_value {
            best_value = f;
            best_lambda.clone_from(&lambda);
        }

        let mu = 0.1 * f.max(f64::MIN_POSITIVE) / ((it + 1) as f64).sqrt();
        let mut p: Vec<f64> = values.iter().map(|v| (-(v - f) / mu).exp()).collect();
        let ps: f64 = p.iter().sum();
        p.iter_mut().for_each(|w| *w /= ps);
        let mut grad = vec![0.0; n];
        for (pk, gk) in p.iter().zip(&gains) {
            for (g, gv) in grad.iter_mut().zip(gk) {
                *g += pk * gv;
            }
        }
        let (j, upper) = argmax(&grad);
        best_upper = best_upper.min(upper);

        let step = 2.0 / (it as f64 + 2.0);
        avg_weight = (1.0 - step) * avg_weight + step;
        for (a, g) in avg_gains.iter_mut().zip(&grad) {
            *a = (1.0 - step) * *a + step * g;
        }
        best_upper = best_upper.min(argmax(&avg_gains).1 / avg_weight);

        if best_upper - best_value <= tol * best_value.abs() {
            converged = true;
            break;
        }
        for l in lambda.iter_mut() {
            *l *= 1.0 - step;
        }
        lambda[j] += step;
    }
    let lambda_star = DesignWeights::normalized(best_lambda)?;
    Ok(GameSolution {
        tau_star: best_value,
        lambda_star,
        duality_gap_estimate: (best_upper - best_value).max(0.0),
        iterations,
        converged,
    })
}
