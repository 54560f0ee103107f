//! The sampling oracle: rejection sampling from Gaussians restricted to an
//! alternative set or to the parameter space, and posterior confidence.

use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::instances::{argmax_oracle, TargetId, TargetSet, ThetaSpace};
use crate::linalg::{add_scaled_lower, check_dim, fill_standard_normal, quad_form, SpdState, Vector};
use rand::Rng;

/// Default number of proposals before a rejection loop gives up.
pub const DEFAULT_REJECTION_BUDGET: usize = 1000;

/// Default Monte Carlo draws for confidence estimates.
pub const DEFAULT_MC_DRAWS: usize = 1000;

/// `N(mean, scale * V^-1)`, where `V` is the precision state.
#[derive(Clone, Copy, Debug)]
pub struct PosteriorSpec<'a> {
    pub mean: &'a Vector,
    pub precision: &'a SpdState,
    pub scale: f64,
}

impl<'a> PosteriorSpec<'a> {
    pub fn new(mean: &'a Vector, precision: &'a SpdState, scale: f64) -> Result<Self> {
        check_dim(precision.dim(), mean.len())?;
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Input(format!("posterior scale must be positive, got {scale}")));
        }
        Ok(PosteriorSpec {
            mean,
            precision,
            scale,
        })
    }

    /// Variance of `<theta, v>` under the spec.
    pub fn directional_variance(&self, v: &Vector) -> f64 {
        self.scale * quad_form(self.precision.vinv(), v).max(0.0)
    }
}

/// Result of one rejection loop.
#[derive(Clone, Debug, PartialEq)]
pub struct RejectionReport {
    pub sample: Option<Vector>,
    pub draws_used: usize,
    pub exhausted: bool,
}

/// Reusable proposal generator for one spec.
struct Proposer<'a> {
    spec: PosteriorSpec<'a>,
    factor: &'a nalgebra::DMatrix<f64>,
    sqrt_scale: f64,
    eta: Vector,
    theta: Vector,
}

impl<'a> Proposer<'a> {
    fn new(spec: PosteriorSpec<'a>) -> Result<Self> {
        let factor = spec.precision.inverse_factor()?;
        let d = spec.mean.len();
        Ok(Proposer {
            spec,
            factor,
            sqrt_scale: spec.scale.sqrt(),
            eta: Vector::zeros(d),
            theta: Vector::zeros(d),
        })
    }

    fn draw<R: Rng + ?Sized>(&mut self, rng: &mut R) -> &Vector {
        fill_standard_normal(rng, &mut self.eta);
        self.theta.copy_from(self.spec.mean);
        add_scaled_lower(self.factor, &self.eta, self.sqrt_scale, &mut self.theta);
        &self.theta
    }
}

/// True when the oracle applied to `theta` would return `target`.
pub(crate) fn oracle_selects(targets: &TargetSet, target: &TargetId, theta: &Vector) -> bool {
    match (targets, target) {
        (TargetSet::Explicit(zs), TargetId::Index(r)) => {
            let mut best = 0;
            let mut best_val = f64::NEG_INFINITY;
            for (i, z) in zs.iter().enumerate() {
                let val = z.dot(theta);
                if val > best_val {
                    best = i;
                    best_val = val;
                }
            }
            best == *r
        }
        (TargetSet::TopK { d, .. }, TargetId::Subset(s)) => {
            let mut inside = [false; 64];
            if *d > inside.len() {
                return argmax_oracle(targets, theta).map(|(id, _)| &id == target).unwrap_or(false);
            }
            for &i in s {
                inside[i] = true;
            }
            for &i in s {
                for j in 0..*d {
                    if inside[j] {
                        continue;
                    }
                    let (a, b) = (theta[i], theta[j]);
                    if a < b || (a == b && j < i) {
                        return false;
                    }
                }
            }
            true
        }
        _ => false,
    }
}

/// Draws from `N(mean, scale V^-1)` until the oracle's answer differs from
/// `z_hat`, or until `budget` proposals have been spent.
pub fn sample_alternative<R: Rng + ?Sized>(
    rng: &mut R,
    spec: PosteriorSpec<'_>,
    targets: &TargetSet,
    z_hat: &TargetId,
    budget: usize,
) -> Result<RejectionReport> {
    if budget == 0 {
        return Err(Error::config("rejection budget must be at least 1"));
    }
    let mut proposer = Proposer::new(spec)?;
    for draw in 1..=budget {
        let theta = proposer.draw(rng);
        if !oracle_selects(targets, z_hat, theta) {
            return Ok(RejectionReport {
                sample: Some(theta.clone()),
                draws_used: draw,
                exhausted: false,
            });
        }
    }
    Ok(RejectionReport {
        sample: None,
        draws_used: budget,
        exhausted: true,
    })
}

/// Draws from `N(mean, scale V^-1)` restricted to the parameter space.
pub fn sample_theta_space<R: Rng + ?Sized>(
    rng: &mut R,
    spec: PosteriorSpec<'_>,
    space: ThetaSpace,
    budget: usize,
) -> Result<RejectionReport> {
    if budget == 0 {
        return Err(Error::config("rejection budget must be at least 1"));
    }
    let mut proposer = Proposer::new(spec)?;
    match space {
        ThetaSpace::Unbounded => Ok(RejectionReport {
            sample: Some(proposer.draw(rng).clone()),
            draws_used: 1,
            exhausted: false,
        }),
        ThetaSpace::Ball { radius } => {
            for draw in 1..=budget {
                let theta = proposer.draw(rng);
                if theta.norm() <= radius {
                    return Ok(RejectionReport {
                        sample: Some(theta.clone()),
                        draws_used: draw,
                        exhausted: false,
                    });
                }
            }
            Ok(RejectionReport {
                sample: None,
                draws_used: budget,
                exhausted: true,
            })
        }
    }
}

/// Standard normal CDF, accurate in the lower tail.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// A confidence value and whether it came from the closed form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Confidence {
    pub value: f64,
    pub exact: bool,
}

/// `P(oracle(theta) = z_ref)` for `theta ~ N(mean, scale V^-1)`.
///
/// Two-target sets use the closed form `Phi(<mean, v> / sd(<theta, v>))` with
/// `v = z_ref - z_other`; larger sets are estimated from `draws` samples.
pub fn posterior_confidence<R: Rng + ?Sized>(
    rng: &mut R,
    spec: PosteriorSpec<'_>,
    targets: &TargetSet,
    z_ref: &TargetId,
    draws: usize,
) -> Result<Confidence> {
    if draws == 0 {
        return Err(Error::config("confidence estimate needs at least one draw"));
    }
    if targets.len() == 2 {
        let miss = exact_miss_probability(spec, targets, z_ref)?;
        return Ok(Confidence {
            value: (1.0 - miss).clamp(0.0, 1.0),
            exact: true,
        });
    }
    let mut proposer = Proposer::new(spec)?;
    let mut hits = 0usize;
    for _ in 0..draws {
        if oracle_selects(targets, z_ref, proposer.draw(rng)) {
            hits += 1;
        }
    }
    Ok(Confidence {
        value: hits as f64 / draws as f64,
        exact: false,
    })
}

/// `1 - P(oracle(theta) = z_ref)` computed without Monte Carlo, so that tiny
/// error probabilities keep their relative accuracy. Supports target sets of
/// size two (closed form) and three (one-dimensional quadrature of the
/// bivariate normal).
pub fn exact_miss_probability(
    spec: PosteriorSpec<'_>,
    targets: &TargetSet,
    z_ref: &TargetId,
) -> Result<f64> {
    let all = targets.enumerate()?;
    let zr = targets.vector(z_ref)?;
    let dirs: Vec<Vector> = all
        .iter()
        .filter(|(id, _)| id != z_ref)
        .map(|(_, z)| &zr - z)
        .collect();
    let standardized = |v: &Vector| -> (f64, f64) {
        let sd = spec.directional_variance(v).sqrt();
        (spec.mean.dot(v), sd)
    };
    match dirs.len() {
        1 => {
            let (m, sd) = standardized(&dirs[0]);
            if sd == 0.0 {
                return Ok(if m > 0.0 { 0.0 } else { 1.0 });
            }
            Ok(normal_cdf(-m / sd))
        }
        2 => {
            let (ma, sa) = standardized(&dirs[0]);
            let (mb, sb) = standardized(&dirs[1]);
            if sa == 0.0 || sb == 0.0 {
                return Err(Error::numerical("degenerate posterior direction"));
            }
            let rho = spec.scale * quad_form_pair(spec.precision.vinv(), &dirs[0], &dirs[1]) / (sa * sb);
            Ok(union_lower_tail(ma / sa, mb / sb, rho.clamp(-1.0, 1.0)))
        }
        n => Err(Error::config(format!(
            "closed-form confidence supports at most three targets, got {}",
            n + 1
        ))),
    }
}

fn quad_form_pair(m: &nalgebra::DMatrix<f64>, a: &Vector, b: &Vector) -> f64 {
    a.dot(&(m * b))
}

/// `P(U <= -a or W <= -b)` for standard normals with correlation `rho`.
pub(crate) fn union_lower_tail(a: f64, b: f64, rho: f64) -> f64 {
    let s2 = 1.0 - rho * rho;
    if s2 < 1e-14 {
        return if rho > 0.0 {
            normal_cdf(-a.min(b))
        } else if -a < b {
            (normal_cdf(-a) + normal_cdf(-b)).min(1.0)
        } else {
            1.0
        };
    }
    let s = s2.sqrt();
    // P(U <= -a) + P(U > -a, W <= -b); both terms are nonnegative.
    let lo = -a;
    let hi = lo.max(0.0) + 40.0;
    let h = (0.05f64).min(s / 4.0);
    let panels = ((hi - lo) / h).ceil() as usize;
    let h = (hi - lo) / panels as f64;
    let f = |u: f64| normal_pdf(u) * normal_cdf((-b - rho * u) / s);
    let mut integral = 0.0;
    for p in 0..panels {
        let left = lo + p as f64 * h;
        let mid = left + 0.5 * h;
        for (node, weight) in GAUSS_LEGENDRE_8 {
            integral += weight * f(mid + 0.5 * h * node);
        }
    }
    integral *= 0.5 * h;
    (normal_cdf(-a) + integral).min(1.0)
}

const GAUSS_LEGENDRE_8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_2, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_2, 0.101_228_536_290_376_26),
];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::make_soare;
    use crate::linalg::vector;
    use crate::rng::stream;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::Rng;

    fn pair() -> TargetSet {
        TargetSet::Explicit(vec![vector(vec![1.0, 0.0]).unwrap(), vector(vec![0.0, 1.0]).unwrap()])
    }

    #[test]
    fn alternative_samples_violate_reference() {
        let mean = vector(vec![1.0, 0.0]).unwrap();
        let v = SpdState::identity(2);
        let spec = PosteriorSpec::new(&mean, &v, 1.0).unwrap();
        let mut rng = stream(1);
        for _ in 0..1000 {
            let r = sample_alternative(&mut rng, spec, &pair(), &TargetId::Index(0), 1000).unwrap();
            let s = r.sample.unwrap();
            assert!(s[1] >= s[0]);
        }
    }

    #[test]
    fn symmetric_acceptance_rate() {
        let mean = Vector::zeros(2);
        let v = SpdState::identity(2);
        let spec = PosteriorSpec::new(&mean, &v, 1.0).unwrap();
        let mut rng = stream(2);
        let trials = 10_000;
        let accepted = (0..trials)
            .filter(|_| {
                sample_alternative(&mut rng, spec, &pair(), &TargetId::Index(0), 1)
                    .unwrap()
                    .sample
                    .is_some()
            })
            .count();
        let freq = accepted as f64 / trials as f64;
        assert!((freq - 0.5).abs() < 0.02, "{freq}");
    }

    #[test]
    fn concentrated_posterior_exhausts_budget() {
        // Alternative mass Phi(-1 / sqrt(2e-6)) is far below 1e-9.
        let tail = normal_cdf(-1.0 / (2e-6f64).sqrt());
        assert!(tail < 1e-9);
        let mean = vector(vec![1.0, 0.0]).unwrap();
        let v = SpdState::from_matrix(DMatrix::identity(2, 2) * 1e6).unwrap();
        let spec = PosteriorSpec::new(&mean, &v, 1.0).unwrap();
        let r = sample_alternative(&mut stream(3), spec, &pair(), &TargetId::Index(0), 100).unwrap();
        assert!(r.exhausted);
        assert_eq!(r.draws_used, 100);
        assert!(r.sample.is_none());
    }

    #[test]
    fn theta_space_sampling() {
        let mean = Vector::zeros(2);
        let v = SpdState::identity(2);
        let spec = PosteriorSpec::new(&mean, &v, 1.0).unwrap();
        let mut rng = stream(4);
        for _ in 0..100 {
            let r = sample_theta_space(&mut rng, spec, ThetaSpace::Unbounded, 10).unwrap();
            assert_eq!(r.draws_used, 1);
        }
        // P(||theta|| > 10) = exp(-50) for a standard bivariate normal.
        let first = (0..10_000)
            .filter(|_| {
                sample_theta_space(&mut rng, spec, ThetaSpace::Ball { radius: 10.0 }, 10)
                    .unwrap()
                    .draws_used
                    == 1
            })
            .count();
        assert!(first as f64 / 10_000.0 > 0.999);

        let mean = vector(vec![0.5, 0.0]).unwrap();
        let spec = PosteriorSpec::new(&mean, &v, 1.0).unwrap();
        for _ in 0..1000 {
            let r = sample_theta_space(&mut rng, spec, ThetaSpace::Ball { radius: 1.0 }, 1000).unwrap();
            if let Some(s) = r.sample {
                assert!(s.norm() <= 1.0);
            }
        }
    }

    #[test]
    fn exact_confidence_examples() {
        let mean = Vector::zeros(2);
        let v = SpdState::identity(2);
        let spec = PosteriorSpec::new(&mean, &v, 1.0).unwrap();
        let c = posterior_confidence(&mut stream(0), spec, &pair(), &TargetId::Index(0), 10).unwrap();
        assert!(c.exact);
        assert_eq!(c.value, 0.5);

        let mean = vector(vec![1.0, 0.0]).unwrap();
        let v = SpdState::from_matrix(DMatrix::identity(2, 2) * 1e6).unwrap();
        let spec = PosteriorSpec::new(&mean, &v, 1.0).unwrap();
        let c = posterior_confidence(&mut stream(0), spec, &pair(), &TargetId::Index(0), 10).unwrap();
        assert!(c.value >= 0.999_999);
        assert_abs_diff_eq!(c.value, normal_cdf(1.0 / (2e-6f64).sqrt()), epsilon = 1e-15);
    }

    #[test]
    fn monte_carlo_matches_exact_path() {
        let mut rng = stream(5);
        for _ in 0..5 {
            let mean = Vector::from_fn(2, |_, _| rng.random_range(-0.5..0.5));
            let b = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0));
            let v = SpdState::from_matrix(&b * b.transpose() + DMatrix::identity(2, 2)).unwrap();
            let spec = PosteriorSpec::new(&mean, &v, 1.0).unwrap();
            let exact = 1.0 - exact_miss_probability(spec, &pair(), &TargetId::Index(0)).unwrap();
            // Force the Monte Carlo path through a three-target set whose
            // third target, the midpoint, only ties and so never wins.
            let mut zs = match pair() {
                TargetSet::Explicit(z) => z,
                _ => unreachable!(),
            };
            zs.push((&zs[0] + &zs[1]) * 0.5);
            let mc = posterior_confidence(&mut rng, spec, &TargetSet::Explicit(zs), &TargetId::Index(0), 100_000)
                .unwrap();
            assert!(!mc.exact);
            assert!((mc.value - exact).abs() < 0.005, "mc {} exact {}", mc.value, exact);
        }
    }

    #[test]
    fn three_target_quadrature_matches_monte_carlo() {
        let inst = make_soare(0.5).unwrap();
        let mean = vector(vec![0.3, 0.1]).unwrap();
        let v = SpdState::from_matrix(DMatrix::from_row_slice(2, 2, &[3.0, 0.5, 0.5, 2.0])).unwrap();
        let spec = PosteriorSpec::new(&mean, &v, 1.0).unwrap();
        let exact = 1.0 - exact_miss_probability(spec, inst.targets(), &TargetId::Index(0)).unwrap();
        let mc = posterior_confidence(&mut stream(6), spec, inst.targets(), &TargetId::Index(0), 200_000).unwrap();
        assert!((mc.value - exact).abs() < 0.004, "mc {} exact {}", mc.value, exact);
    }

    #[test]
    fn union_tail_limits() {
        // Independent case: 1 - (1 - Phi(-a))(1 - Phi(-b)).
        let (a, b) = (0.7, -0.2);
        let expected = 1.0 - (1.0 - normal_cdf(-a)) * (1.0 - normal_cdf(-b));
        assert_abs_diff_eq!(union_lower_tail(a, b, 0.0), expected, epsilon = 1e-10);
        // Far tails keep relative accuracy: bracketed by max and sum.
        let (a, b) = (9.0, 9.5);
        let p = union_lower_tail(a, b, 0.3);
        assert!(p >= normal_cdf(-a) && p <= normal_cdf(-a) + normal_cdf(-b));
        assert!(p > 0.0);
    }

    proptest! {
        #[test]
        fn confidence_monotone_in_precision(
            m0 in 0.05f64..1.0, m1 in -1.0f64..0.0, c in 1.0f64..50.0,
        ) {
            let mean = vector(vec![m0, m1]).unwrap();
            let v = SpdState::from_matrix(DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0])).unwrap();
            let vc = v.scaled(c).unwrap();
            let base = PosteriorSpec::new(&mean, &v, 1.0).unwrap();
            let tight = PosteriorSpec::new(&mean, &vc, 1.0).unwrap();
            let a = 1.0 - exact_miss_probability(base, &pair(), &TargetId::Index(0)).unwrap();
            let b = 1.0 - exact_miss_probability(tight, &pair(), &TargetId::Index(0)).unwrap();
            prop_assert!(b >= a - 1e-15);
        }

        #[test]
        fn deterministic_reports(seed in any::<u64>()) {
            let mean = vector(vec![0.4, 0.1]).unwrap();
            let v = SpdState::identity(2);
            let spec = PosteriorSpec::new(&mean, &v, 1.0).unwrap();
            let a = sample_alternative(&mut stream(seed), spec, &pair(), &TargetId::Index(0), 50).unwrap();
            let b = sample_alternative(&mut stream(seed), spec, &pair(), &TargetId::Index(0), 50).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
