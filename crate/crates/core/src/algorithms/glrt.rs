//! Generalized likelihood-ratio statistic for fixed-confidence stopping.

use super::PosteriorState;
use crate::design::competitor_directions;
use crate::error::{Error, Result};
use crate::instances::{argmax_oracle, Instance};
use crate::linalg::quad_form;

/// `min_{z != z_hat} min_{theta in alt(z)} ||theta - theta_hat||_{V_t}`.
///
/// The inner minimum is the halfspace projection in the `V_t` metric, equal to
/// `<theta_hat, z_hat - z>^+ / ||z_hat - z||_{V_t^-1}`. Compare the result
/// against the anytime bound `beta(t, 1/delta)`.
pub fn glrt_statistic(state: &PosteriorState, instance: &Instance) -> Result<f64> {
    let theta = state.theta_hat();
    let (z_hat, _) = argmax_oracle(instance.targets(), theta)?;
    let vinv = state.precision().vinv();
    let mut best = f64::INFINITY;
    for (id, v) in competitor_directions(instance.targets(), &z_hat)? {
        let q = quad_form(vinv, &v);
        if q <= 0.0 {
            return Err(Error::DegenerateTarget(format!("competitor {id} duplicates {z_hat}")));
        }
        let g = theta.dot(&v).max(0.0);
        best = best.min(g / q.sqrt());
    }
    if best.is_infinite() {
        return Err(Error::DegenerateTarget("no competitor".into()));
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{best_response, DesignWeights};
    use crate::instances::{TargetId, TargetSet};
    use crate::linalg::{vector, SpdState, Vector};
    use crate::rng::stream;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use rand::Rng;

    fn e1e2() -> Instance {
        let arms = vec![vector(vec![1.0, 0.0]).unwrap(), vector(vec![0.0, 1.0]).unwrap()];
        Instance::new("e1e2", arms.clone(), TargetSet::Explicit(arms), vector(vec![1.0, 0.0]).unwrap(), 1.0)
            .unwrap()
    }

    fn state_with(v: DMatrix<f64>, theta: Vec<f64>) -> PosteriorState {
        let precision = SpdState::from_matrix(v).unwrap();
        let theta = Vector::from_vec(theta);
        let s = precision.v() * &theta;
        PosteriorState::from_parts(precision, s)
    }

    #[test]
    fn unit_example() {
        let inst = e1e2();
        let st = state_with(DMatrix::identity(2, 2), vec![1.0, 0.0]);
        assert_abs_diff_eq!(glrt_statistic(&st, &inst).unwrap(), 0.5f64.sqrt(), epsilon = 1e-12);
        // Same number through the projection with A = I.
        let br = best_response(
            &DesignWeights::new(vec![0.5, 0.5]).unwrap(),
            &[vector(vec![2f64.sqrt(), 0.0]).unwrap(), vector(vec![0.0, 2f64.sqrt()]).unwrap()],
            st.theta_hat(),
            &vector(vec![1.0, 0.0]).unwrap(),
            &vector(vec![0.0, 1.0]).unwrap(),
            TargetId::Index(1),
        )
        .unwrap();
        assert_abs_diff_eq!((2.0 * br.value).sqrt(), 0.5f64.sqrt(), epsilon = 1e-8);
    }

    #[test]
    fn boundary_is_zero() {
        let inst = e1e2();
        let st = state_with(DMatrix::identity(2, 2), vec![0.7, 0.7]);
        assert_eq!(glrt_statistic(&st, &inst).unwrap(), 0.0);
    }

    #[test]
    fn monotone_under_updates() {
        let inst = crate::instances::make_soare(0.3).unwrap();
        let mut rng = stream(17);
        for _ in 0..200 {
            let theta: Vec<f64> = (0..2).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut v = DMatrix::<f64>::identity(2, 2);
            for _ in 0..3 {
                let x = Vector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
                v += &x * x.transpose();
            }
            let before = glrt_statistic(&state_with(v.clone(), theta.clone()), &inst).unwrap();
            let x = Vector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
            v += &x * x.transpose();
            let after = glrt_statistic(&state_with(v, theta), &inst).unwrap();
            assert!(after >= before - 1e-12, "{before} -> {after}");
        }
    }
}
