//! Small dense symmetric positive definite linear algebra.
//!
//! [`SpdState`] holds a regularized Gram matrix `V = I + sum x x^T` together
//! with its inverse, maintained by Sherman–Morrison rank-one updates, and its
//! log-determinant. A lower Cholesky factor of `V^-1` is computed on demand
//! for Gaussian sampling and cached until the next update.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Dense real vector used for arms, targets and parameters.
pub type Vector = DVector<f64>;

/// Full refactorization interval for the maintained inverse.
pub const REFRESH_INTERVAL: usize = 1000;

/// Builds a vector, rejecting NaN and infinite entries.
pub fn vector(entries: Vec<f64>) -> Result<Vector> {
    if let Some(bad) = entries.iter().find(|v| !v.is_finite()) {
        return Err(Error::Input(format!("non-finite vector entry {bad}")));
    }
    Ok(Vector::from_vec(entries))
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension { expected, got });
    }
    Ok(())
}

/// Which matrix of an [`SpdState`] defines a quadratic norm.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    /// `x^T V x`
    V,
    /// `x^T V^-1 x`
    Vinv,
}

#[derive(Debug)]
pub struct SpdState {
    v: DMatrix<f64>,
    vinv: DMatrix<f64>,
    logdet: f64,
    chol: OnceLock<Option<DMatrix<f64>>>,
    since_refresh: usize,
}

impl Clone for SpdState {
    fn clone(&self) -> Self {
        SpdState {
            v: self.v.clone(),
            vinv: self.vinv.clone(),
            logdet: self.logdet,
            chol: self.chol.clone(),
            since_refresh: self.since_refresh,
        }
    }
}

impl SpdState {
    /// `V = I` in dimension `dim`.
    pub fn identity(dim: usize) -> Self {
        SpdState {
            v: DMatrix::identity(dim, dim),
            vinv: DMatrix::identity(dim, dim),
            logdet: 0.0,
            chol: OnceLock::new(),
            since_refresh: 0,
        }
    }

    /// Wraps an arbitrary symmetric positive definite matrix.
    pub fn from_matrix(v: DMatrix<f64>) -> Result<Self> {
        if !v.is_square() {
            return Err(Error::Dimension {
                expected: v.nrows(),
                got: v.ncols(),
            });
        }
        let mut state = SpdState {
            vinv: v.clone(),
            v: symmetrize(v),
            logdet: 0.0,
            chol: OnceLock::new(),
            since_refresh: 0,
        };
        state.rebuild()?;
        Ok(state)
    }

    pub fn dim(&self) -> usize {
        self.v.nrows()
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn vinv(&self) -> &DMatrix<f64> {
        &self.vinv
    }

    pub fn logdet(&self) -> f64 {
        self.logdet
    }

    /// Returns the state for `c * V`, `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Input(format!("scale factor must be positive, got {c}")));
        }
        SpdState::from_matrix(&self.v * c)
    }

    /// `x^T M x` for `M = V` or `M = V^-1`, clamped at zero.
    pub fn quad_norm(&self, x: &Vector, metric: Metric) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        let m = match metric {
            Metric::V => &self.v,
            Metric::Vinv => &self.vinv,
        };
        Ok(quad_form(m, x).max(0.0))
    }

    /// `V <- V + x x^T`, with the inverse updated by Sherman–Morrison.
    pub fn rank_one_update(&mut self, x: &Vector) -> Result<()> {
        check_dim(self.dim(), x.len())?;
        let w = &self.vinv * x;
        let denom = 1.0 + x.dot(&w);
        self.v.ger(1.0, x, x, 1.0);
        self.vinv.ger(-1.0 / denom, &w, &w, 1.0);
        symmetrize_in_place(&mut self.vinv);
        self.logdet += denom.ln();
        self.chol = OnceLock::new();
        self.since_refresh += 1;
        if self.since_refresh >= REFRESH_INTERVAL {
            self.rebuild()?;
        }
        Ok(())
    }

    /// Recomputes the inverse and log-determinant from `V` directly.
    pub fn rebuild(&mut self) -> Result<()> {
        let chol = self
            .v
            .clone()
            .cholesky()
            .ok_or_else(|| Error::numerical("V is not positive definite"))?;
        self.logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        self.vinv = symmetrize(chol.inverse());
        self.chol = OnceLock::new();
        self.since_refresh = 0;
        Ok(())
    }

    /// Lower-triangular `L` with `L L^T = V^-1`.
    pub fn inverse_factor(&self) -> Result<&DMatrix<f64>> {
        self.chol
            .get_or_init(|| self.vinv.clone().cholesky().map(|c| c.unpack()))
            .as_ref()
            .ok_or_else(|| Error::numerical("Cholesky factorization of V^-1 failed"))
    }

    /// Draws `mean + sqrt(scale) L eta`, with `eta` standard normal, i.e. a
    /// sample from `N(mean, scale * V^-1)`.
    pub fn sample_gaussian<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        mean: &Vector,
        scale: f64,
    ) -> Result<Vector> {
        check_dim(self.dim(), mean.len())?;
        if !(scale > 0.0) {
            return Err(Error::Input(format!("scale must be positive, got {scale}")));
        }
        let factor = self.inverse_factor()?;
        let mut out = mean.clone();
        let mut eta = Vector::zeros(self.dim());
        fill_standard_normal(rng, &mut eta);
        add_scaled_lower(factor, &eta, scale.sqrt(), &mut out);
        Ok(out)
    }
}

/// Overwrites `eta` with independent standard normal draws.
pub fn fill_standard_normal<R: Rng + ?Sized>(rng: &mut R, eta: &mut Vector) {
    for e in eta.iter_mut() {
        *e = rng.sample(StandardNormal);
    }
}

/// `out += s * L eta` for lower-triangular `L`.
pub(crate) fn add_scaled_lower(l: &DMatrix<f64>, eta: &Vector, s: f64, out: &mut Vector) {
    let d = eta.len();
    for i in 0..d {
        let mut acc = 0.0;
        for j in 0..=i {
            acc += l[(i, j)] * eta[j];
        }
        out[i] += s * acc;
    }
}

pub fn quad_form(m: &DMatrix<f64>, x: &Vector) -> f64 {
    let d = x.len();
    let mut acc = 0.0;
    for j in 0..d {
        let mut col = 0.0;
        for i in 0..d {
            col += m[(i, j)] * x[i];
        }
        acc += col * x[j];
    }
    acc
}

/// `A(lambda) = sum_x lambda_x x x^T`.
pub fn design_matrix(arms: &[Vector], weights: &[f64]) -> DMatrix<f64> {
    let d = arms.first().map_or(0, |a| a.len());
    let mut a = DMatrix::zeros(d, d);
    for (x, &w) in arms.iter().zip(weights) {
        if w != 0.0 {
            a.ger(w, x, x, 1.0);
        }
    }
    a
}

pub(crate) fn symmetrize(mut m: DMatrix<f64>) -> DMatrix<f64> {
    symmetrize_in_place(&mut m);
    m
}

fn symmetrize_in_place(m: &mut DMatrix<f64>) {
    let d = m.nrows();
    for i in 0..d {
        for j in (i + 1)..d {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_vector<R: Rng>(rng: &mut R, d: usize) -> Vector {
        Vector::from_fn(d, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn quad_norm_examples() {
        let id = SpdState::identity(2);
        let v = vector(vec![3.0, 4.0]).unwrap();
        assert_abs_diff_eq!(id.quad_norm(&v, Metric::V).unwrap(), 25.0);

        let diag = SpdState::from_matrix(DMatrix::from_diagonal(&Vector::from_vec(vec![4.0, 1.0])))
            .unwrap();
        let v = vector(vec![1.0, -1.0]).unwrap();
        assert_abs_diff_eq!(diag.quad_norm(&v, Metric::Vinv).unwrap(), 1.25, epsilon = 1e-14);
    }

    #[test]
    fn quad_norm_rejects_wrong_dimension() {
        let id = SpdState::identity(3);
        let v = vector(vec![1.0, 2.0]).unwrap();
        assert!(matches!(
            id.quad_norm(&v, Metric::V),
            Err(Error::Dimension { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn vector_rejects_non_finite() {
        assert!(vector(vec![1.0, f64::NAN]).is_err());
        assert!(vector(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn quad_norm_matches_dense_solve() {
        let mut rng = stream(11);
        for _ in 0..20 {
            let d = 4;
            let b = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
            let v = &b * b.transpose() + DMatrix::identity(d, d);
            let state = SpdState::from_matrix(v.clone()).unwrap();
            let x = random_vector(&mut rng, d);
            // Independent route: solve V y = x by LU, then x^T y.
            let y = v.clone().lu().solve(&x).unwrap();
            assert_abs_diff_eq!(state.quad_norm(&x, Metric::Vinv).unwrap(), x.dot(&y), epsilon = 1e-10);
            assert_abs_diff_eq!(state.quad_norm(&x, Metric::V).unwrap(), x.dot(&(&v * &x)), epsilon = 1e-10);
        }
    }

    #[test]
    fn rank_one_update_examples() {
        let mut s = SpdState::identity(1);
        s.rank_one_update(&vector(vec![1.0]).unwrap()).unwrap();
        assert_abs_diff_eq!(s.v()[(0, 0)], 2.0);
        assert_abs_diff_eq!(s.vinv()[(0, 0)], 0.5, epsilon = 1e-15);

        let mut s = SpdState::identity(2);
        s.rank_one_update(&vector(vec![1.0, 0.0]).unwrap()).unwrap();
        assert_abs_diff_eq!(s.vinv()[(0, 0)], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(s.vinv()[(1, 1)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.vinv()[(0, 1)], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn many_updates_match_dense_inverse() {
        let mut rng = stream(5);
        let d = 8;
        let mut s = SpdState::identity(d);
        let mut dense = DMatrix::<f64>::identity(d, d);
        for _ in 0..200 {
            let x = random_vector(&mut rng, d);
            s.rank_one_update(&x).unwrap();
            dense += &x * x.transpose();
        }
        let inv = dense.clone().try_inverse().unwrap();
        assert!((s.vinv() - inv).amax() < 1e-8);
        assert_abs_diff_eq!(s.logdet(), dense.determinant().ln(), epsilon = 1e-6);
        assert!((s.v() * s.vinv() - DMatrix::identity(d, d)).amax() < 1e-8);
    }

    #[test]
    fn refresh_keeps_inverse_accurate() {
        let mut rng = stream(9);
        let d = 3;
        let mut s = SpdState::identity(d);
        for _ in 0..(2 * REFRESH_INTERVAL + 17) {
            s.rank_one_update(&random_vector(&mut rng, d)).unwrap();
        }
        assert!((s.v() * s.vinv() - DMatrix::identity(d, d)).amax() < 1e-8);
    }

    #[test]
    fn degenerate_scale_returns_mean() {
        let s = SpdState::identity(3);
        let mean = vector(vec![1.0, -2.0, 0.5]).unwrap();
        let draw = s.sample_gaussian(&mut stream(1), &mean, 1e-12).unwrap();
        assert!((draw - &mean).norm() < 1e-4 * mean.norm());
    }

    #[test]
    fn sampling_is_deterministic_per_stream() {
        let s = SpdState::identity(4);
        let mean = Vector::zeros(4);
        let a = s.sample_gaussian(&mut stream(3), &mean, 1.0).unwrap();
        let b = s.sample_gaussian(&mut stream(3), &mean, 1.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sample_covariance_matches_identity() {
        let s = SpdState::identity(2);
        let mean = Vector::zeros(2);
        let mut rng = stream(17);
        let n = 100_000;
        let mut cov = DMatrix::<f64>::zeros(2, 2);
        for _ in 0..n {
            let x = s.sample_gaussian(&mut rng, &mean, 1.0).unwrap();
            cov += &x * x.transpose();
        }
        cov /= n as f64;
        let diff = cov - DMatrix::identity(2, 2);
        let op_norm = diff.symmetric_eigenvalues().amax();
        assert!(op_norm < 0.05, "operator norm deviation {op_norm}");
    }

    #[test]
    fn sample_covariance_follows_inverse() {
        let v = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 2.0]);
        let s = SpdState::from_matrix(v.clone()).unwrap();
        let target = v.try_inverse().unwrap() * 0.5;
        let mean = Vector::zeros(2);
        let mut rng = stream(23);
        let n = 100_000;
        let mut cov = DMatrix::<f64>::zeros(2, 2);
        for _ in 0..n {
            let x = s.sample_gaussian(&mut rng, &mean, 0.5).unwrap();
            cov += &x * x.transpose();
        }
        cov /= n as f64;
        assert!((cov - target).amax() < 0.01);
    }

    proptest! {
        #[test]
        fn batch_equivalence(seed in any::<u64>(), d in 1usize..=16, t in 1usize..=500) {
            let mut rng = stream(seed);
            let mut s = SpdState::identity(d);
            let mut dense = DMatrix::<f64>::identity(d, d);
            for _ in 0..t {
                let x = random_vector(&mut rng, d);
                s.rank_one_update(&x).unwrap();
                dense += &x * x.transpose();
            }
            let inv = dense.clone().cholesky().unwrap().inverse();
            prop_assert!((s.vinv() - &inv).amax() < 1e-8);
            let dense_logdet = 2.0 * dense.cholesky().unwrap().l().diagonal().map(|v| v.ln()).sum();
            prop_assert!((s.logdet() - dense_logdet).abs() < 1e-6);
            let sym = (s.v() - s.v().transpose()).amax();
            prop_assert!(sym <= 1e-10 * s.v().amax());
            let x = random_vector(&mut rng, d);
            prop_assert!(s.quad_norm(&x, Metric::V).unwrap() >= 0.0);
            prop_assert!(s.quad_norm(&x, Metric::Vinv).unwrap() >= 0.0);
        }
    }
}
