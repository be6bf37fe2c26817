//! Constant-velocity Kalman filter over the state `[x, y, dx, dy]`.
//!
//! Time update: `x̂ = A·x + B·u`, `P = A·P·Aᵀ + Q`.
//! Measurement update: `K = P·Hᵀ·(H·P·Hᵀ + R)⁻¹`, `x = x̂ + K·(z − H·x̂)`,
//! `P = (I − K·H)·P`.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use thiserror::Error;

use crate::Scalar;

/// Innovation covariances with a determinant below this are treated as singular.
pub const SINGULAR_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum KalmanError {
    #[error("innovation covariance is singular (determinant {determinant:e})")]
    SingularInnovation { determinant: f64 },
}

/// Dense `R × C` matrix stored row-major on the stack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Matrix<T, const R: usize, const C: usize>(pub [[T; C]; R]);

pub type Vector<T, const N: usize> = Matrix<T, N, 1>;
pub type Matrix4<T> = Matrix<T, 4, 4>;
pub type Matrix2<T> = Matrix<T, 2, 2>;

impl<T: Scalar, const R: usize, const C: usize> Matrix<T, R, C> {
    pub fn zeros() -> Self {
        Self([[T::zero(); C]; R])
    }

    pub fn from_f64(rows: [[f64; C]; R]) -> Self {
        Self(rows.map(|r| r.map(T::lit)))
    }

    pub fn transpose(&self) -> Matrix<T, C, R> {
        let mut out = Matrix::<T, C, R>::zeros();
        for r in 0..R {
            for c in 0..C {
                out.0[c][r] = self.0[r][c];
            }
        }
        out
    }

    pub fn scale(&self, factor: T) -> Self {
        Self(self.0.map(|row| row.map(|v| v * factor)))
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        let mut m = T::zero();
        for r in 0..R {
            for c in 0..C {
                m = m.max((self.0[r][c] - other.0[r][c]).abs());
            }
        }
        m
    }
}

impl<T: Scalar, const N: usize> Matrix<T, N, N> {
    pub fn identity() -> Self {
        let mut m = Self::zeros();
        for i in 0..N {
            m.0[i][i] = T::one();
        }
        m
    }

    pub fn diagonal(values: [T; N]) -> Self {
        let mut m = Self::zeros();
        for (i, v) in values.into_iter().enumerate() {
            m.0[i][i] = v;
        }
        m
    }

    /// Largest `|M − Mᵀ|` entry.
    pub fn asymmetry(&self) -> T {
        self.max_abs_diff(&self.transpose())
    }
}

impl<T: Scalar, const N: usize> Vector<T, N> {
    pub fn from_array(values: [T; N]) -> Self {
        Self(values.map(|v| [v]))
    }

    pub fn to_array(&self) -> [T; N] {
        self.0.map(|r| r[0])
    }
}

impl<T, const R: usize, const C: usize> Index<(usize, usize)> for Matrix<T, R, C> {
    type Output = T;
    fn index(&self, (r, c): (usize, usize)) -> &T {
        &self.0[r][c]
    }
}

impl<T, const R: usize, const C: usize> IndexMut<(usize, usize)> for Matrix<T, R, C> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        &mut self.0[r][c]
    }
}

impl<T: Scalar, const R: usize, const C: usize> Add for Matrix<T, R, C> {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        for r in 0..R {
            for c in 0..C {
                self.0[r][c] = self.0[r][c] + rhs.0[r][c];
            }
        }
        self
    }
}

impl<T: Scalar, const R: usize, const C: usize> Sub for Matrix<T, R, C> {
    type Output = Self;
    fn sub(mut self, rhs: Self) -> Self {
        for r in 0..R {
            for c in 0..C {
                self.0[r][c] = self.0[r][c] - rhs.0[r][c];
            }
        }
        self
    }
}

impl<T: Scalar, const R: usize, const K: usize, const C: usize> Mul<Matrix<T, K, C>> for Matrix<T, R, K> {
    type Output = Matrix<T, R, C>;
    fn mul(self, rhs: Matrix<T, K, C>) -> Matrix<T, R, C> {
        let mut out = Matrix::<T, R, C>::zeros();
        for r in 0..R {
            for c in 0..C {
                let mut acc = T::zero();
                for k in 0..K {
                    acc = acc + self.0[r][k] * rhs.0[k][c];
                }
                out.0[r][c] = acc;
            }
        }
        out
    }
}

/// Closed-form 2×2 inverse; fails when `|det| < SINGULAR_EPS`.
pub fn invert2<T: Scalar>(m: &Matrix2<T>) -> Result<Matrix2<T>, KalmanError> {
    let [[a, b], [c, d]] = m.0;
    let det = a * d - b * c;
    if det.is_nan() || det.abs() < T::lit(SINGULAR_EPS) {
        return Err(KalmanError::SingularInnovation { determinant: det.as_f64() });
    }
    Ok(Matrix([[d / det, -b / det], [-c / det, a / det]]))
}

/// Filter state: position/velocity estimate and its error covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanState<T> {
    pub x: Vector<T, 4>,
    pub p: Matrix4<T>,
}

impl<T: Scalar> KalmanState<T> {
    pub fn new(x: [T; 4], p: Matrix4<T>) -> Self {
        Self { x: Vector::from_array(x), p }
    }

    /// Stationary state at `(x, y)` with covariance `variance · I`.
    pub fn at_rest(x: T, y: T, variance: T) -> Self {
        Self::new([x, y, T::zero(), T::zero()], Matrix4::identity().scale(variance))
    }

    pub fn position(&self) -> (T, T) {
        (self.x[(0, 0)], self.x[(1, 0)])
    }

    pub fn velocity(&self) -> (T, T) {
        (self.x[(2, 0)], self.x[(3, 0)])
    }
}

/// Model matrices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanParams<T> {
    /// State transition.
    pub a: Matrix4<T>,
    /// Control-to-state conversion.
    pub b: Matrix4<T>,
    /// State-to-measurement projection.
    pub h: Matrix<T, 2, 4>,
    /// Process noise covariance.
    pub q: Matrix4<T>,
    /// Measurement noise covariance.
    pub r: Matrix2<T>,
}

impl<T: Scalar> KalmanParams<T> {
    /// Constant velocity with a one-frame step; identity `B`, `Q` and `R`.
    pub fn constant_velocity() -> Self {
        let mut a = Matrix4::identity();
        a[(0, 2)] = T::one();
        a[(1, 3)] = T::one();
        let mut h = Matrix::<T, 2, 4>::zeros();
        h[(0, 0)] = T::one();
        h[(1, 1)] = T::one();
        Self { a, b: Matrix4::identity(), h, q: Matrix4::identity(), r: Matrix2::identity() }
    }

    pub fn with_noise(mut self, q: Matrix4<T>, r: Matrix2<T>) -> Self {
        self.q = q;
        self.r = r;
        self
    }
}

impl<T: Scalar> Default for KalmanParams<T> {
    fn default() -> Self {
        Self::constant_velocity()
    }
}

/// Time update with control input `u`.
pub fn predict<T: Scalar>(state: &KalmanState<T>, params: &KalmanParams<T>, u: &Vector<T, 4>) -> KalmanState<T> {
    let x = params.a * state.x + params.b * *u;
    let p = params.a * state.p * params.a.transpose() + params.q;
    KalmanState { x, p }
}

/// Time update without control.
pub fn predict_free<T: Scalar>(state: &KalmanState<T>, params: &KalmanParams<T>) -> KalmanState<T> {
    predict(state, params, &Vector::zeros())
}

pub fn gain<T: Scalar>(p: &Matrix4<T>, h: &Matrix<T, 2, 4>, r: &Matrix2<T>) -> Result<Matrix<T, 4, 2>, KalmanError> {
    let ht = h.transpose();
    let s = *h * *p * ht + *r;
    Ok(*p * ht * invert2(&s)?)
}

/// Measurement update with `z = (x, y)`.
pub fn update<T: Scalar>(
    state: &KalmanState<T>,
    params: &KalmanParams<T>,
    z: &Vector<T, 2>,
) -> Result<KalmanState<T>, KalmanError> {
    let k = gain(&state.p, &params.h, &params.r)?;
    let innovation = *z - params.h * state.x;
    let x = state.x + k * innovation;
    let p = (Matrix4::identity() - k * params.h) * state.p;
    Ok(KalmanState { x, p })
}
