use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

/// Floating-point element type of the network. Training runs in `f32`;
/// `f64` instances exist for numerical checks.
pub trait Scalar:
    Copy
    + Default
    + Debug
    + PartialOrd
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
{
    const ZERO: Self;
    const ONE: Self;
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn tanh(self) -> Self;
    fn sqrt(self) -> Self;
    fn is_finite(self) -> bool;

    fn sigmoid(self) -> Self {
        Self::ONE / (Self::ONE + (-self).exp())
    }
}

macro_rules! impl_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;
            fn from_f64(x: f64) -> Self {
                x as $t
            }
            fn to_f64(self) -> f64 {
                self as f64
            }
            fn exp(self) -> Self {
                <$t>::exp(self)
            }
            fn tanh(self) -> Self {
                <$t>::tanh(self)
            }
            fn sqrt(self) -> Self {
                <$t>::sqrt(self)
            }
            fn is_finite(self) -> bool {
                <$t>::is_finite(self)
            }
        }
    };
}

impl_scalar!(f32);
impl_scalar!(f64);

/// Dense row-major matrix. Layers compute `y = x · W`, so a weight matrix is
/// stored as `input_dim × output_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::ZERO; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    /// `y += x · self`
    pub fn vec_mul_acc(&self, x: &[T], y: &mut [T]) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(y.len(), self.cols);
        for (i, &xi) in x.iter().enumerate() {
            if xi == T::ZERO {
                continue;
            }
            axpy(xi, self.row(i), y);
        }
    }

    /// `dx += self · dy`, the input gradient of `y = x · self`.
    pub fn mul_vec_acc(&self, dy: &[T], dx: &mut [T]) {
        debug_assert_eq!(dy.len(), self.cols);
        debug_assert_eq!(dx.len(), self.rows);
        for (i, d) in dx.iter_mut().enumerate() {
            *d += dot(self.row(i), dy);
        }
    }

    /// `self += x ⊗ dy`, the weight gradient of `y = x · self`.
    pub fn outer_acc(&mut self, x: &[T], dy: &[T]) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(dy.len(), self.cols);
        for (i, &xi) in x.iter().enumerate() {
            if xi == T::ZERO {
                continue;
            }
            axpy(xi, dy, self.row_mut(i));
        }
    }
}

#[inline]
pub fn axpy<T: Scalar>(a: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    // four accumulators let the compiler vectorize without reassociating
    let mut acc = [T::ZERO; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in chunks * 4..a.len() {
        s += a[i] * b[i];
    }
    s
}

pub fn add_assign<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products_agree_with_definition() {
        let w = Matrix::from_vec(2, 3, vec![1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let mut y = vec![0.0; 3];
        w.vec_mul_acc(&[1.0, -1.0], &mut y);
        assert_eq!(y, vec![-3.0, -3.0, -3.0]);
        let mut dx = vec![0.0; 2];
        w.mul_vec_acc(&[1.0, 0.0, 1.0], &mut dx);
        assert_eq!(dx, vec![4.0, 10.0]);
        let mut g = Matrix::<f64>::zeros(2, 3);
        g.outer_acc(&[2.0, 3.0], &[1.0, 0.0, -1.0]);
        assert_eq!(g.as_slice(), &[2.0, 0.0, -2.0, 3.0, 0.0, -3.0]);
    }

    #[test]
    fn dot_handles_remainder() {
        let a: Vec<f64> = (0..7).map(|i| i as f64).collect();
        assert_eq!(dot(&a, &a), 91.0);
    }
}
