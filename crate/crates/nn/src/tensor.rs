//! Dense row-major matrices over `f32` or `f64` and a strided GEMM wrapper.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

/// Floating-point element type. Training runs in `f32`; gradient checks use `f64`.
pub trait Scalar:
    Copy
    + Debug
    + Default
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
{
    const ZERO: Self;
    const ONE: Self;
    const NEG_INFINITY: Self;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn tanh(self) -> Self;
    fn is_finite(self) -> bool;

    fn max(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    /// `C = alpha * A B + beta * C` on strided views.
    ///
    /// # Safety
    /// Every index reachable through the given dimensions and strides must be
    /// in bounds of the corresponding pointer's allocation.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

macro_rules! impl_scalar {
    ($t:ty, $gemm:path) => {
        impl Scalar for $t {
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;
            const NEG_INFINITY: Self = <$t>::NEG_INFINITY;

            fn from_f64(v: f64) -> Self {
                v as $t
            }
            fn to_f64(self) -> f64 {
                self as f64
            }
            fn exp(self) -> Self {
                <$t>::exp(self)
            }
            fn ln(self) -> Self {
                <$t>::ln(self)
            }
            fn sqrt(self) -> Self {
                <$t>::sqrt(self)
            }
            fn tanh(self) -> Self {
                <$t>::tanh(self)
            }
            fn is_finite(self) -> bool {
                <$t>::is_finite(self)
            }

            unsafe fn gemm_raw(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: *const Self,
                rsa: isize,
                csa: isize,
                b: *const Self,
                rsb: isize,
                csb: isize,
                beta: Self,
                c: *mut Self,
                rsc: isize,
                csc: isize,
            ) {
                $gemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Mat<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![T::ZERO; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "shape {rows}x{cols} does not match {} values", data.len());
        Mat { rows, cols, data }
    }

    pub fn filled(rows: usize, cols: usize, v: T) -> Self {
        Mat { rows, cols, data: vec![v; rows * cols] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn at(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn add_assign(&mut self, other: &Mat<T>) {
        assert_eq!(self.shape(), other.shape());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn cast<U: Scalar>(&self) -> Mat<U> {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| U::from_f64(v.to_f64())).collect() }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Strided read-only view into a slice.
#[derive(Clone, Copy)]
pub struct View<'a, T> {
    pub data: &'a [T],
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
    pub rs: usize,
    pub cs: usize,
}

impl<'a, T: Scalar> View<'a, T> {
    pub fn of(m: &'a Mat<T>) -> Self {
        View { data: &m.data, offset: 0, rows: m.rows, cols: m.cols, rs: m.cols, cs: 1 }
    }

    /// Transposed view of a whole matrix.
    pub fn t(m: &'a Mat<T>) -> Self {
        View { data: &m.data, offset: 0, rows: m.cols, cols: m.rows, rs: 1, cs: m.cols }
    }

    /// Columns `c0..c0 + width` of a row-major matrix.
    pub fn cols(m: &'a Mat<T>, c0: usize, width: usize) -> Self {
        View { data: &m.data, offset: c0, rows: m.rows, cols: width, rs: m.cols, cs: 1 }
    }

    pub fn transpose(self) -> Self {
        View { rows: self.cols, cols: self.rows, rs: self.cs, cs: self.rs, ..self }
    }

    fn check(&self) {
        if self.rows > 0 && self.cols > 0 {
            let last = self.offset + (self.rows - 1) * self.rs + (self.cols - 1) * self.cs;
            assert!(last < self.data.len(), "view exceeds its buffer");
        }
    }
}

/// Strided mutable view.
pub struct ViewMut<'a, T> {
    pub data: &'a mut [T],
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
    pub rs: usize,
    pub cs: usize,
}

impl<'a, T: Scalar> ViewMut<'a, T> {
    pub fn of(m: &'a mut Mat<T>) -> Self {
        let (rows, cols) = m.shape();
        ViewMut { data: &mut m.data, offset: 0, rows, cols, rs: cols, cs: 1 }
    }

    pub fn cols(m: &'a mut Mat<T>, c0: usize, width: usize) -> Self {
        let (rows, cols) = m.shape();
        ViewMut { data: &mut m.data, offset: c0, rows, cols: width, rs: cols, cs: 1 }
    }

    pub fn slice(data: &'a mut [T], rows: usize, cols: usize) -> Self {
        assert_eq!(data.len(), rows * cols);
        ViewMut { data, offset: 0, rows, cols, rs: cols, cs: 1 }
    }
}

/// `c = alpha * a b + beta * c`; with `beta = 0` the previous contents of `c` are ignored.
pub fn gemm<T: Scalar>(alpha: T, a: View<'_, T>, b: View<'_, T>, beta: T, c: ViewMut<'_, T>) {
    assert_eq!(a.cols, b.rows, "inner dimensions differ");
    assert_eq!((a.rows, b.cols), (c.rows, c.cols), "output shape differs");
    a.check();
    b.check();
    if c.rows > 0 && c.cols > 0 {
        let last = c.offset + (c.rows - 1) * c.rs + (c.cols - 1) * c.cs;
        assert!(last < c.data.len(), "output view exceeds its buffer");
    }
    if c.rows == 0 || c.cols == 0 {
        return;
    }
    // SAFETY: the bound checks above cover every index the kernel touches.
    unsafe {
        T::gemm_raw(
            a.rows,
            a.cols,
            b.cols,
            alpha,
            a.data.as_ptr().add(a.offset),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr().add(b.offset),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.data.as_mut_ptr().add(c.offset),
            c.rs as isize,
            c.cs as isize,
        );
    }
}

/// Plain `a b` product.
pub fn matmul<T: Scalar>(a: View<'_, T>, b: View<'_, T>) -> Mat<T> {
    let mut out = Mat::zeros(a.rows, b.cols);
    gemm(T::ONE, a, b, T::ZERO, ViewMut::of(&mut out));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &Mat<f64>, b: &Mat<f64>) -> Mat<f64> {
        let mut c = Mat::zeros(a.rows, b.cols);
        for i in 0..a.rows {
            for j in 0..b.cols {
                let mut s = 0.0;
                for p in 0..a.cols {
                    s += a.at(i, p) * b.at(p, j);
                }
                c.data[i * b.cols + j] = s;
            }
        }
        c
    }

    fn seq(rows: usize, cols: usize, k: f64) -> Mat<f64> {
        Mat::from_vec(rows, cols, (0..rows * cols).map(|i| ((i as f64) * k).sin()).collect())
    }

    #[test]
    fn gemm_matches_naive_with_transposes_and_slices() {
        let a = seq(5, 7, 0.3);
        let b = seq(7, 4, 0.7);
        let c = matmul(View::of(&a), View::of(&b));
        let want = naive(&a, &b);
        for (x, y) in c.data.iter().zip(&want.data) {
            assert!((x - y).abs() < 1e-12);
        }

        let bt = seq(4, 7, 0.7);
        let c = matmul(View::of(&a), View::t(&bt));
        let mut bt_t = Mat::zeros(7, 4);
        for i in 0..4 {
            for j in 0..7 {
                bt_t.data[j * 4 + i] = bt.at(i, j);
            }
        }
        let want = naive(&a, &bt_t);
        for (x, y) in c.data.iter().zip(&want.data) {
            assert!((x - y).abs() < 1e-12);
        }

        // Column block 2..5 of `a` times rows 0..3 of `b`, accumulated.
        let a_blk = View::cols(&a, 2, 3);
        let b_top = View { data: &b.data, offset: 0, rows: 3, cols: 4, rs: 4, cs: 1 };
        let mut out = Mat::filled(5, 4, 1.0);
        gemm(1.0, a_blk, b_top, 1.0, ViewMut::of(&mut out));
        for i in 0..5 {
            for j in 0..4 {
                let s: f64 = (0..3).map(|p| a.at(i, 2 + p) * b.at(p, j)).sum();
                assert!((out.at(i, j) - (1.0 + s)).abs() < 1e-12);
            }
        }
    }

    #[test]
    #[should_panic(expected = "inner dimensions")]
    fn shape_mismatch_panics() {
        let a = Mat::<f32>::zeros(2, 3);
        matmul(View::of(&a), View::of(&a));
    }
}
