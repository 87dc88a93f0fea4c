//! Row-major dense matrices and the handful of kernels the transformer needs.
//!
//! Products go through `matrixmultiply`, whose kernels accumulate every output element over the
//! inner dimension in the same order whatever the number of rows. A one-row product is therefore
//! bit-identical to the same row of a batched product, which lets cached incremental decoding
//! agree exactly with a full forward pass (checked in the tests below).

use std::fmt::Debug;

use num_traits::Float;

/// Strided general product `C ← α·A·B + β·C`, as in `matrixmultiply::sgemm`.
pub struct Gemm<T> {
    pub m: usize,
    pub k: usize,
    pub n: usize,
    pub alpha: T,
    pub a: *const T,
    pub rsa: isize,
    pub csa: isize,
    pub b: *const T,
    pub rsb: isize,
    pub csb: isize,
    pub beta: T,
    pub c: *mut T,
    pub rsc: isize,
    pub csc: isize,
}

pub trait Scalar: Float + Default + Debug + Send + Sync + std::iter::Sum + 'static {
    fn of(x: f64) -> Self;
    fn as_f64(self) -> f64;
    /// # Safety
    /// Pointers and strides must describe valid, non-overlapping `A`, `B` and `C` buffers.
    unsafe fn gemm(g: Gemm<Self>);
}

impl Scalar for f32 {
    fn of(x: f64) -> Self {
        x as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
    unsafe fn gemm(g: Gemm<Self>) {
        matrixmultiply::sgemm(
            g.m, g.k, g.n, g.alpha, g.a, g.rsa, g.csa, g.b, g.rsb, g.csb, g.beta, g.c, g.rsc, g.csc,
        )
    }
}

impl Scalar for f64 {
    fn of(x: f64) -> Self {
        x
    }
    fn as_f64(self) -> f64 {
        self
    }
    unsafe fn gemm(g: Gemm<Self>) {
        matrixmultiply::dgemm(
            g.m, g.k, g.n, g.alpha, g.a, g.rsa, g.csa, g.b, g.rsb, g.csb, g.beta, g.c, g.rsc, g.csc,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mat<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
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

    pub fn push_row(&mut self, row: &[T]) {
        assert_eq!(row.len(), self.cols);
        self.data.extend_from_slice(row);
        self.rows += 1;
    }

    pub fn convert<U: Scalar>(&self) -> Mat<U> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Mat<T>) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|v| *v = T::zero());
    }
}

/// `out += a * x`
#[inline]
pub fn axpy<T: Scalar>(out: &mut [T], a: T, x: &[T]) {
    for (o, &v) in out.iter_mut().zip(x) {
        *o = *o + a * v;
    }
}

/// Dot product with eight interleaved partial sums (vectorizable, order fixed by length).
#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] = acc[l] + x[l] * y[l];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in ra.iter().zip(rb) {
        tail = tail + x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `a [m×k] · b [k×n]`
pub fn matmul<T: Scalar>(a: &Mat<T>, b: &Mat<T>) -> Mat<T> {
    assert_eq!(a.cols, b.rows, "matmul inner dimension");
    let mut out = Mat::zeros(a.rows, b.cols);
    // SAFETY: shapes were checked and `out` is a fresh buffer.
    unsafe {
        T::gemm(Gemm {
            m: a.rows,
            k: a.cols,
            n: b.cols,
            alpha: T::one(),
            a: a.data.as_ptr(),
            rsa: a.cols as isize,
            csa: 1,
            b: b.data.as_ptr(),
            rsb: b.cols as isize,
            csb: 1,
            beta: T::zero(),
            c: out.data.as_mut_ptr(),
            rsc: b.cols as isize,
            csc: 1,
        })
    };
    out
}

/// `a [m×k] · bᵀ` for `b [n×k]`
pub fn matmul_nt<T: Scalar>(a: &Mat<T>, b: &Mat<T>) -> Mat<T> {
    assert_eq!(a.cols, b.cols, "matmul_nt inner dimension");
    let mut out = Mat::zeros(a.rows, b.rows);
    // SAFETY: shapes were checked and `out` is a fresh buffer.
    unsafe {
        T::gemm(Gemm {
            m: a.rows,
            k: a.cols,
            n: b.rows,
            alpha: T::one(),
            a: a.data.as_ptr(),
            rsa: a.cols as isize,
            csa: 1,
            b: b.data.as_ptr(),
            rsb: 1,
            csb: b.cols as isize,
            beta: T::zero(),
            c: out.data.as_mut_ptr(),
            rsc: b.rows as isize,
            csc: 1,
        })
    };
    out
}

/// `acc += aᵀ · b` for `a [m×k]`, `b [m×n]`, `acc [k×n]`
pub fn matmul_tn_acc<T: Scalar>(a: &Mat<T>, b: &Mat<T>, acc: &mut Mat<T>) {
    assert_eq!(a.rows, b.rows, "matmul_tn outer dimension");
    assert_eq!((acc.rows, acc.cols), (a.cols, b.cols));
    // SAFETY: shapes were checked; `acc` is borrowed mutably, so it cannot alias `a` or `b`.
    unsafe {
        T::gemm(Gemm {
            m: a.cols,
            k: a.rows,
            n: b.cols,
            alpha: T::one(),
            a: a.data.as_ptr(),
            rsa: 1,
            csa: a.cols as isize,
            b: b.data.as_ptr(),
            rsb: b.cols as isize,
            csb: 1,
            beta: T::one(),
            c: acc.data.as_mut_ptr(),
            rsc: acc.cols as isize,
            csc: 1,
        })
    };
}
