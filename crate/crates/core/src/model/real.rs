//! Scalar abstraction so the same network runs in f32 (training) and f64
//! (finite-difference checks).

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Send
    + Sync
    + 'static
{
    /// `c = alpha * a·b + beta * c` over strided views.
    ///
    /// # Safety
    /// Every index reachable through the given shapes and strides must lie
    /// inside the corresponding allocation.
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

    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("representable")
    }

    fn f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Real for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// Row-major operand, optionally read transposed.
#[derive(Clone, Copy)]
pub struct Op<'a, T> {
    pub data: &'a [T],
    /// Shape as stored.
    pub rows: usize,
    pub cols: usize,
    /// Distance between consecutive stored rows.
    pub ld: usize,
    pub t: bool,
}

impl<'a, T> Op<'a, T> {
    pub fn n(data: &'a [T], rows: usize, cols: usize) -> Self {
        Self {
            data,
            rows,
            cols,
            ld: cols,
            t: false,
        }
    }

    pub fn t(data: &'a [T], rows: usize, cols: usize) -> Self {
        Self {
            data,
            rows,
            cols,
            ld: cols,
            t: true,
        }
    }

    /// Rows `ld` apart inside a larger buffer.
    pub fn strided(data: &'a [T], rows: usize, cols: usize, ld: usize) -> Self {
        Self {
            data,
            rows,
            cols,
            ld,
            t: false,
        }
    }

    pub fn tr(self) -> Self {
        Self { t: !self.t, ..self }
    }

    fn extent(&self) -> usize {
        if self.rows == 0 {
            0
        } else {
            (self.rows - 1) * self.ld + self.cols
        }
    }

    fn shape(&self) -> (usize, usize) {
        if self.t {
            (self.cols, self.rows)
        } else {
            (self.rows, self.cols)
        }
    }

    fn strides(&self) -> (isize, isize) {
        if self.t {
            (1, self.ld as isize)
        } else {
            (self.ld as isize, 1)
        }
    }
}

/// `c (m×n, row-major) = a·b + (acc ? c : 0)`.
pub fn matmul<T: Real>(a: Op<T>, b: Op<T>, c: &mut [T], acc: bool) {
    let n = b.shape().1;
    matmul_ld(a, b, c, n, acc)
}

/// [`matmul`] writing rows of `c` that are `ldc` apart.
pub fn matmul_ld<T: Real>(a: Op<T>, b: Op<T>, c: &mut [T], ldc: usize, acc: bool) {
    let (m, k) = a.shape();
    let (k2, n) = b.shape();
    assert_eq!(k, k2, "inner dimensions");
    assert!(a.data.len() >= a.extent() && b.data.len() >= b.extent());
    assert!(a.ld >= a.cols && b.ld >= b.cols && ldc >= n);
    if m == 0 || n == 0 {
        return;
    }
    assert!(c.len() >= (m - 1) * ldc + n);
    if k == 0 {
        if !acc {
            for r in 0..m {
                c[r * ldc..r * ldc + n]
                    .iter_mut()
                    .for_each(|x| *x = T::zero());
            }
        }
        return;
    }
    let (rsa, csa) = a.strides();
    let (rsb, csb) = b.strides();
    let beta = if acc { T::one() } else { T::zero() };
    // SAFETY: shapes and strides were checked against the slice lengths above.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            T::one(),
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            ldc as isize,
            1,
        )
    }
}

/// `y (rows×out) = x·w + bias`.
pub fn linear<T: Real>(x: &[T], rows: usize, w: &[T], bias: &[T], out: &mut [T]) {
    let (d_in, d_out) = (w.len() / bias.len(), bias.len());
    for r in 0..rows {
        out[r * d_out..(r + 1) * d_out].copy_from_slice(bias);
    }
    matmul(Op::n(x, rows, d_in), Op::n(w, d_in, d_out), out, true);
}

/// Backward of [`linear`]: accumulates `dw += xᵀ·dy`, `db += Σ dy`, and
/// writes (or accumulates) `dx = dy·wᵀ`.
#[allow(clippy::too_many_arguments)]
pub fn linear_backward<T: Real>(
    x: &[T],
    rows: usize,
    w: &[T],
    dy: &[T],
    dw: &mut [T],
    db: &mut [T],
    dx: Option<&mut [T]>,
    acc_dx: bool,
) {
    let d_out = db.len();
    let d_in = w.len() / d_out;
    matmul(Op::t(x, rows, d_in), Op::n(dy, rows, d_out), dw, true);
    for r in 0..rows {
        for (b, g) in db.iter_mut().zip(&dy[r * d_out..(r + 1) * d_out]) {
            *b += *g;
        }
    }
    if let Some(dx) = dx {
        matmul(Op::n(dy, rows, d_out), Op::t(w, d_in, d_out), dx, acc_dx);
    }
}
