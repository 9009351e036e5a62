//! Floating-point element types the engine runs on.
//!
//! `f64` is the checking precision used by gradient tests; `f32` is the fast
//! precision used for training, inference and checkpoints.

use std::fmt::{Debug, Display};

use num_traits::Float;

pub trait Element:
    Float + Default + Debug + Display + Send + Sync + std::iter::Sum + 'static
{
    /// Short name used in bench ids and diagnostics.
    const NAME: &'static str;

    fn from_f64(v: f64) -> Self;

    fn as_f64(self) -> f64;

    /// `c = alpha * a·b + beta * c` on strided row/column layouts.
    ///
    /// # Safety
    /// The caller guarantees that every strided index into `a`, `b` and `c`
    /// is in bounds for the given `m`, `k`, `n` and strides.
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

impl Element for f32 {
    const NAME: &'static str = "f32";

    fn from_f64(v: f64) -> Self {
        v as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
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
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

impl Element for f64 {
    const NAME: &'static str = "f64";

    fn from_f64(v: f64) -> Self {
        v
    }

    fn as_f64(self) -> f64 {
        self
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
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

/// Row-major matrix operand: `trans` reads the stored `rows × cols` buffer
/// as its transpose.
#[derive(Clone, Copy)]
pub struct MatRef<'a, T> {
    pub data: &'a [T],
    pub rows: usize,
    pub cols: usize,
    pub trans: bool,
}

impl<'a, T> MatRef<'a, T> {
    pub fn new(data: &'a [T], rows: usize, cols: usize) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { data, rows, cols, trans: false }
    }

    pub fn t(self) -> Self {
        Self { trans: !self.trans, ..self }
    }

    /// Logical (rows, cols) after the optional transpose.
    fn dims(&self) -> (usize, usize) {
        if self.trans {
            (self.cols, self.rows)
        } else {
            (self.rows, self.cols)
        }
    }

    /// Logical (row stride, col stride).
    fn strides(&self) -> (isize, isize) {
        if self.trans {
            (1, self.cols as isize)
        } else {
            (self.cols as isize, 1)
        }
    }
}

/// Output rows handled by one parallel task. Fixed so the arithmetic is the
/// same whatever the thread count.
const GEMM_ROW_BLOCK: usize = 32;

/// `out = a·b` (or `out += a·b` when `accumulate`), `out` row-major `m × n`.
pub fn gemm<T: Element>(a: MatRef<'_, T>, b: MatRef<'_, T>, out: &mut [T], accumulate: bool) {
    let (m, k) = a.dims();
    let (kb, n) = b.dims();
    assert_eq!(k, kb, "gemm inner dimensions differ");
    assert_eq!(out.len(), m * n, "gemm output buffer has wrong length");
    if m == 0 || n == 0 {
        return;
    }
    let beta = if accumulate { T::one() } else { T::zero() };
    let (rsa, csa) = a.strides();
    let (rsb, csb) = b.strides();
    crate::par::chunks_mut(out, GEMM_ROW_BLOCK * n, |block_idx, c_block| {
        let row0 = block_idx * GEMM_ROW_BLOCK;
        let rows = c_block.len() / n;
        if k == 0 {
            if !accumulate {
                c_block.iter_mut().for_each(|v| *v = T::zero());
            }
            return;
        }
        // SAFETY: row0 + rows <= m and every stride was derived from the
        // buffer dimensions checked above.
        unsafe {
            T::gemm_raw(
                rows,
                k,
                n,
                T::one(),
                a.data.as_ptr().offset(row0 as isize * rsa),
                rsa,
                csa,
                b.data.as_ptr(),
                rsb,
                csb,
                beta,
                c_block.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    });
}
