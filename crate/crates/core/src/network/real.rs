use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point element type of the network. `f32` is used for training
/// and storage, `f64` for numerical checks.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Default + Debug + Display + Sum + Send + Sync + 'static
{
    /// `C = alpha * A * B + beta * C` over strided views.
    ///
    /// # Safety
    /// All strided indices must be in bounds of their buffers.
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

    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite conversion")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("finite conversion")
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

/// How an operand is stored relative to the product's logical shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Op {
    /// Stored row-major with the logical shape.
    Plain,
    /// Stored row-major as the transpose of the logical shape.
    Transposed,
}

/// `C (m x n) = A (m x k) * B (k x n)`, overwriting or accumulating into `C`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<T: Real>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    a_op: Op,
    b: &[T],
    b_op: Op,
    c: &mut [T],
    accumulate: bool,
) {
    assert_eq!(a.len(), m * k, "gemm: A length");
    assert_eq!(b.len(), k * n, "gemm: B length");
    assert_eq!(c.len(), m * n, "gemm: C length");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c.iter_mut().for_each(|v| *v = T::zero());
        }
        return;
    }
    if b_op == Op::Plain && (m <= SKINNY || k <= SKINNY) {
        return skinny_plain(m, k, n, a, a_op, b, c, accumulate);
    }
    if b_op == Op::Transposed && a_op == Op::Plain && m <= SKINNY {
        return skinny_transposed(m, k, n, a, b, c, accumulate);
    }
    let (rsa, csa) = match a_op {
        Op::Plain => (k as isize, 1),
        Op::Transposed => (1, m as isize),
    };
    let (rsb, csb) = match b_op {
        Op::Plain => (n as isize, 1),
        Op::Transposed => (1, k as isize),
    };
    let beta = if accumulate { T::one() } else { T::zero() };
    // SAFETY: lengths asserted above; every (row, col) index maps inside the
    // buffer for both storage orders.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            T::one(),
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        )
    }
}

/// Below this many rows (or inner terms) the packed GEMM spends most of its
/// time copying the large operand, so the product streams it once instead.
const SKINNY: usize = 16;

/// `C += A * B` one row of `B` at a time; each row of `C` is a sum of scaled
/// rows of `B`.
#[allow(clippy::too_many_arguments)]
fn skinny_plain<T: Real>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    a_op: Op,
    b: &[T],
    c: &mut [T],
    accumulate: bool,
) {
    if !accumulate {
        c.iter_mut().for_each(|v| *v = T::zero());
    }
    let a_at = |i: usize, p: usize| match a_op {
        Op::Plain => a[i * k + p],
        Op::Transposed => a[p * m + i],
    };
    if m <= SKINNY {
        for (p, b_row) in b.chunks_exact(n).enumerate() {
            for (i, c_row) in c.chunks_exact_mut(n).enumerate() {
                axpy(a_at(i, p), b_row, c_row);
            }
        }
    } else {
        for (i, c_row) in c.chunks_exact_mut(n).enumerate() {
            for (p, b_row) in b.chunks_exact(n).enumerate() {
                axpy(a_at(i, p), b_row, c_row);
            }
        }
    }
}

/// `C += A * B` with `B` stored transposed: every entry is a dot product of
/// a row of `A` with a row of the stored `B`.
fn skinny_transposed<T: Real>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    b: &[T],
    c: &mut [T],
    accumulate: bool,
) {
    for (j, b_row) in b.chunks_exact(k).enumerate() {
        for i in 0..m {
            let d = dot(&a[i * k..(i + 1) * k], b_row);
            let cell = &mut c[i * n + j];
            *cell = if accumulate { *cell + d } else { d };
        }
    }
}

fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}

/// Dot product with eight interleaved partial sums so it vectorises.
fn dot<T: Real>(x: &[T], y: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let (xc, yc) = (x.chunks_exact(8), y.chunks_exact(8));
    let (xr, yr) = (xc.remainder(), yc.remainder());
    for (xs, ys) in xc.zip(yc) {
        for l in 0..8 {
            acc[l] = acc[l] + xs[l] * ys[l];
        }
    }
    let mut tail = T::zero();
    for (&xi, &yi) in xr.iter().zip(yr) {
        tail = tail + xi * yi;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    let av = if a_t { a[p * m + i] } else { a[i * k + p] };
                    let bv = if b_t { b[j * k + p] } else { b[p * n + j] };
                    c[i * n + j] += av * bv;
                }
            }
        }
        c
    }

    #[test]
    fn all_storage_orders() {
        // Small, skinny-row, skinny-inner and packed shapes.
        for (m, k, n) in [
            (3, 4, 5),
            (8, 37, 21),
            (40, 3, 33),
            (30, 29, 17),
            (17, 17, 9),
        ] {
            storage_orders(m, k, n);
        }
    }

    fn storage_orders(m: usize, k: usize, n: usize) {
        let a: Vec<f64> = (0..m * k).map(|v| v as f64 * 0.5 - 2.0).collect();
        let b: Vec<f64> = (0..k * n).map(|v| (v as f64).sin()).collect();
        for (a_op, b_op) in [
            (Op::Plain, Op::Plain),
            (Op::Transposed, Op::Plain),
            (Op::Plain, Op::Transposed),
            (Op::Transposed, Op::Transposed),
        ] {
            let mut over = vec![7.0; m * n];
            gemm(m, k, n, &a, a_op, &b, b_op, &mut over, false);
            let mut c = vec![1.0; m * n];
            gemm(m, k, n, &a, a_op, &b, b_op, &mut c, true);
            let expect = naive(
                m,
                k,
                n,
                &a,
                a_op == Op::Transposed,
                &b,
                b_op == Op::Transposed,
            );
            for ((x, o), y) in c.iter().zip(&over).zip(&expect) {
                assert!((x - (y + 1.0)).abs() < 1e-9 * (1.0 + y.abs()));
                assert!((o - y).abs() < 1e-9 * (1.0 + y.abs()));
            }
        }
    }
}
