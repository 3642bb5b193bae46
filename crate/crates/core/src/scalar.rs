//! Floating-point element types accepted by [`Tensor`](crate::Tensor).

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Element type of tensors, graphs and layers: `f32` or `f64`.
///
/// Besides the usual float arithmetic the trait carries the dense
/// matrix-multiply kernel, so each precision can route to its own
/// optimized implementation.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// `c = alpha * a * b + beta * c` on strided row/column layouts.
    ///
    /// `a` is `m x k`, `b` is `k x n`, `c` is `m x n`; each operand is
    /// addressed as `ptr[row * rs + col * cs]`.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: (&[Self], usize, usize),
        b: (&[Self], usize, usize),
        beta: Self,
        c: (&mut [Self], usize, usize),
    );

    /// Lossy conversion from `f64`, used for constants and sampled values.
    fn of(value: f64) -> Self {
        <Self as FromPrimitive>::from_f64(value).expect("f64 is representable")
    }

    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).expect("float converts to f64")
    }
}

fn span(rows: usize, cols: usize, rs: usize, cs: usize) -> usize {
    if rows == 0 || cols == 0 {
        0
    } else {
        (rows - 1) * rs + (cols - 1) * cs + 1
    }
}

fn check_operands<T>(
    m: usize,
    k: usize,
    n: usize,
    a: &(&[T], usize, usize),
    b: &(&[T], usize, usize),
    c: &(&mut [T], usize, usize),
) {
    assert!(
        a.0.len() >= span(m, k, a.1, a.2),
        "gemm: lhs operand too short"
    );
    assert!(
        b.0.len() >= span(k, n, b.1, b.2),
        "gemm: rhs operand too short"
    );
    assert!(
        c.0.len() >= span(m, n, c.1, c.2),
        "gemm: output operand too short"
    );
}

/// Straightforward triple loop; reference kernel for any `Scalar`.
#[allow(clippy::too_many_arguments)]
pub fn naive_gemm<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    alpha: T,
    a: (&[T], usize, usize),
    b: (&[T], usize, usize),
    beta: T,
    c: (&mut [T], usize, usize),
) {
    check_operands(m, k, n, &a, &b, &c);
    let (a, rsa, csa) = a;
    let (b, rsb, csb) = b;
    let (c, rsc, csc) = c;
    for i in 0..m {
        for j in 0..n {
            let mut acc = T::zero();
            for p in 0..k {
                acc += a[i * rsa + p * csa] * b[p * rsb + j * csb];
            }
            let out = &mut c[i * rsc + j * csc];
            *out = if beta == T::zero() {
                alpha * acc
            } else {
                alpha * acc + beta * *out
            };
        }
    }
}

macro_rules! impl_scalar {
    ($ty:ty, $kernel:path) => {
        impl Scalar for $ty {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: (&[Self], usize, usize),
                b: (&[Self], usize, usize),
                beta: Self,
                c: (&mut [Self], usize, usize),
            ) {
                check_operands(m, k, n, &a, &b, &c);
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: check_operands verified every addressed element
                // lies inside its slice, and `c` is borrowed mutably alone.
                unsafe {
                    $kernel(
                        m,
                        k,
                        n,
                        alpha,
                        a.0.as_ptr(),
                        a.1 as isize,
                        a.2 as isize,
                        b.0.as_ptr(),
                        b.1 as isize,
                        b.2 as isize,
                        beta,
                        c.0.as_mut_ptr(),
                        c.1 as isize,
                        c.2 as isize,
                    );
                }
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn optimized_kernel_matches_naive_on_strided_operands() {
        // a is 3x4 stored transposed, b is 4x2 row-major.
        let a: Vec<f64> = (0..12).map(|v| v as f64 * 0.5 - 2.0).collect();
        let b: Vec<f64> = (0..8).map(|v| (v as f64).sin()).collect();
        let mut fast = vec![1.0; 6];
        let mut slow = vec![1.0; 6];
        f64::gemm(3, 4, 2, 2.0, (&a, 1, 3), (&b, 2, 1), 0.5, (&mut fast, 2, 1));
        naive_gemm(3, 4, 2, 2.0, (&a, 1, 3), (&b, 2, 1), 0.5, (&mut slow, 2, 1));
        for (x, y) in fast.iter().zip(&slow) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn single_precision_kernel() {
        let a = [1.0f32, 2.0];
        let b = [3.0f32, 4.0];
        let mut c = [0.0f32];
        f32::gemm(1, 2, 1, 1.0, (&a, 2, 1), (&b, 1, 1), 0.0, (&mut c, 1, 1));
        assert_eq!(c[0], 11.0);
    }

    #[test]
    #[should_panic(expected = "too short")]
    fn short_operand_is_rejected() {
        let mut c = [0.0f64; 1];
        f64::gemm(
            1,
            3,
            1,
            1.0,
            (&[1.0, 2.0], 3, 1),
            (&[1.0, 2.0, 3.0], 1, 1),
            0.0,
            (&mut c, 1, 1),
        );
    }
}
