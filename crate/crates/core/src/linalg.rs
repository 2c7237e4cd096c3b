//! Small dense helpers on slices. Everything here assumes equal lengths;
//! callers validate dimensions at the API boundary.

use crate::Scalar;

#[inline]
pub(crate) fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
pub(crate) fn norm_sq<F: Scalar>(a: &[F]) -> F {
    dot(a, a)
}

#[inline]
pub(crate) fn norm<F: Scalar>(a: &[F]) -> F {
    norm_sq(a).sqrt()
}

/// a += s * b
#[inline]
pub(crate) fn axpy<F: Scalar>(a: &mut [F], s: F, b: &[F]) {
    debug_assert_eq!(a.len(), b.len());
    for (x, &y) in a.iter_mut().zip(b) {
        *x = *x + s * y;
    }
}

#[cfg_attr(not(test), allow(dead_code))]
pub(crate) fn max_abs_diff<F: Scalar>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .fold(F::zero(), |acc, (&x, &y)| acc.max((x - y).abs()))
}
