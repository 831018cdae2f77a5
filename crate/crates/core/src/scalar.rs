//! Scalar abstraction shared by the estimators.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point type the estimators are generic over: `f32` or `f64`.
pub trait Real:
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
    /// Converts an `f64` literal or parameter into `Self`.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 is representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite conversion to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Numerically stable logistic function.
#[inline]
pub(crate) fn logistic<T: Real>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// `logistic(z) * (1 - logistic(z))` without cancellation in the tails.
#[inline]
pub(crate) fn logistic_slope<T: Real>(z: T) -> T {
    let e = (-z.abs()).exp();
    let d = T::one() + e;
    e / (d * d)
}

#[inline]
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else {
        z.exp().ln_1p()
    }
}

pub(crate) fn mean_and_sd<T: Real>(values: impl Iterator<Item = T> + Clone) -> (T, T) {
    let mut n = 0usize;
    let mut sum = T::zero();
    for v in values.clone() {
        sum += v;
        n += 1;
    }
    if n == 0 {
        return (T::nan(), T::nan());
    }
    let mean = sum / T::lit(n as f64);
    if n < 2 {
        return (mean, T::zero());
    }
    let ss: T = values.map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / T::lit((n - 1) as f64)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_is_symmetric_and_saturates() {
        for z in [-40.0f64, -3.0, -0.1, 0.0, 0.5, 7.0, 800.0] {
            let s = logistic(z);
            assert!((s + logistic(-z) - 1.0).abs() < 1e-15);
            assert!((logistic_slope(z) - s * (1.0 - s)).abs() < 1e-15);
        }
        assert_eq!(logistic(1e4f64), 1.0);
        assert_eq!(logistic(-1e4f64), 0.0);
    }

    #[test]
    fn softplus_matches_definition() {
        for z in [-20.0, -1.0, 0.0, 2.5, 29.0] {
            assert!((softplus(z) - (z.exp() + 1.0).ln()).abs() < 1e-12);
        }
        assert_eq!(softplus(100.0), 100.0);
    }

    #[test]
    fn sample_sd_uses_unbiased_denominator() {
        let (m, s) = mean_and_sd([1.0f64, 2.0, 3.0, 4.0].into_iter());
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }
}
