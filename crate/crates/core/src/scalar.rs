//! Scalar abstraction shared by every numeric module.

use nalgebra::RealField;
use num_traits::{FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar the plant, controllers and estimator are generic over.
///
/// Implemented for `f32` and `f64`. Math methods (`sin`, `sqrt`, ...) come from
/// [`RealField`]; literals and constants come from `num-traits`.
pub trait Real: RealField + Copy + FloatConst + FromPrimitive + ToPrimitive {}

impl<T> Real for T where T: RealField + Copy + FloatConst + FromPrimitive + ToPrimitive {}

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal representable in scalar type")
}

/// Widens `x` to `f64` (NaN if unrepresentable).
#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

#[inline]
pub(crate) fn abs<T: Real>(x: T) -> T {
    <T as nalgebra::ComplexField>::abs(x)
}

#[inline]
pub(crate) fn clamp<T: Real>(x: T, lo: T, hi: T) -> T {
    if x < lo {
        lo
    } else if x > hi {
        hi
    } else {
        x
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle<T: Real>(a: T) -> T {
    let two_pi = T::TAU();
    let mut w = a % two_pi;
    if w > T::PI() {
        w -= two_pi;
    } else if w <= -T::PI() {
        w += two_pi;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_stays_in_half_open_interval() {
        assert_eq!(wrap_angle(std::f64::consts::PI), std::f64::consts::PI);
        assert!((wrap_angle(-std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-12);
        assert!((wrap_angle(0.1f32) - 0.1).abs() < 1e-7);
        assert!((wrap_angle(-7.0f64) - (-7.0 + std::f64::consts::TAU)).abs() < 1e-12);
    }
}
