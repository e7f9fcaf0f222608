//! Scalar abstraction shared by every numerical routine in the crate.

use nalgebra as na;
use num_traits as nt;

/// Floating point types the solver can run on (`f32`, `f64`).
///
/// Tolerances quoted throughout the crate assume `f64`; `f32` works for
/// coarse runs only.
pub trait Real:
    Copy + nt::FloatConst + nt::FromPrimitive + na::RealField + na::Scalar + Send + Sync
{
    /// Machine epsilon of the type.
    const EPS: Self;
}

impl Real for f32 {
    const EPS: Self = f32::EPSILON;
}

impl Real for f64 {
    const EPS: Self = f64::EPSILON;
}

/// Complex numbers over a [`Real`] scalar.
pub type Complex<T> = na::Complex<T>;

/// Converts an `f64` literal into the working scalar.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in scalar type")
}

/// Converts a count into the working scalar.
#[inline]
pub fn from_usize<T: Real>(n: usize) -> T {
    T::from_usize(n).expect("count representable in scalar type")
}

/// Converts a signed mode index into the working scalar.
#[inline]
pub fn from_mode<T: Real>(n: i64) -> T {
    T::from_i64(n).expect("mode index representable in scalar type")
}

/// Lossy conversion to `f64` for reporting.
#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    na::try_convert::<T, f64>(x).unwrap_or(f64::NAN)
}

#[inline]
pub fn cplx<T: Real>(re: T, im: T) -> Complex<T> {
    Complex::new(re, im)
}

/// Modulus of a complex number.
#[inline]
pub fn modulus<T: Real>(z: Complex<T>) -> T {
    (z.re * z.re + z.im * z.im).sqrt()
}
