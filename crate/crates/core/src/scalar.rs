//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};
use serde::{de::DeserializeOwned, Serialize};

/// Real floating-point scalar usable by the toolbox (`f32` or `f64`).
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Display + Debug + Send + Sync + Serialize + DeserializeOwned + 'static
{
    /// Converts an `f64` literal into the scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    /// Lossy conversion to `f64` for reporting and file output.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Machine epsilon of the scalar type.
    fn eps() -> Self;

    #[inline]
    fn is_finite_val(self) -> bool {
        self.as_f64().is_finite()
    }

    #[inline]
    fn to_degrees_val(self) -> Self {
        self * Self::lit(180.0) / Self::pi()
    }

    #[inline]
    fn to_radians_val(self) -> Self {
        self * Self::pi() / Self::lit(180.0)
    }
}

impl Real for f64 {
    fn eps() -> Self {
        f64::EPSILON
    }
}

impl Real for f32 {
    fn eps() -> Self {
        f32::EPSILON
    }
}

/// Complex scalar over a [`Real`] base type.
pub type Cplx<T> = nalgebra::Complex<T>;

/// `20·log10(|x|)`.
#[inline]
pub fn db<T: Real>(magnitude: T) -> T {
    T::lit(20.0) * magnitude.log10()
}

/// Inverse of [`db`].
#[inline]
pub fn from_db<T: Real>(value_db: T) -> T {
    T::lit(10.0).powf(value_db / T::lit(20.0))
}

/// `n` logarithmically spaced points covering `[lo, hi]` inclusive.
pub fn logspace<T: Real>(lo: T, hi: T, n: usize) -> Vec<T> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            let step = (b - a) / T::from_usize(n - 1).unwrap();
            (0..n)
                .map(|k| {
                    if k + 1 == n {
                        hi
                    } else if k == 0 {
                        lo
                    } else {
                        (a + step * T::from_usize(k).unwrap()).exp()
                    }
                })
                .collect()
        }
    }
}

/// `|z|` for a generic complex scalar.
#[inline]
pub fn cabs<T: Real>(z: Cplx<T>) -> T {
    z.re.hypot(z.im)
}

/// `arg z` in radians.
#[inline]
pub fn carg<T: Real>(z: Cplx<T>) -> T {
    z.im.atan2(z.re)
}

#[inline]
pub fn cpolar<T: Real>(r: T, theta: T) -> Cplx<T> {
    Cplx::new(r * theta.cos(), r * theta.sin())
}
