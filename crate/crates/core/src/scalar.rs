//! The scalar abstraction every numerical routine in the crate is written against.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Real floating-point scalar: `f32` or `f64`.
///
/// Linear algebra comes from [`RealField`]; conversions to and from `f64`
/// (for literals, tolerances and serialization) come from num-traits.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync + 'static {
    /// Draws one standard normal variate.
    fn sample_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Converts an `f64` literal. Lossy for `f32`, never fails.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Lossy view as `f64`, used for logging and file output.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// A tolerance that is `target` when the type can resolve it, and a
    /// small multiple of machine epsilon otherwise.
    #[inline]
    fn tol_or_eps(target: f64) -> Self {
        let floor = Self::default_epsilon() * Self::lit(100.0);
        let t = Self::lit(target);
        if t > floor {
            t
        } else {
            floor
        }
    }
}

impl Real for f32 {
    fn sample_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

impl Real for f64 {
    fn sample_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}
