//! Floating-point scalar abstraction shared by every module.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar type the model and sampler are generic over: `f32` or `f64`.
///
/// Besides the arithmetic bounds, the trait carries the handful of random
/// variates the Gibbs kernel needs. `rand_distr` expresses those as
/// `Distribution<Self>` bounds on distribution types, which cannot be stated
/// as supertraits, so they are surfaced here as methods instead.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Uniform draw on `[0, 1)`.
    fn sample_unit<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Standard normal draw.
    fn sample_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Gamma(shape, 1) draw. `shape` must be positive and finite.
    fn sample_gamma<R: Rng + ?Sized>(shape: Self, rng: &mut R) -> Self;

    /// Lossy conversion from `f64`, used for literal constants.
    fn lit(v: f64) -> Self;

    /// Conversion from a count.
    fn from_count(v: usize) -> Self;

    /// Widening conversion for reporting.
    fn as_f64(self) -> f64;
}

macro_rules! impl_real {
    ($t:ty) => {
        impl Real for $t {
            #[inline]
            fn sample_unit<R: Rng + ?Sized>(rng: &mut R) -> Self {
                rng.random::<$t>()
            }

            #[inline]
            fn sample_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
                StandardNormal.sample(rng)
            }

            #[inline]
            fn sample_gamma<R: Rng + ?Sized>(shape: Self, rng: &mut R) -> Self {
                Gamma::new(shape, 1.0)
                    .expect("gamma shape must be positive and finite")
                    .sample(rng)
            }

            #[inline]
            fn lit(v: f64) -> Self {
                v as $t
            }

            #[inline]
            fn from_count(v: usize) -> Self {
                v as $t
            }

            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }
        }
    };
}

impl_real!(f32);
impl_real!(f64);
