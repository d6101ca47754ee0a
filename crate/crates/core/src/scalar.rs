//! Scalar abstraction shared by every numerical module.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};
use rustfft::FftNum;
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point type the toolkit can run on: `f32` or `f64`.
///
/// Physical constants are stored in `f64` and converted on demand, so
/// quantities that would underflow single precision (ħ³, σ_γγ) never pass
/// through `F` directly.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + NumAssign
    + FftNum
    + Debug
    + Display
    + Default
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Widen to `f64` for reporting.
    fn to_f64_lossy(self) -> f64;
}

macro_rules! impl_real {
    ($f:ty) => {
        impl Real for $f {
            #[inline]
            fn to_f64_lossy(self) -> f64 {
                self as f64
            }
        }
    };
}

impl_real!(f32);
impl_real!(f64);

/// Convert an `f64` literal into `F`.
#[inline]
pub fn lit<F: Real>(x: f64) -> F {
    F::from_f64(x).expect("finite f64 literal converts to any Real")
}

/// Convert a count into `F`.
#[inline]
pub fn count<F: Real>(n: usize) -> F {
    F::from_usize(n).expect("usize converts to any Real")
}
