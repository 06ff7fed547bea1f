//! Scalar abstraction for everything float-valued in the simulator.
//!
//! State counters (ages, queue lengths, energy units) stay integral; costs,
//! probabilities and network weights are generic over [`Real`] so the whole
//! stack can run in `f32` or `f64`.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumCast};

/// Floating-point scalar used for probabilities, costs and policy weights.
pub trait Real:
    Float + FromPrimitive + NumCast + Debug + Display + Send + Sync + 'static
{
    fn from_usize_(v: usize) -> Self {
        Self::from_usize(v).expect("usize representable")
    }

    fn from_u32_(v: u32) -> Self {
        Self::from_u32(v).expect("u32 representable")
    }

    fn from_f64_(v: f64) -> Self {
        Self::from_f64(v).expect("f64 representable")
    }

    fn to_f64_(self) -> f64 {
        NumCast::from(self).expect("finite scalar")
    }
}

impl Real for f32 {}
impl Real for f64 {}
