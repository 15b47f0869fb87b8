//! Scalar abstraction shared by the numeric kernels.

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive};

/// Floating point type the kinematic and metric kernels are written against.
///
/// Implemented for `f32` and `f64`; the simulator itself runs on [`crate::Real`].
pub trait Scalar: Float + FromPrimitive + Debug + Default + Send + Sync + 'static {
    /// Converts an `f64` literal. Panics only for values the type cannot hold.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal not representable in scalar type")
    }
}

impl<T> Scalar for T where T: Float + FromPrimitive + Debug + Default + Send + Sync + 'static {}
