//! Microscopic lane-drop traffic simulation with restricted-lane access
//! policies, and the experiment harness built on it.
//!
//! The numeric kernels (car following, delay metrics, the threshold
//! controller) are generic over [`num::Scalar`]; the simulator runs on
//! [`Real`].

pub mod audit;
pub mod demand;
pub mod error;
pub mod experiment;
pub mod kinematics;
pub mod metrics;
pub mod network;
pub mod num;
pub mod policy;
pub mod rng;
pub mod sim;
pub mod vehicle;

pub use error::{Error, Result};

/// Scalar type of the simulator.
pub type Real = f64;
pub type Record = metrics::VehicleRecord<Real>;
pub type Params = kinematics::DriverParams<Real>;
pub type Controller = policy::ControllerState<Real>;
