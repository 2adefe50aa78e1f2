//! Plant model, thrust allocation, flight control and online center-of-mass
//! estimation for a fully actuated, variable-tilt cargo multirotor.
//!
//! Every numeric type is generic over [`Real`] (`f32` or `f64`). The `*F64`
//! and `*F32` aliases below pin the common instantiations.

// `!(x > 0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocation;
pub mod control;
pub mod dynamics;
pub mod estimator;
pub mod filters;
pub mod scalar;
pub mod vehicle;

pub use scalar::{lit, to_f64, wrap_angle, Real};

pub type VehicleParamsF64 = vehicle::VehicleParams<f64>;
pub type VehicleParamsF32 = vehicle::VehicleParams<f32>;
pub type ActuatorCommandF64 = vehicle::ActuatorCommand<f64>;
pub type WrenchF64 = vehicle::Wrench<f64>;
pub type RigidStateF64 = dynamics::RigidState<f64>;
pub type RigidStateF32 = dynamics::RigidState<f32>;
pub type ActuatorStateF64 = dynamics::ActuatorState<f64>;
pub type SensorSampleF64 = dynamics::SensorSample<f64>;
pub type AllocatorF64 = allocation::Allocator<f64>;
pub type ControllerGainsF64 = control::ControllerGains<f64>;
pub type ControllerGainsF32 = control::ControllerGains<f32>;
pub type ComEstimatorF64 = estimator::ComEstimator<f64>;
pub type ComEstimatorF32 = estimator::ComEstimator<f32>;
pub type EstimatorConfigF64 = estimator::EstimatorConfig<f64>;
pub type BandPassF64 = filters::BandPass<f64>;
pub type LowPassF64 = filters::LowPass<f64>;
