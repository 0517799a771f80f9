//! Drift-corrected orientation tracking for kinematic chains of IMUs.
//!
//! Every limb carries a sensor at its tip. Each sensor dead-reckons its own
//! orientation from the gyroscope, and children are pulled back into
//! agreement with their parent by comparing the acceleration both sensors
//! must share at the joint. No gravity or magnetic reference is needed, so
//! the estimator works in free fall as well as on the ground.
//!
//! The crate also contains a ground-truth simulator for chains
//! ([`synth`]), a discrete-event model of the hub/sensor bus ([`netsim`]),
//! metrics and experiment harnesses ([`eval`]) and file formats ([`io`]).

pub mod chain;
pub mod estimator;
pub mod eval;
pub mod io;
pub mod netsim;
pub mod rotmath;
pub mod synth;

pub use chain::{ChainError, ChainSpec, LimbNode};
pub use estimator::{CorrectionResult, EstimatorState, FilterParams, SensorEstimator};
pub use rotmath::{RotError, UnitQuaternion, Vec3};
pub use synth::{GroundTruth, ImuSample, NoiseSpec, SensorStream, TrajectorySpec};
