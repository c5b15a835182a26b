//! Trace-driven simulation of 60 GHz beam tracking between a ceiling access
//! node and a moving VR headset.
//!
//! The numeric modules are generic over [`Scalar`]; the aliases below fix
//! them to `f64`, which the orchestration layer uses throughout.

pub mod beammgmt;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod link;
pub mod metrics;
pub mod mobility;
pub mod phasedarray;
pub mod scalar;
pub mod simcore;

pub use beammgmt::{sweep, Blanking, BeamSchedule, Policy};
pub use error::{ArrayError, BeamError, GeometryError, MetricsError, SimError, TraceError};
pub use experiment::{sweep_experiment, Experiment, ExperimentSpec, Manifest, MotionMode};
pub use mobility::{parse_trace, synth_trace, MobilityTrace, Pattern, PoseSample, SynthSpec};
pub use scalar::Scalar;
pub use simcore::{run, ArraySpec, RunConfig, Scene, SimRecord, SimResult};

pub type Orientation = geometry::Orientation<f64>;
pub type Position = geometry::Position<f64>;
pub type DirectionAzEl = geometry::DirectionAzEl<f64>;
pub type Rotation = geometry::Rotation<f64>;
pub type Vector3 = geometry::Vector3<f64>;
pub type ElementPattern = phasedarray::ElementPattern<f64>;
pub type PhasedArray = phasedarray::PhasedArray<f64>;
pub type Beam = phasedarray::Beam<f64>;
pub type Fov = phasedarray::Fov<f64>;
pub type Codebook = phasedarray::Codebook<f64>;
pub type LinkConfig = link::LinkConfig<f64>;
pub type PathLossModel = link::PathLossModel<f64>;
pub type Budget = link::Budget<f64>;
pub type SweepOutcome = beammgmt::SweepOutcome<f64>;
pub type SweepEvent = beammgmt::SweepEvent<f64>;
pub type BeamManager = beammgmt::BeamManager<f64>;
