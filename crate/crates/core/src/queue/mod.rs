//! Prelimit queueing model: primitives, policies and the event simulator.

pub mod dist;
pub mod policy;
pub mod sim;

pub use dist::{DistributionSpec, PrimitiveDistributions, PrimitiveSource, RenewalSource, ScaledRates, ScriptedSource};
pub use policy::{required_policy, ModeLabels, PolicyKind, PolicySpec, Rule, ScalingPolicy};
pub use sim::{cost_estimate, run, Event, EventKind, PathSample, RecordOptions, SimConfig, TrajectoryRecord};
