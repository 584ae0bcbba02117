//! Joint estimation of switch statuses, outage regions, and bus power
//! injections for three-phase unbalanced distribution feeders, from a
//! feeder-head meter, a sparse set of end-user meters, and load forecasts.
//!
//! The estimator is a self-normalized adaptive importance sampler over the
//! joint space of binary switch states and continuous injections, followed by
//! a second-stage island correction that zeroes estimates in de-energized
//! regions and flags their switches as inestimable.

pub mod harness;
pub mod inference;
pub mod measurement;
pub mod netmodel;
pub mod oracle;
pub mod powerflow;
pub mod sparse;
pub mod twostage;
pub mod ybus;

pub use netmodel::{parse_feeder, Network, SwitchVector};
pub use powerflow::{InjectionState, PfConfig, PowerFlowSolution};
