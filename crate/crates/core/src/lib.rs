//! Simulator for two-sided medical consultation: a masked actor-critic
//! policy proposes which symptom to ask about next, and a calibrated
//! binary-logit scorer turns the collected evidence into a diagnosis.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnosis;
pub mod environment;
pub mod error;
pub mod harness;
pub mod inquiry;
pub mod kb;
pub mod optim;
pub mod orchestrator;
pub mod policy;
pub mod types;

pub use error::{Error, Result};
