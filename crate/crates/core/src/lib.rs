//! Detect, localize and repair behavioral inconsistency across a family of
//! executable BPMN models produced from one written process description.
//!
//! The pipeline: [`bpmn`] parses models, [`simulation`] runs them over a case
//! population into KPI vectors, [`distribution`] measures how dispersed those
//! vectors are, [`diagnosis`] localizes the divergence between two
//! representative models to gateways, and [`ambiguity`] maps diagnosed
//! gateways back to narrative text and drives evidence-backed rewrites.

pub mod ambiguity;
pub mod bpmn;
pub mod case;
pub mod condition;
pub mod diagnosis;
pub mod distribution;
pub mod exec;
pub mod simulation;

pub use rust_decimal::Decimal;
