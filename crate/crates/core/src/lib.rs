//! Pre-deployment functional-safety and security analysis for
//! software-defined-vehicle artifacts.
//!
//! The crate is organised along the two analysis tracks:
//!
//! * **code analysis**: [`catalog`] ground truth, [`retrieval`] shortlisting,
//!   [`extraction`] of signal usage through the [`gateway`], [`eventchain`]
//!   modelling and [`rules`] checking of before/after safety rules;
//! * **topology analysis**: metamodel-conformant instance models and
//!   OCL-subset security constraints in [`topology`].
//!
//! [`pipeline`] wires both tracks end to end, persists artifacts and runs the
//! evaluation harness.

pub mod catalog;
pub mod digest;
pub mod eventchain;
pub mod extraction;
pub mod gateway;
pub mod http;
pub mod names;
pub mod pipeline;
pub mod retrieval;
pub mod rules;
pub mod topology;
