//! Experiment harness: configuration, suites, reports and path emission.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod paths;
pub mod report;
pub mod stats;
pub mod suites;
