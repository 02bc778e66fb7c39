//! Command-line harness for the geometric Lorenz experiments.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod commands;
pub mod config;
pub mod figures;
pub mod output;
