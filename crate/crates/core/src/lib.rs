//! Selection-model imputation for outcomes missing not at random.
//!
//! The crate fits Heckman's sample-selection model (two-step and maximum
//! likelihood), uses it for single and multiple imputation alongside
//! predictive mean matching and random-forest hot-deck imputation, pools
//! results with Rubin's rules and predict-then-combine intervals, and runs
//! Monte Carlo studies comparing the methods.

pub mod data;
pub mod error;
pub mod imputation;
pub mod linalg;
pub mod par;
pub mod pooling;
pub mod selection;
pub mod stats;
pub mod simulation;
pub mod stepwise;

pub use error::{Error, ErrorClass, Result};
