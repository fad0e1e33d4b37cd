//! Object-centric imitation learning testbed.
//!
//! The pipeline: a seeded top-down tabletop simulator ([`sim`]) with scripted
//! experts ([`expert`]) produces demonstration datasets ([`dataset`]); a
//! slot-attention video encoder ([`encoder`]) is pretrained by reconstruction
//! ([`trainer`]), then frozen while a transformer policy with a
//! Gaussian-mixture action head ([`policy`]) is trained by behavior cloning;
//! [`eval`] runs closed-loop rollouts and reports success rates across
//! generalization levels.

pub mod action;
pub mod config;
pub mod dataset;
pub mod encoder;
pub mod eval;
pub mod expert;
pub mod policy;
pub mod ppm;
pub mod sim;
pub mod trainer;
pub mod transformer;

pub use action::Action;
