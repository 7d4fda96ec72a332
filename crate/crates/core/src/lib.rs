//! Kinematic simulator and hierarchical control stack for printing with a
//! mobile manipulator over uneven ground.

pub mod config;
pub mod error;
pub mod harness;
pub mod mpc;
pub mod planner;
pub mod plant;
pub mod pose;
pub mod predictor;
pub mod report;
pub mod rng;
pub mod sensors;
pub mod terrain;

pub use error::{Error, Result};
