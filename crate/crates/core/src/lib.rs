//! Simulation core for a one-legged hopper whose leg is a chain of
//! material-derived spring elements.

pub mod behavior;
pub mod config;
pub mod controller;
pub mod dynamics;
pub mod error;
pub mod material;
pub mod metrics;
pub mod sim;
pub mod stability;
pub mod stats;
