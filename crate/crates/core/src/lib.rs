//! Optimal adaptive and deterministic glide paths for defined-contribution
//! savings under a fitted jump-diffusion market, with Monte Carlo and
//! block-bootstrap evaluation.

pub mod adaptive;
pub mod cli;
pub mod error;
pub mod glide;
pub mod jump_model;
pub mod market_data;
pub mod report;
pub mod rng;
pub mod simulation;
pub mod strategy;
pub mod synthetic;

pub use error::{Error, Result};
