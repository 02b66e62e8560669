//! Reputation-weighted proof-of-stake ledger for crowdsourced vehicle
//! positions, with the validation heuristics, a desk-scale vehicular
//! simulator and attack injectors used to evaluate it.

pub mod analysis;
pub mod attacks;
pub mod config;
pub mod consensus;
pub mod crypto;
mod error;
pub mod geometry;
pub mod identity;
pub mod ledger;
pub mod report;
pub mod sim;
pub mod validation;
pub mod world;

pub use error::{Error, Result};
