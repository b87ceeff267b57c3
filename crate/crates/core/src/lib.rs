//! Numerical stability theory for one-parameter natural families of
//! finite-type holomorphic maps.

pub mod activity;
pub mod config;
pub mod continuation;
pub mod error;
pub mod families;
pub mod orbit;
pub mod scan;
pub mod shooting;
pub mod sphere;
pub mod verify;

pub use error::{Error, Result};
