//! Pricing of target volatility options under the lognormal fractional SABR
//! model.

pub mod bsm;
pub mod error;
pub mod fbm;
pub mod harness;
pub mod identities;
pub mod mc;
pub mod pricers;
pub mod quad;
pub mod rng;
pub mod specfun;

pub use error::{Error, Result};
