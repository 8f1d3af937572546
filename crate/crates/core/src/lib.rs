//! Distributed graph isomorphism in the CONGEST model: a synchronous
//! network simulator, the exact fingerprint decision protocol, the
//! label-based property tester and approximate isomorphism output, a
//! one-pass streaming variant, and lower-bound instance generators.

pub mod approx;
pub mod central;
pub mod decision;
pub mod error;
pub mod graph;
pub mod instances;
pub mod rng;
pub mod protocols;
pub mod sim;
pub mod streaming;
pub mod testing;

pub use error::{Error, Result, SimError};
