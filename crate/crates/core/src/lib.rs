//! Mean-field driving and routing equilibria of autonomous vehicles on road
//! networks, with an LWR baseline and tools to validate the results.

pub mod backward;
pub mod costs;
pub mod error;
pub mod forward;
pub mod io;
pub mod network;
pub mod solver;
pub mod validate;

pub use error::{Error, Result};
