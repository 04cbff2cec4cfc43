//! Time-step simulation of a grid-connected microgrid that hosts a residential
//! EV parking station.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: time grid, tariffs, profiles, and the EV battery model.
//! - [`fleet`]: seeded generation and validation of EV fleets.
//! - [`policy`]: per-slot charge/discharge/idle decisions for the three methods.
//! - [`dispatch`]: power allocation, objective accounting, the simulation loop,
//!   and an exhaustive schedule search used as a lower-bound oracle.
//! - [`ingest`]: profile/fleet/scenario files and synthetic profile builders.
//! - [`cli`]: the `run`, `compare`, `gen-fleet`, and `sweep` commands.

pub mod cli;
pub mod dispatch;
mod error;
pub mod fleet;
pub mod format;
pub mod ingest;
pub mod model;
pub mod policy;

pub use error::{Error, Result};
