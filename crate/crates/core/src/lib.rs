//! Bulk-surface Cahn-Hilliard-Brinkman simulator on the unit square.

pub mod brinkman;
pub mod cahnhilliard;
pub mod config;
pub mod diagnostics;
pub mod elliptic;
pub mod error;
pub mod experiments;
pub mod fem;
pub mod geometry;
pub mod io;
pub mod potentials;
pub mod sparse;

pub use error::{Assumption, ChbError, Result};
