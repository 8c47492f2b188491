pub mod added_mass;
pub mod cli;
pub mod body;
pub mod config;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod integrator;
pub mod optimal;
pub mod trajectory;
pub mod verify;
pub mod so3;

pub use error::{Error, Result};
