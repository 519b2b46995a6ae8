//! Numerical homogenization of steady diffusion in a two-phase periodic
//! composite whose phases are separated by an imperfect interface carrying a
//! flux proportional to the temperature jump.
//!
//! Pipeline: [`coefficients`] → [`geometry`] → [`cell`] → [`effective`] →
//! [`macro_solver`], validated against direct [`micro`] simulation by [`harness`].

pub mod cell;
pub mod coefficients;
pub mod config;
pub mod effective;
pub mod error;
pub mod fem;
pub mod expr;
pub mod geometry;
pub mod harness;
pub mod macro_solver;
pub mod micro;

pub use error::{Error, Result};
