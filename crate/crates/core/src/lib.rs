//! Non-Markovian relaxation of a two-ladder chiral molecule model.
//!
//! Collision statistics enter through a memory kernel; the crate evaluates
//! closed-form Laplace-space observables of the infinite ladder, integrates
//! the finite-ladder master equations in time, and simulates the exact
//! renewal dynamics by Monte Carlo.

pub mod analysis;
pub mod collision_models;
pub mod error;
pub mod laplace_engine;
pub mod mc_oracle;
pub mod reduced_dynamics;
pub mod special_functions;
pub mod volterra_solver;

pub use error::{Error, Result};
