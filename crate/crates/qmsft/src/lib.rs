//! Decoherence-free functional inequalities for finite-dimensional quantum Markov semigroups.

pub mod error;
pub mod inequalities;
pub mod linalg;
pub mod models;
pub mod norms;
pub mod optim;
pub mod par;
pub mod qms;
pub mod random;
pub mod structure;

pub use error::{Error, Result};
