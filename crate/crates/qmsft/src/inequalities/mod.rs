//! Entropies, Dirichlet forms and the functional inequalities built on them.

pub mod decoherence;
pub mod entropy;
pub mod gap;
pub mod hc;
pub mod lsi;
pub mod nogo;

pub use decoherence::*;
pub use entropy::*;
pub use gap::*;
pub use hc::*;
pub use lsi::*;
pub use nogo::*;
