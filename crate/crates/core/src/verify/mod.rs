//! Residual monitors, bound checks and the independent Riemannian oracle.

mod bounds;
mod identities;
mod oracle;
mod suite;

pub use bounds::*;
pub use identities::*;
pub use oracle::*;
pub use suite::*;
