//! Instrumental-variable estimation of full treatment effects for two-part
//! treatments, where the instrument may move some units into only one part.
//!
//! The crate covers data loading, least squares and 2SLS with robust and
//! clustered covariances, first stages and IV estimands for five treatment
//! definitions, bounds on the local average full treatment effect, mover
//! diagnostics, and a principal-strata simulator that checks every
//! identity on exact population moments.

pub mod bounds;
pub mod data;
pub mod derived;
pub mod diagnostics;
pub mod error;
pub mod estimands;
pub mod estimate;
pub mod fixtures;
pub mod regression;
pub mod strata;
