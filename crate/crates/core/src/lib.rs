//! Numerical laboratory for eta-forms of circle bundles over flat tori.
//!
//! The crate evaluates Bismut-superconnection heat traces of a family of
//! circle Dirac operators whose spectrum crosses zero along a hypersurface,
//! integrates them in time to eta-forms, compares the result with closed
//! Bernoulli-polynomial formulas, and checks the index identity
//! `dη̃ = ∫ ch + δ_{B₀} ch(ker)` as an identity of currents. A rank-2
//! matrix family exercises the same large-time mechanism in finite rank.

pub mod bernoulli;
pub mod circle_family;
pub mod currents;
pub mod error;
pub mod eta;
pub mod finite_rank;
pub mod grassmann;
pub mod quadrature;
pub mod torus_base;

pub use error::{Error, Result};
pub use grassmann::{exp_even, grade_select, wedge, Grade, Multivector};
pub use torus_base::{FormField, Grid, Hypersurface};
