//! Identification and double-robust estimation for discrete-instrument
//! potential-outcomes models with a finite support restriction on response
//! types.
//!
//! The pipeline: declare a model ([`model`]), decide which functionals are
//! identified by solving finite linear systems ([`identify`]), estimate the
//! identified ones with cross-fitted ℓ1-regularized double-robust scores
//! ([`lasso`], [`estimate`]), attach analytic and multiplier-bootstrap
//! inference ([`inference`]), and verify against exact synthetic populations
//! ([`simulate`]).

pub mod driver;
pub mod estimate;
pub mod identify;
pub mod inference;
pub mod lasso;
pub mod linalg;
pub mod model;
pub mod simulate;
