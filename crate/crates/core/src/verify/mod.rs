//! Numerical certification: vector-inequality envelopes, the discrete
//! Friedrich constant, Green's formulas and scalar potentials.

pub mod friedrich;
pub mod green;
pub mod inequalities;
pub mod potential;

pub use friedrich::{friedrich_constant, FriedrichOptions, FriedrichReport};
pub use green::{check_green_formulas, GreenFields, GreenResiduals};
pub use inequalities::{check_ineq1, check_ineq2, InequalityReport};
pub use potential::extract_scalar_potential;
