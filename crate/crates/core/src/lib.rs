//! Polynomial programs over boxes: RLT relaxations, quadrification and
//! degree reduction, an LP backend and a branch-and-bound driver.

pub mod algebra;
pub mod bench;
pub mod bnb;
pub mod generator;
pub mod lp;
pub mod problem;
pub mod reduction;
pub mod rlt;

pub use algebra::{Monomial, Multiset, Polynomial, VarKey};
pub use problem::{Constraint, PolynomialProgram, ProblemError, Sense, Variable};
pub use reduction::{reduce, ReducedProgram, ReductionError, Scheme};
pub use rlt::{build_relaxation, LinVarId, LinearRelaxation, RltError};
