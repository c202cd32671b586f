//! Hamiltonians, the truncated hierarchy and its closure.

pub mod closure;
pub mod expr;
pub mod hamiltonian;
pub mod rational;
pub mod state;

pub use closure::{
    apply_closure, expand_distribution, ClosedEquation, ClosedSystem, ClosureKind, ClosureSpec,
    EquationTerm, Factor, Field, Monomial, TermKind,
};
pub use expr::{parse_expression, Origin, ParsedExpr};
pub use hamiltonian::{
    build_liouvillean, coupling_operator, phase_variable_names, HamiltonianSpec, OperatorSpec,
    OperatorTerm, PhaseAxis, PhaseBox, MAX_PARTICLES,
};
pub use rational::{CompiledRational, Polynomial, RationalFunction};
pub use state::{collision_term, exchange_asymmetry, HierarchyState, NormForm, StateComponent};
