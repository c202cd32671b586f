//! Space-time Galerkin discretization and nonlinear solution.

pub mod decompose;
pub mod linear;
pub mod newton;
pub mod system;
pub mod tensor;

pub use decompose::{
    decompose, evaluate_on_grid, grid_positions, FastPart, SolutionDecomposition, MAX_GRID_POINTS,
};
pub use linear::{sparse_solve, TimeDiagonalSolver};
pub use newton::{
    coarsen, final_one_particle, newton, prolongate_solution, solve_by_continuation,
    solve_coefficients, solve_windows, ConvergenceReport, IterationRecord, SolveMethod,
    SolverSettings, WindowSolution,
};
pub use system::{Block, Discretization, GalerkinSystem, TimeWindow, MAX_DENSE_UNKNOWNS};
pub use tensor::{AxisSpec, CoefficientTensor, PhaseRole};
