//! P1 finite elements: sparse storage, assembly, constraints and solvers.

pub mod assembly;
pub mod constraints;
pub mod direct;
pub mod krylov;
pub mod solve;
pub mod sparse;

pub use assembly::{
    assemble_convection, assemble_flux_load, assemble_interface_coupling, assemble_interface_load,
    assemble_mass, assemble_source, assemble_stiffness, lumped_mass, p1_gradients,
};
pub use constraints::{apply_constraints, Constraints, LinearSystem, Reduction};
pub use solve::{solve, solve_cg, solve_general, solve_with, Method, SolveReport, SolverOptions};
pub use sparse::{SparseMatrix, TripletBuilder};
