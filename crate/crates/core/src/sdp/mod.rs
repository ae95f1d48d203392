//! Standard-form assembly of the inversion SDP and a self-contained
//! operator-splitting (ADMM) solver.
//!
//! Two solve paths share one iteration driver: [`admm_solve`] works on any
//! [`ConicProgram`] with a dense factorization of the equality system, and
//! [`solve_inversion`] exploits the structure of the inversion problem so
//! that only matrix-sized objects are ever formed. The latter also restricts
//! both PSD blocks to the diagonal-phase invariant sectors ([`PhaseSectors`]).

mod admm;
mod inversion;
mod program;
mod realify;
mod sectors;

pub use admm::{admm_solve, IterationRecord, Solution, SolveStatus, SolverConfig, GENERIC_SIZE_CAP};
pub use inversion::{
    mode_bound, solve_inversion, verify_point, verify_solution, InversionProblem, VerificationReport, VERIFY_SAMPLES,
};
pub use program::{
    assemble_inversion_sdp, inversion_point, AssembleConfig, Cone, ConicProgram, PointReport, RowBlock, SparseMatrix,
    VarKind, VarRange,
};
pub use realify::{derealify, realify, RealSymmetric};
pub use sectors::PhaseSectors;
