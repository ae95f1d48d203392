//! Heralded inversion protocols built from gate teleportation and
//! antisymmetric-subspace conjugation, simulated exactly at branch level,
//! plus the closed-form probabilities they are measured against.

mod formulas;
mod simulate;
mod witness;

pub use formulas::{
    affordable_rounds, min_uses_ok, theorem1_probability, theorem2_parallel_bound, transposition_parallel_optimum,
};
pub use simulate::{
    adaptive_protocol, inversion_round_kraus, monte_carlo_run, recovery_operator, teleport_branch_kraus, BranchOutcome,
    BranchStatus, MonteCarloStats, ProtocolReport,
};
pub use witness::{protocol_comb_witness, CombWitness};
