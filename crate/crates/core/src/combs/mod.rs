//! Deterministic combs, process matrices and the finite reduction of the
//! universality constraint.
//!
//! All structures act on the layout `P, I₁, O₁, …, I_k, O_k, F`: `P` is the
//! input of the global past, `I_j`/`O_j` are the input and output wires of
//! the `j`-th black-box slot, `F` is the global future.

mod constraints;
mod sample;
mod span;
mod structure;

pub use constraints::{
    comb_constraint_operators, ico_constraint_operators, inverse_target, slot_link, structure_constraint_operators,
    universality_constraints, universality_residual, ConstraintBlock, LinearFunctional, UniversalityRows,
};
pub use sample::random_comb;
pub use span::{
    channel_spanning_set, channel_spanning_set_with, choi_power, spanning_unitary_set, ChannelSpan, OrthoBasis,
    SpanningSet, RANK_TOL, SATURATION_WINDOW,
};
pub use structure::{
    comb_residuals, ico_residuals, slot_input, slot_output, structure_residuals, CausalProjector, CombMode,
    CombResiduals, CombStructure, ProcessResiduals, Tooth,
};
