//! Exact simulation of heralded universal unitary-inversion circuits and the
//! semidefinite programs that bound their success probability.
//!
//! The crate is organized bottom-up:
//!
//! * [`tensor`]: dense complex matrices and labeled tensor factors.
//! * [`quantum`]: Choi operators, the link product and standard gates.
//! * [`protocols`]: branch-exact simulation of the inversion protocol and the
//!   closed-form success probabilities and bounds.
//! * [`combs`]: comb, process-matrix and universality constraints.
//! * [`sdp`]: conic program assembly and an operator-splitting solver.

pub mod combs;
pub mod error;
pub mod protocols;
pub mod quantum;
pub mod sdp;
pub mod tensor;

pub use error::{Error, Result};
