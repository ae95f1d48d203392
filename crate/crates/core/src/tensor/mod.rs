//! Dense complex linear algebra and multipartite tensor bookkeeping.

mod layout;
mod linalg;
mod matrix;

pub(crate) use layout::{add_replaced_with_offsets, trace_average_with_offsets, trace_replace_with_offsets};
pub use layout::{
    embed_with_identity, partial_trace, partial_transpose, permute_systems, permute_vector, trace_replace, Operator,
    SpaceLayout,
};
pub use linalg::{
    coords_to_herm, det, haar_special_unitary, haar_unitary, herm_coord_len, herm_eig, herm_eigenvalues,
    herm_to_coords, min_eigenvalue, qr, su_normalize, HERMITIAN_TOL, UNITARY_TOL,
};
pub(crate) use linalg::{herm_eig_unchecked, offdiag_coord};
pub use matrix::{kron, kron_all, kron_power, ComplexMatrix};

pub use num_complex::Complex64;

/// Shorthand for a complex scalar.
pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}
