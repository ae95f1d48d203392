use crate::error::{Error, Result};
use crate::tensor::{c64, det, kron_power, ComplexMatrix};

/// Determinant tolerance for [`conjugate_via_antisym`].
pub const DET_TOL: f64 = 1e-8;

/// Sign of the permutation `p` of `0..p.len()`, or 0 if entries repeat.
fn levi_civita(p: &[usize]) -> i32 {
    let n = p.len();
    let mut seen = vec![false; n];
    for &x in p {
        if x >= n || seen[x] {
            return 0;
        }
        seen[x] = true;
    }
    let mut inversions = 0;
    for i in 0..n {
        for j in i + 1..n {
            if p[i] > p[j] {
                inversions += 1;
            }
        }
    }
    if inversions % 2 == 0 {
        1
    } else {
        -1
    }
}

/// Isometry `V_A : ℂ^d → (ℂ^d)^{⊗(d−1)}` onto the antisymmetric subspace,
/// `V_A = Σ ε_{k₁…k_d}/√((d−1)!) |k₂…k_d⟩⟨k₁|`.
///
/// Rows enumerate `(k₂,…,k_d)` in mixed radix; `k₁` is the one index missing
/// from the tuple (tuples with repeats contribute nothing).
pub fn antisym_isometry(d: usize) -> Result<ComplexMatrix> {
    if d < 2 {
        return Err(Error::InvalidArgument(format!("dimension {d} < 2")));
    }
    let rows = d.pow(d as u32 - 1);
    let norm = 1.0 / ((1..d).product::<usize>() as f64).sqrt();
    let mut v = ComplexMatrix::zeros(rows, d);
    let mut tuple = vec![0usize; d - 1];
    for r in 0..rows {
        let mut rem = r;
        for slot in (0..d - 1).rev() {
            tuple[slot] = rem % d;
            rem /= d;
        }
        let mut present = vec![false; d];
        for &t in &tuple {
            present[t] = true;
        }
        if present.iter().filter(|&&p| p).count() != d - 1 {
            continue;
        }
        let k1 = present.iter().position(|&p| !p).unwrap();
        let mut full = Vec::with_capacity(d);
        full.push(k1);
        full.extend_from_slice(&tuple);
        v[(r, k1)] = c64(levi_civita(&full) as f64 * norm, 0.0);
    }
    Ok(v)
}

/// `V_A† u^{⊗(d−1)} V_A` for any square `u`; equals `det(u)·ū` when `u` is
/// unitary.
pub fn antisym_conjugation_unchecked(u: &ComplexMatrix) -> Result<ComplexMatrix> {
    let d = u.check_square()?;
    let v = antisym_isometry(d)?;
    Ok(v.adjoint().matmul(&kron_power(u, d - 1)).matmul(&v))
}

/// Complex conjugate of `u ∈ SU(d)` built from `d − 1` parallel uses.
pub fn conjugate_via_antisym(u: &ComplexMatrix, d: usize) -> Result<ComplexMatrix> {
    if u.rows() != d || !u.is_square() {
        return Err(Error::Shape(format!("expected {d}x{d}, got {}x{}", u.rows(), u.cols())));
    }
    let det_u = det(u)?;
    if (det_u - c64(1.0, 0.0)).norm() > DET_TOL {
        return Err(Error::Determinant {
            modulus: det_u.norm(),
            phase: det_u.arg(),
        });
    }
    antisym_conjugation_unchecked(u)
}
