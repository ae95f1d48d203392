use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use faer::Side;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::matrix::ComplexMatrix;
use crate::error::{Error, Result};

/// Hermiticity tolerance accepted by [`herm_eig`].
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Eigendecomposition of a Hermitian matrix: ascending eigenvalues and the
/// unitary whose columns are the matching eigenvectors.
pub fn herm_eig(m: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix)> {
    m.check_square()?;
    let dev = m.hermiticity_error();
    let scale = m.max_abs().max(1.0);
    if dev > HERMITIAN_TOL * scale {
        return Err(Error::Symmetry { deviation: dev });
    }
    herm_eig_unchecked(m)
}

/// Skips the symmetry check; only the lower triangle is read.
pub(crate) fn herm_eig_unchecked(m: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix)> {
    let evd = m
        .to_faer()
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Factorization(format!("Hermitian eigensolver: {e:?}")))?;
    let s = evd.S().column_vector();
    let values: Vec<f64> = (0..m.rows()).map(|i| s[i].re).collect();
    Ok((values, ComplexMatrix::from_faer_ref(evd.U())))
}

/// Eigenvalues only, ascending.
pub fn herm_eigenvalues(m: &ComplexMatrix) -> Result<Vec<f64>> {
    m.check_square()?;
    let dev = m.hermiticity_error();
    if dev > HERMITIAN_TOL * m.max_abs().max(1.0) {
        return Err(Error::Symmetry { deviation: dev });
    }
    let vals = m
        .to_faer()
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Factorization(format!("Hermitian eigensolver: {e:?}")))?;
    Ok(vals)
}

pub fn min_eigenvalue(m: &ComplexMatrix) -> Result<f64> {
    Ok(herm_eigenvalues(m)?.first().copied().unwrap_or(0.0))
}

/// Householder QR of a square matrix, returning `(Q, R)`.
pub fn qr(m: &ComplexMatrix) -> Result<(ComplexMatrix, ComplexMatrix)> {
    let n = m.check_square()?;
    let mut r = m.clone();
    let mut q = ComplexMatrix::identity(n);
    for k in 0..n.saturating_sub(1) {
        let norm_x: f64 = (k..n).map(|i| r[(i, k)].norm_sqr()).sum::<f64>().sqrt();
        if norm_x == 0.0 {
            continue;
        }
        let x0 = r[(k, k)];
        let phase = if x0.norm() > 0.0 {
            x0 / x0.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        // v = x + phase·‖x‖·e_k, H = I − 2 v v† / (v† v)
        let mut v: Vec<Complex64> = (k..n).map(|i| r[(i, k)]).collect();
        v[0] += phase * norm_x;
        let vnorm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for j in 0..n {
            let dot: Complex64 = (k..n).map(|i| v[i - k].conj() * r[(i, j)]).sum();
            let f = dot * (2.0 / vnorm2);
            for i in k..n {
                r[(i, j)] -= v[i - k] * f;
            }
        }
        // Q ← Q H
        for i in 0..n {
            let dot: Complex64 = (k..n).map(|j| q[(i, j)] * v[j - k]).sum();
            let f = dot * (2.0 / vnorm2);
            for j in k..n {
                q[(i, j)] -= f * v[j - k].conj();
            }
        }
    }
    for i in 1..n {
        for j in 0..i {
            r[(i, j)] = Complex64::new(0.0, 0.0);
        }
    }
    Ok((q, r))
}

/// Determinant by LU with partial pivoting.
pub fn det(m: &ComplexMatrix) -> Result<Complex64> {
    let n = m.check_square()?;
    let mut a = m.clone();
    let mut det = Complex64::new(1.0, 0.0);
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| a[(i, k)].norm().total_cmp(&a[(j, k)].norm()))
            .unwrap();
        if a[(p, k)].norm() == 0.0 {
            return Ok(Complex64::new(0.0, 0.0));
        }
        if p != k {
            for j in 0..n {
                let tmp = a[(k, j)];
                a[(k, j)] = a[(p, j)];
                a[(p, j)] = tmp;
            }
            det = -det;
        }
        let pivot = a[(k, k)];
        det *= pivot;
        for i in k + 1..n {
            let f = a[(i, k)] / pivot;
            for j in k..n {
                let t = a[(k, j)];
                a[(i, j)] -= f * t;
            }
        }
    }
    Ok(det)
}

/// Haar-distributed `d×d` unitary: complex Ginibre matrix, QR, then each
/// column of `Q` multiplied by the phase of the matching diagonal entry of `R`.
pub fn haar_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> ComplexMatrix {
    assert!(d >= 1, "dimension must be positive");
    let z = ComplexMatrix::from_fn(d, d, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
    });
    let (mut q, r) = qr(&z).expect("square");
    for j in 0..d {
        let rjj = r[(j, j)];
        let ph = if rjj.norm() > 0.0 {
            rjj / rjj.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        for i in 0..d {
            q[(i, j)] *= ph;
        }
    }
    q
}

/// Unitarity tolerance accepted by [`su_normalize`].
pub const UNITARY_TOL: f64 = 1e-8;

/// Rescales a unitary by `e^{-iθ/d}`, `θ = arg det u` (principal branch), so
/// that the determinant becomes one.
pub fn su_normalize(u: &ComplexMatrix) -> Result<ComplexMatrix> {
    let d = u.check_square()?;
    let dev = u.unitarity_error();
    if dev > UNITARY_TOL {
        return Err(Error::Unitarity { deviation: dev });
    }
    let theta = det(u)?.arg();
    Ok(u.scale(Complex64::from_polar(1.0, -theta / d as f64)))
}

/// Haar sample normalized into SU(d).
pub fn haar_special_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> ComplexMatrix {
    su_normalize(&haar_unitary(d, rng)).expect("Haar samples are unitary")
}

/// Number of real coordinates of an `n×n` Hermitian matrix.
pub fn herm_coord_len(n: usize) -> usize {
    n * n
}

/// Orthonormal real coordinates of a Hermitian matrix: the diagonal, then for
/// every `i < j` in row-major order the pair `(√2·Re h_ij, √2·Im h_ij)`.
/// The map is an isometry from the Frobenius inner product.
pub fn herm_to_coords(h: &ComplexMatrix, out: &mut [f64]) {
    let n = h.rows();
    debug_assert_eq!(out.len(), n * n);
    for i in 0..n {
        out[i] = h[(i, i)].re;
    }
    let mut k = n;
    for i in 0..n {
        for j in i + 1..n {
            // average the two triangles so slightly non-Hermitian input maps
            // to its Hermitian part
            let z = (h[(i, j)] + h[(j, i)].conj()) * 0.5;
            out[k] = SQRT_2 * z.re;
            out[k + 1] = SQRT_2 * z.im;
            k += 2;
        }
    }
}

pub fn coords_to_herm(x: &[f64], n: usize) -> ComplexMatrix {
    debug_assert_eq!(x.len(), n * n);
    let mut h = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        h[(i, i)] = Complex64::new(x[i], 0.0);
    }
    let mut k = n;
    for i in 0..n {
        for j in i + 1..n {
            let z = Complex64::new(x[k] * FRAC_1_SQRT_2, x[k + 1] * FRAC_1_SQRT_2);
            h[(i, j)] = z;
            h[(j, i)] = z.conj();
            k += 2;
        }
    }
    h
}

/// Coordinate index of the `(i, j)` entry (`i < j`) real part; the imaginary
/// part follows it.
pub(crate) fn offdiag_coord(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    // pairs preceding row i: Σ_{r<i} (n-1-r)
    let before = i * (2 * n - i - 1) / 2;
    n + 2 * (before + (j - i - 1))
}
