use crate::error::{Error, Result};
use crate::tensor::{Complex64, ComplexMatrix, HERMITIAN_TOL};

/// Real symmetric matrix stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct RealSymmetric {
    pub n: usize,
    pub data: Vec<f64>,
}

impl RealSymmetric {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let m = faer::Mat::<f64>::from_fn(self.n, self.n, |i, j| self.get(i, j));
        m.self_adjoint_eigenvalues(faer::Side::Lower)
            .map_err(|e| Error::Factorization(format!("symmetric eigensolver: {e:?}")))
    }
}

/// Embeds a Hermitian `H = A + iB` as the real symmetric `[[A, −B], [B, A]]`.
/// The spectrum is that of `H` with every multiplicity doubled.
pub fn realify(h: &ComplexMatrix) -> Result<RealSymmetric> {
    let n = h.check_square()?;
    let dev = h.hermiticity_error();
    if dev > HERMITIAN_TOL * h.max_abs().max(1.0) {
        return Err(Error::Symmetry { deviation: dev });
    }
    let m = 2 * n;
    let mut data = vec![0.0; m * m];
    for i in 0..n {
        for j in 0..n {
            let z = h[(i, j)];
            data[i * m + j] = z.re;
            data[(i + n) * m + j + n] = z.re;
            data[i * m + j + n] = -z.im;
            data[(i + n) * m + j] = z.im;
        }
    }
    Ok(RealSymmetric { n: m, data })
}

/// Inverse of [`realify`]: reads `A` and `B` from the left column of blocks,
/// averaging with the right column.
pub fn derealify(r: &RealSymmetric) -> Result<ComplexMatrix> {
    if r.n % 2 != 0 {
        return Err(Error::Shape(format!("realified side {} is odd", r.n)));
    }
    let n = r.n / 2;
    Ok(ComplexMatrix::from_fn(n, n, |i, j| {
        let re = 0.5 * (r.get(i, j) + r.get(i + n, j + n));
        let im = 0.5 * (r.get(i + n, j) - r.get(i, j + n));
        Complex64::new(re, im)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::pauli_y;
    use crate::tensor::{c64, min_eigenvalue};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn pauli_y_spectrum_doubles() {
        let r = realify(&pauli_y()).unwrap();
        assert_eq!(r.n, 4);
        let ev = r.eigenvalues().unwrap();
        let expect = [-1.0, -1.0, 1.0, 1.0];
        for (a, b) in ev.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_maps_to_identity() {
        let r = realify(&ComplexMatrix::identity(3)).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(r.get(i, j), if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut m = ComplexMatrix::identity(2);
        m[(0, 1)] = c64(1.0, 0.0);
        assert!(matches!(realify(&m), Err(Error::Symmetry { .. })));
    }

    #[test]
    fn psd_status_is_preserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..20 {
            let n = 2 + trial % 4;
            let a = ComplexMatrix::from_fn(n, n, |_, _| {
                c64(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
            });
            // alternate PSD (A A†) and indefinite (A + A†) samples
            let h = if trial % 2 == 0 {
                a.matmul(&a.adjoint())
            } else {
                (&a + &a.adjoint()).scale_real(0.5)
            };
            let lo = min_eigenvalue(&h).unwrap();
            let r = realify(&h).unwrap();
            let lo_r = r.eigenvalues().unwrap()[0];
            assert!((lo - lo_r).abs() < 1e-10);
            let back = derealify(&r).unwrap();
            assert!(back.max_abs_diff(&h) < 1e-15);
            assert!(back.hermiticity_error() < 1e-8);
        }
    }
}
