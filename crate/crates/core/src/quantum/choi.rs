use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::tensor::{
    kron, partial_trace, partial_transpose, permute_systems, Complex64, ComplexMatrix, Operator, SpaceLayout,
    UNITARY_TOL,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChoiKind {
    /// No input legs.
    State,
    /// Completely positive and trace preserving.
    Channel,
    Generic,
}

/// Choi operator with its input and output legs named.
#[derive(Clone, Debug, PartialEq)]
pub struct ChoiOperator {
    pub op: Operator,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub kind: ChoiKind,
}

impl ChoiOperator {
    pub fn matrix(&self) -> &ComplexMatrix {
        &self.op.matrix
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.op.layout
    }

    /// Max-abs deviation of `Tr_out J` from `I_in`.
    pub fn trace_preservation_error(&self) -> Result<f64> {
        let reduced = self.op.partial_trace(&self.outputs)?;
        Ok(reduced
            .matrix
            .max_abs_diff(&ComplexMatrix::identity(reduced.layout.total_dim())))
    }

    /// Smallest eigenvalue.
    pub fn psd_margin(&self) -> Result<f64> {
        crate::tensor::min_eigenvalue(&self.op.matrix)
    }
}

/// `|K⟩⟩ = Σ_i |i⟩ ⊗ K|i⟩`, input index most significant.
fn vectorize(k: &ComplexMatrix) -> Vec<Complex64> {
    let (dout, din) = (k.rows(), k.cols());
    let mut v = Vec::with_capacity(din * dout);
    for i in 0..din {
        for o in 0..dout {
            v.push(k[(o, i)]);
        }
    }
    v
}

/// Choi operator `Σ_K |K⟩⟩⟨⟨K|` of the CP map with the given Kraus operators.
/// Either layout may be empty (state preparation or effect).
pub fn choi_of_kraus(kraus: &[ComplexMatrix], input: &SpaceLayout, output: &SpaceLayout) -> Result<ChoiOperator> {
    let (din, dout) = (input.total_dim(), output.total_dim());
    let layout = input.concat(output)?;
    let n = din * dout;
    let mut m = ComplexMatrix::zeros(n, n);
    for k in kraus {
        if k.rows() != dout || k.cols() != din {
            return Err(Error::Shape(format!(
                "Kraus operator is {}x{}, expected {dout}x{din}",
                k.rows(),
                k.cols()
            )));
        }
        m += &ComplexMatrix::outer(&vectorize(k), &vectorize(k));
    }
    let kind = if input.is_empty() {
        ChoiKind::State
    } else {
        let sum: ComplexMatrix = kraus
            .iter()
            .fold(ComplexMatrix::zeros(din, din), |acc, k| &acc + &k.adjoint().matmul(k));
        if sum.max_abs_diff(&ComplexMatrix::identity(din)) < 1e-10 {
            ChoiKind::Channel
        } else {
            ChoiKind::Generic
        }
    };
    Ok(ChoiOperator {
        op: Operator::new(m, layout)?,
        inputs: input.labels().map(str::to_string).collect(),
        outputs: output.labels().map(str::to_string).collect(),
        kind,
    })
}

/// `𝔠(U) = d (I ⊗ U)|φ⁺⟩⟨φ⁺|(I ⊗ U†)` on legs `input`, `output`.
pub fn choi_of_unitary_labeled(u: &ComplexMatrix, input: &str, output: &str) -> Result<ChoiOperator> {
    let d = u.check_square()?;
    let dev = u.unitarity_error();
    if dev > UNITARY_TOL {
        return Err(Error::Unitarity { deviation: dev });
    }
    let v = vectorize(u);
    Ok(ChoiOperator {
        op: Operator::new(
            ComplexMatrix::outer(&v, &v),
            SpaceLayout::new(vec![(input.to_string(), d), (output.to_string(), d)])?,
        )?,
        inputs: vec![input.to_string()],
        outputs: vec![output.to_string()],
        kind: ChoiKind::Channel,
    })
}

/// [`choi_of_unitary_labeled`] with legs `in`, `out`.
pub fn choi_of_unitary(u: &ComplexMatrix, d: usize) -> Result<ChoiOperator> {
    if u.rows() != d {
        return Err(Error::Shape(format!(
            "unitary has dimension {}, expected {d}",
            u.rows()
        )));
    }
    choi_of_unitary_labeled(u, "in", "out")
}

/// Link product `A ∗ B = Tr_common[(A^{T_common} ⊗ I)(I ⊗ B)]`; legs are
/// matched by label and the result carries `A`'s remaining legs followed by
/// `B`'s.
pub fn link_product<S: AsRef<str>>(a: &Operator, b: &Operator, common: &[S]) -> Result<Operator> {
    let common: Vec<&str> = common.iter().map(|s| s.as_ref()).collect();
    for &l in &common {
        let (da, db) = (a.layout.dim_of(l)?, b.layout.dim_of(l)?);
        if da != db {
            return Err(Error::Shape(format!("shared leg {l} has dimensions {da} and {db}")));
        }
    }
    let a_rest = a.layout.without(&common)?;
    let b_rest = b.layout.without(&common)?;
    let a_labels: HashSet<&str> = a_rest.labels().collect();
    if let Some(clash) = b_rest.labels().find(|l| a_labels.contains(l)) {
        return Err(Error::Label(format!(
            "leg {clash} appears in both operands but is not linked"
        )));
    }
    let common_layout = a.layout.only(&common)?;
    let order: Vec<&str> = a_rest
        .labels()
        .chain(common.iter().copied())
        .chain(b_rest.labels())
        .collect();

    let a_pt = partial_transpose(&a.matrix, &a.layout, &common)?;
    let a_ext = kron(&a_pt, &ComplexMatrix::identity(b_rest.total_dim()));
    let (a_ext, _) = permute_systems(&a_ext, &a.layout.concat(&b_rest)?, &order)?;
    let b_ext = kron(&ComplexMatrix::identity(a_rest.total_dim()), &b.matrix);
    let (b_ext, full) = permute_systems(&b_ext, &a_rest.concat(&b.layout)?, &order)?;

    let prod = a_ext.matmul(&b_ext);
    let traced: Vec<&str> = common_layout.labels().collect();
    let (m, layout) = partial_trace(&prod, &full, &traced)?;
    Operator::new(m, layout)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{max_entangled, pauli_x};
    use crate::tensor::{c64, haar_unitary};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_choi_is_scaled_bell_projector() {
        let j = choi_of_unitary(&ComplexMatrix::identity(2), 2).unwrap();
        let bell = max_entangled(2).unwrap().projector().scale_real(2.0);
        assert!(j.matrix().max_abs_diff(&bell) < 1e-15);
    }

    #[test]
    fn choi_trace_is_dimension_and_channel_condition_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for d in 2..=4 {
            let u = haar_unitary(d, &mut rng);
            let j = choi_of_unitary(&u, d).unwrap();
            assert!((j.matrix().trace() - c64(d as f64, 0.0)).norm() < 1e-12);
            assert!(j.trace_preservation_error().unwrap() < 1e-12);
            assert!(j.psd_margin().unwrap() > -1e-12);
            assert_eq!(j.kind, ChoiKind::Channel);
        }
    }

    #[test]
    fn choi_expansion_matches_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = haar_unitary(3, &mut rng);
        let j = choi_of_unitary(&u, 3).unwrap();
        let mut expect = ComplexMatrix::zeros(9, 9);
        for i in 0..3 {
            for k in 0..3 {
                let mut eik = ComplexMatrix::zeros(3, 3);
                eik[(i, k)] = c64(1.0, 0.0);
                let right = u.matmul(&eik).matmul(&u.adjoint());
                expect += &kron(&eik, &right);
            }
        }
        assert!(j.matrix().max_abs_diff(&expect) < 1e-14);
    }

    #[test]
    fn choi_of_x_is_supported_on_01_and_10() {
        let j = choi_of_unitary(&pauli_x(), 2).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                let inside = (r == 1 || r == 2) && (c == 1 || c == 2);
                if !inside {
                    assert_eq!(j.matrix()[(r, c)], c64(0.0, 0.0));
                } else {
                    assert_eq!(j.matrix()[(r, c)], c64(1.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn choi_rejects_non_unitary() {
        let m = ComplexMatrix::from_real(2, 2, &[1.0, 1.0, 0.0, 1.0]).unwrap();
        assert!(matches!(choi_of_unitary(&m, 2), Err(Error::Unitarity { .. })));
    }

    #[test]
    fn global_phase_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = haar_unitary(3, &mut rng);
        let a = choi_of_unitary(&u, 3).unwrap();
        let b = choi_of_unitary(&u.scale(Complex64::from_polar(1.0, 0.7)), 3).unwrap();
        assert!(a.matrix().max_abs_diff(b.matrix()) < 1e-14);
    }

    #[test]
    fn link_applies_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = haar_unitary(3, &mut rng);
        let psi: Vec<Complex64> = vec![c64(0.3, 0.1), c64(-0.2, 0.5), c64(0.6, 0.0)];
        let rho = ComplexMatrix::outer(&psi, &psi);
        let rho_op = Operator::new(rho.clone(), SpaceLayout::from_pairs(&[("in", 3)]).unwrap()).unwrap();
        let j = choi_of_unitary(&u, 3).unwrap();
        let out = link_product(&rho_op, &j.op, &["in"]).unwrap();
        let expect = u.matmul(&rho).matmul(&u.adjoint());
        assert!(out.matrix.max_abs_diff(&expect) < 1e-13);
        assert_eq!(out.layout.labels().collect::<Vec<_>>(), vec!["out"]);
    }

    #[test]
    fn link_composes_unitaries() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = haar_unitary(2, &mut rng);
        let v = haar_unitary(2, &mut rng);
        let ju = choi_of_unitary_labeled(&u, "a", "b").unwrap();
        let jv = choi_of_unitary_labeled(&v, "b", "c").unwrap();
        let comp = link_product(&ju.op, &jv.op, &["b"]).unwrap();
        let expect = choi_of_unitary_labeled(&v.matmul(&u), "a", "c").unwrap();
        assert!(comp.matrix.max_abs_diff(expect.matrix()) < 1e-13);
    }

    #[test]
    fn link_with_disjoint_legs_is_tensor_product() {
        let a = Operator::new(
            ComplexMatrix::from_real(2, 2, &[1.0, 2.0, 2.0, 3.0]).unwrap(),
            SpaceLayout::from_pairs(&[("x", 2)]).unwrap(),
        )
        .unwrap();
        let b = Operator::new(
            ComplexMatrix::from_real(3, 3, &[1.0, 0.0, 4.0, 0.0, 2.0, 0.0, 4.0, 0.0, 5.0]).unwrap(),
            SpaceLayout::from_pairs(&[("y", 3)]).unwrap(),
        )
        .unwrap();
        let out = link_product(&a, &b, &[] as &[&str]).unwrap();
        assert!(out.matrix.max_abs_diff(&kron(&a.matrix, &b.matrix)) < 1e-15);
    }

    #[test]
    fn link_rejects_mismatched_or_clashing_legs() {
        let a = Operator::identity(SpaceLayout::from_pairs(&[("x", 2), ("y", 2)]).unwrap());
        let b = Operator::identity(SpaceLayout::from_pairs(&[("x", 3)]).unwrap());
        assert!(matches!(link_product(&a, &b, &["x"]), Err(Error::Shape(_))));
        let c = Operator::identity(SpaceLayout::from_pairs(&[("y", 2)]).unwrap());
        assert!(matches!(link_product(&a, &c, &[] as &[&str]), Err(Error::Label(_))));
    }

    #[test]
    fn kraus_choi_of_unitary_matches() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let u = haar_unitary(2, &mut rng);
        let a = choi_of_kraus(
            std::slice::from_ref(&u),
            &SpaceLayout::from_pairs(&[("in", 2)]).unwrap(),
            &SpaceLayout::from_pairs(&[("out", 2)]).unwrap(),
        )
        .unwrap();
        assert!(a.matrix().max_abs_diff(choi_of_unitary(&u, 2).unwrap().matrix()) < 1e-15);
        assert_eq!(a.kind, ChoiKind::Channel);
    }
}
