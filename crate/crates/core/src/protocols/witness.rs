use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::combs::{comb_residuals, slot_input, slot_output, universality_residual, CombMode, CombStructure};
use crate::error::{Error, Result};
use crate::quantum::{antisym_isometry, choi_of_kraus, link_product, max_entangled};
use crate::tensor::{haar_special_unitary, min_eigenvalue, ComplexMatrix, Operator, SpaceLayout};

/// Number of random unitaries the witness is checked against.
const CHECK_SAMPLES: usize = 50;
const CHECK_SEED: u64 = 0x5eed_0001;

/// Choi matrix of the success branch of one protocol round, viewed as a
/// probabilistic supermap with `k = d − 1` slots, with a deterministic comb
/// dominating it.
#[derive(Clone, Debug)]
pub struct CombWitness {
    pub structure: CombStructure,
    pub s: ComplexMatrix,
    pub c: ComplexMatrix,
    pub p: f64,
    /// Largest `|S ∗ 𝔠(U)^{⊗k} − p·𝔠(U†)|` over the check samples.
    pub universality_residual: f64,
    /// Largest comb-chain residual of `C`.
    pub comb_residual: f64,
    pub psd_margin_s: f64,
    pub psd_margin_slack: f64,
}

fn layout(labels: &[String], d: usize) -> Result<SpaceLayout> {
    SpaceLayout::new(labels.iter().map(|l| (l.clone(), d)).collect())
}

/// Builds the single-round witness for `d ∈ {2, 3}` by link-composing:
///
/// * `|φ⁺⟩` on `(R, F)` followed by `V_A : R → I₁…I_k` (state preparation),
/// * `V_A† : O₁…O_k → R'` followed by the Bell effect `⟨φ⁺|` on `(P, R')`.
///
/// `S = J_prep ⊗ J_dec` and `C = J_prep ⊗ I_{P,O}`; both are verified before
/// being returned.
pub fn protocol_comb_witness(d: usize) -> Result<CombWitness> {
    if !(2..=3).contains(&d) {
        return Err(Error::InvalidArgument(format!(
            "witness is built for d ∈ {{2, 3}}, got {d}"
        )));
    }
    let k = d - 1;
    let ins: Vec<String> = (1..=k).map(slot_input).collect();
    let outs: Vec<String> = (1..=k).map(slot_output).collect();
    let v = antisym_isometry(d)?;

    let phi = max_entangled(d)?;
    let phi_op = Operator::new(phi.projector(), SpaceLayout::from_pairs(&[("R", d), ("F", d)])?)?;
    let embed = choi_of_kraus(
        std::slice::from_ref(&v),
        &SpaceLayout::from_pairs(&[("R", d)])?,
        &layout(&ins, d)?,
    )?;
    let prep = link_product(&phi_op, &embed.op, &["R"])?;

    let project = choi_of_kraus(
        &[v.adjoint()],
        &layout(&outs, d)?,
        &SpaceLayout::from_pairs(&[("R'", d)])?,
    )?;
    let bell_row = ComplexMatrix::new(1, d * d, phi.amplitudes().iter().map(|a| a.conj()).collect())?;
    let bell = choi_of_kraus(
        &[bell_row],
        &SpaceLayout::from_pairs(&[("P", d), ("R'", d)])?,
        &SpaceLayout::empty(),
    )?;
    let dec = link_product(&project.op, &bell.op, &["R'"])?;

    let structure = CombStructure::inversion(d, k, CombMode::Adaptive)?;
    let order: Vec<&str> = structure.layout.labels().collect();
    let s = link_product(&prep, &dec, &[] as &[&str])?.permute(&order)?;
    let c = prep.tensor(&Operator::identity(dec.layout.clone()))?.permute(&order)?;

    let p = 1.0 / (d * d) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(CHECK_SEED);
    let samples: Vec<ComplexMatrix> = (0..CHECK_SAMPLES).map(|_| haar_special_unitary(d, &mut rng)).collect();
    let uni = universality_residual(&s.matrix, p, &structure, &samples)?;
    let comb = comb_residuals(&c.matrix, &structure)?;
    let slack = &c.matrix - &s.matrix;
    let witness = CombWitness {
        psd_margin_s: min_eigenvalue(&s.matrix)?,
        psd_margin_slack: min_eigenvalue(&slack)?,
        comb_residual: comb.max_equality(),
        universality_residual: uni,
        structure,
        s: s.matrix,
        c: c.matrix,
        p,
    };
    let checks = [
        ("universality", witness.universality_residual, 1e-8),
        ("comb", witness.comb_residual, 1e-10),
        ("positivity of S", -witness.psd_margin_s, 1e-10),
        ("positivity of C − S", -witness.psd_margin_slack, 1e-10),
    ];
    for (what, residual, tol) in checks {
        if residual > tol {
            return Err(Error::Construction {
                what: what.to_string(),
                residual,
            });
        }
    }
    Ok(witness)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combs::inverse_target;

    #[test]
    fn qubit_witness_is_feasible() {
        let w = protocol_comb_witness(2).unwrap();
        assert_eq!(w.s.rows(), 16);
        assert!(w.universality_residual < 1e-8);
        assert!(w.s.hermiticity_error() == 0.0);
        assert!((w.c.trace().re - 4.0).abs() < 1e-12);
        // S ∗ 𝔠(U) = 𝔠(U†)/4 on a fresh sample
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let u = haar_special_unitary(2, &mut rng);
        let x = crate::combs::choi_power(&u, 1).unwrap();
        let out = crate::combs::slot_link(&w.s, &w.structure, &x).unwrap();
        assert!(out.max_abs_diff(&inverse_target(&u).unwrap().scale_real(0.25)) < 1e-12);
    }

    #[test]
    fn qutrit_witness_is_feasible() {
        let w = protocol_comb_witness(3).unwrap();
        assert_eq!(w.s.rows(), 729);
        assert!(w.universality_residual < 1e-8);
        assert!((w.p - 1.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_unsupported_dimension() {
        assert!(matches!(protocol_comb_witness(4), Err(Error::InvalidArgument(_))));
    }
}
