use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::formulas::theorem1_probability;
use crate::error::{Error, Result};
use crate::quantum::{
    choi_of_unitary, conjugate_via_antisym, link_product, shift_clock, ChoiKind, ChoiOperator, PureState, DET_TOL,
};
use crate::tensor::{det, kron, Complex64, ComplexMatrix, Operator, SpaceLayout};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BranchStatus {
    Success,
    /// Failed, but enough uses remain to undo the correction and retry.
    Retry,
    /// Failed with no affordable retry.
    Exhausted,
}

#[derive(Clone, Debug)]
pub struct BranchOutcome {
    pub round: usize,
    pub i: usize,
    pub j: usize,
    /// Branch operator including its amplitude factor.
    pub kraus: ComplexMatrix,
    pub status: BranchStatus,
}

fn check_dim(u: &ComplexMatrix, d: usize) -> Result<()> {
    if u.rows() != d || u.cols() != d {
        return Err(Error::Shape(format!(
            "expected a {d}x{d} matrix, got {}x{}",
            u.rows(),
            u.cols()
        )));
    }
    Ok(())
}

fn check_index(d: usize, i: usize, j: usize) -> Result<()> {
    if i >= d || j >= d {
        return Err(Error::IndexOutOfRange(format!("outcome ({i}, {j}) for d = {d}")));
    }
    Ok(())
}

/// Gate teleportation of `u` onto the input: outcome `(i, j)` of the
/// generalized Bell measurement applies `uᵀ Xⁱ Zʲ / d`.
pub fn teleport_branch_kraus(u: &ComplexMatrix, d: usize, i: usize, j: usize) -> Result<ComplexMatrix> {
    check_dim(u, d)?;
    check_index(d, i, j)?;
    let (x, z) = shift_clock(d)?;
    Ok(u.transpose()
        .matmul(&x.pow(i))
        .matmul(&z.pow(j))
        .scale_real(1.0 / d as f64))
}

/// One round: conjugate `u` with `d − 1` parallel uses, then teleport the
/// conjugate. Branch `(i, j)` applies `u† Xⁱ Zʲ / d`; only `(0, 0)` succeeds.
pub fn inversion_round_kraus(u: &ComplexMatrix, d: usize) -> Result<Vec<BranchOutcome>> {
    let ubar = conjugate_via_antisym(u, d)?;
    let mut out = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            out.push(BranchOutcome {
                round: 1,
                i,
                j,
                kraus: teleport_branch_kraus(&ubar, d, i, j)?,
                status: if i == 0 && j == 0 {
                    BranchStatus::Success
                } else {
                    BranchStatus::Retry
                },
            });
        }
    }
    Ok(out)
}

/// One more use of `u` undoing a failed branch: `Z^{−j} X^{−i} u`.
pub fn recovery_operator(u: &ComplexMatrix, d: usize, i: usize, j: usize) -> Result<ComplexMatrix> {
    check_dim(u, d)?;
    check_index(d, i, j)?;
    if i == 0 && j == 0 {
        return Err(Error::Logic("the success branch needs no recovery".into()));
    }
    let (x, z) = shift_clock(d)?;
    Ok(z.pow((d - j) % d).matmul(&x.pow((d - i) % d)).matmul(u))
}

/// Exact outcome of running the adaptive protocol with a budget of `k` uses.
#[derive(Clone, Debug)]
pub struct ProtocolReport {
    pub d: usize,
    pub k: usize,
    pub rounds_used: usize,
    pub success_prob_exact: f64,
    pub success_prob_formula: f64,
    pub exhausted_prob: f64,
    /// Choi operator of the (trace non-increasing) success branch on `in`,
    /// `out`; equals `p·𝔠(u†)`.
    pub success_channel_choi: ChoiOperator,
    /// Uses consumed along each terminal path, keyed `round{r}:success` and
    /// `exhausted`.
    pub uses_consumed_per_branch: BTreeMap<String, usize>,
}

impl ProtocolReport {
    /// Success probability for a specific input state.
    pub fn success_prob_on(&self, psi: &[Complex64]) -> Result<f64> {
        let rho = Operator::new(
            ComplexMatrix::outer(psi, psi),
            SpaceLayout::from_pairs(&[("in", self.d)])?,
        )?;
        let out = link_product(&rho, &self.success_channel_choi.op, &["in"])?;
        Ok(out.matrix.trace().re)
    }
}

/// Choi of `K ∘ Φ` from the Choi of `Φ`: `(I ⊗ K) J (I ⊗ K)†`.
fn compose(j: &ComplexMatrix, k: &ComplexMatrix) -> ComplexMatrix {
    let lift = kron(&ComplexMatrix::identity(k.cols()), k);
    lift.matmul(j).matmul(&lift.adjoint())
}

/// Runs rounds while the budget allows. A round costs `d − 1` uses; after a
/// failure the correction is undone with one more use, but only if a further
/// round remains affordable afterwards (at least `d` uses left). This gives
/// `⌊(k+1)/d⌋` rounds.
///
/// All branches are summed exactly: the not-yet-terminated part of the
/// protocol is carried as the Choi operator of a CP map, so equivalent
/// branches merge instead of multiplying.
pub fn adaptive_protocol(u: &ComplexMatrix, d: usize, k: usize) -> Result<ProtocolReport> {
    check_dim(u, d)?;
    let det_u = det(u)?;
    if (det_u - Complex64::new(1.0, 0.0)).norm() > DET_TOL {
        return Err(Error::Determinant {
            modulus: det_u.norm(),
            phase: det_u.arg(),
        });
    }
    let n = d * d;
    let mut frontier = choi_of_unitary(&ComplexMatrix::identity(d), d)?.matrix().clone();
    let mut success = ComplexMatrix::zeros(n, n);
    let mut exhausted = ComplexMatrix::zeros(n, n);
    let mut uses = BTreeMap::new();
    let mut remaining = k;
    let mut consumed = 0;
    let mut rounds = 0;

    let branches = if k + 1 >= d {
        inversion_round_kraus(u, d)?
    } else {
        Vec::new()
    };
    while remaining + 1 >= d && !branches.is_empty() {
        rounds += 1;
        remaining -= d - 1;
        consumed += d - 1;
        let retry = remaining >= d;
        let mut next = ComplexMatrix::zeros(n, n);
        for b in &branches {
            let g = compose(&frontier, &b.kraus);
            if b.status == BranchStatus::Success {
                success += &g;
                uses.insert(format!("round{rounds}:success"), consumed);
            } else if retry {
                next += &compose(&g, &recovery_operator(u, d, b.i, b.j)?);
            } else {
                exhausted += &g;
            }
        }
        if !retry {
            frontier = ComplexMatrix::zeros(n, n);
            break;
        }
        remaining -= 1;
        consumed += 1;
        frontier = next;
    }
    exhausted += &frontier;
    uses.insert("exhausted".to_string(), consumed);

    let layout = SpaceLayout::from_pairs(&[("in", d), ("out", d)])?;
    Ok(ProtocolReport {
        d,
        k,
        rounds_used: rounds,
        success_prob_exact: success.trace().re / d as f64,
        success_prob_formula: theorem1_probability(d, k),
        exhausted_prob: exhausted.trace().re / d as f64,
        success_channel_choi: ChoiOperator {
            op: Operator::new(success, layout)?,
            inputs: vec!["in".into()],
            outputs: vec!["out".into()],
            kind: ChoiKind::Generic,
        },
        uses_consumed_per_branch: uses,
    })
}

/// Empirical statistics of sampled protocol runs.
#[derive(Clone, Debug, PartialEq)]
pub struct MonteCarloStats {
    pub trials: usize,
    pub successes: usize,
    pub rate: f64,
    /// Binomial standard error at the exact success probability.
    pub std_error: f64,
    pub expected: f64,
    /// Worst `1 − |⟨ψ|u·out⟩|²` over successful trials (0 if none).
    pub max_infidelity: f64,
}

impl MonteCarloStats {
    /// `|rate − expected|` in units of the standard error.
    pub fn z_score(&self) -> f64 {
        if self.std_error == 0.0 {
            if self.rate == self.expected {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.rate - self.expected).abs() / self.std_error
        }
    }
}

fn normalize(v: &mut [Complex64]) -> f64 {
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    for z in v.iter_mut() {
        *z /= n;
    }
    n
}

/// Samples the protocol `trials` times on input `psi`. Each trial draws from
/// its own ChaCha stream derived from one seed taken from `rng`, so results
/// do not depend on scheduling.
pub fn monte_carlo_run<R: Rng + ?Sized>(
    u: &ComplexMatrix,
    d: usize,
    k: usize,
    psi: &PureState,
    trials: usize,
    rng: &mut R,
) -> Result<MonteCarloStats> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    if psi.amplitudes().len() != d {
        return Err(Error::Shape(format!(
            "input state is not a single qudit of dimension {d}"
        )));
    }
    let report = adaptive_protocol(u, d, k)?;
    let branches = if k + 1 >= d {
        inversion_round_kraus(u, d)?
    } else {
        Vec::new()
    };
    let recoveries: Vec<Option<ComplexMatrix>> = branches
        .iter()
        .map(|b| recovery_operator(u, d, b.i, b.j).ok())
        .collect();
    let seed: u64 = rng.random();

    let run = |t: usize| -> (bool, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(t as u64);
        let mut state = psi.amplitudes().to_vec();
        let mut remaining = k;
        while remaining + 1 >= d && !branches.is_empty() {
            remaining -= d - 1;
            let outs: Vec<Vec<Complex64>> = branches.iter().map(|b| b.kraus.matvec(&state)).collect();
            let r: f64 = rng.random();
            let mut acc = 0.0;
            let mut pick = outs.len() - 1;
            for (idx, o) in outs.iter().enumerate() {
                acc += o.iter().map(|z| z.norm_sqr()).sum::<f64>();
                if r < acc {
                    pick = idx;
                    break;
                }
            }
            state = outs[pick].clone();
            normalize(&mut state);
            if branches[pick].status == BranchStatus::Success {
                let back = u.matvec(&state);
                let ov: Complex64 = psi.amplitudes().iter().zip(&back).map(|(a, b)| a.conj() * b).sum();
                return (true, 1.0 - ov.norm_sqr());
            }
            if remaining < d {
                break;
            }
            remaining -= 1;
            state = recoveries[pick].as_ref().unwrap().matvec(&state);
            normalize(&mut state);
        }
        (false, 0.0)
    };

    let (successes, max_infidelity) = (0..trials)
        .into_par_iter()
        .map(run)
        .map(|(s, inf)| (s as usize, if s { inf } else { 0.0 }))
        .reduce(|| (0, 0.0), |a, b| (a.0 + b.0, a.1.max(b.1)));
    let p = report.success_prob_exact.clamp(0.0, 1.0);
    Ok(MonteCarloStats {
        trials,
        successes,
        rate: successes as f64 / trials as f64,
        std_error: (p * (1.0 - p) / trials as f64).sqrt(),
        expected: p,
        max_infidelity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{c64, haar_special_unitary, haar_unitary};

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn identity_success_branch_is_half_identity() {
        let k = teleport_branch_kraus(&ComplexMatrix::identity(2), 2, 0, 0).unwrap();
        assert!(k.max_abs_diff(&ComplexMatrix::identity(2).scale_real(0.5)) < 1e-15);
        let psi = [c64(0.6, 0.0), c64(0.0, 0.8)];
        let out = k.matvec(&psi);
        let p: f64 = out.iter().map(|z| z.norm_sqr()).sum();
        assert!((p - 0.25).abs() < 1e-15);
    }

    #[test]
    fn teleport_completeness_and_output() {
        let mut r = rng(1);
        let u = haar_unitary(3, &mut r);
        let mut sum = ComplexMatrix::zeros(3, 3);
        for i in 0..3 {
            for j in 0..3 {
                let k = teleport_branch_kraus(&u, 3, i, j).unwrap();
                sum += &k.adjoint().matmul(&k);
            }
        }
        assert!(sum.max_abs_diff(&ComplexMatrix::identity(3)) < 1e-12);
        let psi = [c64(0.1, 0.2), c64(-0.5, 0.3), c64(0.7, -0.1)];
        let mut out = teleport_branch_kraus(&u, 3, 0, 0).unwrap().matvec(&psi);
        normalize(&mut out);
        let mut expect = u.transpose().matvec(&psi);
        normalize(&mut expect);
        for (a, b) in out.iter().zip(&expect) {
            assert!((a - b).norm() < 1e-12);
        }
        assert!(matches!(
            teleport_branch_kraus(&u, 3, 3, 0),
            Err(Error::IndexOutOfRange(_))
        ));
    }

    #[test]
    fn round_success_branch_is_u_dagger_over_d() {
        let mut r = rng(2);
        for d in 2..=4 {
            let u = haar_special_unitary(d, &mut r);
            let branches = inversion_round_kraus(&u, d).unwrap();
            assert_eq!(branches.len(), d * d);
            let s = &branches[0];
            assert_eq!((s.i, s.j, s.status), (0, 0, BranchStatus::Success));
            assert!(s.kraus.max_abs_diff(&u.adjoint().scale_real(1.0 / d as f64)) < 1e-10);
            let mut sum = ComplexMatrix::zeros(d, d);
            for b in &branches {
                sum += &b.kraus.adjoint().matmul(&b.kraus);
            }
            assert!(sum.max_abs_diff(&ComplexMatrix::identity(d)) < 1e-10);
        }
    }

    #[test]
    fn recovery_restores_input() {
        let mut r = rng(3);
        for d in [2, 3] {
            let u = haar_special_unitary(d, &mut r);
            for b in inversion_round_kraus(&u, d).unwrap().iter().skip(1) {
                let total = recovery_operator(&u, d, b.i, b.j).unwrap().matmul(&b.kraus);
                let phase = total[(0, 0)] * d as f64;
                assert!((phase.norm() - 1.0).abs() < 1e-10);
                let expect = ComplexMatrix::identity(d).scale(phase / d as f64);
                assert!(total.max_abs_diff(&expect) < 1e-10);
            }
            assert!(matches!(recovery_operator(&u, d, 0, 0), Err(Error::Logic(_))));
        }
    }

    #[test]
    fn protocol_matches_formula_and_inverts() {
        let mut r = rng(4);
        for (d, k, p) in [
            (2, 1, 0.25),
            (2, 3, 0.4375),
            (3, 2, 1.0 / 9.0),
            (2, 0, 0.0),
            (3, 1, 0.0),
        ] {
            let u = haar_special_unitary(d, &mut r);
            let rep = adaptive_protocol(&u, d, k).unwrap();
            assert!((rep.success_prob_exact - p).abs() < 1e-12, "d={d} k={k}");
            assert!((rep.success_prob_formula - p).abs() < 1e-12);
            assert!((rep.success_prob_exact + rep.exhausted_prob - 1.0).abs() < 1e-12);
            let target = choi_of_unitary(&u.adjoint(), d).unwrap().matrix().scale_real(p);
            assert!(rep.success_channel_choi.matrix().frobenius_distance(&target) < 1e-9);
        }
    }

    #[test]
    fn budget_accounting() {
        let mut r = rng(5);
        let u = haar_special_unitary(2, &mut r);
        let rep = adaptive_protocol(&u, 2, 5).unwrap();
        assert_eq!(rep.rounds_used, 3);
        assert_eq!(rep.uses_consumed_per_branch["round1:success"], 1);
        assert_eq!(rep.uses_consumed_per_branch["round2:success"], 3);
        assert_eq!(rep.uses_consumed_per_branch["round3:success"], 5);
        assert_eq!(rep.uses_consumed_per_branch["exhausted"], 5);
        let u3 = haar_special_unitary(3, &mut r);
        let rep = adaptive_protocol(&u3, 3, 7).unwrap();
        assert_eq!(rep.rounds_used, 2);
        assert_eq!(rep.uses_consumed_per_branch["round2:success"], 5);
    }

    #[test]
    fn rejects_non_special_unitary() {
        let u = haar_unitary(3, &mut rng(6));
        assert!(matches!(adaptive_protocol(&u, 3, 4), Err(Error::Determinant { .. })));
    }

    #[test]
    fn input_independence() {
        let mut r = rng(7);
        let u = haar_special_unitary(3, &mut r);
        let rep = adaptive_protocol(&u, 3, 5).unwrap();
        for _ in 0..5 {
            let v = haar_unitary(3, &mut r);
            let psi: Vec<Complex64> = (0..3).map(|i| v[(i, 0)]).collect();
            assert!((rep.success_prob_on(&psi).unwrap() - rep.success_prob_exact).abs() < 1e-12);
        }
    }

    #[test]
    fn monte_carlo_is_exact_on_success_and_deterministic() {
        let mut r = rng(8);
        let u = haar_special_unitary(2, &mut r);
        let psi = PureState::qudit(vec![c64(0.6, 0.0), c64(0.0, 0.8)], "in").unwrap();
        let a = monte_carlo_run(&u, 2, 3, &psi, 2000, &mut rng(9)).unwrap();
        let b = monte_carlo_run(&u, 2, 3, &psi, 2000, &mut rng(9)).unwrap();
        assert_eq!(a, b);
        assert!(a.max_infidelity < 1e-10);
        assert!(a.z_score() < 4.0);
        let u3 = haar_special_unitary(3, &mut r);
        let psi3 = PureState::qudit(vec![c64(1.0, 0.0), c64(0.0, 0.0), c64(0.0, 0.0)], "in").unwrap();
        let none = monte_carlo_run(&u3, 3, 1, &psi3, 500, &mut rng(1)).unwrap();
        assert_eq!(none.successes, 0);
    }
}
