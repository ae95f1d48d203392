use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use faer::{Accum, Mat, MatRef, Par};

use super::admm::{run_admm, AffineProjection, Solution, SolveStatus, SolverConfig};
use super::program::dot;
use super::sectors::{PhaseSectors, SectorCone};
use crate::combs::{
    inverse_target, structure_residuals, universality_residual, CausalProjector, CombMode, CombStructure, SpanningSet,
};
use crate::error::{Error, Result};
use crate::protocols::theorem2_parallel_bound;
use crate::tensor::{coords_to_herm, herm_to_coords, min_eigenvalue, Complex64, ComplexMatrix};

/// Orthogonal projection onto `W = Lin(P⊗F) ⊗ span{𝔠(U_i)^{⊗k}‾}`, the
/// subspace the universality equalities constrain.
///
/// `S` is cut into `D×D` slot blocks indexed by `(p,f),(q,g)`; every block
/// (split into two Hermitian parts when off-diagonal) is projected onto the
/// conjugated spanning basis with two real matrix products.
struct SlotProjector {
    d: usize,
    slot: usize,
    /// Hermitian coordinates of the conjugated basis, `D² × r`.
    q: Mat<f64>,
}

impl SlotProjector {
    fn new(spanning: &SpanningSet) -> Self {
        let slot = spanning.slot_dim();
        let len = slot * slot;
        let q = Mat::<f64>::from_fn(len, spanning.rank, |i, m| {
            let v = spanning.basis.vector(m)[i];
            // imaginary-part coordinates sit at odd offsets past the diagonal
            if i >= slot && (i - slot) % 2 == 1 {
                -v
            } else {
                v
            }
        });
        Self { d: spanning.d, slot, q }
    }

    fn pairs(&self) -> usize {
        self.d.pow(4)
    }

    /// Flat index of slot entry `a` inside block row `i = p·d + f`.
    fn at(&self, i: usize, a: usize) -> usize {
        let (p, f) = (i / self.d, i % self.d);
        (p * self.slot + a) * self.d + f
    }

    /// Column-major `D² × d⁴` matrix of Hermitian block coordinates.
    fn gather(&self, s: &ComplexMatrix) -> Vec<f64> {
        let (dd, ds) = (self.d * self.d, self.slot);
        let len = ds * ds;
        let n = s.rows();
        let data = s.data();
        let mut out = vec![0.0; len * self.pairs()];
        let mut col = 0;
        for i in 0..dd {
            for j in i..dd {
                let entry = |a: usize, b: usize| data[self.at(i, a) * n + self.at(j, b)];
                if i == j {
                    let c = &mut out[col * len..(col + 1) * len];
                    for a in 0..ds {
                        c[a] = entry(a, a).re;
                    }
                    let mut k = ds;
                    for a in 0..ds {
                        for b in a + 1..ds {
                            let z = (entry(a, b) + entry(b, a).conj()) * 0.5;
                            c[k] = SQRT_2 * z.re;
                            c[k + 1] = SQRT_2 * z.im;
                            k += 2;
                        }
                    }
                    col += 1;
                } else {
                    let (c1, c2) = out[col * len..(col + 2) * len].split_at_mut(len);
                    for a in 0..ds {
                        let z = entry(a, a);
                        c1[a] = z.re;
                        c2[a] = z.im;
                    }
                    let mut k = ds;
                    for a in 0..ds {
                        for b in a + 1..ds {
                            let (x, y) = (entry(a, b), entry(b, a).conj());
                            // H₁ = (B + B†)/2, H₂ = (B − B†)/2i
                            let h1 = (x + y) * 0.5;
                            let h2 = (x - y) * Complex64::new(0.0, -0.5);
                            c1[k] = SQRT_2 * h1.re;
                            c1[k + 1] = SQRT_2 * h1.im;
                            c2[k] = SQRT_2 * h2.re;
                            c2[k + 1] = SQRT_2 * h2.im;
                            k += 2;
                        }
                    }
                    col += 2;
                }
            }
        }
        out
    }

    /// Inverse of [`SlotProjector::gather`] for coordinates in `y`.
    fn scatter(&self, y: MatRef<'_, f64>, n: usize) -> ComplexMatrix {
        let (dd, ds) = (self.d * self.d, self.slot);
        let mut out = ComplexMatrix::zeros(n, n);
        let data = out.data_mut();
        let herm = |col: usize, a: usize, b: usize| -> Complex64 {
            use std::cmp::Ordering::*;
            match a.cmp(&b) {
                Equal => Complex64::new(y[(a, col)], 0.0),
                Less => {
                    let k = offdiag(ds, a, b);
                    Complex64::new(y[(k, col)], y[(k + 1, col)]) * FRAC_1_SQRT_2
                }
                Greater => {
                    let k = offdiag(ds, b, a);
                    Complex64::new(y[(k, col)], -y[(k + 1, col)]) * FRAC_1_SQRT_2
                }
            }
        };
        let mut col = 0;
        for i in 0..dd {
            for j in i..dd {
                for a in 0..ds {
                    for b in 0..ds {
                        let (r, c) = (self.at(i, a), self.at(j, b));
                        if i == j {
                            data[r * n + c] = herm(col, a, b);
                        } else {
                            let z = herm(col, a, b) + Complex64::new(0.0, 1.0) * herm(col + 1, a, b);
                            data[r * n + c] = z;
                            data[c * n + r] = z.conj();
                        }
                    }
                }
                col += if i == j { 1 } else { 2 };
            }
        }
        out
    }

    fn apply(&self, s: &ComplexMatrix) -> ComplexMatrix {
        let len = self.slot * self.slot;
        let h = self.gather(s);
        let hm = MatRef::from_column_major_slice(&h, len, self.pairs());
        let coef = self.q.transpose() * hm;
        let mut y = Mat::<f64>::zeros(len, self.pairs());
        faer::linalg::matmul::matmul(
            y.as_mut(),
            Accum::Replace,
            self.q.as_ref(),
            coef.as_ref(),
            1.0,
            Par::Seq,
        );
        self.scatter(y.as_ref(), s.rows())
    }
}

fn offdiag(n: usize, i: usize, j: usize) -> usize {
    n + 2 * (i * (2 * n - i - 1) / 2 + (j - i - 1))
}

/// Real Frobenius inner product `Re Tr(A†B)`.
fn rdot(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| x.re * y.re + x.im * y.im)
        .sum()
}

fn axpy(alpha: f64, x: &ComplexMatrix, y: &mut ComplexMatrix) {
    for (yi, xi) in y.data_mut().iter_mut().zip(x.data()) {
        *yi += xi * alpha;
    }
}

/// Inversion SDP in a form the structured solver works on directly.
pub struct InversionProblem {
    pub structure: CombStructure,
    pub rank: usize,
    causal: CausalProjector,
    w: SlotProjector,
    /// `τ ∈ W` with `Π_W S = p·τ` equivalent to the universality equalities.
    tau: ComplexMatrix,
}

impl InversionProblem {
    /// `size_cap` bounds the total complex dimension `d^{2k+2}`.
    pub fn new(structure: &CombStructure, spanning: &SpanningSet, size_cap: usize) -> Result<Self> {
        let n = structure.total_dim();
        if n > size_cap {
            return Err(Error::SizeCap {
                required: n,
                allowed: size_cap,
            });
        }
        if spanning.d != structure.d || spanning.k != structure.k {
            return Err(Error::InvalidArgument(format!(
                "spanning set is for (d={}, k={}) but structure is (d={}, k={})",
                spanning.d, spanning.k, structure.d, structure.k
            )));
        }
        if spanning.rank != spanning.unitaries.len() {
            return Err(Error::Logic("spanning basis does not match its unitaries".into()));
        }
        let w = SlotProjector::new(spanning);
        let tau = Self::build_tau(&w, spanning, n)?;
        Ok(Self {
            structure: structure.clone(),
            rank: spanning.rank,
            causal: CausalProjector::new(structure)?,
            w,
            tau,
        })
    }

    /// `⟨X̄_i, τ_blk⟩ = 𝔠(U_i†)[blk]` for every spanning `X_i`: with
    /// `X_i = Σ_m R[m,i] Q_m`, the block coefficients are `R^{-T} c_blk`.
    fn build_tau(w: &SlotProjector, spanning: &SpanningSet, n: usize) -> Result<ComplexMatrix> {
        let r = spanning.rank;
        let targets: Vec<ComplexMatrix> = spanning.unitaries.iter().map(inverse_target).collect::<Result<_>>()?;
        let dd = w.d * w.d;
        let mut coef = Mat::<f64>::zeros(r, w.pairs());
        let solve = |c: &[f64]| -> Vec<f64> {
            let mut a = vec![0.0; r];
            for m in 0..r {
                let acc: f64 = (0..m).map(|l| spanning.basis.r(l, m) * a[l]).sum();
                a[m] = (c[m] - acc) / spanning.basis.r(m, m);
            }
            a
        };
        let mut col = 0;
        for i in 0..dd {
            for j in i..dd {
                let re: Vec<f64> = targets.iter().map(|t| t[(i, j)].re).collect();
                let a = solve(&re);
                for m in 0..r {
                    coef[(m, col)] = a[m];
                }
                if i == j {
                    col += 1;
                } else {
                    let im: Vec<f64> = targets.iter().map(|t| t[(i, j)].im).collect();
                    let b = solve(&im);
                    for m in 0..r {
                        coef[(m, col + 1)] = b[m];
                    }
                    col += 2;
                }
            }
        }
        let y = &w.q * &coef;
        Ok(w.scatter(y.as_ref(), n))
    }

    pub fn dim(&self) -> usize {
        self.structure.total_dim()
    }

    /// Projection onto the universality subspace `W`.
    pub fn project_universality(&self, s: &ComplexMatrix) -> ComplexMatrix {
        self.w.apply(s)
    }

    pub fn tau(&self) -> &ComplexMatrix {
        &self.tau
    }

    /// Frobenius residual of `Π_W S = p·τ`.
    pub fn universality_gap(&self, s: &ComplexMatrix, p: f64) -> f64 {
        let mut r = self.w.apply(s);
        axpy(-p, &self.tau, &mut r);
        r.frobenius_norm()
    }
}

const CG_MAX_ITER: usize = 500;
const CG_REL_TOL: f64 = 1e-11;
const REFRESH_EVERY: usize = 25;

/// Affine projection for the variables `(S, T = C − S, q = σp)`.
///
/// With `u = S + T`, `w = S − T`, `α = S₀ + T₀`, `β = S₀ − T₀` the problem
/// decouples: `w` outside `W` equals `β`, `u` ranges over the affine comb set
/// `u₀ + V'`, and the remaining `(y ∈ V', q)` solve a small SPD system by
/// conjugate gradients.
struct StructuredAffine<'a> {
    problem: &'a InversionProblem,
    n: usize,
    /// `τ/σ`.
    tau: ComplexMatrix,
    l_tau: ComplexMatrix,
    tau_norm2: f64,
    y: ComplexMatrix,
    pw_y: ComplexMatrix,
    calls: usize,
    cg_iterations: usize,
}

impl<'a> StructuredAffine<'a> {
    fn new(problem: &'a InversionProblem, sigma: f64) -> Self {
        let n = problem.dim();
        let tau = problem.tau.scale_real(1.0 / sigma);
        let l_tau = problem.causal.linear(&tau);
        let tau_norm2 = rdot(&tau, &tau);
        Self {
            problem,
            n,
            tau,
            l_tau,
            tau_norm2,
            y: ComplexMatrix::zeros(n, n),
            pw_y: ComplexMatrix::zeros(n, n),
            calls: 0,
            cg_iterations: 0,
        }
    }

    /// `H (y, q)` given `Π_W y`.
    fn apply_h(&self, y: &ComplexMatrix, pw_y: &ComplexMatrix, q: f64) -> (ComplexMatrix, f64) {
        let mut hy = self.problem.causal.linear(pw_y);
        hy += y;
        axpy(-2.0 * q, &self.l_tau, &mut hy);
        let hq = -2.0 * rdot(&self.l_tau, y) + (4.0 * self.tau_norm2 + 2.0) * q;
        (hy, hq)
    }
}

impl AffineProjection for StructuredAffine<'_> {
    fn project(&mut self, v: &[f64], out: &mut [f64]) -> Result<()> {
        let (n, nn) = (self.n, self.n * self.n);
        let s0 = coords_to_herm(&v[..nn], n);
        let t0 = coords_to_herm(&v[nn..2 * nn], n);
        let q0 = v[2 * nn];
        let alpha = &s0 + &t0;
        let beta = &s0 - &t0;
        let causal = &self.problem.causal;
        let u0 = causal.project(&alpha);
        let g = self.problem.w.apply(&(&u0 + &beta));

        self.calls += 1;
        if self.calls % REFRESH_EVERY == 0 {
            self.y = causal.linear(&self.y);
            self.pw_y = self.problem.w.apply(&self.y);
        }
        // right-hand side
        let by = causal.linear(&g).scale_real(-1.0);
        let bq = 2.0 * rdot(&self.tau, &g) + 2.0 * q0;
        let b_norm = (rdot(&by, &by) + bq * bq).sqrt();

        // warm start from the previous y; q starts at its least-squares value
        let (hy0, _) = self.apply_h(&self.y, &self.pw_y, 0.0);
        let mut q = (bq + 2.0 * rdot(&self.l_tau, &self.y)) / (4.0 * self.tau_norm2 + 2.0);
        let (hy, hq) = (
            {
                let mut t = hy0;
                axpy(-2.0 * q, &self.l_tau, &mut t);
                t
            },
            -2.0 * rdot(&self.l_tau, &self.y) + (4.0 * self.tau_norm2 + 2.0) * q,
        );
        let mut ry = &by - &hy;
        let mut rq = bq - hq;
        let mut py = ry.clone();
        let mut pq = rq;
        let mut rr = rdot(&ry, &ry) + rq * rq;
        let target = (CG_REL_TOL * b_norm).max(1e-300);
        let mut iters = 0;
        while rr.sqrt() > target && iters < CG_MAX_ITER {
            let pw_p = self.problem.w.apply(&py);
            let (hp, hpq) = self.apply_h(&py, &pw_p, pq);
            let php = rdot(&py, &hp) + pq * hpq;
            if php <= 0.0 {
                return Err(Error::Factorization(format!(
                    "affine system lost definiteness ({php:.3e})"
                )));
            }
            let step = rr / php;
            axpy(step, &py, &mut self.y);
            axpy(step, &pw_p, &mut self.pw_y);
            q += step * pq;
            axpy(-step, &hp, &mut ry);
            rq -= step * hpq;
            let rr_new = rdot(&ry, &ry) + rq * rq;
            let ratio = rr_new / rr;
            rr = rr_new;
            let mut next = ry.clone();
            axpy(ratio, &py, &mut next);
            py = next;
            pq = rq + ratio * pq;
            iters += 1;
        }
        self.cg_iterations += iters;
        if iters == CG_MAX_ITER {
            log::warn!("affine CG stopped at {iters} iterations, residual {:.3e}", rr.sqrt());
        }

        // u = u₀ + y, w = β + 2qτ − g − Π_W y
        let mut u = u0;
        u += &self.y;
        let mut w = beta;
        axpy(2.0 * q, &self.tau, &mut w);
        w -= &g;
        w -= &self.pw_y;
        let s = (&u + &w).scale_real(0.5);
        let t = (&u - &w).scale_real(0.5);
        herm_to_coords(&s, &mut out[..nn]);
        herm_to_coords(&t, &mut out[nn..2 * nn]);
        out[2 * nn] = q;
        Ok(())
    }
}

/// Scaling `q = σ·p` used inside [`solve_inversion`].
const P_SCALE: f64 = 1.0;

/// Solves the inversion SDP with the structured affine projection; `S` and
/// `C` in the returned solution are the PSD (cone-side) iterates.
pub fn solve_inversion(problem: &InversionProblem, cfg: &SolverConfig) -> Result<Solution> {
    let n = problem.dim();
    let nn = n * n;
    let sectors = PhaseSectors::new(&problem.structure);
    let sigma = P_SCALE;
    let mut c = vec![0.0; 2 * nn + 1];
    c[2 * nn] = -1.0 / sigma;
    let mut affine = StructuredAffine::new(problem, sigma);
    log::info!(
        "solving {} inversion d={} k={}: side {n} ({} invariant coordinates), universality rank {}",
        problem.structure.mode,
        problem.structure.d,
        problem.structure.k,
        sectors.free_coords(),
        problem.rank
    );
    let out = run_admm(&mut affine, &SectorCone(&sectors), &c, cfg)?;
    log::info!(
        "{} after {} iterations ({} inner CG steps)",
        out.status,
        out.iterations,
        affine.cg_iterations
    );
    let s = coords_to_herm(&out.z[..nn], n);
    let t = coords_to_herm(&out.z[nn..2 * nn], n);
    Ok(Solution {
        p_star: -dot(&c, &out.z),
        c: Some(&s + &t),
        s: Some(s),
        point: Vec::new(),
        primal_residual: out.primal,
        dual_residual: out.dual,
        gap: out.gap,
        iterations: out.iterations,
        status: out.status,
        history: out.history,
    })
}

/// Number of fresh unitaries [`verify_solution`] is meant to be run with.
pub const VERIFY_SAMPLES: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct VerificationReport {
    pub p: f64,
    pub samples: usize,
    /// Largest `|S ∗ 𝔠(U)^{⊗k} − p·𝔠(U⁻¹)|` over the fresh unitaries.
    pub universality_residual: f64,
    /// Comb or process-matrix equality residual of `C`.
    pub structure_residual: f64,
    pub psd_margin_s: f64,
    pub psd_margin_slack: f64,
    /// Mode-appropriate upper bound on `p` (the parallel bound, or 1).
    pub bound: f64,
    pub within_bound: bool,
}

impl VerificationReport {
    /// All residuals and margins within `tol`, and the bound respected.
    pub fn passes(&self, tol: f64) -> bool {
        self.universality_residual <= tol
            && self.structure_residual <= tol
            && self.psd_margin_s >= -tol
            && self.psd_margin_slack >= -tol
            && self.within_bound
    }
}

/// Upper bound on the success probability available in closed form.
pub fn mode_bound(structure: &CombStructure) -> f64 {
    match structure.mode {
        CombMode::Parallel => theorem2_parallel_bound(structure.d, structure.k),
        _ => 1.0,
    }
}

/// Re-checks a candidate `(S, C, p)` independently of how it was obtained.
pub fn verify_point(
    s: &ComplexMatrix,
    c: &ComplexMatrix,
    p: f64,
    structure: &CombStructure,
    unitaries: &[ComplexMatrix],
    bound_tol: f64,
) -> Result<VerificationReport> {
    let (structure_residual, _) = structure_residuals(c, structure)?;
    let bound = mode_bound(structure);
    Ok(VerificationReport {
        p,
        samples: unitaries.len(),
        universality_residual: universality_residual(s, p, structure, unitaries)?,
        structure_residual,
        psd_margin_s: min_eigenvalue(&s.hermitian_part())?,
        psd_margin_slack: min_eigenvalue(&(c - s).hermitian_part())?,
        bound,
        within_bound: p <= bound + bound_tol,
    })
}

pub fn verify_solution(
    sol: &Solution,
    structure: &CombStructure,
    unitaries: &[ComplexMatrix],
    bound_tol: f64,
) -> Result<VerificationReport> {
    if sol.status == SolveStatus::InfeasibleSuspect {
        return Err(Error::InvalidArgument("solution is flagged infeasible".into()));
    }
    let (s, c) = sol
        .s
        .as_ref()
        .zip(sol.c.as_ref())
        .ok_or_else(|| Error::InvalidArgument("solution carries no S and C".into()))?;
    verify_point(s, c, sol.p_star, structure, unitaries, bound_tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combs::{choi_power, slot_link, spanning_unitary_set};
    use crate::protocols::protocol_comb_witness;
    use crate::tensor::{c64, haar_special_unitary};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_herm(n: usize, rng: &mut ChaCha8Rng) -> ComplexMatrix {
        ComplexMatrix::from_fn(n, n, |_, _| c64(StandardNormal.sample(rng), StandardNormal.sample(rng)))
            .hermitian_part()
    }

    fn problem(d: usize, k: usize, mode: CombMode, seed: u64) -> (InversionProblem, SpanningSet) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let st = CombStructure::inversion(d, k, mode).unwrap();
        let span = spanning_unitary_set(d, k, &mut rng, 4096).unwrap();
        (InversionProblem::new(&st, &span, 4096).unwrap(), span)
    }

    #[test]
    fn slot_projector_is_an_orthogonal_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (d, k) in [(2, 1), (2, 2)] {
            let (pr, _) = problem(d, k, CombMode::Adaptive, 10);
            let n = pr.dim();
            let a = random_herm(n, &mut rng);
            let b = random_herm(n, &mut rng);
            let pa = pr.project_universality(&a);
            assert!(pa.hermiticity_error() < 1e-12);
            assert!(pr.project_universality(&pa).max_abs_diff(&pa) < 1e-10);
            let pb = pr.project_universality(&b);
            assert!((rdot(&pa, &b) - rdot(&a, &pb)).abs() < 1e-9);
        }
    }

    #[test]
    fn projection_keeps_every_constraint_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (pr, span) = problem(2, 2, CombMode::Parallel, 11);
        let s = random_herm(64, &mut rng);
        let ps = pr.project_universality(&s);
        for x in &span.choi_powers {
            let lhs = slot_link(&s, &pr.structure, x).unwrap();
            let rhs = slot_link(&ps, &pr.structure, x).unwrap();
            assert!(lhs.max_abs_diff(&rhs) < 1e-9);
        }
        // and a fresh Choi power lies in the span, so its link is kept as well
        let u = haar_special_unitary(2, &mut rng);
        let x = choi_power(&u, 2).unwrap();
        let lhs = slot_link(&s, &pr.structure, &x).unwrap();
        let rhs = slot_link(&ps, &pr.structure, &x).unwrap();
        assert!(lhs.max_abs_diff(&rhs) < 1e-9);
    }

    #[test]
    fn tau_reproduces_the_inverse_targets() {
        let (pr, _) = problem(2, 1, CombMode::Adaptive, 12);
        assert!(pr.project_universality(pr.tau()).max_abs_diff(pr.tau()) < 1e-10);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = haar_special_unitary(2, &mut rng);
        let x = choi_power(&u, 1).unwrap();
        let link = slot_link(pr.tau(), &pr.structure, &x).unwrap();
        assert!(link.max_abs_diff(&inverse_target(&u).unwrap()) < 1e-9);
        // the protocol witness satisfies Π_W S = τ/4
        let w = protocol_comb_witness(2).unwrap();
        assert!(pr.universality_gap(&w.s, 0.25) < 1e-9);
    }

    #[test]
    fn structured_projection_is_feasible_and_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for mode in CombMode::ALL {
            let (pr, _) = problem(2, 1, mode, 13);
            let n = pr.dim();
            let nn = n * n;
            let mut aff = StructuredAffine::new(&pr, 1.0);
            let mut v = vec![0.0; 2 * nn + 1];
            herm_to_coords(&random_herm(n, &mut rng), &mut v[..nn]);
            herm_to_coords(&random_herm(n, &mut rng), &mut v[nn..2 * nn]);
            v[2 * nn] = 0.7;
            let mut x = vec![0.0; v.len()];
            aff.project(&v, &mut x).unwrap();
            let s = coords_to_herm(&x[..nn], n);
            let c = &s + &coords_to_herm(&x[nn..2 * nn], n);
            assert!(pr.universality_gap(&s, x[2 * nn]) < 1e-8, "{mode}");
            let (res, _) = structure_residuals(&c, &pr.structure).unwrap();
            assert!(res < 1e-10, "{mode} {res}");
            let mut x2 = vec![0.0; v.len()];
            aff.project(&x, &mut x2).unwrap();
            let diff = x.iter().zip(&x2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(diff < 1e-8, "{mode} {diff}");
            // v − Π(v) is orthogonal to feasible directions: compare with a
            // second feasible point
            let mut other = vec![0.0; v.len()];
            let mut w = vec![0.0; v.len()];
            herm_to_coords(&random_herm(n, &mut rng), &mut w[..nn]);
            w[2 * nn] = -0.3;
            aff.project(&w, &mut other).unwrap();
            let ip: f64 = (0..v.len()).map(|i| (v[i] - x[i]) * (other[i] - x[i])).sum();
            assert!(ip.abs() < 1e-7, "{mode} {ip}");
        }
    }

    #[test]
    fn qubit_single_use_optimum() {
        for mode in CombMode::ALL {
            let (pr, _) = problem(2, 1, mode, 14);
            let sol = solve_inversion(&pr, &SolverConfig::default()).unwrap();
            assert_eq!(sol.status, SolveStatus::Optimal, "{mode}");
            assert!((sol.p_star - 0.25).abs() < 1e-3, "{mode}: {}", sol.p_star);
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let fresh: Vec<_> = (0..VERIFY_SAMPLES).map(|_| haar_special_unitary(2, &mut rng)).collect();
            let rep = verify_solution(&sol, &pr.structure, &fresh, 1e-3).unwrap();
            assert!(rep.passes(1e-4), "{mode}: {rep:?}");
            // the reported point meets the stated invariants
            assert!(rep.psd_margin_s > -1e-6 && rep.psd_margin_slack > -1e-6);
            assert!(rep.structure_residual < 1e-6, "{mode}: {rep:?}");
        }
    }

    #[test]
    fn zero_point_verifies_trivially() {
        let st = CombStructure::inversion(2, 2, CombMode::Adaptive).unwrap();
        let n = st.total_dim();
        let c = ComplexMatrix::identity(n).scale_real(1.0 / 8.0);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let fresh: Vec<_> = (0..VERIFY_SAMPLES).map(|_| haar_special_unitary(2, &mut rng)).collect();
        let rep = verify_point(&ComplexMatrix::zeros(n, n), &c, 0.0, &st, &fresh, 0.0).unwrap();
        assert_eq!(rep.universality_residual, 0.0);
        assert!(rep.passes(1e-12), "{rep:?}");
    }

    #[test]
    fn witness_verifies_at_one_over_d_squared() {
        let w = protocol_comb_witness(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let fresh: Vec<_> = (0..VERIFY_SAMPLES).map(|_| haar_special_unitary(2, &mut rng)).collect();
        let rep = verify_point(&w.s, &w.c, w.p, &w.structure, &fresh, 0.0).unwrap();
        assert!(rep.passes(1e-9), "{rep:?}");
        assert_eq!(rep.p, 0.25);
    }

    #[test]
    fn size_cap_is_enforced() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let st = CombStructure::inversion(2, 1, CombMode::Adaptive).unwrap();
        let span = spanning_unitary_set(2, 1, &mut rng, 64).unwrap();
        assert!(matches!(
            InversionProblem::new(&st, &span, 8),
            Err(Error::SizeCap {
                required: 16,
                allowed: 8
            })
        ));
    }
}
