use std::collections::VecDeque;

use faer::{Accum, Mat, Par};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::program::{dot, sym_coords_to_matrix, sym_matrix_to_coords, Cone, ConicProgram, VarKind};
use crate::error::{Error, Result};
use crate::tensor::{coords_to_herm, herm_eig_unchecked, herm_to_coords, ComplexMatrix};

/// Iteration controls shared by the generic and the structured solver.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    /// Primal and dual residual tolerance (relative to the iterate scale).
    pub tol: f64,
    /// Objective stationarity over the stationarity window.
    pub tol_obj: f64,
    pub max_iter: usize,
    /// Initial penalty.
    pub rho: f64,
    /// Over-relaxation factor in `(0, 2)`.
    pub alpha: f64,
    /// Residuals are evaluated every `check_every` iterations.
    pub check_every: usize,
    /// Penalty rebalancing period (0 disables it).
    pub adapt_every: usize,
    /// Anderson acceleration memory (0 disables it).
    pub anderson_memory: usize,
    /// An extrapolated step is kept only if its fixed-point residual is at
    /// most this multiple of the previous one.
    pub safeguard: f64,
    /// Number of checks over which the objective must be stationary.
    pub stationarity_window: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            tol_obj: 1e-5,
            max_iter: 50_000,
            rho: 1.0,
            alpha: 1.6,
            check_every: 10,
            adapt_every: 50,
            anderson_memory: 20,
            safeguard: 2.0,
            stationarity_window: 10,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol_obj > 0.0 && self.rho > 0.0) {
            return Err(Error::InvalidArgument("tolerances and rho must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 2.0) {
            return Err(Error::InvalidArgument(format!(
                "relaxation {} outside (0, 2)",
                self.alpha
            )));
        }
        if self.check_every == 0 {
            return Err(Error::InvalidArgument("check_every must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    InfeasibleSuspect,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::MaxIter => "max_iter",
            SolveStatus::InfeasibleSuspect => "infeasible_suspect",
        }
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Snapshot taken at every residual check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Maximization value `−cᵀz`.
    pub value: f64,
    pub primal: f64,
    pub dual: f64,
    pub rho: f64,
}

#[derive(Clone, Debug)]
pub struct Solution {
    /// Optimal value of the maximization form, `−cᵀz` (the success
    /// probability for inversion programs).
    pub p_star: f64,
    /// `S` and `C` of inversion programs, taken from the cone-side iterate.
    pub s: Option<ComplexMatrix>,
    pub c: Option<ComplexMatrix>,
    /// Raw cone-side coordinates (generic solver only; empty otherwise).
    pub point: Vec<f64>,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Complementarity estimate `ρ·|⟨u, x⟩|`.
    pub gap: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    pub history: Vec<IterationRecord>,
}

/// Euclidean projection onto the affine constraint set.
pub(crate) trait AffineProjection {
    fn project(&mut self, v: &[f64], out: &mut [f64]) -> Result<()>;
}

/// Euclidean projection onto the cone side of the splitting.
pub(crate) trait ConeProjection {
    fn project_cone(&self, v: &mut [f64]) -> Result<()>;
}

impl ConeProjection for [Cone] {
    fn project_cone(&self, v: &mut [f64]) -> Result<()> {
        project_cones(self, v)
    }
}

/// Clips the negative spectrum of a Hermitian matrix.
pub(crate) fn psd_clip(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    let n = m.rows();
    let (vals, vecs) = herm_eig_unchecked(m)?;
    let pos = vals.iter().filter(|&&v| v > 0.0).count();
    if pos == 0 {
        return Ok(ComplexMatrix::zeros(n, n));
    }
    if pos == n {
        return Ok(m.hermitian_part());
    }
    // rebuild from whichever side of the spectrum is smaller
    let keep_pos = pos <= n - pos;
    let sel: Vec<usize> = (0..n).filter(|&i| (vals[i] > 0.0) == keep_pos).collect();
    let w = ComplexMatrix::from_fn(n, sel.len(), |i, j| vecs[(i, sel[j])] * vals[sel[j]].abs().sqrt());
    let ww = w.matmul(&w.adjoint());
    Ok(if keep_pos { ww } else { &m.hermitian_part() + &ww })
}

/// Projects `v` onto the product cone in place; blocks are independent and
/// handled in parallel.
pub(crate) fn project_cones(cones: &[Cone], v: &mut [f64]) -> Result<()> {
    let mut segments = Vec::with_capacity(cones.len());
    let mut rest = v;
    for cone in cones {
        let (head, tail) = rest.split_at_mut(cone.width());
        segments.push((*cone, head));
        rest = tail;
    }
    segments.into_par_iter().try_for_each(|(cone, seg)| -> Result<()> {
        match cone {
            Cone::Free(_) => {}
            Cone::NonNeg(_) => seg.iter_mut().for_each(|x| *x = x.max(0.0)),
            Cone::HermPsd(n) => herm_to_coords(&psd_clip(&coords_to_herm(seg, n))?, seg),
            Cone::SymPsd(n) => sym_matrix_to_coords(&psd_clip(&sym_coords_to_matrix(seg, n))?, seg),
        }
        Ok(())
    })
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub(crate) struct AdmmOutcome {
    pub z: Vec<f64>,
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    pub history: Vec<IterationRecord>,
}

/// One application of the splitting map `s ↦ s + α(x − z)` with
/// `z = Π_K(s)` and `x = Π_A(2z − s − c/ρ)`.
struct Step {
    x: Vec<f64>,
    z: Vec<f64>,
    next: Vec<f64>,
}

impl Step {
    fn new(n: usize) -> Self {
        Self {
            x: vec![0.0; n],
            z: vec![0.0; n],
            next: vec![0.0; n],
        }
    }

    fn eval<P: AffineProjection, K: ConeProjection + ?Sized>(
        &mut self,
        proj: &mut P,
        cones: &K,
        c: &[f64],
        rho: f64,
        alpha: f64,
        s: &[f64],
    ) -> Result<()> {
        self.z.copy_from_slice(s);
        cones.project_cone(&mut self.z)?;
        for i in 0..s.len() {
            self.next[i] = 2.0 * self.z[i] - s[i] - c[i] / rho;
        }
        proj.project(&self.next, &mut self.x)?;
        for i in 0..s.len() {
            self.next[i] = s[i] + alpha * (self.x[i] - self.z[i]);
        }
        Ok(())
    }
}

/// Type-II Anderson acceleration with a short memory of differences.
struct Anderson {
    memory: usize,
    ds: VecDeque<Vec<f64>>,
    dg: VecDeque<Vec<f64>>,
    /// `⟨dgᵢ, dgⱼ⟩`, kept in step with `dg`.
    gram: VecDeque<VecDeque<f64>>,
}

const AA_MAX_WEIGHT: f64 = 1e10;

impl Anderson {
    fn new(memory: usize) -> Self {
        Self {
            memory,
            ds: VecDeque::with_capacity(memory),
            dg: VecDeque::with_capacity(memory),
            gram: VecDeque::with_capacity(memory),
        }
    }

    fn clear(&mut self) {
        self.ds.clear();
        self.dg.clear();
        self.gram.clear();
    }

    fn push(&mut self, ds: Vec<f64>, dg: Vec<f64>) {
        if self.memory == 0 {
            return;
        }
        if self.ds.len() == self.memory {
            self.ds.pop_front();
            self.dg.pop_front();
            self.gram.pop_front();
            self.gram.iter_mut().for_each(|row| {
                row.pop_front();
            });
        }
        let mut row: VecDeque<f64> = self.dg.iter().map(|old| dot(old, &dg)).collect();
        row.push_back(dot(&dg, &dg));
        for (r, &v) in self.gram.iter_mut().zip(&row) {
            r.push_back(v);
        }
        self.gram.push_back(row);
        self.ds.push_back(ds);
        self.dg.push_back(dg);
    }

    /// `f − (ΔS + ΔG)γ` with `γ = argmin ‖g − ΔG γ‖`, or `None` when the
    /// memory is empty or the weights blow up.
    fn extrapolate(&self, f: &[f64], g: &[f64]) -> Option<Vec<f64>> {
        let m = self.dg.len();
        if m == 0 {
            return None;
        }
        let trace: f64 = (0..m).map(|i| self.gram[i][i]).sum();
        let reg = 1e-10 * trace / m as f64 + 1e-300;
        let gram = Mat::<f64>::from_fn(m, m, |i, j| self.gram[i][j] + if i == j { reg } else { 0.0 });
        let rhs = Mat::<f64>::from_fn(m, 1, |i, _| dot(&self.dg[i], g));
        let gamma = faer::linalg::solvers::Solve::solve(&gram.llt(faer::Side::Lower).ok()?, &rhs);
        let weight: f64 = (0..m).map(|i| gamma[(i, 0)] * gamma[(i, 0)]).sum::<f64>().sqrt();
        if !weight.is_finite() || weight > AA_MAX_WEIGHT {
            return None;
        }
        let mut out = f.to_vec();
        for k in 0..m {
            let w = gamma[(k, 0)];
            for ((o, a), b) in out.iter_mut().zip(&self.ds[k]).zip(&self.dg[k]) {
                *o -= w * (a + b);
            }
        }
        Some(out)
    }
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `min cᵀx` over `{affine} ∩ K`, split as `x ∈ affine`, `z ∈ K`, `x = z`.
///
/// ADMM with over-relaxation, written as the fixed-point iteration
/// `s ↦ s + α(x − z)` on `s = x̂ + u` (`u` the scaled dual) and accelerated by
/// safeguarded Anderson extrapolation. Stops once the primal residual
/// `‖x − z‖`, the dual residual `ρ‖Δz‖` and the objective drift over the
/// stationarity window are all below tolerance.
pub(crate) fn run_admm<P: AffineProjection, K: ConeProjection + ?Sized>(
    proj: &mut P,
    cones: &K,
    c: &[f64],
    cfg: &SolverConfig,
) -> Result<AdmmOutcome> {
    cfg.validate()?;
    let n = c.len();
    let mut rho = cfg.rho;
    let mut s = vec![0.0; n];
    let mut cur = Step::new(n);
    let mut cand = Step::new(n);
    cur.eval(proj, cones, c, rho, cfg.alpha, &s)?;
    let mut g = diff(&cur.next, &s);
    let mut aa = Anderson::new(cfg.anderson_memory);
    let mut history: Vec<IterationRecord> = Vec::new();
    let mut best: Option<(f64, Vec<f64>, f64, f64, f64)> = None;
    let (mut primal, mut dual, mut gap) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut rejected = 0usize;

    for it in 1..=cfg.max_iter {
        let g_norm = norm(&g);
        let (s_new, accelerated) = match aa.extrapolate(&cur.next, &g) {
            Some(v) => (v, true),
            None => (cur.next.clone(), false),
        };
        cand.eval(proj, cones, c, rho, cfg.alpha, &s_new)?;
        let mut s_new = s_new;
        if accelerated && dist(&cand.next, &s_new) > cfg.safeguard * g_norm {
            rejected += 1;
            aa.clear();
            s_new = cur.next.clone();
            cand.eval(proj, cones, c, rho, cfg.alpha, &s_new)?;
        }
        let g_new = diff(&cand.next, &s_new);
        aa.push(diff(&s_new, &s), diff(&g_new, &g));
        let z_prev = std::mem::replace(&mut cur, Step::new(0)).z;
        std::mem::swap(&mut cur, &mut cand);
        cand = Step::new(n);
        s = s_new;
        g = g_new;

        let check = it % cfg.check_every == 0 || it == cfg.max_iter;
        let adapt = cfg.adapt_every > 0 && it % cfg.adapt_every == 0;
        if !(check || adapt) {
            continue;
        }
        let (x, z) = (&cur.x, &cur.z);
        let u = diff(&s, z);
        let r_p = dist(x, z);
        let r_d = rho * dist(z, &z_prev);
        let scale_p = 1.0 + norm(x).max(norm(z));
        let scale_d = 1.0 + rho * norm(&u);
        if check {
            let value = -dot(c, z);
            let gp = rho * dot(&u, x).abs();
            (primal, dual, gap) = (r_p, r_d, gp);
            history.push(IterationRecord {
                iteration: it,
                value,
                primal: r_p,
                dual: r_d,
                rho,
            });
            let window = cfg.stationarity_window.max(1);
            let stationary = history.len() > window && {
                let old = history[history.len() - 1 - window].value;
                (value - old).abs() <= cfg.tol_obj * (1.0 + value.abs())
            };
            let merit = (r_p / scale_p).max(r_d / scale_d);
            if best.as_ref().is_none_or(|b| merit < b.0) {
                best = Some((merit, z.clone(), r_p, r_d, gp));
            }
            if r_p <= cfg.tol * scale_p && r_d <= cfg.tol * scale_d && stationary {
                log::debug!("converged after {it} iterations, value {value:.8}, {rejected} rejected extrapolations");
                return Ok(AdmmOutcome {
                    z: cur.z,
                    primal,
                    dual,
                    gap,
                    iterations: it,
                    status: SolveStatus::Optimal,
                    history,
                });
            }
            if it % (cfg.check_every * 100) == 0 {
                log::debug!("iter {it}: value {value:.8} primal {r_p:.2e} dual {r_d:.2e} rho {rho:.3e}");
            }
        }
        if adapt {
            // residual balancing; u is the scaled dual, so it rescales with ρ
            let (rp, rd) = (r_p / scale_p, r_d / scale_d);
            let factor = if rp > 10.0 * rd {
                2.0
            } else if rd > 10.0 * rp {
                0.5
            } else {
                1.0
            };
            if factor != 1.0 {
                rho *= factor;
                for i in 0..n {
                    s[i] = cur.z[i] + (s[i] - cur.z[i]) / factor;
                }
                aa.clear();
                cur.eval(proj, cones, c, rho, cfg.alpha, &s)?;
                g = diff(&cur.next, &s);
            }
        }
    }
    let (z, primal, dual, gap) = match best {
        Some((_, bz, p, d, gp)) => (bz, p, d, gp),
        None => (cur.z, primal, dual, gap),
    };
    Ok(AdmmOutcome {
        z,
        primal,
        dual,
        gap,
        iterations: cfg.max_iter,
        status: SolveStatus::MaxIter,
        history,
    })
}

/// Dense affine projector for a row-scaled generic program, built from the
/// eigendecomposition of `AAᵀ` (pseudo-inverse on its range).
struct DenseAffine {
    a: Mat<f64>,
    v: Mat<f64>,
    inv: Vec<f64>,
    b: Vec<f64>,
}

/// Largest `rows × cols` handled by the dense generic solver.
pub const GENERIC_SIZE_CAP: usize = 20_000_000;

const PINV_TOL: f64 = 1e-11;

impl DenseAffine {
    fn new<R: Rng + ?Sized>(program: &ConicProgram, rng: &mut R) -> Result<Option<Self>> {
        let (m, n) = (program.a.rows, program.a.cols);
        if m * n > GENERIC_SIZE_CAP {
            return Err(Error::SizeCap {
                required: m * n,
                allowed: GENERIC_SIZE_CAP,
            });
        }
        // row equilibration
        let mut a = Mat::<f64>::zeros(m, n);
        let mut b = program.b.clone();
        for i in 0..m {
            let nrm = program.a.row(i).map(|(_, v)| v * v).sum::<f64>().sqrt();
            if nrm == 0.0 {
                if b[i].abs() > 1e-12 {
                    return Ok(None);
                }
                continue;
            }
            for (j, v) in program.a.row(i) {
                a[(i, j)] = v / nrm;
            }
            b[i] /= nrm;
        }
        let mut gram = Mat::<f64>::zeros(m, m);
        faer::linalg::matmul::matmul(gram.as_mut(), Accum::Replace, a.as_ref(), a.transpose(), 1.0, Par::Seq);
        let evd = gram
            .self_adjoint_eigen(faer::Side::Lower)
            .map_err(|e| Error::Factorization(format!("AAᵀ eigendecomposition: {e:?}")))?;
        let s = evd.S().column_vector();
        let top = (0..m).map(|i| s[i]).fold(0.0f64, f64::max);
        let inv: Vec<f64> = (0..m)
            .map(|i| if s[i] > PINV_TOL * top { 1.0 / s[i] } else { 0.0 })
            .collect();
        let dropped = inv.iter().filter(|&&v| v == 0.0).count();
        log::debug!("affine factorization: {m} rows, {dropped} dependent");
        let this = Self {
            a,
            v: evd.U().to_owned(),
            inv,
            b,
        };
        this.probe(&gram, rng)?;
        // consistency of A x = b: the minimum-norm solution must satisfy it
        let x0 = this.min_norm_solution(&this.b);
        let r = this.apply_a(&x0);
        let err = r.iter().zip(&this.b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        if err > 1e-8 * (1.0 + norm(&this.b)) {
            log::warn!("equality system inconsistent (residual {err:.3e})");
            return Ok(None);
        }
        Ok(Some(this))
    }

    /// Random probes of the pseudo-inverse: `G G⁺ G y = G y`.
    fn probe<R: Rng + ?Sized>(&self, gram: &Mat<f64>, rng: &mut R) -> Result<()> {
        let m = gram.nrows();
        for _ in 0..3 {
            let y = Mat::<f64>::from_fn(m, 1, |_, _| rng.sample(StandardNormal));
            let gy = gram * &y;
            let gy_v: Vec<f64> = (0..m).map(|i| gy[(i, 0)]).collect();
            let back = self.solve_gram(&gy_v);
            let bm = Mat::<f64>::from_fn(m, 1, |i, _| back[i]);
            let ggy = gram * &bm;
            let err = (0..m).map(|i| (ggy[(i, 0)] - gy_v[i]).abs()).fold(0.0, f64::max);
            let scale = gy_v.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if err.is_nan() || err > 1e-8 * scale.max(1e-300) {
                return Err(Error::Factorization(format!("pseudo-inverse probe error {err:.3e}")));
            }
        }
        Ok(())
    }

    fn apply_a(&self, x: &[f64]) -> Vec<f64> {
        let xm = faer::ColRef::from_slice(x);
        let r = &self.a * xm;
        (0..r.nrows()).map(|i| r[i]).collect()
    }

    fn solve_gram(&self, r: &[f64]) -> Vec<f64> {
        let rm = faer::ColRef::from_slice(r);
        let mut t = self.v.transpose() * rm;
        for i in 0..t.nrows() {
            t[i] *= self.inv[i];
        }
        let y = &self.v * &t;
        (0..y.nrows()).map(|i| y[i]).collect()
    }

    fn min_norm_solution(&self, b: &[f64]) -> Vec<f64> {
        let y = self.solve_gram(b);
        let ym = faer::ColRef::from_slice(&y);
        let x = self.a.transpose() * ym;
        (0..x.nrows()).map(|i| x[i]).collect()
    }
}

impl AffineProjection for DenseAffine {
    fn project(&mut self, v: &[f64], out: &mut [f64]) -> Result<()> {
        let mut r = self.apply_a(v);
        for (ri, bi) in r.iter_mut().zip(&self.b) {
            *ri -= bi;
        }
        let corr = self.min_norm_solution(&r);
        for i in 0..v.len() {
            out[i] = v[i] - corr[i];
        }
        Ok(())
    }
}

/// Operator-splitting solve of a generic program with a dense, row-equilibrated
/// affine projector. `rng` drives the random probes that validate the cached
/// factorization.
pub fn admm_solve<R: Rng + ?Sized>(program: &ConicProgram, cfg: &SolverConfig, rng: &mut R) -> Result<Solution> {
    program.validate()?;
    let Some(mut affine) = DenseAffine::new(program, rng)? else {
        return Ok(Solution {
            p_star: f64::NAN,
            s: None,
            c: None,
            point: Vec::new(),
            primal_residual: f64::INFINITY,
            dual_residual: f64::INFINITY,
            gap: f64::INFINITY,
            iterations: 0,
            status: SolveStatus::InfeasibleSuspect,
            history: Vec::new(),
        });
    };
    let out = run_admm(&mut affine, program.cones.as_slice(), &program.objective, cfg)?;
    let herm = |name: &str| match program.variables.get(name).map(|v| v.kind) {
        Some(VarKind::Hermitian(_)) => program.hermitian(&out.z, name).ok(),
        _ => None,
    };
    Ok(Solution {
        p_star: -dot(&program.objective, &out.z),
        s: herm("S"),
        c: herm("C"),
        primal_residual: out.primal,
        dual_residual: out.dual,
        gap: out.gap,
        iterations: out.iterations,
        status: out.status,
        history: out.history,
        point: out.z,
    })
}

#[cfg(test)]
mod tests {
    use super::super::program::{SparseMatrix, VarRange};
    use super::*;
    use crate::tensor::{c64, min_eigenvalue};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    /// `max t  s.t.  t ≤ 1,  [[1, t], [t, 1]] ⪰ 0`, with `t + s = 1`, `s ≥ 0`.
    fn toy() -> ConicProgram {
        // columns: X (sympsd 2: x00, x11, √2·x01), t, s
        let r2 = std::f64::consts::SQRT_2;
        let trip = vec![
            (0, 0, 1.0),
            (1, 1, 1.0),
            (2, 2, 1.0 / r2),
            (2, 3, -1.0),
            (3, 3, 1.0),
            (3, 4, 1.0),
        ];
        let mut variables = BTreeMap::new();
        variables.insert(
            "t".into(),
            VarRange {
                offset: 3,
                len: 1,
                kind: VarKind::Scalar,
            },
        );
        ConicProgram {
            objective: vec![0.0, 0.0, 0.0, -1.0, 0.0],
            a: SparseMatrix::from_triplets(4, 5, trip).unwrap(),
            b: vec![1.0, 1.0, 0.0, 1.0],
            cones: vec![Cone::SymPsd(2), Cone::Free(1), Cone::NonNeg(1)],
            variables,
            row_blocks: Vec::new(),
        }
    }

    #[test]
    fn toy_sdp_reaches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sol = admm_solve(&toy(), &SolverConfig::default(), &mut rng).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.p_star - 1.0).abs() < 1e-4, "{}", sol.p_star);
        assert!(sol.s.is_none());
    }

    #[test]
    fn toy_value_settles_monotonically() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = SolverConfig {
            tol: 1e-8,
            tol_obj: 1e-9,
            ..SolverConfig::default()
        };
        let sol = admm_solve(&toy(), &cfg, &mut rng).unwrap();
        let h = &sol.history;
        let tail = &h[h.len() - h.len() / 3..];
        for w in tail.windows(2) {
            // no oscillation beyond the tolerance band in the final phase
            assert!(w[1].value >= w[0].value - 1e-6, "{:?}", w);
        }
    }

    #[test]
    fn inconsistent_equalities_are_flagged() {
        let mut p = toy();
        // x00 = 1 and x00 = 2
        p.a = SparseMatrix::from_triplets(5, 5, {
            let mut t: Vec<_> = p.a.triplets().collect();
            t.push((4, 0, 1.0));
            t
        })
        .unwrap();
        p.b.push(2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sol = admm_solve(&p, &SolverConfig::default(), &mut rng).unwrap();
        assert_eq!(sol.status, SolveStatus::InfeasibleSuspect);
    }

    #[test]
    fn max_iter_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = SolverConfig {
            max_iter: 7,
            ..SolverConfig::default()
        };
        let sol = admm_solve(&toy(), &cfg, &mut rng).unwrap();
        assert_eq!(sol.status, SolveStatus::MaxIter);
        assert_eq!(sol.iterations, 7);
    }

    #[test]
    fn hermitian_lp_with_complex_entries() {
        // min ⟨H, X⟩ over density matrices: the smallest eigenvalue of H
        let h = ComplexMatrix::new(2, 2, vec![c64(1.0, 0.0), c64(0.0, -1.0), c64(0.0, 1.0), c64(-0.5, 0.0)]).unwrap();
        let mut c = vec![0.0; 4];
        herm_to_coords(&h, &mut c);
        let trip = vec![(0, 0, 1.0), (0, 1, 1.0)];
        let mut variables = BTreeMap::new();
        variables.insert(
            "S".into(),
            VarRange {
                offset: 0,
                len: 4,
                kind: VarKind::Hermitian(2),
            },
        );
        let p = ConicProgram {
            objective: c,
            a: SparseMatrix::from_triplets(1, 4, trip).unwrap(),
            b: vec![1.0],
            cones: vec![Cone::HermPsd(2)],
            variables,
            row_blocks: Vec::new(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sol = admm_solve(&p, &SolverConfig::default(), &mut rng).unwrap();
        let lo = min_eigenvalue(&h).unwrap();
        assert!((sol.p_star + lo).abs() < 1e-4, "{} vs {}", -sol.p_star, lo);
        let s = sol.s.unwrap();
        assert!(min_eigenvalue(&s).unwrap() > -1e-9);
        assert!((s.trace().re - 1.0).abs() < 1e-4);
    }

    #[test]
    fn psd_clip_matches_spectral_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [1, 3, 6] {
            let a = ComplexMatrix::from_fn(n, n, |_, _| c64(rng.sample(StandardNormal), rng.sample(StandardNormal)));
            let h = a.hermitian_part();
            let p = psd_clip(&h).unwrap();
            assert!(min_eigenvalue(&p).unwrap() > -1e-12);
            // the clipped part is PSD-orthogonal: ⟨P, P − H⟩ = 0
            let diff = &p - &h;
            assert!(p.inner(&diff).norm() < 1e-10);
            assert!(min_eigenvalue(&diff).unwrap() > -1e-12);
        }
    }
}
