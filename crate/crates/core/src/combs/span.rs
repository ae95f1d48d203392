use rand::Rng;

use crate::error::{Error, Result};
use crate::quantum::choi_of_unitary;
use crate::tensor::{
    coords_to_herm, haar_special_unitary, haar_unitary, herm_eigenvalues, herm_to_coords, kron_power, Complex64,
    ComplexMatrix,
};

/// Relative residual below which a new sample counts as dependent.
pub const RANK_TOL: f64 = 1e-8;
/// Consecutive dependent samples required to declare saturation.
pub const SATURATION_WINDOW: usize = 10;

/// Incrementally built orthonormal basis of a subspace of real vectors,
/// kept together with the triangular factor `R` of the accepted samples
/// (`sample_i = Σ_m q_m R[m][i]`).
#[derive(Clone, Debug)]
pub struct OrthoBasis {
    len: usize,
    q: Vec<f64>,
    r: Vec<Vec<f64>>,
    tol: f64,
}

impl OrthoBasis {
    pub fn new(len: usize) -> Self {
        Self {
            len,
            q: Vec::new(),
            r: Vec::new(),
            tol: RANK_TOL,
        }
    }

    pub fn rank(&self) -> usize {
        self.r.len()
    }

    pub fn vector_len(&self) -> usize {
        self.len
    }

    pub fn vector(&self, m: usize) -> &[f64] {
        &self.q[m * self.len..(m + 1) * self.len]
    }

    /// `R[m][i]` for `m ≤ i`.
    pub fn r(&self, m: usize, i: usize) -> f64 {
        if m > i {
            0.0
        } else {
            self.r[i][m]
        }
    }

    /// Coefficients `⟨q_m, v⟩`.
    pub fn coefficients(&self, v: &[f64]) -> Vec<f64> {
        (0..self.rank()).map(|m| dot(self.vector(m), v)).collect()
    }

    /// Orthogonal component of `v`.
    pub fn residual(&self, v: &[f64]) -> Vec<f64> {
        let mut res = v.to_vec();
        for _ in 0..2 {
            for m in 0..self.rank() {
                let c = dot(self.vector(m), &res);
                axpy(-c, self.vector(m), &mut res);
            }
        }
        res
    }

    /// Appends `v` if it is independent of the current span (relative
    /// residual above the rank tolerance); returns whether it was kept.
    pub fn try_push(&mut self, v: &[f64]) -> bool {
        assert_eq!(v.len(), self.len);
        let norm = dot(v, v).sqrt();
        if norm == 0.0 {
            return false;
        }
        let mut res = v.to_vec();
        let mut coeffs = vec![0.0; self.rank()];
        // classical Gram–Schmidt with one reorthogonalization pass
        for _ in 0..2 {
            for (m, c_acc) in coeffs.iter_mut().enumerate() {
                let c = dot(self.vector(m), &res);
                *c_acc += c;
                axpy(-c, &self.q[m * self.len..(m + 1) * self.len], &mut res);
            }
        }
        let rn = dot(&res, &res).sqrt();
        if rn <= self.tol * norm {
            return false;
        }
        for x in &mut res {
            *x /= rn;
        }
        self.q.extend_from_slice(&res);
        coeffs.push(rn);
        self.r.push(coeffs);
        true
    }

    /// Ratio of smallest to largest singular value of the accepted samples.
    pub fn conditioning(&self) -> Result<f64> {
        let r = self.rank();
        if r == 0 {
            return Ok(1.0);
        }
        // Gram = Rᵀ R
        let gram = ComplexMatrix::from_fn(r, r, |i, j| {
            let s: f64 = (0..=i.min(j)).map(|m| self.r(m, i) * self.r(m, j)).sum();
            Complex64::new(s, 0.0)
        });
        let ev = herm_eigenvalues(&gram)?;
        let (lo, hi) = (ev[0].max(0.0), ev[r - 1]);
        Ok((lo / hi).sqrt())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn coords(h: &ComplexMatrix) -> Vec<f64> {
    let mut out = vec![0.0; h.rows() * h.rows()];
    herm_to_coords(h, &mut out);
    out
}

/// Haar unitaries whose `𝔠(U)^{⊗k}` form a basis of the span of all such
/// powers.
#[derive(Clone, Debug)]
pub struct SpanningSet {
    pub d: usize,
    pub k: usize,
    pub unitaries: Vec<ComplexMatrix>,
    /// `𝔠(U)^{⊗k}` on `I₁O₁…I_kO_k`.
    pub choi_powers: Vec<ComplexMatrix>,
    pub rank: usize,
    pub samples_drawn: usize,
    /// Rank after each sample.
    pub rank_history: Vec<usize>,
    pub basis: OrthoBasis,
}

impl SpanningSet {
    /// Side of the slot space, `d^{2k}`.
    pub fn slot_dim(&self) -> usize {
        self.d.pow(2 * self.k as u32)
    }

    /// Trailing samples that did not raise the rank.
    pub fn saturation_run(&self) -> usize {
        let last = self.rank_history.last().copied().unwrap_or(0);
        self.rank_history.iter().rev().take_while(|&&r| r == last).count() - 1
    }

    /// Orthonormal basis element `m` as a Hermitian matrix on the slot space.
    pub fn basis_matrix(&self, m: usize) -> ComplexMatrix {
        coords_to_herm(self.basis.vector(m), self.slot_dim())
    }
}

/// `𝔠(u)^{⊗k}`.
pub fn choi_power(u: &ComplexMatrix, k: usize) -> Result<ComplexMatrix> {
    let d = u.rows();
    Ok(kron_power(choi_of_unitary(u, d)?.matrix(), k))
}

/// Samples Haar `SU(d)` elements until the span of `𝔠(U)^{⊗k}` stops growing
/// for [`SATURATION_WINDOW`] consecutive samples. `size_cap` bounds `d^{2k}`.
pub fn spanning_unitary_set<R: Rng + ?Sized>(d: usize, k: usize, rng: &mut R, size_cap: usize) -> Result<SpanningSet> {
    if d < 2 || k < 1 {
        return Err(Error::InvalidArgument(format!(
            "need d ≥ 2 and k ≥ 1, got d={d}, k={k}"
        )));
    }
    let side = d.checked_pow(2 * k as u32).ok_or(Error::SizeCap {
        required: usize::MAX,
        allowed: size_cap,
    })?;
    if side > size_cap {
        return Err(Error::SizeCap {
            required: side,
            allowed: size_cap,
        });
    }
    let mut basis = OrthoBasis::new(side * side);
    let mut set = SpanningSet {
        d,
        k,
        unitaries: Vec::new(),
        choi_powers: Vec::new(),
        rank: 0,
        samples_drawn: 0,
        rank_history: Vec::new(),
        basis: OrthoBasis::new(0),
    };
    let mut stale = 0;
    while stale < SATURATION_WINDOW {
        let u = haar_special_unitary(d, rng);
        let x = choi_power(&u, k)?;
        set.samples_drawn += 1;
        if basis.try_push(&coords(&x)) {
            set.unitaries.push(u);
            set.choi_powers.push(x);
            stale = 0;
        } else {
            stale += 1;
        }
        set.rank_history.push(basis.rank());
        log::debug!("span d={d} k={k}: sample {} rank {}", set.samples_drawn, basis.rank());
    }
    set.rank = basis.rank();
    set.basis = basis;
    Ok(set)
}

/// CPTP Choi matrices (on `in ⊗ out`) spanning the affine hull of channels.
#[derive(Clone, Debug)]
pub struct ChannelSpan {
    pub d_in: usize,
    pub d_out: usize,
    pub chois: Vec<ComplexMatrix>,
    pub rank: usize,
    pub samples_drawn: usize,
    pub basis: OrthoBasis,
}

impl ChannelSpan {
    /// Orthogonal projector onto the span, applied to a Hermitian matrix.
    pub fn project(&self, h: &ComplexMatrix) -> ComplexMatrix {
        let n = self.d_in * self.d_out;
        let c = coords(h);
        let mut out = vec![0.0; n * n];
        for (m, cm) in self.basis.coefficients(&c).into_iter().enumerate() {
            axpy(cm, self.basis.vector(m), &mut out);
        }
        coords_to_herm(&out, n)
    }
}

/// Choi of `ρ ↦ Σ_m ⟨e_m|ρ|e_m⟩ |s_m⟩⟨s_m|` for the columns `e_m` of
/// `basis` and independent pure states `s_m`.
fn measure_prepare_choi(basis: &ComplexMatrix, states: &[Vec<Complex64>]) -> ComplexMatrix {
    let d_in = basis.rows();
    let d_out = states[0].len();
    let mut j = ComplexMatrix::zeros(d_in * d_out, d_in * d_out);
    for (m, s) in states.iter().enumerate() {
        // Kraus |s_m⟩⟨e_m|
        let mut v = Vec::with_capacity(d_in * d_out);
        for i in 0..d_in {
            for o in 0..d_out {
                v.push(basis[(i, m)].conj() * s[o]);
            }
        }
        j += &ComplexMatrix::outer(&v, &v);
    }
    j
}

fn random_pure_state<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<Complex64> {
    let u = haar_unitary(d, rng);
    (0..d).map(|i| u[(i, 0)]).collect()
}

/// Unitary channels (when `d_in = d_out`) and measure-and-prepare channels,
/// alternating, until the span saturates.
pub fn channel_spanning_set<R: Rng + ?Sized>(d_in: usize, d_out: usize, rng: &mut R) -> Result<ChannelSpan> {
    channel_spanning_set_with(d_in, d_out, rng, true)
}

/// As [`channel_spanning_set`]; `with_prepare = false` restricts to unitary
/// channels (only meaningful for `d_in = d_out`).
pub fn channel_spanning_set_with<R: Rng + ?Sized>(
    d_in: usize,
    d_out: usize,
    rng: &mut R,
    with_prepare: bool,
) -> Result<ChannelSpan> {
    if d_in == 0 || d_out == 0 {
        return Err(Error::InvalidArgument("zero dimension".into()));
    }
    if !with_prepare && d_in != d_out {
        return Err(Error::InvalidArgument(
            "unitary channels need equal input and output dimensions".into(),
        ));
    }
    let n = d_in * d_out;
    let mut basis = OrthoBasis::new(n * n);
    let mut chois = Vec::new();
    let mut samples = 0;
    let mut stale = 0;
    while stale < SATURATION_WINDOW {
        let unitary_turn = d_in == d_out && (!with_prepare || samples % 2 == 0);
        let j = if unitary_turn {
            choi_of_unitary(&haar_unitary(d_in, rng), d_in)?.matrix().clone()
        } else {
            let basis = haar_unitary(d_in, rng);
            let states: Vec<_> = (0..d_in).map(|_| random_pure_state(d_out, rng)).collect();
            measure_prepare_choi(&basis, &states)
        };
        samples += 1;
        if basis.try_push(&coords(&j)) {
            chois.push(j);
            stale = 0;
        } else {
            stale += 1;
        }
    }
    Ok(ChannelSpan {
        d_in,
        d_out,
        rank: basis.rank(),
        chois,
        samples_drawn: samples,
        basis,
    })
}
