use std::f64::consts::SQRT_2;

use super::span::{ChannelSpan, SpanningSet};
use super::structure::{slot_input, slot_output, CombMode, CombStructure};
use crate::error::{Error, Result};
use crate::quantum::choi_of_unitary_labeled;
use crate::tensor::{kron_all, Complex64, ComplexMatrix};

/// Real linear functional `H ↦ Re Σ w·H[a,b]` on a Hermitian matrix.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinearFunctional {
    pub terms: Vec<(usize, usize, Complex64)>,
}

impl LinearFunctional {
    pub fn eval(&self, h: &ComplexMatrix) -> f64 {
        self.terms.iter().map(|&(a, b, w)| (w * h[(a, b)]).re).sum()
    }

    fn push(&mut self, a: usize, b: usize, w: Complex64) {
        if w != Complex64::new(0.0, 0.0) {
            self.terms.push((a, b, w));
        }
    }
}

/// Weights selecting the orthonormal Hermitian coordinates of an `n×n`
/// matrix, in the order of [`crate::tensor::herm_to_coords`]: `(i, j, w)`
/// with coordinate `Re(w·R[i,j])`.
fn herm_coordinate_weights(n: usize) -> Vec<(usize, usize, Complex64)> {
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        out.push((i, i, Complex64::new(1.0, 0.0)));
    }
    for i in 0..n {
        for j in i + 1..n {
            out.push((i, j, Complex64::new(SQRT_2, 0.0)));
            out.push((i, j, Complex64::new(0.0, -SQRT_2)));
        }
    }
    out
}

/// A family of equalities `ℓ_r(X) = rhs_r` on one Hermitian variable.
#[derive(Clone, Debug)]
pub struct ConstraintBlock {
    pub name: String,
    pub rows: Vec<LinearFunctional>,
    pub rhs: Vec<f64>,
}

impl ConstraintBlock {
    pub fn max_residual(&self, x: &ComplexMatrix) -> f64 {
        self.rows
            .iter()
            .zip(&self.rhs)
            .map(|(r, b)| (r.eval(x) - b).abs())
            .fold(0.0, f64::max)
    }
}

fn trace_block(n: usize, t0: f64) -> ConstraintBlock {
    let mut row = LinearFunctional::default();
    for i in 0..n {
        row.push(i, i, Complex64::new(1.0, 0.0));
    }
    ConstraintBlock {
        name: "trace".into(),
        rows: vec![row],
        rhs: vec![t0],
    }
}

/// The comb chain as explicit equalities: for every tooth `n` the Hermitian
/// coordinates of `Tr_{A} C − I_{in}/d_{in} ⊗ Tr_{in ∪ A} C` (with
/// `A = outₙ ∪ later teeth`) vanish, plus `Tr C = ∏ d_in`.
pub fn comb_constraint_operators(structure: &CombStructure) -> Result<Vec<ConstraintBlock>> {
    if structure.mode == CombMode::Ico {
        return Err(Error::Logic(
            "indefinite-order structures use ico_constraint_operators".into(),
        ));
    }
    let layout = &structure.layout;
    let mut blocks = Vec::with_capacity(structure.teeth.len() + 1);
    for (n, tooth) in structure.teeth.iter().enumerate() {
        let earlier: Vec<&str> = structure.teeth[..n]
            .iter()
            .flat_map(|t| t.inputs.iter().chain(&t.outputs).map(String::as_str))
            .collect();
        let traced: Vec<&str> = structure.teeth[n..]
            .iter()
            .enumerate()
            .flat_map(|(m, t)| {
                let ins = if m == 0 { &[][..] } else { &t.inputs[..] };
                ins.iter().chain(&t.outputs).map(String::as_str)
            })
            .collect();
        let off_e = layout.offsets(&layout.positions(&earlier)?);
        let off_x = layout.offsets(&layout.positions(&tooth.inputs)?);
        let off_a = layout.offsets(&layout.positions(&traced)?);
        let (ne, nx) = (off_e.len(), off_x.len());
        let inv_dx = 1.0 / nx as f64;
        let kidx = |kk: usize| (off_e[kk / nx], kk % nx);

        let mut rows = Vec::new();
        for (i, j, w) in herm_coordinate_weights(ne * nx) {
            let ((ei, xi), (ej, xj)) = (kidx(i), kidx(j));
            let mut row = LinearFunctional::default();
            for &t in &off_a {
                row.push(ei + off_x[xi] + t, ej + off_x[xj] + t, w);
            }
            if xi == xj {
                for &y in &off_x {
                    for &t in &off_a {
                        row.push(ei + y + t, ej + y + t, -w * inv_dx);
                    }
                }
            }
            rows.push(row);
        }
        let rhs = vec![0.0; rows.len()];
        blocks.push(ConstraintBlock {
            name: format!("tooth{}", n + 1),
            rows,
            rhs,
        });
    }
    blocks.push(trace_block(structure.total_dim(), structure.normalization()));
    Ok(blocks)
}

/// Index helper for the inversion layout `P, slots…, F`.
struct SlotIndex {
    d: usize,
    slot: usize,
}

impl SlotIndex {
    fn new(structure: &CombStructure) -> Self {
        Self {
            d: structure.d,
            slot: structure.d.pow(2 * structure.k as u32),
        }
    }

    /// Flat index of `(p, s, f)`.
    fn at(&self, p: usize, s: usize, f: usize) -> usize {
        (p * self.slot + s) * self.d + f
    }
}

/// `S ∗ X` over all slot legs for `S` on `P, I₁O₁…I_kO_k, F` and `X` on the
/// slots; the result lives on `P ⊗ F`.
pub fn slot_link(s: &ComplexMatrix, structure: &CombStructure, x: &ComplexMatrix) -> Result<ComplexMatrix> {
    let ix = SlotIndex::new(structure);
    let n = structure.total_dim();
    if s.rows() != n || x.rows() != ix.slot || !x.is_square() || !s.is_square() {
        return Err(Error::Shape(
            "slot link operand sizes do not match the structure".into(),
        ));
    }
    let d = structure.d;
    let mut out = ComplexMatrix::zeros(d * d, d * d);
    for p in 0..d {
        for f in 0..d {
            for q in 0..d {
                for g in 0..d {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for a in 0..ix.slot {
                        let row = ix.at(p, a, f) * n;
                        let xrow = a * ix.slot;
                        for b in 0..ix.slot {
                            acc += s.data()[row + ix.at(q, b, g)] * x.data()[xrow + b];
                        }
                    }
                    out[(p * d + f, q * d + g)] = acc;
                }
            }
        }
    }
    Ok(out)
}

/// Rows `ℓ_r` linear in `S` and coefficients `c_r` encoding
/// `S ∗ 𝔠(U)^{⊗k} = p·𝔠(U⁻¹)` as `ℓ_r(S) − c_r p = 0`, one Hermitian block
/// on `P ⊗ F` per spanning unitary.
#[derive(Clone, Debug)]
pub struct UniversalityRows {
    pub rows: Vec<LinearFunctional>,
    pub p_coeffs: Vec<f64>,
}

impl UniversalityRows {
    pub fn max_residual(&self, s: &ComplexMatrix, p: f64) -> f64 {
        self.rows
            .iter()
            .zip(&self.p_coeffs)
            .map(|(r, c)| (r.eval(s) - c * p).abs())
            .fold(0.0, f64::max)
    }
}

/// Target `𝔠(U⁻¹)` on `P ⊗ F`.
pub fn inverse_target(u: &ComplexMatrix) -> Result<ComplexMatrix> {
    Ok(choi_of_unitary_labeled(&u.adjoint(), "P", "F")?.matrix().clone())
}

pub fn universality_constraints(spanning: &SpanningSet, structure: &CombStructure) -> Result<UniversalityRows> {
    if spanning.d != structure.d || spanning.k != structure.k {
        return Err(Error::InvalidArgument(format!(
            "spanning set is for (d={}, k={}) but structure is (d={}, k={})",
            spanning.d, spanning.k, structure.d, structure.k
        )));
    }
    let d = structure.d;
    let ix = SlotIndex::new(structure);
    let weights = herm_coordinate_weights(d * d);
    let mut rows = Vec::with_capacity(spanning.rank * weights.len());
    let mut p_coeffs = Vec::with_capacity(rows.capacity());
    for (u, x) in spanning.unitaries.iter().zip(&spanning.choi_powers) {
        let target = inverse_target(u)?;
        let nz: Vec<(usize, usize, Complex64)> = (0..ix.slot)
            .flat_map(|a| (0..ix.slot).map(move |b| (a, b)))
            .map(|(a, b)| (a, b, x[(a, b)]))
            .filter(|&(_, _, v)| v.norm() > 1e-15)
            .collect();
        for &(i, j, w) in &weights {
            let (p, f, q, g) = (i / d, i % d, j / d, j % d);
            let mut row = LinearFunctional::default();
            for &(a, b, v) in &nz {
                row.push(ix.at(p, a, f), ix.at(q, b, g), w * v);
            }
            rows.push(row);
            p_coeffs.push((w * target[(i, j)]).re);
        }
    }
    Ok(UniversalityRows { rows, p_coeffs })
}

/// Largest `|S ∗ 𝔠(U)^{⊗k} − p·𝔠(U⁻¹)|` entry over `unitaries`.
pub fn universality_residual(
    s: &ComplexMatrix,
    p: f64,
    structure: &CombStructure,
    unitaries: &[ComplexMatrix],
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for u in unitaries {
        let x = super::span::choi_power(u, structure.k)?;
        let lhs = slot_link(s, structure, &x)?;
        worst = worst.max(lhs.max_abs_diff(&inverse_target(u)?.scale_real(p)));
    }
    Ok(worst)
}

/// Plug-in validity: for every tuple of spanning channels the induced map
/// `P → F` is trace preserving, `Tr_F[W ∗ (J₁ ⊗ … ⊗ J_k)] = I_P`.
/// Emits `rank^k` blocks of `d_P²` rows.
pub fn ico_constraint_operators(structure: &CombStructure, spans: &[ChannelSpan]) -> Result<Vec<ConstraintBlock>> {
    let (d, k) = (structure.d, structure.k);
    if spans.len() != k {
        return Err(Error::InvalidArgument(format!(
            "{} channel spans for {k} slots",
            spans.len()
        )));
    }
    for (j, s) in spans.iter().enumerate() {
        if s.d_in != structure.layout.dim_of(&slot_input(j + 1))?
            || s.d_out != structure.layout.dim_of(&slot_output(j + 1))?
        {
            return Err(Error::Shape(format!("channel span {} has the wrong dimensions", j + 1)));
        }
    }
    let ix = SlotIndex::new(structure);
    let weights = herm_coordinate_weights(d);
    let total: usize = spans.iter().map(|s| s.chois.len()).product();
    let mut blocks = Vec::with_capacity(total);
    let mut tuple = vec![0usize; k];
    for t in 0..total {
        let mut rem = t;
        for j in (0..k).rev() {
            tuple[j] = rem % spans[j].chois.len();
            rem /= spans[j].chois.len();
        }
        let x = kron_all((0..k).map(|j| &spans[j].chois[tuple[j]])).unwrap();
        let nz: Vec<(usize, usize, Complex64)> = (0..ix.slot)
            .flat_map(|a| (0..ix.slot).map(move |b| (a, b)))
            .map(|(a, b)| (a, b, x[(a, b)]))
            .filter(|&(_, _, v)| v.norm() > 1e-15)
            .collect();
        let mut rows = Vec::with_capacity(weights.len());
        let mut rhs = Vec::with_capacity(weights.len());
        for &(p, q, w) in &weights {
            let mut row = LinearFunctional::default();
            for f in 0..d {
                for &(a, b, v) in &nz {
                    row.push(ix.at(p, a, f), ix.at(q, b, f), w * v);
                }
            }
            rows.push(row);
            rhs.push(if p == q { w.re } else { 0.0 });
        }
        blocks.push(ConstraintBlock {
            name: format!("ico{t}"),
            rows,
            rhs,
        });
    }
    Ok(blocks)
}

/// Equalities defining the deterministic elements of `structure`, in the
/// mode-appropriate form.
pub fn structure_constraint_operators(
    structure: &CombStructure,
    spans: Option<&[ChannelSpan]>,
) -> Result<Vec<ConstraintBlock>> {
    match structure.mode {
        CombMode::Ico => {
            let spans = spans
                .ok_or_else(|| Error::InvalidArgument("indefinite-order constraints need channel spans".into()))?;
            let mut blocks = ico_constraint_operators(structure, spans)?;
            blocks.push(trace_block(structure.total_dim(), structure.normalization()));
            Ok(blocks)
        }
        _ => comb_constraint_operators(structure),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combs::span::{channel_spanning_set, spanning_unitary_set};
    use crate::combs::structure::{comb_residuals, CausalProjector};
    use crate::quantum::link_product;
    use crate::tensor::{c64, Operator};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_herm(n: usize, rng: &mut ChaCha8Rng) -> ComplexMatrix {
        ComplexMatrix::from_fn(n, n, |_, _| c64(StandardNormal.sample(rng), StandardNormal.sample(rng)))
            .hermitian_part()
    }

    #[test]
    fn herm_weights_reproduce_coordinates() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = random_herm(4, &mut rng);
        let mut coords = vec![0.0; 16];
        crate::tensor::herm_to_coords(&h, &mut coords);
        for (c, (i, j, w)) in coords.iter().zip(herm_coordinate_weights(4)) {
            assert!((c - (w * h[(i, j)]).re).abs() < 1e-14);
        }
    }

    #[test]
    fn block_count_adaptive_k1() {
        let s = CombStructure::inversion(2, 1, CombMode::Adaptive).unwrap();
        let blocks = comb_constraint_operators(&s).unwrap();
        // two teeth + trace
        assert_eq!(blocks.len(), 3);
        assert_eq!(blocks[0].rows.len(), 4);
        assert_eq!(blocks[1].rows.len(), 64);
        assert_eq!(blocks[2].rows.len(), 1);
    }

    #[test]
    fn operators_agree_with_residual_checker() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for mode in [CombMode::Adaptive, CombMode::Parallel] {
            let s = CombStructure::inversion(2, 2, mode).unwrap();
            let blocks = comb_constraint_operators(&s).unwrap();
            let proj = CausalProjector::new(&s).unwrap();
            let c = proj.project(&random_herm(s.total_dim(), &mut rng));
            for b in &blocks {
                assert!(b.max_residual(&c) < 1e-10, "{mode} {}", b.name);
            }
            let bad = random_herm(s.total_dim(), &mut rng);
            let worst = blocks.iter().map(|b| b.max_residual(&bad)).fold(0.0, f64::max);
            assert!(worst > 1e-3);
            assert!(comb_residuals(&bad, &s).unwrap().max_equality() > 1e-3);
        }
    }

    #[test]
    fn slot_link_matches_generic_link() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let st = CombStructure::inversion(2, 1, CombMode::Adaptive).unwrap();
        let s = random_herm(16, &mut rng);
        let x = random_herm(4, &mut rng);
        let a = Operator::new(s.clone(), st.layout.clone()).unwrap();
        let b = Operator::new(x.clone(), st.layout.only(&["I1", "O1"]).unwrap()).unwrap();
        let generic = link_product(&a, &b, &["I1", "O1"]).unwrap();
        let fast = slot_link(&s, &st, &x).unwrap();
        assert!(generic.matrix.max_abs_diff(&fast) < 1e-12);
    }

    #[test]
    fn universality_rows_match_direct_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let st = CombStructure::inversion(2, 1, CombMode::Adaptive).unwrap();
        let span = spanning_unitary_set(2, 1, &mut rng, 64).unwrap();
        let rows = universality_constraints(&span, &st).unwrap();
        assert_eq!(rows.rows.len(), span.rank * 16);
        assert_eq!(rows.max_residual(&ComplexMatrix::zeros(16, 16), 0.0), 0.0);
        let s = random_herm(16, &mut rng);
        let direct = universality_residual(&s, 0.3, &st, &span.unitaries).unwrap();
        let via_rows = rows.max_residual(&s, 0.3);
        assert!(direct > 1e-3 && via_rows > 1e-3);
        // every row is a real/imag part of an entry the direct check sees
        assert!(via_rows <= SQRT_2 * direct + 1e-12);
    }

    #[test]
    fn ico_operator_count_and_causal_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let st = CombStructure::inversion(2, 2, CombMode::Ico).unwrap();
        let spans: Vec<ChannelSpan> = (0..2).map(|_| channel_spanning_set(2, 2, &mut rng).unwrap()).collect();
        let blocks = ico_constraint_operators(&st, &spans).unwrap();
        assert_eq!(blocks.len(), 13 * 13);
        assert!(blocks.iter().all(|b| b.rows.len() == 4));
        let adaptive = CombStructure::inversion(2, 2, CombMode::Adaptive).unwrap();
        let c = CausalProjector::new(&adaptive)
            .unwrap()
            .project(&random_herm(64, &mut rng));
        for b in &blocks {
            assert!(b.max_residual(&c) < 1e-9);
        }
    }
}
