use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::{
    add_replaced_with_offsets, embed_with_identity, min_eigenvalue, trace_average_with_offsets,
    trace_replace_with_offsets, Complex64, ComplexMatrix, Operator, SpaceLayout,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CombMode {
    Parallel,
    Adaptive,
    Ico,
}

impl CombMode {
    pub const ALL: [CombMode; 3] = [CombMode::Parallel, CombMode::Adaptive, CombMode::Ico];

    pub fn as_str(self) -> &'static str {
        match self {
            CombMode::Parallel => "parallel",
            CombMode::Adaptive => "adaptive",
            CombMode::Ico => "ico",
        }
    }
}

impl fmt::Display for CombMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CombMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "parallel" => Ok(CombMode::Parallel),
            "adaptive" | "sequential" => Ok(CombMode::Adaptive),
            "ico" => Ok(CombMode::Ico),
            other => Err(Error::InvalidArgument(format!("unknown mode {other:?}"))),
        }
    }
}

/// One tooth: the comb receives `inputs` and then emits `outputs`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tooth {
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

impl Tooth {
    fn new(inputs: &[String], outputs: &[String]) -> Self {
        Self {
            inputs: inputs.to_vec(),
            outputs: outputs.to_vec(),
        }
    }
}

pub fn slot_input(j: usize) -> String {
    format!("I{j}")
}

pub fn slot_output(j: usize) -> String {
    format!("O{j}")
}

/// Wiring of a `k`-slot supermap on `P, I₁, O₁, …, I_k, O_k, F`.
#[derive(Clone, Debug, PartialEq)]
pub struct CombStructure {
    pub mode: CombMode,
    pub d: usize,
    pub k: usize,
    pub layout: SpaceLayout,
    pub teeth: Vec<Tooth>,
}

impl CombStructure {
    /// Inversion-task wiring: every wire has dimension `d`.
    ///
    /// * adaptive: `(P→I₁), (O₁→I₂), …, (O_k→F)`
    /// * parallel: `(P→I₁…I_k), (O₁…O_k→F)`
    /// * ico: `(P→∅)`, one `(O_j→I_j)` group per slot, `(∅→F)`; used for
    ///   bookkeeping only, validity is the process-matrix condition.
    pub fn inversion(d: usize, k: usize, mode: CombMode) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidArgument(format!("dimension {d} < 2")));
        }
        let p = vec!["P".to_string()];
        let f = vec!["F".to_string()];
        let ins: Vec<String> = (1..=k).map(slot_input).collect();
        let outs: Vec<String> = (1..=k).map(slot_output).collect();
        let mut subsystems = vec![("P".to_string(), d)];
        for j in 0..k {
            subsystems.push((ins[j].clone(), d));
            subsystems.push((outs[j].clone(), d));
        }
        subsystems.push(("F".to_string(), d));
        let layout = SpaceLayout::new(subsystems)?;

        let teeth = match mode {
            CombMode::Adaptive => {
                let mut teeth = Vec::with_capacity(k + 1);
                let mut prev = p.clone();
                for j in 0..k {
                    teeth.push(Tooth::new(&prev, std::slice::from_ref(&ins[j])));
                    prev = vec![outs[j].clone()];
                }
                teeth.push(Tooth::new(&prev, &f));
                teeth
            }
            CombMode::Parallel => vec![Tooth::new(&p, &ins), Tooth::new(&outs, &f)],
            CombMode::Ico => {
                let mut teeth = vec![Tooth::new(&p, &[])];
                for j in 0..k {
                    teeth.push(Tooth::new(
                        std::slice::from_ref(&outs[j]),
                        std::slice::from_ref(&ins[j]),
                    ));
                }
                teeth.push(Tooth::new(&[], &f));
                teeth
            }
        };
        Self::new(mode, d, k, layout, teeth)
    }

    /// Validates that every label is used by exactly one tooth.
    pub fn new(mode: CombMode, d: usize, k: usize, layout: SpaceLayout, teeth: Vec<Tooth>) -> Result<Self> {
        let mut seen: Vec<&str> = Vec::new();
        for t in &teeth {
            for l in t.inputs.iter().chain(&t.outputs) {
                if !layout.contains(l) {
                    return Err(Error::Label(format!("tooth label {l} not in layout")));
                }
                if seen.contains(&l.as_str()) {
                    return Err(Error::Label(format!("label {l} used by two teeth")));
                }
                seen.push(l);
            }
        }
        if let Some(missing) = layout.labels().find(|l| !seen.contains(l)) {
            return Err(Error::Label(format!("label {missing} not assigned to a tooth")));
        }
        Ok(Self {
            mode,
            d,
            k,
            layout,
            teeth,
        })
    }

    pub fn total_dim(&self) -> usize {
        self.layout.total_dim()
    }

    /// `Tr C` of a deterministic element: the product of all input
    /// dimensions (`d^{k+1}` for the inversion wiring in every mode).
    pub fn normalization(&self) -> f64 {
        self.teeth
            .iter()
            .flat_map(|t| &t.inputs)
            .map(|l| self.layout.dim_of(l).unwrap())
            .product::<usize>() as f64
    }

    pub fn slot_labels(&self) -> Vec<String> {
        (1..=self.k).flat_map(|j| [slot_input(j), slot_output(j)]).collect()
    }

    /// Labels of teeth strictly after `n`.
    fn later_labels(&self, n: usize) -> Vec<String> {
        self.teeth[n + 1..]
            .iter()
            .flat_map(|t| t.inputs.iter().chain(&t.outputs).cloned())
            .collect()
    }
}

/// Per-condition residuals of the comb chain.
#[derive(Clone, Debug, PartialEq)]
pub struct CombResiduals {
    /// Max-abs residual of `Tr_{out_n} C⁽ⁿ⁾ = I_{in_n} ⊗ C⁽ⁿ⁻¹⁾`, first tooth first.
    pub teeth: Vec<f64>,
    /// `|Tr C − ∏ d_in|`.
    pub normalization: f64,
    /// Smallest eigenvalue of `C`.
    pub psd_margin: f64,
}

impl CombResiduals {
    pub fn max_equality(&self) -> f64 {
        self.teeth.iter().copied().fold(self.normalization, f64::max)
    }

    pub fn is_feasible(&self, tol: f64) -> bool {
        self.max_equality() <= tol && self.psd_margin >= -tol
    }
}

fn check_dim(c: &ComplexMatrix, structure: &CombStructure) -> Result<()> {
    let n = structure.total_dim();
    if c.rows() != n || c.cols() != n {
        return Err(Error::Shape(format!(
            "{}x{} matrix for a structure of dimension {n}",
            c.rows(),
            c.cols()
        )));
    }
    Ok(())
}

/// Recursive comb conditions for ordered (adaptive or parallel) structures.
///
/// `C⁽ᴺ⁾ = C` and `C⁽ⁿ⁻¹⁾ = Tr_{in_n out_n} C⁽ⁿ⁾ / d_{in_n}`; the last reduction
/// is a scalar, checked through the trace condition.
pub fn comb_residuals(c: &ComplexMatrix, structure: &CombStructure) -> Result<CombResiduals> {
    check_dim(c, structure)?;
    if structure.mode == CombMode::Ico {
        return Err(Error::Logic(
            "indefinite-order structures are checked with ico_residuals".into(),
        ));
    }
    let mut cur = Operator::new(c.clone(), structure.layout.clone())?;
    let mut teeth = vec![0.0; structure.teeth.len()];
    for (n, tooth) in structure.teeth.iter().enumerate().rev() {
        let reduced = cur.partial_trace(&tooth.outputs)?;
        let d_in = reduced.layout.dim_of_all(&tooth.inputs)?;
        let prev = reduced.partial_trace(&tooth.inputs)?;
        let prev_scaled = prev.matrix.scale_real(1.0 / d_in as f64);
        let lifted = embed_with_identity(&prev_scaled, &prev.layout, &reduced.layout)?;
        teeth[n] = reduced.matrix.max_abs_diff(&lifted);
        cur = Operator::new(prev_scaled, prev.layout)?;
    }
    let normalization = (c.trace().re - structure.normalization()).abs() + c.trace().im.abs();
    Ok(CombResiduals {
        teeth,
        normalization,
        psd_margin: min_eigenvalue(&c.hermitian_part())?,
    })
}

/// A trace-and-replace map `X ↦ Tr_A X ⊗ I_A/d_A` with cached offsets.
#[derive(Clone, Debug)]
struct TraceReplace {
    sel: Vec<usize>,
    rest: Vec<usize>,
}

impl TraceReplace {
    fn new(layout: &SpaceLayout, labels: &[String]) -> Result<Self> {
        let pos = layout.positions(labels)?;
        let rest = layout.complement(&pos);
        Ok(Self {
            sel: layout.offsets(&pos),
            rest: layout.offsets(&rest),
        })
    }

    fn apply(&self, x: &ComplexMatrix) -> ComplexMatrix {
        if self.sel.len() == 1 {
            return x.clone();
        }
        trace_replace_with_offsets(x, &self.sel, &self.rest)
    }

    /// `y ← y − R_a(y) + R_b(y)`, without forming either image.
    fn swap_in(a: &Self, b: &Self, y: &mut ComplexMatrix) {
        let ra = trace_average_with_offsets(y, &a.sel, &a.rest);
        let rb = trace_average_with_offsets(y, &b.sel, &b.rest);
        add_replaced_with_offsets(y, &ra, -1.0, &a.sel, &a.rest);
        add_replaced_with_offsets(y, &rb, 1.0, &b.sel, &b.rest);
    }
}

/// Orthogonal projection onto the affine hull of deterministic elements of a
/// structure: `X ↦ L(X) + (t₀/N)·I`, with `L` a self-adjoint idempotent map
/// whose range is the traceless part of the structure's linear span.
#[derive(Clone, Debug)]
pub struct CausalProjector {
    n: usize,
    trace: f64,
    kind: ProjectorKind,
}

#[derive(Clone, Debug)]
enum ProjectorKind {
    /// `∏ₙ (id − Qₙ)` with `Qₙ = R_{outₙ ∪ later} − R_{inₙ ∪ outₙ ∪ later}`.
    Comb(Vec<(TraceReplace, TraceReplace)>),
    /// `id − id_P ⊗ (⊗_j π_j) ⊗ R_F`, `π_j = id − R_{O_j} + R_{I_j O_j}`.
    Process {
        slots: Vec<(TraceReplace, TraceReplace)>,
        future: TraceReplace,
    },
}

impl CausalProjector {
    pub fn new(structure: &CombStructure) -> Result<Self> {
        let layout = &structure.layout;
        let kind = match structure.mode {
            CombMode::Ico => {
                let mut slots = Vec::with_capacity(structure.k);
                for j in 1..=structure.k {
                    let o = vec![slot_output(j)];
                    let io = vec![slot_input(j), slot_output(j)];
                    slots.push((TraceReplace::new(layout, &o)?, TraceReplace::new(layout, &io)?));
                }
                ProjectorKind::Process {
                    slots,
                    future: TraceReplace::new(layout, &["F".to_string()])?,
                }
            }
            _ => {
                let mut q = Vec::with_capacity(structure.teeth.len());
                for (n, tooth) in structure.teeth.iter().enumerate() {
                    let later = structure.later_labels(n);
                    let a: Vec<String> = tooth.outputs.iter().cloned().chain(later).collect();
                    let b: Vec<String> = tooth.inputs.iter().cloned().chain(a.iter().cloned()).collect();
                    q.push((TraceReplace::new(layout, &a)?, TraceReplace::new(layout, &b)?));
                }
                ProjectorKind::Comb(q)
            }
        };
        Ok(Self {
            n: structure.total_dim(),
            trace: structure.normalization(),
            kind,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn trace(&self) -> f64 {
        self.trace
    }

    /// Projection onto the linear span of deterministic elements (contains `I`).
    pub fn span(&self, x: &ComplexMatrix) -> ComplexMatrix {
        match &self.kind {
            ProjectorKind::Comb(q) => {
                let mut y = x.clone();
                for (a, b) in q {
                    TraceReplace::swap_in(a, b, &mut y);
                }
                y
            }
            ProjectorKind::Process { slots, future } => {
                let mut r = future.apply(x);
                for (o, io) in slots {
                    TraceReplace::swap_in(o, io, &mut r);
                }
                let mut y = x - &r;
                shift_diagonal(&mut y, x.trace() / self.n as f64);
                y
            }
        }
    }

    /// The linear part `L`: span projection minus the identity component.
    pub fn linear(&self, x: &ComplexMatrix) -> ComplexMatrix {
        let mut y = self.span(x);
        let t = y.trace() / self.n as f64;
        shift_diagonal(&mut y, -t);
        y
    }

    /// Nearest point of the affine hull.
    pub fn project(&self, x: &ComplexMatrix) -> ComplexMatrix {
        let mut y = self.linear(x);
        shift_diagonal(&mut y, Complex64::new(self.trace / self.n as f64, 0.0));
        y
    }

    /// Max-abs distance of `x` from the affine hull.
    pub fn residual(&self, x: &ComplexMatrix) -> f64 {
        x.max_abs_diff(&self.project(x))
    }
}

fn shift_diagonal(x: &mut ComplexMatrix, t: Complex64) {
    for i in 0..x.rows() {
        x[(i, i)] += t;
    }
}

/// Residuals of a candidate process matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ProcessResiduals {
    /// Max-abs distance from the affine set of valid process matrices.
    pub affine: f64,
    pub normalization: f64,
    pub psd_margin: f64,
}

impl ProcessResiduals {
    pub fn max_equality(&self) -> f64 {
        self.affine.max(self.normalization)
    }

    pub fn is_feasible(&self, tol: f64) -> bool {
        self.max_equality() <= tol && self.psd_margin >= -tol
    }
}

pub fn ico_residuals(w: &ComplexMatrix, structure: &CombStructure) -> Result<ProcessResiduals> {
    check_dim(w, structure)?;
    let proj = CausalProjector::new(&CombStructure {
        mode: CombMode::Ico,
        ..structure.clone()
    })?;
    Ok(ProcessResiduals {
        affine: proj.residual(w),
        normalization: (w.trace().re - structure.normalization()).abs() + w.trace().im.abs(),
        psd_margin: min_eigenvalue(&w.hermitian_part())?,
    })
}

/// Mode-appropriate feasibility check: largest equality residual and PSD
/// margin.
pub fn structure_residuals(c: &ComplexMatrix, structure: &CombStructure) -> Result<(f64, f64)> {
    match structure.mode {
        CombMode::Ico => {
            let r = ico_residuals(c, structure)?;
            Ok((r.max_equality(), r.psd_margin))
        }
        _ => {
            let r = comb_residuals(c, structure)?;
            Ok((r.max_equality(), r.psd_margin))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{choi_of_unitary_labeled, link_product};
    use crate::tensor::{c64, haar_unitary, kron_all};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn labels(s: &CombStructure) -> Vec<(Vec<String>, Vec<String>)> {
        s.teeth.iter().map(|t| (t.inputs.clone(), t.outputs.clone())).collect()
    }

    fn v(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn inversion_teeth() {
        let a = CombStructure::inversion(2, 2, CombMode::Adaptive).unwrap();
        assert_eq!(
            labels(&a),
            vec![
                (v(&["P"]), v(&["I1"])),
                (v(&["O1"]), v(&["I2"])),
                (v(&["O2"]), v(&["F"]))
            ]
        );
        assert_eq!(
            a.layout.labels().collect::<Vec<_>>(),
            vec!["P", "I1", "O1", "I2", "O2", "F"]
        );
        let p = CombStructure::inversion(2, 2, CombMode::Parallel).unwrap();
        assert_eq!(
            labels(&p),
            vec![(v(&["P"]), v(&["I1", "I2"])), (v(&["O1", "O2"]), v(&["F"]))]
        );
        assert_eq!(a.normalization(), 8.0);
        assert_eq!(p.normalization(), 8.0);
        let i = CombStructure::inversion(3, 2, CombMode::Ico).unwrap();
        assert_eq!(i.normalization(), 27.0);
    }

    #[test]
    fn rejects_bad_teeth() {
        let layout = SpaceLayout::from_pairs(&[("P", 2), ("F", 2)]).unwrap();
        let dup = vec![Tooth::new(&v(&["P"]), &v(&["P"]))];
        assert!(CombStructure::new(CombMode::Adaptive, 2, 0, layout.clone(), dup).is_err());
        let missing = vec![Tooth::new(&v(&["P"]), &[])];
        assert!(CombStructure::new(CombMode::Adaptive, 2, 0, layout, missing).is_err());
    }

    /// Identity channels P→I1, O1→F composed into a single operator.
    fn identity_chain(d: usize) -> ComplexMatrix {
        let id = ComplexMatrix::identity(d);
        let a = choi_of_unitary_labeled(&id, "P", "I1").unwrap();
        let b = choi_of_unitary_labeled(&id, "O1", "F").unwrap();
        link_product(&a.op, &b.op, &[] as &[&str]).unwrap().matrix
    }

    #[test]
    fn identity_chain_is_comb() {
        let s = CombStructure::inversion(2, 1, CombMode::Adaptive).unwrap();
        let r = comb_residuals(&identity_chain(2), &s).unwrap();
        assert!(r.max_equality() < 1e-12, "{r:?}");
        assert!(r.psd_margin > -1e-12);
    }

    #[test]
    fn product_of_channels_is_comb() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = CombStructure::inversion(2, 2, CombMode::Adaptive).unwrap();
        let chois: Vec<ComplexMatrix> = [("P", "I1"), ("O1", "I2"), ("O2", "F")]
            .iter()
            .map(|(a, b)| {
                choi_of_unitary_labeled(&haar_unitary(2, &mut rng), a, b)
                    .unwrap()
                    .matrix()
                    .clone()
            })
            .collect();
        let c = kron_all(&chois).unwrap();
        let r = comb_residuals(&c, &s).unwrap();
        assert!(r.max_equality() < 1e-12, "{r:?}");
        let proj = CausalProjector::new(&s).unwrap();
        assert!(proj.residual(&c) < 1e-12);
    }

    #[test]
    fn wrong_trace_reports_gap() {
        let s = CombStructure::inversion(2, 1, CombMode::Adaptive).unwrap();
        let c = identity_chain(2).scale_real(1.5);
        let r = comb_residuals(&c, &s).unwrap();
        assert!((r.normalization - 2.0).abs() < 1e-12);
    }

    #[test]
    fn projector_is_idempotent_and_self_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for mode in CombMode::ALL {
            let s = CombStructure::inversion(2, 2, mode).unwrap();
            let p = CausalProjector::new(&s).unwrap();
            let n = s.total_dim();
            let x = random_herm(n, &mut rng);
            let y = random_herm(n, &mut rng);
            let px = p.linear(&x);
            assert!(p.linear(&px).max_abs_diff(&px) < 1e-12, "{mode}");
            let lhs = px.inner(&y);
            let rhs = x.inner(&p.linear(&y));
            assert!((lhs - rhs).norm() < 1e-9, "{mode}");
            assert!(px.trace().norm() < 1e-10);
            assert!(px.hermiticity_error() < 1e-12);
        }
    }

    #[test]
    fn projected_points_pass_residual_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for mode in [CombMode::Adaptive, CombMode::Parallel] {
            let s = CombStructure::inversion(2, 2, mode).unwrap();
            let p = CausalProjector::new(&s).unwrap();
            let c = p.project(&random_herm(s.total_dim(), &mut rng));
            let r = comb_residuals(&c, &s).unwrap();
            assert!(r.max_equality() < 1e-12, "{mode}: {r:?}");
        }
    }

    pub(crate) fn random_herm(n: usize, rng: &mut ChaCha8Rng) -> ComplexMatrix {
        use rand_distr::{Distribution, StandardNormal};
        let m = ComplexMatrix::from_fn(n, n, |_, _| c64(StandardNormal.sample(rng), StandardNormal.sample(rng)));
        m.hermitian_part()
    }
}
