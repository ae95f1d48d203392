//! Labeled tensor-factor bookkeeping and the multipartite maps built on it.
//!
//! Subsystem `0` of a layout is the most significant digit of the flat index,
//! matching the ordering produced by [`kron`](super::kron).

use std::collections::HashSet;
use std::fmt;

use num_complex::Complex64;

use super::matrix::ComplexMatrix;
use crate::error::{Error, Result};

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SpaceLayout {
    subsystems: Vec<(String, usize)>,
}

impl fmt::Debug for SpaceLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, (l, d)) in self.subsystems.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{l}:{d}")?;
        }
        write!(f, "]")
    }
}

impl SpaceLayout {
    pub fn new(subsystems: Vec<(String, usize)>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (label, dim) in &subsystems {
            if *dim == 0 {
                return Err(Error::Shape(format!("subsystem {label} has dimension 0")));
            }
            if !seen.insert(label.as_str()) {
                return Err(Error::Label(format!("duplicate label {label}")));
            }
        }
        Ok(Self { subsystems })
    }

    pub fn from_pairs(pairs: &[(&str, usize)]) -> Result<Self> {
        Self::new(pairs.iter().map(|(l, d)| (l.to_string(), *d)).collect())
    }

    /// Layout without subsystems (total dimension 1).
    pub fn empty() -> Self {
        Self { subsystems: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.subsystems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsystems.is_empty()
    }

    pub fn subsystems(&self) -> &[(String, usize)] {
        &self.subsystems
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.subsystems.iter().map(|(l, _)| l.as_str())
    }

    pub fn dims(&self) -> Vec<usize> {
        self.subsystems.iter().map(|(_, d)| *d).collect()
    }

    pub fn total_dim(&self) -> usize {
        self.subsystems.iter().map(|(_, d)| d).product()
    }

    pub fn position(&self, label: &str) -> Option<usize> {
        self.subsystems.iter().position(|(l, _)| l == label)
    }

    pub fn contains(&self, label: &str) -> bool {
        self.position(label).is_some()
    }

    pub fn dim_of(&self, label: &str) -> Result<usize> {
        self.position(label)
            .map(|p| self.subsystems[p].1)
            .ok_or_else(|| Error::Label(format!("unknown label {label} in {self:?}")))
    }

    /// Product of the dimensions of `labels`.
    pub fn dim_of_all<S: AsRef<str>>(&self, labels: &[S]) -> Result<usize> {
        labels.iter().map(|l| self.dim_of(l.as_ref())).product()
    }

    pub fn positions<S: AsRef<str>>(&self, labels: &[S]) -> Result<Vec<usize>> {
        let mut seen = HashSet::new();
        labels
            .iter()
            .map(|l| {
                let l = l.as_ref();
                if !seen.insert(l.to_string()) {
                    return Err(Error::Label(format!("label {l} listed twice")));
                }
                self.position(l)
                    .ok_or_else(|| Error::Label(format!("unknown label {l} in {self:?}")))
            })
            .collect()
    }

    /// Drops `labels`, keeping the order of the rest.
    pub fn without<S: AsRef<str>>(&self, labels: &[S]) -> Result<Self> {
        let drop = self.positions(labels)?;
        Ok(Self {
            subsystems: self
                .subsystems
                .iter()
                .enumerate()
                .filter(|(i, _)| !drop.contains(i))
                .map(|(_, s)| s.clone())
                .collect(),
        })
    }

    /// Keeps only `labels`, in layout order.
    pub fn only<S: AsRef<str>>(&self, labels: &[S]) -> Result<Self> {
        let keep = self.positions(labels)?;
        Ok(Self {
            subsystems: self
                .subsystems
                .iter()
                .enumerate()
                .filter(|(i, _)| keep.contains(i))
                .map(|(_, s)| s.clone())
                .collect(),
        })
    }

    pub fn concat(&self, other: &Self) -> Result<Self> {
        let mut subsystems = self.subsystems.clone();
        subsystems.extend(other.subsystems.iter().cloned());
        Self::new(subsystems)
    }

    pub fn relabel(&self, from: &str, to: &str) -> Result<Self> {
        let pos = self
            .position(from)
            .ok_or_else(|| Error::Label(format!("unknown label {from}")))?;
        let mut subsystems = self.subsystems.clone();
        subsystems[pos].0 = to.to_string();
        Self::new(subsystems)
    }

    fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.len()];
        for i in (0..self.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.subsystems[i + 1].1;
        }
        strides
    }

    /// Flat-index contributions of every joint value of the subsystems at
    /// `positions`, enumerated in mixed radix with the first position most
    /// significant.
    pub(crate) fn offsets(&self, positions: &[usize]) -> Vec<usize> {
        let strides = self.strides();
        let mut out = vec![0usize];
        for &p in positions {
            let d = self.subsystems[p].1;
            let s = strides[p];
            let mut next = Vec::with_capacity(out.len() * d);
            for base in &out {
                for v in 0..d {
                    next.push(base + v * s);
                }
            }
            out = next;
        }
        out
    }

    pub(crate) fn complement(&self, positions: &[usize]) -> Vec<usize> {
        (0..self.len()).filter(|p| !positions.contains(p)).collect()
    }

    fn check_matrix(&self, m: &ComplexMatrix) -> Result<()> {
        let n = self.total_dim();
        if m.rows() != n || m.cols() != n {
            return Err(Error::Shape(format!(
                "matrix is {}x{} but layout {self:?} has dimension {n}",
                m.rows(),
                m.cols()
            )));
        }
        Ok(())
    }
}

/// Square matrix tagged with the layout of its tensor factors.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    pub matrix: ComplexMatrix,
    pub layout: SpaceLayout,
}

impl Operator {
    pub fn new(matrix: ComplexMatrix, layout: SpaceLayout) -> Result<Self> {
        layout.check_matrix(&matrix)?;
        Ok(Self { matrix, layout })
    }

    pub fn identity(layout: SpaceLayout) -> Self {
        Self {
            matrix: ComplexMatrix::identity(layout.total_dim()),
            layout,
        }
    }

    pub fn partial_trace<S: AsRef<str>>(&self, labels: &[S]) -> Result<Self> {
        let (matrix, layout) = partial_trace(&self.matrix, &self.layout, labels)?;
        Ok(Self { matrix, layout })
    }

    pub fn partial_transpose<S: AsRef<str>>(&self, labels: &[S]) -> Result<Self> {
        Ok(Self {
            matrix: partial_transpose(&self.matrix, &self.layout, labels)?,
            layout: self.layout.clone(),
        })
    }

    pub fn permute<S: AsRef<str>>(&self, order: &[S]) -> Result<Self> {
        let (matrix, layout) = permute_systems(&self.matrix, &self.layout, order)?;
        Ok(Self { matrix, layout })
    }

    pub fn tensor(&self, other: &Self) -> Result<Self> {
        Ok(Self {
            matrix: super::kron(&self.matrix, &other.matrix),
            layout: self.layout.concat(&other.layout)?,
        })
    }

    pub fn relabel(&self, from: &str, to: &str) -> Result<Self> {
        Ok(Self {
            matrix: self.matrix.clone(),
            layout: self.layout.relabel(from, to)?,
        })
    }
}

/// Partial trace over `traced`; the remaining subsystems keep their order.
pub fn partial_trace<S: AsRef<str>>(
    m: &ComplexMatrix,
    layout: &SpaceLayout,
    traced: &[S],
) -> Result<(ComplexMatrix, SpaceLayout)> {
    layout.check_matrix(m)?;
    let tr_pos = layout.positions(traced)?;
    let keep_pos = layout.complement(&tr_pos);
    let keep = layout.offsets(&keep_pos);
    let tr = layout.offsets(&tr_pos);
    let n = layout.total_dim();
    let data = m.data();
    let k = keep.len();
    let mut out = ComplexMatrix::zeros(k, k);
    for (r, &ro) in keep.iter().enumerate() {
        for (c, &co) in keep.iter().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for &t in &tr {
                acc += data[(ro + t) * n + co + t];
            }
            out[(r, c)] = acc;
        }
    }
    Ok((out, layout.without(traced)?))
}

/// Transposes the tensor indices of the listed subsystems only.
pub fn partial_transpose<S: AsRef<str>>(
    m: &ComplexMatrix,
    layout: &SpaceLayout,
    labels: &[S],
) -> Result<ComplexMatrix> {
    layout.check_matrix(m)?;
    let sel_pos = layout.positions(labels)?;
    if sel_pos.is_empty() {
        return Ok(m.clone());
    }
    let rest_pos = layout.complement(&sel_pos);
    let sel = layout.offsets(&sel_pos);
    let rest = layout.offsets(&rest_pos);
    let n = layout.total_dim();
    let data = m.data();
    let mut out = ComplexMatrix::zeros(n, n);
    let od = out.data_mut();
    for &a in &sel {
        for &a2 in &sel {
            for &b in &rest {
                for &b2 in &rest {
                    od[(a + b) * n + a2 + b2] = data[(a2 + b) * n + a + b2];
                }
            }
        }
    }
    Ok(out)
}

/// Reorders tensor factors so that the result's layout follows `new_order`.
pub fn permute_systems<S: AsRef<str>>(
    m: &ComplexMatrix,
    layout: &SpaceLayout,
    new_order: &[S],
) -> Result<(ComplexMatrix, SpaceLayout)> {
    layout.check_matrix(m)?;
    let perm = permutation_indices(layout, new_order)?;
    let n = perm.len();
    let data = m.data();
    let mut out = ComplexMatrix::zeros(n, n);
    let od = out.data_mut();
    for (i, &pi) in perm.iter().enumerate() {
        for (j, &pj) in perm.iter().enumerate() {
            od[i * n + j] = data[pi * n + pj];
        }
    }
    let new_layout = SpaceLayout::new(
        new_order
            .iter()
            .map(|l| (l.as_ref().to_string(), layout.dim_of(l.as_ref()).unwrap()))
            .collect(),
    )?;
    Ok((out, new_layout))
}

/// Reorders the factors of a state vector.
pub fn permute_vector<S: AsRef<str>>(v: &[Complex64], layout: &SpaceLayout, new_order: &[S]) -> Result<Vec<Complex64>> {
    if v.len() != layout.total_dim() {
        return Err(Error::Shape(format!(
            "vector of length {} for layout of dimension {}",
            v.len(),
            layout.total_dim()
        )));
    }
    let perm = permutation_indices(layout, new_order)?;
    Ok(perm.iter().map(|&p| v[p]).collect())
}

/// `perm[new_index] = old_index`.
fn permutation_indices<S: AsRef<str>>(layout: &SpaceLayout, new_order: &[S]) -> Result<Vec<usize>> {
    if new_order.len() != layout.len() {
        return Err(Error::Label(format!(
            "order lists {} labels, layout has {}",
            new_order.len(),
            layout.len()
        )));
    }
    let pos = layout.positions(new_order)?;
    Ok(layout.offsets(&pos))
}

/// `Tr_A(m) ⊗ I_A / d_A`, written back in the original factor order.
pub fn trace_replace<S: AsRef<str>>(m: &ComplexMatrix, layout: &SpaceLayout, labels: &[S]) -> Result<ComplexMatrix> {
    layout.check_matrix(m)?;
    let sel_pos = layout.positions(labels)?;
    if sel_pos.is_empty() {
        return Ok(m.clone());
    }
    let rest_pos = layout.complement(&sel_pos);
    Ok(trace_replace_with_offsets(
        m,
        &layout.offsets(&sel_pos),
        &layout.offsets(&rest_pos),
    ))
}

/// Cached-offset form of [`trace_replace`]; `sel`/`rest` come from
/// [`SpaceLayout::offsets`].
pub(crate) fn trace_replace_with_offsets(m: &ComplexMatrix, sel: &[usize], rest: &[usize]) -> ComplexMatrix {
    let n = m.rows();
    let reduced = trace_average_with_offsets(m, sel, rest);
    let mut out = ComplexMatrix::zeros(n, n);
    add_replaced_with_offsets(&mut out, &reduced, 1.0, sel, rest);
    out
}

/// `Tr_sel(m) / dim(sel)` as a dense `rest × rest` block.
pub(crate) fn trace_average_with_offsets(m: &ComplexMatrix, sel: &[usize], rest: &[usize]) -> Vec<Complex64> {
    let n = m.rows();
    let data = m.data();
    let scale = 1.0 / sel.len() as f64;
    let mut reduced = vec![Complex64::new(0.0, 0.0); rest.len() * rest.len()];
    for (r, &ro) in rest.iter().enumerate() {
        for (c, &co) in rest.iter().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for &t in sel {
                acc += data[(ro + t) * n + co + t];
            }
            reduced[r * rest.len() + c] = acc * scale;
        }
    }
    reduced
}

/// `out += sign · (reduced ⊗ I_sel)`.
pub(crate) fn add_replaced_with_offsets(
    out: &mut ComplexMatrix,
    reduced: &[Complex64],
    sign: f64,
    sel: &[usize],
    rest: &[usize],
) {
    let n = out.rows();
    let od = out.data_mut();
    for (r, &ro) in rest.iter().enumerate() {
        for (c, &co) in rest.iter().enumerate() {
            let v = reduced[r * rest.len() + c] * sign;
            for &t in sel {
                od[(ro + t) * n + co + t] += v;
            }
        }
    }
}

/// Embeds `m` (on `sub`) into `full` as `m ⊗ I` on the missing factors.
pub fn embed_with_identity(m: &ComplexMatrix, sub: &SpaceLayout, full: &SpaceLayout) -> Result<ComplexMatrix> {
    sub.check_matrix(m)?;
    let sub_labels: Vec<&str> = sub.labels().collect();
    for l in &sub_labels {
        if full.dim_of(l)? != sub.dim_of(l)? {
            return Err(Error::Shape(format!("dimension of {l} differs between layouts")));
        }
    }
    let sel_pos = full.positions(&sub_labels)?;
    let rest_pos = full.complement(&sel_pos);
    let sel = full.offsets(&sel_pos);
    let rest = full.offsets(&rest_pos);
    let n = full.total_dim();
    let mut out = ComplexMatrix::zeros(n, n);
    let od = out.data_mut();
    let md = m.data();
    let k = sel.len();
    for (r, &ro) in sel.iter().enumerate() {
        for (c, &co) in sel.iter().enumerate() {
            let v = md[r * k + c];
            if v.re == 0.0 && v.im == 0.0 {
                continue;
            }
            for &t in &rest {
                od[(ro + t) * n + co + t] = v;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::kron;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn bell_projector() -> ComplexMatrix {
        let s = 0.5f64.sqrt();
        let v = [c(s, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(s, 0.0)];
        ComplexMatrix::outer(&v, &v)
    }

    fn ab() -> SpaceLayout {
        SpaceLayout::from_pairs(&[("A", 2), ("B", 2)]).unwrap()
    }

    fn pseudo_random(n: usize, seed: u64) -> ComplexMatrix {
        let mut s = seed;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        ComplexMatrix::from_fn(n, n, |_, _| c(next(), next()))
    }

    #[test]
    fn layout_rejects_duplicates_and_zero_dims() {
        assert!(matches!(
            SpaceLayout::from_pairs(&[("A", 2), ("A", 3)]),
            Err(Error::Label(_))
        ));
        assert!(matches!(SpaceLayout::from_pairs(&[("A", 0)]), Err(Error::Shape(_))));
    }

    #[test]
    fn trace_of_product_state() {
        let rho = ComplexMatrix::from_real(2, 2, &[0.7, 0.1, 0.1, 0.3]).unwrap();
        let sigma = ComplexMatrix::from_real(2, 2, &[2.0, 0.5, 0.5, 1.0]).unwrap();
        let (out, lay) = partial_trace(&kron(&rho, &sigma), &ab(), &["B"]).unwrap();
        assert!(out.max_abs_diff(&rho.scale_real(3.0)) < 1e-14);
        assert_eq!(lay, SpaceLayout::from_pairs(&[("A", 2)]).unwrap());
    }

    #[test]
    fn bell_state_reduces_to_maximally_mixed() {
        let (out, _) = partial_trace(&bell_projector(), &ab(), &["A"]).unwrap();
        assert!(out.max_abs_diff(&ComplexMatrix::identity(2).scale_real(0.5)) < 1e-15);
    }

    #[test]
    fn middle_trace_matches_explicit_index_sum() {
        let lay = SpaceLayout::from_pairs(&[("A", 2), ("B", 3), ("C", 2)]).unwrap();
        let m = pseudo_random(12, 7);
        let (out, _) = partial_trace(&m, &lay, &["B"]).unwrap();
        for a in 0..2 {
            for cc in 0..2 {
                for a2 in 0..2 {
                    for c2 in 0..2 {
                        let mut acc = c(0.0, 0.0);
                        for b in 0..3 {
                            acc += m[(a * 6 + b * 2 + cc, a2 * 6 + b * 2 + c2)];
                        }
                        assert!((out[(a * 2 + cc, a2 * 2 + c2)] - acc).norm() < 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn full_trace_is_scalar_trace() {
        let lay = SpaceLayout::from_pairs(&[("A", 2), ("B", 3)]).unwrap();
        let m = pseudo_random(6, 3);
        let (out, rest) = partial_trace(&m, &lay, &["A", "B"]).unwrap();
        assert!(rest.is_empty());
        assert!((out[(0, 0)] - m.trace()).norm() < 1e-12);
    }

    #[test]
    fn partial_trace_errors() {
        let m = pseudo_random(4, 1);
        assert!(matches!(partial_trace(&m, &ab(), &["Q"]), Err(Error::Label(_))));
        let wrong = pseudo_random(3, 1);
        assert!(matches!(partial_trace(&wrong, &ab(), &["A"]), Err(Error::Shape(_))));
    }

    #[test]
    fn partial_transpose_cases() {
        let m = pseudo_random(4, 11);
        assert_eq!(partial_transpose(&m, &ab(), &["A", "B"]).unwrap(), m.transpose());
        assert_eq!(partial_transpose(&m, &ab(), &[] as &[&str]).unwrap(), m);
        // Bell projector transposed on one qubit is SWAP/2.
        let pt = partial_transpose(&bell_projector(), &ab(), &["B"]).unwrap();
        let swap =
            ComplexMatrix::from_real(4, 4, &[1., 0., 0., 0., 0., 0., 1., 0., 0., 1., 0., 0., 0., 0., 0., 1.]).unwrap();
        assert!(pt.max_abs_diff(&swap.scale_real(0.5)) < 1e-15);
    }

    #[test]
    fn permutation_cases() {
        let rho = pseudo_random(2, 5);
        let sigma = pseudo_random(3, 6);
        let lay = SpaceLayout::from_pairs(&[("A", 2), ("B", 3)]).unwrap();
        let (p, new_lay) = permute_systems(&kron(&rho, &sigma), &lay, &["B", "A"]).unwrap();
        assert!(p.max_abs_diff(&kron(&sigma, &rho)) < 1e-15);
        assert_eq!(new_lay.labels().collect::<Vec<_>>(), vec!["B", "A"]);
        let (same, _) = permute_systems(&kron(&rho, &sigma), &lay, &["A", "B"]).unwrap();
        assert_eq!(same, kron(&rho, &sigma));
        assert!(matches!(
            permute_systems(&kron(&rho, &sigma), &lay, &["A", "A"]),
            Err(Error::Label(_))
        ));
        assert!(matches!(
            permute_systems(&kron(&rho, &sigma), &lay, &["A"]),
            Err(Error::Label(_))
        ));
    }

    #[test]
    fn three_party_permutation_matches_index_relabeling() {
        let lay = SpaceLayout::from_pairs(&[("A", 2), ("B", 3), ("C", 2)]).unwrap();
        let m = pseudo_random(12, 21);
        let (p, _) = permute_systems(&m, &lay, &["C", "A", "B"]).unwrap();
        // new index (c, a, b) = c*6 + a*3 + b ; old (a, b, c) = a*6 + b*2 + c
        for a in 0..2 {
            for b in 0..3 {
                for cc in 0..2 {
                    for a2 in 0..2 {
                        for b2 in 0..3 {
                            for c2 in 0..2 {
                                let new = (cc * 6 + a * 3 + b, c2 * 6 + a2 * 3 + b2);
                                let old = (a * 6 + b * 2 + cc, a2 * 6 + b2 * 2 + c2);
                                assert_eq!(p[new], m[old]);
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn trace_replace_and_embed_agree() {
        let lay = SpaceLayout::from_pairs(&[("A", 2), ("B", 3), ("C", 2)]).unwrap();
        let m = pseudo_random(12, 9);
        let (red, red_lay) = partial_trace(&m, &lay, &["B"]).unwrap();
        let expect = embed_with_identity(&red, &red_lay, &lay).unwrap().scale_real(1.0 / 3.0);
        let got = trace_replace(&m, &lay, &["B"]).unwrap();
        assert!(got.max_abs_diff(&expect) < 1e-14);
    }
}
