use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt::Write as _;

use crate::combs::{
    structure_constraint_operators, universality_constraints, ChannelSpan, CombMode, CombStructure, LinearFunctional,
    SpanningSet,
};
use crate::error::{Error, Result};
use crate::tensor::{coords_to_herm, herm_to_coords, min_eigenvalue, offdiag_coord, ComplexMatrix};

/// One block of the product cone.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cone {
    Free(usize),
    NonNeg(usize),
    /// Hermitian PSD matrices of side `n`, parameterized by `n²` orthonormal
    /// real coordinates (see [`crate::tensor::herm_to_coords`]).
    HermPsd(usize),
    /// Real symmetric PSD matrices of side `n`: the diagonal, then `√2·x_ij`
    /// for `i < j` in row-major order.
    SymPsd(usize),
}

impl Cone {
    /// Number of real coordinates.
    pub fn width(&self) -> usize {
        match *self {
            Cone::Free(n) | Cone::NonNeg(n) => n,
            Cone::HermPsd(n) => n * n,
            Cone::SymPsd(n) => n * (n + 1) / 2,
        }
    }

    /// Side of the real symmetric matrix the block is equivalent to; even for
    /// Hermitian blocks.
    pub fn real_side(&self) -> Option<usize> {
        match *self {
            Cone::HermPsd(n) => Some(2 * n),
            Cone::SymPsd(n) => Some(n),
            _ => None,
        }
    }

    fn tag(&self) -> (&'static str, usize) {
        match *self {
            Cone::Free(n) => ("free", n),
            Cone::NonNeg(n) => ("nonneg", n),
            Cone::HermPsd(n) => ("hermpsd", n),
            Cone::SymPsd(n) => ("sympsd", n),
        }
    }
}

/// Sparse real matrix in compressed-row form.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed and
    /// exact zeros dropped.
    pub fn from_triplets(rows: usize, cols: usize, mut t: Vec<(usize, usize, f64)>) -> Result<Self> {
        if let Some(&(i, j, _)) = t.iter().find(|&&(i, j, _)| i >= rows || j >= cols) {
            return Err(Error::IndexOutOfRange(format!(
                "entry ({i}, {j}) in a {rows}x{cols} matrix"
            )));
        }
        t.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(t.len());
        let mut values: Vec<f64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in t {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        let mut m = Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        };
        m.drop_zeros();
        Ok(m)
    }

    fn drop_zeros(&mut self) {
        if self.values.iter().all(|&v| v != 0.0) {
            return;
        }
        let mut ptr = vec![0usize; self.rows + 1];
        let (mut ci, mut vs) = (Vec::new(), Vec::new());
        for i in 0..self.rows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.values[k] != 0.0 {
                    ci.push(self.col_idx[k]);
                    vs.push(self.values[k]);
                }
            }
            ptr[i + 1] = ci.len();
        }
        self.row_ptr = ptr;
        self.col_idx = ci;
        self.values = vs;
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (self.col_idx[k], self.values[k]))
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    /// `y += Aᵀ w`.
    pub fn transpose_matvec_add(&self, w: &[f64], y: &mut [f64]) {
        for (i, &wi) in w.iter().enumerate() {
            if wi != 0.0 {
                for (j, v) in self.row(i) {
                    y[j] += v * wi;
                }
            }
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }
}

/// Kind of a named unknown.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarKind {
    Scalar,
    Hermitian(usize),
}

/// Coordinate range of a named unknown.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VarRange {
    pub offset: usize,
    pub len: usize,
    pub kind: VarKind,
}

/// Named range of equality rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RowBlock {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

/// `min cᵀx  s.t.  A x = b,  x ∈ K₁ × … × K_m`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConicProgram {
    pub objective: Vec<f64>,
    pub a: SparseMatrix,
    pub b: Vec<f64>,
    pub cones: Vec<Cone>,
    pub variables: BTreeMap<String, VarRange>,
    pub row_blocks: Vec<RowBlock>,
}

/// Equality and cone violation of a candidate point.
#[derive(Clone, Debug, PartialEq)]
pub struct PointReport {
    pub objective: f64,
    /// `max |Ax − b|`.
    pub equality_residual: f64,
    /// Per-block `max |Ax − b|`, in row-block order.
    pub block_residuals: Vec<(String, f64)>,
    /// Smallest cone margin (minimum eigenvalue for PSD blocks, minimum
    /// entry for nonnegative blocks).
    pub cone_margin: f64,
}

impl ConicProgram {
    /// Checks the cone widths against the column count and the sizes of all
    /// vectors.
    pub fn validate(&self) -> Result<()> {
        let width: usize = self.cones.iter().map(Cone::width).sum();
        if width != self.a.cols || self.objective.len() != width || self.b.len() != self.a.rows {
            return Err(Error::Shape(format!(
                "cone width {width}, {} columns, objective {}, rhs {} for {} rows",
                self.a.cols,
                self.objective.len(),
                self.b.len(),
                self.a.rows
            )));
        }
        for (name, v) in &self.variables {
            if v.offset + v.len > width {
                return Err(Error::IndexOutOfRange(format!("variable {name} beyond the cone width")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.a.cols
    }

    pub fn constraint_count(&self) -> usize {
        self.a.rows
    }

    pub fn row_block(&self, name: &str) -> Option<&RowBlock> {
        self.row_blocks.iter().find(|b| b.name == name)
    }

    /// Assembles a point from named values; unnamed coordinates are zero.
    pub fn pack(&self, values: &[(&str, &[f64])]) -> Result<Vec<f64>> {
        let mut x = vec![0.0; self.dim()];
        for (name, v) in values {
            let r = self
                .variables
                .get(*name)
                .ok_or_else(|| Error::Label(format!("no variable named {name}")))?;
            if v.len() != r.len {
                return Err(Error::Shape(format!(
                    "{name} has {} coordinates, got {}",
                    r.len,
                    v.len()
                )));
            }
            x[r.offset..r.offset + r.len].copy_from_slice(v);
        }
        Ok(x)
    }

    pub fn variable<'a>(&self, x: &'a [f64], name: &str) -> Result<&'a [f64]> {
        let r = self
            .variables
            .get(name)
            .ok_or_else(|| Error::Label(format!("no variable named {name}")))?;
        Ok(&x[r.offset..r.offset + r.len])
    }

    /// Hermitian matrix held by a named variable.
    pub fn hermitian(&self, x: &[f64], name: &str) -> Result<ComplexMatrix> {
        match self.variables.get(name).map(|r| r.kind) {
            Some(VarKind::Hermitian(n)) => Ok(coords_to_herm(self.variable(x, name)?, n)),
            Some(VarKind::Scalar) => Err(Error::InvalidArgument(format!("{name} is a scalar"))),
            None => Err(Error::Label(format!("no variable named {name}"))),
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<PointReport> {
        if x.len() != self.dim() {
            return Err(Error::Shape(format!(
                "point of length {} for {} columns",
                x.len(),
                self.dim()
            )));
        }
        let ax = self.a.matvec(x);
        let resid: Vec<f64> = ax.iter().zip(&self.b).map(|(l, r)| (l - r).abs()).collect();
        let block_residuals = self
            .row_blocks
            .iter()
            .map(|b| {
                let worst = resid[b.start..b.start + b.len].iter().fold(0.0f64, |m, &v| m.max(v));
                (b.name.clone(), worst)
            })
            .collect();
        let mut margin = f64::INFINITY;
        let mut off = 0;
        for cone in &self.cones {
            let w = cone.width();
            let seg = &x[off..off + w];
            let m = match *cone {
                Cone::Free(_) => f64::INFINITY,
                Cone::NonNeg(_) => seg.iter().copied().fold(f64::INFINITY, f64::min),
                Cone::HermPsd(n) => min_eigenvalue(&coords_to_herm(seg, n))?,
                Cone::SymPsd(n) => min_eigenvalue(&sym_coords_to_matrix(seg, n))?,
            };
            margin = margin.min(m);
            off += w;
        }
        Ok(PointReport {
            objective: dot(&self.objective, x),
            equality_residual: resid.iter().fold(0.0, |m, &v| m.max(v)),
            block_residuals,
            cone_margin: margin,
        })
    }

    /// Sparse text serialization; see [`ConicProgram::from_text`] for the
    /// grammar. Floats are written in shortest round-trip form, so the text
    /// is deterministic and parses back exactly.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("# conic program: min c'x s.t. Ax = b, x in K\n");
        s.push_str("# hermpsd n: n*n coords (diag, then sqrt2*Re, sqrt2*Im for i<j row-major)\n");
        s.push_str("# sympsd n: n(n+1)/2 coords (diag, then sqrt2*x_ij for i<j row-major)\n");
        let _ = writeln!(s, "dims {} {}", self.a.rows, self.a.cols);
        let _ = writeln!(s, "cones {}", self.cones.len());
        for c in &self.cones {
            let (t, n) = c.tag();
            let _ = writeln!(s, "{t} {n}");
        }
        let _ = writeln!(s, "vars {}", self.variables.len());
        for (name, v) in &self.variables {
            let kind = match v.kind {
                VarKind::Scalar => "scalar".to_string(),
                VarKind::Hermitian(n) => format!("herm{n}"),
            };
            let _ = writeln!(s, "{name} {} {} {kind}", v.offset, v.len);
        }
        let _ = writeln!(s, "blocks {}", self.row_blocks.len());
        for b in &self.row_blocks {
            let _ = writeln!(s, "{} {} {}", b.name, b.start, b.len);
        }
        let c_nz: Vec<(usize, f64)> = nonzeros(&self.objective);
        let _ = writeln!(s, "c {}", c_nz.len());
        for (j, v) in c_nz {
            let _ = writeln!(s, "{j} {v:?}");
        }
        let b_nz: Vec<(usize, f64)> = nonzeros(&self.b);
        let _ = writeln!(s, "b {}", b_nz.len());
        for (i, v) in b_nz {
            let _ = writeln!(s, "{i} {v:?}");
        }
        let _ = writeln!(s, "A {}", self.a.nnz());
        for (i, j, v) in self.a.triplets() {
            let _ = writeln!(s, "{i} {j} {v:?}");
        }
        s
    }

    /// Parses [`ConicProgram::to_text`] output. Lines starting with `#` are
    /// comments. Sections, in order: `dims m n`; `cones K` then `K` lines
    /// `kind size`; `vars V` then `name offset len scalar|hermN`; `blocks B`
    /// then `name start len`; `c`, `b` (index value) and `A` (row col value)
    /// triplet lists, each preceded by its entry count.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let mut next = |what: &str| -> Result<Vec<String>> {
            lines
                .next()
                .map(|l| l.split_whitespace().map(String::from).collect())
                .ok_or_else(|| Error::InvalidArgument(format!("unexpected end of input, expected {what}")))
        };
        let header = |toks: &[String], key: &str, n: usize| -> Result<Vec<usize>> {
            if toks.first().map(String::as_str) != Some(key) || toks.len() != n + 1 {
                return Err(Error::InvalidArgument(format!("expected `{key}` header, got {toks:?}")));
            }
            toks[1..].iter().map(|t| parse_usize(t)).collect()
        };
        let dims = header(&next("dims")?, "dims", 2)?;
        let (m, n) = (dims[0], dims[1]);
        let count = header(&next("cones")?, "cones", 1)?[0];
        let mut cones = Vec::with_capacity(count);
        for _ in 0..count {
            let t = next("cone")?;
            if t.len() != 2 {
                return Err(Error::InvalidArgument(format!("bad cone line {t:?}")));
            }
            let size = parse_usize(&t[1])?;
            cones.push(match t[0].as_str() {
                "free" => Cone::Free(size),
                "nonneg" => Cone::NonNeg(size),
                "hermpsd" => Cone::HermPsd(size),
                "sympsd" => Cone::SymPsd(size),
                other => return Err(Error::InvalidArgument(format!("unknown cone {other}"))),
            });
        }
        let count = header(&next("vars")?, "vars", 1)?[0];
        let mut variables = BTreeMap::new();
        for _ in 0..count {
            let t = next("variable")?;
            if t.len() != 4 {
                return Err(Error::InvalidArgument(format!("bad variable line {t:?}")));
            }
            let kind = if t[3] == "scalar" {
                VarKind::Scalar
            } else if let Some(side) = t[3].strip_prefix("herm") {
                VarKind::Hermitian(parse_usize(side)?)
            } else {
                return Err(Error::InvalidArgument(format!("unknown variable kind {}", t[3])));
            };
            variables.insert(
                t[0].clone(),
                VarRange {
                    offset: parse_usize(&t[1])?,
                    len: parse_usize(&t[2])?,
                    kind,
                },
            );
        }
        let count = header(&next("blocks")?, "blocks", 1)?[0];
        let mut row_blocks = Vec::with_capacity(count);
        for _ in 0..count {
            let t = next("block")?;
            if t.len() != 3 {
                return Err(Error::InvalidArgument(format!("bad block line {t:?}")));
            }
            row_blocks.push(RowBlock {
                name: t[0].clone(),
                start: parse_usize(&t[1])?,
                len: parse_usize(&t[2])?,
            });
        }
        let mut dense = |key: &str, len: usize| -> Result<Vec<f64>> {
            let count = header(&next(key)?, key, 1)?[0];
            let mut v = vec![0.0; len];
            for _ in 0..count {
                let t = next(key)?;
                if t.len() != 2 {
                    return Err(Error::InvalidArgument(format!("bad {key} entry {t:?}")));
                }
                let i = parse_usize(&t[0])?;
                if i >= len {
                    return Err(Error::IndexOutOfRange(format!("{key} index {i} ≥ {len}")));
                }
                v[i] = parse_f64(&t[1])?;
            }
            Ok(v)
        };
        let objective = dense("c", n)?;
        let b = dense("b", m)?;
        let count = header(&next("A")?, "A", 1)?[0];
        let mut trip = Vec::with_capacity(count);
        for _ in 0..count {
            let t = next("A entry")?;
            if t.len() != 3 {
                return Err(Error::InvalidArgument(format!("bad A entry {t:?}")));
            }
            trip.push((parse_usize(&t[0])?, parse_usize(&t[1])?, parse_f64(&t[2])?));
        }
        let program = Self {
            objective,
            a: SparseMatrix::from_triplets(m, n, trip)?,
            b,
            cones,
            variables,
            row_blocks,
        };
        program.validate()?;
        Ok(program)
    }
}

fn parse_usize(t: &str) -> Result<usize> {
    t.parse()
        .map_err(|_| Error::InvalidArgument(format!("expected an integer, got {t:?}")))
}

fn parse_f64(t: &str) -> Result<f64> {
    t.parse()
        .map_err(|_| Error::InvalidArgument(format!("expected a number, got {t:?}")))
}

fn nonzeros(v: &[f64]) -> Vec<(usize, f64)> {
    v.iter().copied().enumerate().filter(|&(_, x)| x != 0.0).collect()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Real symmetric matrix from its scaled half-vectorization.
pub(crate) fn sym_coords_to_matrix(x: &[f64], n: usize) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = x[i].into();
    }
    let mut k = n;
    for i in 0..n {
        for j in i + 1..n {
            let v = x[k] * FRAC_1_SQRT_2;
            m[(i, j)] = v.into();
            m[(j, i)] = v.into();
            k += 1;
        }
    }
    m
}

pub(crate) fn sym_matrix_to_coords(m: &ComplexMatrix, out: &mut [f64]) {
    let n = m.rows();
    for i in 0..n {
        out[i] = m[(i, i)].re;
    }
    let mut k = n;
    for i in 0..n {
        for j in i + 1..n {
            out[k] = std::f64::consts::SQRT_2 * 0.5 * (m[(i, j)].re + m[(j, i)].re);
            k += 1;
        }
    }
}

/// Coordinate coefficients of `H ↦ Re Σ w·H[a,b]` on an `n×n` Hermitian
/// variable stored at `offset`, appended to `row` as `(col, value)`.
fn functional_coords(f: &LinearFunctional, n: usize, offset: usize, row: &mut Vec<(usize, f64)>) {
    for &(a, b, w) in &f.terms {
        if a == b {
            row.push((offset + a, w.re));
        } else {
            let (i, j, sign) = if a < b { (a, b, -1.0) } else { (b, a, 1.0) };
            let c = offset + offdiag_coord(n, i, j);
            row.push((c, w.re * FRAC_1_SQRT_2));
            row.push((c + 1, sign * w.im * FRAC_1_SQRT_2));
        }
    }
}

/// Options for [`assemble_inversion_sdp`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AssembleConfig {
    /// Largest total complex dimension `d^{2k+2}` accepted.
    pub size_cap: usize,
    /// Adds the (implied) bound `p ≤ 1` through a nonnegative slack.
    pub cap_p: bool,
}

impl Default for AssembleConfig {
    fn default() -> Self {
        Self {
            size_cap: 256,
            cap_p: false,
        }
    }
}

/// Standard-form program for optimal inversion of `k` uses:
///
/// ```text
/// min −p  s.t.  S ∗ 𝔠(U_i)^{⊗k} = p·𝔠(U_i†)  for every spanning U_i,
///               C deterministic for the structure,  C − S − slack = 0,
///               S ⪰ 0,  slack ⪰ 0.
/// ```
///
/// Columns: `S`, `C`, `slack` (Hermitian PSD, free, Hermitian PSD), then `p`
/// (and `p_cap`, when requested). Row blocks are the structure constraints on
/// `C` (named after the teeth, `ico*`, and `trace`), `universality`, `link`
/// and optionally `cap`.
pub fn assemble_inversion_sdp(
    structure: &CombStructure,
    spanning: &SpanningSet,
    channel_spans: Option<&[ChannelSpan]>,
    config: &AssembleConfig,
) -> Result<ConicProgram> {
    let n = structure.total_dim();
    if n > config.size_cap {
        return Err(Error::SizeCap {
            required: n,
            allowed: config.size_cap,
        });
    }
    if structure.mode == CombMode::Ico && channel_spans.is_none() {
        return Err(Error::InvalidArgument(
            "indefinite-order programs need channel spans".into(),
        ));
    }
    let nn = n * n;
    let (off_s, off_c, off_t, off_p) = (0, nn, 2 * nn, 3 * nn);
    let mut cones = vec![Cone::HermPsd(n), Cone::Free(nn), Cone::HermPsd(n), Cone::Free(1)];
    let mut variables = BTreeMap::new();
    for (name, offset) in [("S", off_s), ("C", off_c), ("slack", off_t)] {
        variables.insert(
            name.to_string(),
            VarRange {
                offset,
                len: nn,
                kind: VarKind::Hermitian(n),
            },
        );
    }
    variables.insert(
        "p".into(),
        VarRange {
            offset: off_p,
            len: 1,
            kind: VarKind::Scalar,
        },
    );

    let mut trip: Vec<(usize, usize, f64)> = Vec::new();
    let mut b = Vec::new();
    let mut row_blocks = Vec::new();
    let mut scratch = Vec::new();
    let mut push_block = |name: String, start: usize, len: usize| {
        row_blocks.push(RowBlock { name, start, len });
    };

    for block in structure_constraint_operators(structure, channel_spans)? {
        let start = b.len();
        for (f, &rhs) in block.rows.iter().zip(&block.rhs) {
            scratch.clear();
            functional_coords(f, n, off_c, &mut scratch);
            let r = b.len();
            trip.extend(scratch.iter().map(|&(j, v)| (r, j, v)));
            b.push(rhs);
        }
        push_block(block.name, start, b.len() - start);
    }

    let uni = universality_constraints(spanning, structure)?;
    let start = b.len();
    for (f, &pc) in uni.rows.iter().zip(&uni.p_coeffs) {
        scratch.clear();
        functional_coords(f, n, off_s, &mut scratch);
        let r = b.len();
        trip.extend(scratch.iter().map(|&(j, v)| (r, j, v)));
        trip.push((r, off_p, -pc));
        b.push(0.0);
    }
    push_block("universality".into(), start, b.len() - start);

    let start = b.len();
    for i in 0..nn {
        let r = b.len();
        trip.push((r, off_c + i, 1.0));
        trip.push((r, off_s + i, -1.0));
        trip.push((r, off_t + i, -1.0));
        b.push(0.0);
    }
    push_block("link".into(), start, nn);

    let mut width = 3 * nn + 1;
    if config.cap_p {
        // p + p_cap = 1 with p_cap ≥ 0
        cones.push(Cone::NonNeg(1));
        variables.insert(
            "p_cap".into(),
            VarRange {
                offset: width,
                len: 1,
                kind: VarKind::Scalar,
            },
        );
        let r = b.len();
        trip.push((r, off_p, 1.0));
        trip.push((r, width, 1.0));
        b.push(1.0);
        push_block("cap".into(), r, 1);
        width += 1;
    }

    let mut objective = vec![0.0; width];
    objective[off_p] = -1.0;
    let program = ConicProgram {
        objective,
        a: SparseMatrix::from_triplets(b.len(), width, trip)?,
        b,
        cones,
        variables,
        row_blocks,
    };
    program.validate()?;
    log::info!(
        "assembled {} program d={} k={}: {} columns, {} rows, {} nonzeros",
        structure.mode,
        structure.d,
        structure.k,
        program.dim(),
        program.constraint_count(),
        program.a.nnz()
    );
    Ok(program)
}

/// Coordinates of the inversion point `(S, C, C − S, p)` in `program`.
pub fn inversion_point(program: &ConicProgram, s: &ComplexMatrix, c: &ComplexMatrix, p: f64) -> Result<Vec<f64>> {
    let n = s.rows();
    let coords = |m: &ComplexMatrix| {
        let mut v = vec![0.0; n * n];
        herm_to_coords(m, &mut v);
        v
    };
    let slack = c - s;
    let (cs, cc, ct) = (coords(s), coords(c), coords(&slack));
    let mut vals: Vec<(&str, &[f64])> = vec![("S", &cs), ("C", &cc), ("slack", &ct), ("p", std::slice::from_ref(&p))];
    let cap = [1.0 - p];
    if program.variables.contains_key("p_cap") {
        vals.push(("p_cap", &cap));
    }
    program.pack(&vals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combs::{channel_spanning_set, spanning_unitary_set};
    use crate::protocols::protocol_comb_witness;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn program(d: usize, k: usize, mode: CombMode, seed: u64) -> ConicProgram {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let st = CombStructure::inversion(d, k, mode).unwrap();
        let span = spanning_unitary_set(d, k, &mut rng, 4096).unwrap();
        let spans: Option<Vec<ChannelSpan>> =
            (mode == CombMode::Ico).then(|| (0..k).map(|_| channel_spanning_set(d, d, &mut rng).unwrap()).collect());
        assemble_inversion_sdp(&st, &span, spans.as_deref(), &AssembleConfig::default()).unwrap()
    }

    #[test]
    fn sparse_triplets_sum_duplicates() {
        let a = SparseMatrix::from_triplets(2, 3, vec![(1, 2, 1.0), (0, 0, 2.0), (1, 2, 0.5), (0, 1, 0.0)]).unwrap();
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.matvec(&[1.0, 1.0, 2.0]), vec![2.0, 3.0]);
        let mut y = vec![0.0; 3];
        a.transpose_matvec_add(&[1.0, 2.0], &mut y);
        assert_eq!(y, vec![2.0, 0.0, 3.0]);
        assert!(SparseMatrix::from_triplets(1, 1, vec![(0, 1, 1.0)]).is_err());
    }

    #[test]
    fn qubit_single_use_dimensions() {
        let p = program(2, 1, CombMode::Adaptive, 1);
        assert_eq!(p.variables["S"].kind, VarKind::Hermitian(16));
        assert_eq!(p.dim(), 3 * 256 + 1);
        assert_eq!(p.cones.iter().map(Cone::width).sum::<usize>(), p.dim());
        assert!(p.cones.iter().filter_map(Cone::real_side).all(|s| s % 2 == 0));
        assert_eq!(p.row_block("universality").unwrap().len, 10 * 16);
    }

    #[test]
    fn tooth_blocks_follow_the_mode() {
        let par = program(2, 2, CombMode::Parallel, 2);
        let ada = program(2, 2, CombMode::Adaptive, 2);
        assert_eq!(par.variables["C"].kind, VarKind::Hermitian(64));
        let teeth = |p: &ConicProgram| p.row_blocks.iter().filter(|b| b.name.starts_with("tooth")).count();
        assert_eq!(teeth(&par), 2);
        assert_eq!(teeth(&ada), 3);
        // rows per tooth equal the squared dimension of the legs before its outputs
        let lens: Vec<usize> = ada
            .row_blocks
            .iter()
            .filter(|b| b.name.starts_with("tooth"))
            .map(|b| b.len)
            .collect();
        assert_eq!(lens, vec![4, 64, 1024]);
        let lens: Vec<usize> = par
            .row_blocks
            .iter()
            .filter(|b| b.name.starts_with("tooth"))
            .map(|b| b.len)
            .collect();
        assert_eq!(lens, vec![4, 1024]);
    }

    #[test]
    fn size_cap_refuses() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let st = CombStructure::inversion(2, 2, CombMode::Adaptive).unwrap();
        let span = spanning_unitary_set(2, 2, &mut rng, 4096).unwrap();
        let cfg = AssembleConfig {
            size_cap: 32,
            cap_p: false,
        };
        assert_eq!(
            assemble_inversion_sdp(&st, &span, None, &cfg),
            Err(Error::SizeCap {
                required: 64,
                allowed: 32
            })
        );
    }

    #[test]
    fn witness_is_feasible_for_the_program() {
        let p = program(2, 1, CombMode::Adaptive, 4);
        let w = protocol_comb_witness(2).unwrap();
        let x = inversion_point(&p, &w.s, &w.c, w.p).unwrap();
        let rep = p.evaluate(&x).unwrap();
        assert!(rep.equality_residual < 1e-8, "{rep:?}");
        assert!(rep.cone_margin > -1e-10);
        assert!((rep.objective + 0.25).abs() < 1e-15);
        // a wrong p breaks only the universality rows
        let x = inversion_point(&p, &w.s, &w.c, 0.3).unwrap();
        let rep = p.evaluate(&x).unwrap();
        for (name, r) in &rep.block_residuals {
            assert_eq!(name == "universality", *r > 1e-3, "{name} {r}");
        }
    }

    #[test]
    fn text_round_trip_is_exact() {
        for mode in [CombMode::Adaptive, CombMode::Ico] {
            let p = program(2, 1, mode, 5);
            let text = p.to_text();
            let back = ConicProgram::from_text(&text).unwrap();
            assert_eq!(back, p);
            assert_eq!(back.to_text(), text);
        }
    }

    #[test]
    fn from_text_rejects_garbage() {
        assert!(ConicProgram::from_text("dims 1").is_err());
        assert!(ConicProgram::from_text("dims 1 1\ncones 1\ncircle 1\n").is_err());
        let bad_width = "dims 0 2\ncones 1\nfree 1\nvars 0\nblocks 0\nc 0\nb 0\nA 0\n";
        assert!(matches!(ConicProgram::from_text(bad_width), Err(Error::Shape(_))));
    }

    #[test]
    fn sym_coords_round_trip() {
        let x = [1.0, 2.0, 3.0, 0.5, -0.25, 4.0];
        let m = sym_coords_to_matrix(&x, 3);
        let mut back = [0.0; 6];
        sym_matrix_to_coords(&m, &mut back);
        for (a, b) in x.iter().zip(back) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
