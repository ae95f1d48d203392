use std::collections::BTreeMap;

use rayon::prelude::*;

use super::admm::{psd_clip, ConeProjection};
use crate::combs::{slot_output, CombStructure};
use crate::error::Result;
use crate::tensor::{offdiag_coord, Complex64, ComplexMatrix};

/// Basis classes of the phase symmetry of the inversion problem.
///
/// Replacing `U` by `AUB` with diagonal unitaries `A`, `B` maps feasible
/// points to feasible points through `X ↦ D X D†`, where `D` applies phases
/// from `A` on `P, O₁…O_k` and from `B` on `I₁…I_k, F`. Averaging over the
/// torus keeps the objective, so optimal `S` and `C` may be taken invariant:
/// they only couple basis states whose levels on the first group, and on the
/// second, agree as multisets.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseSectors {
    n: usize,
    blocks: Vec<Vec<usize>>,
}

impl PhaseSectors {
    pub fn new(structure: &CombStructure) -> Self {
        let d = structure.d;
        let subsystems = structure.layout.subsystems();
        let outputs: Vec<String> = (1..=structure.k).map(slot_output).collect();
        let in_a: Vec<bool> = subsystems
            .iter()
            .map(|(l, _)| l == "P" || outputs.contains(l))
            .collect();
        let n = structure.total_dim();
        let mut classes: BTreeMap<Vec<u16>, Vec<usize>> = BTreeMap::new();
        for x in 0..n {
            let mut key = vec![0u16; 2 * d];
            let mut rest = x;
            for (s, (_, dim)) in subsystems.iter().enumerate().rev() {
                let level = rest % dim;
                rest /= dim;
                key[if in_a[s] { level } else { d + level }] += 1;
            }
            classes.entry(key).or_default().push(x);
        }
        Self {
            n,
            blocks: classes.into_values().collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    /// Number of real coordinates an invariant Hermitian matrix keeps.
    pub fn free_coords(&self) -> usize {
        self.blocks.iter().map(|b| b.len() * b.len()).sum()
    }

    /// Zeroes every entry that couples two different classes.
    pub fn restrict(&self, m: &ComplexMatrix) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.n, self.n);
        for b in &self.blocks {
            for &i in b {
                for &j in b {
                    out[(i, j)] = m[(i, j)];
                }
            }
        }
        out
    }

    /// Projects Hermitian coordinates onto invariant PSD matrices: each
    /// diagonal block is clipped on its own, everything else is zeroed.
    fn project_coords(&self, v: &mut [f64]) -> Result<()> {
        let n = self.n;
        let coord = |i: usize, j: usize| offdiag_coord(n, i.min(j), i.max(j));
        let clipped: Vec<ComplexMatrix> = self
            .blocks
            .par_iter()
            .map(|b| {
                let m = ComplexMatrix::from_fn(b.len(), b.len(), |r, c| {
                    let (i, j) = (b[r], b[c]);
                    if i == j {
                        return Complex64::new(v[i], 0.0);
                    }
                    let k = coord(i, j);
                    let z = Complex64::new(v[k], v[k + 1]) * std::f64::consts::FRAC_1_SQRT_2;
                    if i < j {
                        z
                    } else {
                        z.conj()
                    }
                });
                psd_clip(&m)
            })
            .collect::<Result<_>>()?;
        v.fill(0.0);
        for (b, m) in self.blocks.iter().zip(&clipped) {
            for (r, &i) in b.iter().enumerate() {
                v[i] = m[(r, r)].re;
                for (c, &j) in b.iter().enumerate().skip(r + 1) {
                    // blocks are sorted, so i < j
                    let k = coord(i, j);
                    let z = (m[(r, c)] + m[(c, r)].conj()) * std::f64::consts::SQRT_2 * 0.5;
                    v[k] = z.re;
                    v[k + 1] = z.im;
                }
            }
        }
        Ok(())
    }
}

/// Cone side of the inversion splitting `(S, T, q)`: `S` and `T` invariant
/// PSD, `q` free.
pub(crate) struct SectorCone<'a>(pub &'a PhaseSectors);

impl ConeProjection for SectorCone<'_> {
    fn project_cone(&self, v: &mut [f64]) -> Result<()> {
        let nn = self.0.n * self.0.n;
        let (s, rest) = v.split_at_mut(nn);
        let (t, _) = rest.split_at_mut(nn);
        let (a, b) = rayon::join(|| self.0.project_coords(s), || self.0.project_coords(t));
        a.and(b)
    }
}
