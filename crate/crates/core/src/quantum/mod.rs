//! Quantum-information primitives: canonical states and gates, the Choi
//! isomorphism, the link product and the antisymmetric-subspace isometry.
//!
//! Choi operators use the unnormalized convention
//! `𝔠(K) = Σ_ij |i⟩⟨j| ⊗ K|i⟩⟨j|K†`, input factor first, so a channel
//! with input dimension `d` has trace `d`.

mod antisym;
mod choi;

pub use antisym::{antisym_conjugation_unchecked, antisym_isometry, conjugate_via_antisym, DET_TOL};
pub use choi::{choi_of_kraus, choi_of_unitary, choi_of_unitary_labeled, link_product, ChoiKind, ChoiOperator};

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::tensor::{c64, Complex64, ComplexMatrix, SpaceLayout};

/// Normalization tolerance of [`PureState`].
pub const STATE_NORM_TOL: f64 = 1e-12;

/// Normalized state vector over a labeled layout.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    amplitudes: Vec<Complex64>,
    layout: SpaceLayout,
}

impl PureState {
    pub fn new(amplitudes: Vec<Complex64>, layout: SpaceLayout) -> Result<Self> {
        if amplitudes.len() != layout.total_dim() {
            return Err(Error::Shape(format!(
                "{} amplitudes for a layout of dimension {}",
                amplitudes.len(),
                layout.total_dim()
            )));
        }
        let norm = amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > STATE_NORM_TOL {
            return Err(Error::InvalidArgument(format!("state norm {norm} is not 1")));
        }
        Ok(Self { amplitudes, layout })
    }

    /// Normalizes `amplitudes` before validating.
    pub fn normalized(amplitudes: Vec<Complex64>, layout: SpaceLayout) -> Result<Self> {
        let norm = amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidArgument("zero vector".into()));
        }
        Self::new(amplitudes.into_iter().map(|z| z / norm).collect(), layout)
    }

    /// Single-qudit state on a subsystem labeled `label`.
    pub fn qudit(amplitudes: Vec<Complex64>, label: &str) -> Result<Self> {
        let d = amplitudes.len();
        Self::normalized(amplitudes, SpaceLayout::new(vec![(label.to_string(), d)])?)
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `|ψ⟩⟨ψ|`
    pub fn projector(&self) -> ComplexMatrix {
        ComplexMatrix::outer(&self.amplitudes, &self.amplitudes)
    }

    /// `⟨self|other⟩`
    pub fn overlap(&self, other: &Self) -> Complex64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }
}

/// `(|00⟩ + |11⟩ + … + |d−1,d−1⟩)/√d` on subsystems `A`, `B`.
pub fn max_entangled(d: usize) -> Result<PureState> {
    if d < 2 {
        return Err(Error::InvalidArgument(format!("dimension {d} < 2")));
    }
    let mut amps = vec![c64(0.0, 0.0); d * d];
    let a = 1.0 / (d as f64).sqrt();
    for i in 0..d {
        amps[i * d + i] = c64(a, 0.0);
    }
    PureState::new(amps, SpaceLayout::from_pairs(&[("A", d), ("B", d)])?)
}

/// Shift `X_d = Σ|l⊕1⟩⟨l|` and clock `Z_d = Σ ω^l |l⟩⟨l|`, `ω = e^{2πi/d}`.
pub fn shift_clock(d: usize) -> Result<(ComplexMatrix, ComplexMatrix)> {
    if d < 2 {
        return Err(Error::InvalidArgument(format!("dimension {d} < 2")));
    }
    let mut x = ComplexMatrix::zeros(d, d);
    for l in 0..d {
        x[((l + 1) % d, l)] = c64(1.0, 0.0);
    }
    let z = ComplexMatrix::diagonal(&(0..d).map(|l| root_of_unity(d, l)).collect::<Vec<_>>());
    Ok((x, z))
}

/// `ω^m` with `ω = e^{2πi/d}`.
pub fn root_of_unity(d: usize, m: usize) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI * (m % d) as f64 / d as f64)
}

pub fn pauli_x() -> ComplexMatrix {
    ComplexMatrix::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]).unwrap()
}

pub fn pauli_y() -> ComplexMatrix {
    ComplexMatrix::new(2, 2, vec![c64(0.0, 0.0), c64(0.0, -1.0), c64(0.0, 1.0), c64(0.0, 0.0)]).unwrap()
}

pub fn pauli_z() -> ComplexMatrix {
    ComplexMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, -1.0]).unwrap()
}
