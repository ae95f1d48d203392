use rand::Rng;

use super::structure::{CombMode, CombStructure};
use crate::error::{Error, Result};
use crate::quantum::{choi_of_kraus, link_product};
use crate::tensor::{haar_unitary, ComplexMatrix, Operator, SpaceLayout};

/// Kraus operators of a random channel `d_in → d_out` from a Haar isometry
/// into `d_out ⊗ ℂ^env`.
fn random_kraus<R: Rng + ?Sized>(d_in: usize, d_out: usize, env: usize, rng: &mut R) -> Vec<ComplexMatrix> {
    let env = env.max(d_in.div_ceil(d_out));
    let u = haar_unitary(d_out * env, rng);
    (0..env)
        .map(|a| ComplexMatrix::from_fn(d_out, d_in, |o, i| u[(o * env + a, i)]))
        .collect()
}

fn sub_layout(structure: &CombStructure, labels: &[String], memory: Option<(String, usize)>) -> Result<SpaceLayout> {
    let mut pairs = Vec::with_capacity(labels.len() + 1);
    for l in labels {
        pairs.push((l.clone(), structure.layout.dim_of(l)?));
    }
    pairs.extend(memory);
    SpaceLayout::new(pairs)
}

/// A random deterministic comb with the tooth order of `structure`: one
/// random channel per tooth, consecutive teeth linked through a
/// `memory`-dimensional wire. For [`CombMode::Ico`] the adaptive order
/// is used, which gives a causally ordered process matrix.
pub fn random_comb<R: Rng + ?Sized>(structure: &CombStructure, memory: usize, rng: &mut R) -> Result<ComplexMatrix> {
    if memory == 0 {
        return Err(Error::InvalidArgument("memory dimension must be positive".into()));
    }
    let ordered;
    let teeth = if structure.mode == CombMode::Ico {
        ordered = CombStructure::inversion(structure.d, structure.k, CombMode::Adaptive)?;
        &ordered.teeth
    } else {
        &structure.teeth
    };
    let last = teeth.len() - 1;
    let mut acc: Option<Operator> = None;
    for (j, tooth) in teeth.iter().enumerate() {
        let mem_in = (j > 0).then(|| (format!("#M{j}"), memory));
        let mem_out = (j < last).then(|| (format!("#M{}", j + 1), memory));
        let input = sub_layout(structure, &tooth.inputs, mem_in)?;
        let output = sub_layout(structure, &tooth.outputs, mem_out)?;
        let kraus = random_kraus(input.total_dim(), output.total_dim(), 2, rng);
        let choi = choi_of_kraus(&kraus, &input, &output)?.op;
        acc = Some(match acc {
            None => choi,
            Some(a) => link_product(&a, &choi, &[format!("#M{j}")])?,
        });
    }
    let op = acc.ok_or_else(|| Error::Logic("structure has no teeth".into()))?;
    let order: Vec<&str> = structure.layout.labels().collect();
    Ok(op.permute(&order)?.matrix)
}
