//! Weight extraction from unmasked transcripts by solving a linear system over `Z_p`.

use alloc::vec::Vec;

use crate::field::PrimeField;
use crate::matrix::FieldMatrix;
use crate::protocol::Transcript;

/// One observed input/output pair of a layer, as seen by David.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservedPair {
    pub input: Vec<u64>,
    pub output: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackError {
    /// The observed inputs span fewer than `needed` dimensions.
    Singular { rank: usize, needed: usize },
    Shape,
    /// No transcript contains both sides of the layer.
    NoObservations,
}

impl core::fmt::Display for AttackError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            AttackError::Singular { rank, needed } => {
                write!(f, "linear system has rank {rank} but {needed} unknowns per row; more queries are needed")
            }
            AttackError::Shape => f.write_str("observations do not match the layer shape"),
            AttackError::NoObservations => f.write_str("no usable observations for this layer"),
        }
    }
}

impl core::error::Error for AttackError {}

/// Pairs `(input to layer, output of layer)` visible in David's transcripts.
///
/// The output of the last layer is read from the final output message.
pub fn collect_pairs(transcripts: &[Transcript], layer: u32) -> Vec<ObservedPair> {
    transcripts
        .iter()
        .filter_map(|t| {
            let input = t.layer_inputs().find(|(l, _)| *l == layer)?.1;
            let output = t
                .layer_inputs()
                .find(|(l, _)| *l == layer + 1)
                .map(|(_, d)| d)
                .or_else(|| t.final_output())?;
            Some(ObservedPair {
                input: input.to_vec(),
                output: output.to_vec(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecoveredLayer {
    /// The full layer matrix `Q_i`.
    pub weights: FieldMatrix,
    /// `Q_i − W_i^D`, Charlie's secret share.
    pub charlie_part: FieldMatrix,
    /// Indices of the pairs whose equations determined the solution.
    pub pivots: Vec<usize>,
}

/// Solves `2^f · a_i = Q · a_{i−1}` for `Q` from the pairs of layer `layer`.
///
/// Exact recovery needs an identity activation at that layer and an exact
/// rescale (for instance `frac_bits = 0`).
pub fn linear_recovery_attack(
    field: &PrimeField,
    transcripts: &[Transcript],
    layer: u32,
    david_weights: &FieldMatrix,
    frac_bits: u32,
) -> Result<RecoveredLayer, AttackError> {
    let pairs = collect_pairs(transcripts, layer);
    solve_layer(field, &pairs, david_weights, frac_bits)
}

/// [`linear_recovery_attack`] on already collected pairs.
pub fn solve_layer(
    field: &PrimeField,
    pairs: &[ObservedPair],
    david_weights: &FieldMatrix,
    frac_bits: u32,
) -> Result<RecoveredLayer, AttackError> {
    let (d_out, d_in) = (david_weights.rows(), david_weights.cols());
    if pairs.is_empty() {
        return Err(AttackError::NoObservations);
    }
    if pairs.iter().any(|q| q.input.len() != d_in || q.output.len() != d_out) {
        return Err(AttackError::Shape);
    }
    let scale = field.pow(2, frac_bits as u64);
    let width = d_in + d_out;
    let mut aug: Vec<Vec<u64>> = pairs
        .iter()
        .map(|q| {
            let mut row = Vec::with_capacity(width);
            row.extend(q.input.iter().map(|&e| e % field.modulus()));
            row.extend(q.output.iter().map(|&e| field.mul(e % field.modulus(), scale)));
            row
        })
        .collect();
    let mut origin: Vec<usize> = (0..pairs.len()).collect();

    let mut rank = 0;
    for col in 0..d_in {
        let Some(found) = (rank..aug.len()).find(|&r| aug[r][col] != 0) else {
            continue;
        };
        aug.swap(rank, found);
        origin.swap(rank, found);
        let inv = field.inv(aug[rank][col]).expect("nonzero pivot");
        for e in aug[rank].iter_mut() {
            *e = field.mul(*e, inv);
        }
        let pivot = aug[rank].clone();
        for (r, row) in aug.iter_mut().enumerate() {
            if r == rank || row[col] == 0 {
                continue;
            }
            let factor = row[col];
            for (e, &p) in row.iter_mut().zip(&pivot) {
                *e = field.sub(*e, field.mul(factor, p));
            }
        }
        rank += 1;
    }
    if rank < d_in {
        return Err(AttackError::Singular { rank, needed: d_in });
    }

    // Row `c` of the reduced system now reads `x_c = rhs`, so its right-hand
    // side is column `c` of Q.
    let mut weights = FieldMatrix::zeros(d_out, d_in);
    for (c, row) in aug.iter().take(d_in).enumerate() {
        for j in 0..d_out {
            weights.set(j, c, row[d_in + j]);
        }
    }
    let charlie_part = weights.sub(field, david_weights).expect("same shape");
    Ok(RecoveredLayer {
        weights,
        charlie_part,
        pivots: origin[..d_in].to_vec(),
    })
}

/// Number of pairs the candidate `Q` fails to explain.
pub fn count_residuals(field: &PrimeField, weights: &FieldMatrix, pairs: &[ObservedPair], frac_bits: u32) -> usize {
    let scale = field.pow(2, frac_bits as u64);
    pairs
        .iter()
        .filter(|q| match weights.matvec(field, &q.input) {
            Ok(y) => y.iter().zip(&q.output).any(|(&a, &b)| a != field.mul(b % field.modulus(), scale)),
            Err(_) => true,
        })
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs_for(field: &PrimeField, q: &FieldMatrix, inputs: &[Vec<u64>]) -> Vec<ObservedPair> {
        inputs
            .iter()
            .map(|x| ObservedPair {
                input: x.clone(),
                output: q.matvec(field, x).unwrap(),
            })
            .collect()
    }

    #[test]
    fn solves_small_system() {
        let f = PrimeField::new(101).unwrap();
        let q = FieldMatrix::from_rows(&f, 2, 2, alloc::vec![2, 3, 4, 5]).unwrap();
        let pairs = pairs_for(&f, &q, &[alloc::vec![1, 1], alloc::vec![1, 2]]);
        let wd = FieldMatrix::identity(2);
        let rec = solve_layer(&f, &pairs, &wd, 0).unwrap();
        assert_eq!(rec.weights, q);
        assert_eq!(rec.charlie_part.as_slice(), &[1, 3, 4, 4]);
        assert_eq!(count_residuals(&f, &rec.weights, &pairs, 0), 0);
    }

    #[test]
    fn dependent_inputs_are_singular() {
        let f = PrimeField::new(101).unwrap();
        let q = FieldMatrix::identity(3);
        let pairs = pairs_for(&f, &q, &[alloc::vec![1, 2, 3], alloc::vec![2, 4, 6], alloc::vec![0, 1, 0]]);
        assert_eq!(
            solve_layer(&f, &pairs, &q, 0),
            Err(AttackError::Singular { rank: 2, needed: 3 })
        );
    }

    #[test]
    fn scaled_outputs() {
        let f = PrimeField::new(101).unwrap();
        let q = FieldMatrix::from_rows(&f, 1, 2, alloc::vec![7, 9]).unwrap();
        let half = f.inv(2).unwrap();
        let inputs = [alloc::vec![1, 0], alloc::vec![0, 1]];
        let pairs: Vec<ObservedPair> = inputs
            .iter()
            .map(|x| ObservedPair {
                input: x.clone(),
                output: q.matvec(&f, x).unwrap().iter().map(|&e| f.mul(e, half)).collect(),
            })
            .collect();
        let rec = solve_layer(&f, &pairs, &FieldMatrix::zeros(1, 2), 1).unwrap();
        assert_eq!(rec.weights, q);
    }
}
