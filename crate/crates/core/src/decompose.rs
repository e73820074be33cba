//! Additive low-rank / residual split of every layer, exact over the field.
//!
//! For each layer the top `svd_rank` singular components form Charlie's part
//! `W^C = U_k Σ_k V_kᵀ`. In the field, Charlie's dense part is `encode(W^C)`
//! and David's part is defined as `encode(W) - encode(W^C)`, so the two
//! residues sum back to `encode(W)` exactly.

use alloc::vec::Vec;

use rand::Rng;
use thiserror::Error;

use crate::codec::{CodecError, FixedPointCodec};
use crate::matrix::{FieldMatrix, RealMatrix};
use crate::model::{encode_matrix, Activation, MlpModel, ModelError};
use crate::rng;
use crate::svd::{jacobi_svd, SvdError, DEFAULT_TOL};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecomposeError {
    #[error("layer {layer}: svd rank {rank} exceeds min dimension {max}")]
    RankOutOfRange { layer: usize, rank: usize, max: usize },
    #[error("{got} svd ranks given for {layers} layers")]
    RankCount { got: usize, layers: usize },
    #[error("layer width {width} exceeds the codec's overflow budget width {budget}")]
    WidthBudget { width: usize, budget: usize },
    #[error(transparent)]
    Svd(#[from] SvdError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Charlie's factored low-rank weights `A = U_k` and `B = Σ_k V_kᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankFactors {
    pub a: RealMatrix,
    pub b: RealMatrix,
}

impl LowRankFactors {
    pub fn rank(&self) -> usize {
        self.a.cols()
    }

    pub fn dense(&self) -> RealMatrix {
        self.a.matmul(&self.b).expect("factor shapes agree")
    }

    /// Field evaluation of `A · (B · x)` from separately encoded factors.
    ///
    /// Costs `k · (d_in + d_out)` multiply-accumulates instead of `d_in · d_out`.
    /// The result carries product scale `2^(2f)` like a dense layer product; it
    /// differs from `encode(A·B) · x` by the extra rounding of `B·x` and of
    /// both factors (see the decomposer tests for the bound).
    pub fn apply_field(&self, codec: &FixedPointCodec, x: &[u64]) -> Result<Vec<u64>, DecomposeError> {
        let field = codec.field();
        let enc = |m: &RealMatrix| -> Result<FieldMatrix, CodecError> {
            if m.rows() == 0 || m.cols() == 0 {
                return Ok(FieldMatrix::zeros(m.rows(), m.cols()));
            }
            let data = m
                .as_slice()
                .iter()
                .map(|&v| codec.encode_wrapping(v))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(FieldMatrix::from_rows(field, m.rows(), m.cols(), data).expect("valid shape"))
        };
        let a = enc(&self.a)?;
        let b = enc(&self.b)?;
        if self.rank() == 0 {
            return Ok(alloc::vec![0; self.a.rows()]);
        }
        let t: Vec<u64> = b
            .matvec(field, x)
            .map_err(ModelError::from)?
            .into_iter()
            .map(|e| codec.rescale(e))
            .collect();
        Ok(a.matvec(field, &t).map_err(ModelError::from)?)
    }
}

/// One layer's split.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSplit {
    pub svd_rank: usize,
    pub singular_values: Vec<f64>,
    pub low_rank: LowRankFactors,
    /// `encode(A·B)`, entrywise.
    pub charlie_field: FieldMatrix,
    /// `encode(W) - charlie_field mod p`.
    pub david_field: FieldMatrix,
}

/// Charlie's complete view of a split model.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    codec: FixedPointCodec,
    activations: Vec<Activation>,
    layers: Vec<LayerSplit>,
}

/// What the untrusted party holds: residual weights only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DavidPart {
    pub modulus: u64,
    pub frac_bits: u32,
    pub dims: Vec<usize>,
    pub weights: Vec<FieldMatrix>,
}

impl Decomposition {
    /// Reassembles a decomposition from stored parts, re-checking shapes.
    pub fn from_parts(
        codec: FixedPointCodec,
        activations: Vec<Activation>,
        layers: Vec<LayerSplit>,
    ) -> Result<Self, DecomposeError> {
        if activations.len() != layers.len() || layers.is_empty() {
            return Err(DecomposeError::RankCount {
                got: activations.len(),
                layers: layers.len(),
            });
        }
        for (i, l) in layers.iter().enumerate() {
            let (r, c) = (l.charlie_field.rows(), l.charlie_field.cols());
            let chained = i == 0 || layers[i - 1].charlie_field.rows() == c;
            if l.david_field.rows() != r || l.david_field.cols() != c || !chained {
                return Err(ModelError::Chain {
                    layer: i + 1,
                    expected: c,
                    got: l.david_field.cols(),
                }
                .into());
            }
            if c > codec.max_width() {
                return Err(DecomposeError::WidthBudget {
                    width: c,
                    budget: codec.max_width(),
                });
            }
        }
        Ok(Self {
            codec,
            activations,
            layers,
        })
    }

    pub fn codec(&self) -> &FixedPointCodec {
        &self.codec
    }

    pub fn layers(&self) -> &[LayerSplit] {
        &self.layers
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn svd_ranks(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.svd_rank).collect()
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = Vec::with_capacity(self.layers.len() + 1);
        d.push(self.layers[0].charlie_field.cols());
        d.extend(self.layers.iter().map(|l| l.charlie_field.rows()));
        d
    }

    pub fn david_part(&self) -> DavidPart {
        DavidPart {
            modulus: self.codec.field().modulus(),
            frac_bits: self.codec.frac_bits(),
            dims: self.dims(),
            weights: self.layers.iter().map(|l| l.david_field.clone()).collect(),
        }
    }

    /// `charlie_field + david_field` per layer.
    pub fn recombined(&self) -> Vec<FieldMatrix> {
        let field = self.codec.field();
        self.layers
            .iter()
            .map(|l| l.charlie_field.add(field, &l.david_field).expect("same shape"))
            .collect()
    }

    /// Analytic Charlie cost for `check_count` Freivalds checks per layer.
    pub fn charlie_cost_ratio(&self, check_count: usize) -> CostRatio {
        charlie_cost_ratio(&self.svd_ranks(), &self.dims(), check_count)
    }
}

impl DavidPart {
    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }
}

/// Splits every layer, keeping the top `ranks[i]` singular components at Charlie.
pub fn decompose(
    model: &MlpModel,
    ranks: &[usize],
    codec: FixedPointCodec,
) -> Result<Decomposition, DecomposeError> {
    if ranks.len() != model.num_layers() {
        return Err(DecomposeError::RankCount {
            got: ranks.len(),
            layers: model.num_layers(),
        });
    }
    let width = model.max_input_width();
    if width > codec.max_width() {
        return Err(DecomposeError::WidthBudget {
            width,
            budget: codec.max_width(),
        });
    }
    let field = *codec.field();
    let mut layers = Vec::with_capacity(ranks.len());
    for (i, (layer, &k)) in model.layers().iter().zip(ranks).enumerate() {
        let w = &layer.weights;
        let max = w.rows().min(w.cols());
        if k > max {
            return Err(DecomposeError::RankOutOfRange {
                layer: i + 1,
                rank: k,
                max,
            });
        }
        let svd = jacobi_svd(w, DEFAULT_TOL)?;
        let (a, b) = svd.truncate(k);
        let w_c = a.matmul(&b).expect("factor shapes agree");
        let charlie = w_c
            .as_slice()
            .iter()
            .map(|&v| codec.encode_wrapping(v))
            .collect::<Result<Vec<_>, _>>()?;
        let charlie_field = FieldMatrix::from_rows(&field, w.rows(), w.cols(), charlie).expect("valid shape");
        let full = encode_matrix(&codec, w)?;
        let david_field = full.sub(&field, &charlie_field).expect("same shape");
        layers.push(LayerSplit {
            svd_rank: k,
            singular_values: svd.singular_values,
            low_rank: LowRankFactors { a, b },
            charlie_field,
            david_field,
        });
    }
    Ok(Decomposition {
        codec,
        activations: model.activations(),
        layers,
    })
}

/// Multiply-accumulate counts of Charlie's online work against full local inference.
///
/// Per layer `i` with input width `d_i`, output width `d_{i+1}`:
/// low-rank product `k_i (d_i + d_{i+1})`, masking and unmasking
/// `d_i + 2 d_{i+1}`, and `c (d_i + d_{i+1})` for `c` Freivalds checks.
/// The baseline is `Σ d_i d_{i+1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CostRatio {
    pub charlie_macs: u64,
    pub full_macs: u64,
}

impl CostRatio {
    pub fn ratio(&self) -> f64 {
        self.charlie_macs as f64 / self.full_macs as f64
    }
}

pub fn charlie_cost_ratio(svd_ranks: &[usize], dims: &[usize], check_count: usize) -> CostRatio {
    let mut charlie = 0u64;
    let mut full = 0u64;
    for (w, &k) in dims.windows(2).zip(svd_ranks) {
        let (d_in, d_out) = (w[0] as u64, w[1] as u64);
        charlie += k as u64 * (d_in + d_out);
        charlie += d_in + 2 * d_out;
        charlie += check_count as u64 * (d_in + d_out);
        full += d_in * d_out;
    }
    CostRatio {
        charlie_macs: charlie,
        full_macs: full,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerDiagnostics {
    pub svd_rank: usize,
    /// `Σ_{j<=k} σ_j² / Σ_j σ_j²`.
    pub energy_fraction: f64,
    /// `‖W^D‖_F / ‖W‖_F` with `W^D = W - W^C` in floats.
    pub residual_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsReport {
    pub layers: Vec<LayerDiagnostics>,
    /// Mean relative output error of the model with Charlie's parts zeroed.
    pub david_only_rel_error: f64,
    pub eval_inputs: usize,
}

pub const DIAGNOSTIC_EVAL_INPUTS: usize = 32;

/// Spectral-energy and residual-only risk figures for a split.
pub fn diagnostics(d: &Decomposition, model: &MlpModel, seed: u64) -> Result<DiagnosticsReport, DecomposeError> {
    let mut residuals = Vec::with_capacity(d.num_layers());
    let mut layers = Vec::with_capacity(d.num_layers());
    for (split, layer) in d.layers().iter().zip(model.layers()) {
        let energy_fraction = energy_fraction(&split.singular_values, split.svd_rank);
        let w_d = layer.weights.sub(&split.low_rank.dense()).map_err(ModelError::from)?;
        let norm = layer.weights.frobenius();
        let residual_ratio = if norm == 0.0 { 0.0 } else { w_d.frobenius() / norm };
        residuals.push(w_d);
        layers.push(LayerDiagnostics {
            svd_rank: split.svd_rank,
            energy_fraction,
            residual_ratio,
        });
    }
    let david_only = model.with_weights(residuals)?;
    let mut rng = rng::substream(seed, rng::INPUTS, u64::MAX);
    let width = model.dims()[0];
    let mut total = 0.0;
    for _ in 0..DIAGNOSTIC_EVAL_INPUTS {
        let x: Vec<f64> = (0..width).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let full = model.infer_float(&x)?;
        let part = david_only.infer_float(&x)?;
        let diff = libm::sqrt(full.iter().zip(&part).map(|(a, b)| (a - b) * (a - b)).sum());
        let norm = libm::sqrt(full.iter().map(|a| a * a).sum());
        total += if norm > 0.0 { diff / norm } else { diff };
    }
    Ok(DiagnosticsReport {
        layers,
        david_only_rel_error: total / DIAGNOSTIC_EVAL_INPUTS as f64,
        eval_inputs: DIAGNOSTIC_EVAL_INPUTS,
    })
}

/// Fraction of squared singular mass in the top `k` components.
pub fn energy_fraction(singular_values: &[f64], k: usize) -> f64 {
    let total: f64 = singular_values.iter().map(|s| s * s).sum();
    if k == 0 {
        return 0.0;
    }
    if total == 0.0 {
        return 1.0;
    }
    let top: f64 = singular_values.iter().take(k).map(|s| s * s).sum();
    top / total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::PrimeField;
    use crate::model::{gen_random_model, Layer};
    use alloc::vec;

    fn codec(width: usize) -> FixedPointCodec {
        FixedPointCodec::auto_bound(PrimeField::mersenne61(), 16, width).unwrap()
    }

    fn diag31() -> MlpModel {
        let w = RealMatrix::from_nested(&[&[3.0, 0.0], &[0.0, 1.0]]).unwrap();
        MlpModel::new(vec![Layer { weights: w, activation: Activation::Identity }], 4096.0).unwrap()
    }

    #[test]
    fn rank_zero_gives_everything_to_david() {
        let m = gen_random_model(4, &[5, 6, 3], Activation::Relu).unwrap();
        let d = decompose(&m, &[0, 0], codec(6)).unwrap();
        for (split, layer) in d.layers().iter().zip(m.layers()) {
            assert!(split.charlie_field.is_zero());
            assert_eq!(split.david_field, encode_matrix(d.codec(), &layer.weights).unwrap());
        }
        let r = diagnostics(&d, &m, 1).unwrap();
        assert!(r.layers.iter().all(|l| l.energy_fraction == 0.0));
        assert_eq!(r.david_only_rel_error, 0.0);
    }

    #[test]
    fn dominant_component_of_diag() {
        let m = diag31();
        let d = decompose(&m, &[1], codec(2)).unwrap();
        let wc = d.layers()[0].low_rank.dense();
        assert!((wc.get(0, 0) - 3.0).abs() < 1e-12);
        assert!(wc.get(0, 1).abs() < 1e-12 && wc.get(1, 0).abs() < 1e-12 && wc.get(1, 1).abs() < 1e-12);
        let r = diagnostics(&d, &m, 1).unwrap();
        assert!((r.layers[0].energy_fraction - 0.9).abs() < 1e-15);
    }

    #[test]
    fn full_rank_residual_is_rounding_only() {
        let m = gen_random_model(8, &[6, 6, 4], Activation::Relu).unwrap();
        let d = decompose(&m, &[6, 4], codec(6)).unwrap();
        let field = d.codec().field();
        for (i, split) in d.layers().iter().enumerate() {
            let width = m.layers()[i].weights.cols() as i64;
            assert!(split.david_field.as_slice().iter().all(|&e| field.lift(e).abs() <= width));
        }
        let r = diagnostics(&d, &m, 1).unwrap();
        assert!(r.layers.iter().all(|l| (l.energy_fraction - 1.0).abs() < 1e-12));
    }

    #[test]
    fn field_additivity_is_exact() {
        let m = gen_random_model(2, &[7, 5, 6, 3], Activation::Relu).unwrap();
        let d = decompose(&m, &[2, 1, 3], codec(7)).unwrap();
        for (recombined, layer) in d.recombined().iter().zip(m.layers()) {
            assert_eq!(recombined, &encode_matrix(d.codec(), &layer.weights).unwrap());
        }
    }

    #[test]
    fn rank_errors() {
        let m = gen_random_model(2, &[3, 5], Activation::Relu).unwrap();
        assert!(matches!(
            decompose(&m, &[4], codec(3)),
            Err(DecomposeError::RankOutOfRange { layer: 1, rank: 4, max: 3 })
        ));
        assert!(matches!(decompose(&m, &[1, 1], codec(3)), Err(DecomposeError::RankCount { .. })));
    }

    #[test]
    fn energy_monotone_in_rank() {
        let m = gen_random_model(3, &[8, 8], Activation::Relu).unwrap();
        let d = decompose(&m, &[0], codec(8)).unwrap();
        let s = &d.layers()[0].singular_values;
        let fr: Vec<f64> = (0..=8).map(|k| energy_fraction(s, k)).collect();
        assert!(fr.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn cost_ratio_examples() {
        // masking only: Σ(d_i + 2 d_{i+1}) / Σ d_i d_{i+1}
        let r = charlie_cost_ratio(&[0, 0], &[4, 8, 2], 0);
        assert_eq!(r, CostRatio { charlie_macs: (4 + 16) + (8 + 4), full_macs: 32 + 16 });
        // square d, rank k, no checks: (2k + 3)/d
        for (d, k) in [(64usize, 2usize), (128, 5), (256, 4)] {
            let r = charlie_cost_ratio(&[k; 3], &[d; 4], 0).ratio();
            assert!((r - (2 * k + 3) as f64 / d as f64).abs() < 1e-15);
        }
        // 256 wide, rank 4, two checks: (8·256... ) = 3840/65536 per layer
        let r = charlie_cost_ratio(&[4; 4], &[256; 5], 2);
        assert_eq!(r.charlie_macs, 4 * 3840);
        assert!(r.ratio() < 0.1);
    }

    #[test]
    fn cost_ratio_decreases_with_width() {
        let ratios: Vec<f64> = [16usize, 32, 64, 128, 256]
            .iter()
            .map(|&d| charlie_cost_ratio(&[4; 3], &[d; 4], 2).ratio())
            .collect();
        assert!(ratios.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn factored_product_close_to_dense() {
        let m = gen_random_model(12, &[10, 8], Activation::Identity).unwrap();
        let c = codec(10);
        let d = decompose(&m, &[3], c).unwrap();
        let field = c.field();
        let x: Vec<u64> = (0..10).map(|i| c.encode(i as f64 / 4.0 - 1.0).unwrap()).collect();
        let dense = d.layers()[0].charlie_field.matvec(field, &x).unwrap();
        let fact = d.layers()[0].low_rank.apply_field(&c, &x).unwrap();
        // |A|,|B| entries and x are O(1)-O(10): the extra rounding is a few units of 2^-f.
        for (a, b) in dense.iter().zip(&fact) {
            let diff = (c.decode_product(*a) - c.decode_product(*b)).abs();
            assert!(diff < 64.0 * 2f64.powi(-16), "{diff}");
        }
    }
}
