//! The reference MLP, its field-encoded twin, and the plain inference oracles.
//!
//! Layers compute `a_i = σ(W_i · a_{i-1})` with no bias term. Over the field
//! the product carries scale `2^(2f)`, so each layer rescales once before the
//! activation.

use alloc::vec::Vec;

use rand::Rng;
use thiserror::Error;

use crate::codec::{CodecError, FixedPointCodec};
use crate::field::PrimeField;
use crate::matrix::{FieldMatrix, RealMatrix, ShapeError};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("a model needs at least one layer (two dimensions), got {0} dimensions")]
    TooFewDims(usize),
    #[error("layer dimensions must be positive")]
    ZeroWidth,
    #[error("layer {layer}: expects input width {expected}, previous layer produces {got}")]
    Chain {
        layer: usize,
        expected: usize,
        got: usize,
    },
    #[error("layer {layer}: weight {value} exceeds bound {bound}")]
    WeightBound { layer: usize, value: f64, bound: f64 },
    #[error("{0} activations for {1} layers")]
    ActivationCount(usize, usize),
    #[error("layer {layer}: activation leaves the encodable range")]
    ActivationOverflow { layer: usize },
    #[error("layer width {width} exceeds the codec's overflow budget width {budget}")]
    WidthBudget { width: usize, budget: usize },
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply_real(self, v: f64) -> f64 {
        match self {
            Activation::Relu => {
                if v > 0.0 {
                    v
                } else {
                    0.0
                }
            }
            Activation::Identity => v,
        }
    }

    /// ReLU on the centered lift: negative representatives go to zero.
    #[inline]
    pub fn apply_field(self, field: &PrimeField, e: u64) -> u64 {
        match self {
            Activation::Relu if e > field.half() => 0,
            _ => e,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "relu" | "ReLU" => Some(Activation::Relu),
            "identity" | "Identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: RealMatrix,
    pub activation: Activation,
}

/// A bias-free MLP with real weights.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layers: Vec<Layer>,
}

impl MlpModel {
    /// Validates the dimension chain and `|w| <= weight_bound`.
    pub fn new(layers: Vec<Layer>, weight_bound: f64) -> Result<Self, ModelError> {
        if layers.is_empty() {
            return Err(ModelError::TooFewDims(layers.len()));
        }
        for (i, layer) in layers.iter().enumerate() {
            if i > 0 {
                let prev = layers[i - 1].weights.rows();
                if layer.weights.cols() != prev {
                    return Err(ModelError::Chain {
                        layer: i + 1,
                        expected: layer.weights.cols(),
                        got: prev,
                    });
                }
            }
            if let Some(&value) = layer
                .weights
                .as_slice()
                .iter()
                .find(|v| !v.is_finite() || libm::fabs(**v) > weight_bound)
            {
                return Err(ModelError::WeightBound {
                    layer: i + 1,
                    value,
                    bound: weight_bound,
                });
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// `[d_1, ..., d_{L+1}]`: input width followed by every layer's output width.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.layers.len() + 1);
        dims.push(self.layers[0].weights.cols());
        dims.extend(self.layers.iter().map(|l| l.weights.rows()));
        dims
    }

    pub fn activations(&self) -> Vec<Activation> {
        self.layers.iter().map(|l| l.activation).collect()
    }

    /// Widest dot product any layer performs.
    pub fn max_input_width(&self) -> usize {
        self.layers.iter().map(|l| l.weights.cols()).max().unwrap_or(0)
    }

    pub fn max_abs_weight(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.weights.max_abs())
            .fold(0.0, f64::max)
    }

    /// Float inference.
    pub fn infer_float(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        let mut a = x.to_vec();
        for layer in &self.layers {
            a = layer.weights.matvec(&a)?;
            for v in &mut a {
                *v = layer.activation.apply_real(*v);
            }
        }
        Ok(a)
    }

    /// Same model with each layer's weights replaced.
    pub fn with_weights(&self, weights: Vec<RealMatrix>) -> Result<Self, ModelError> {
        let layers = self
            .layers
            .iter()
            .zip(weights)
            .map(|(l, w)| Layer {
                weights: w,
                activation: l.activation,
            })
            .collect();
        Self::new(layers, f64::INFINITY)
    }
}

/// Seeded random model with weights uniform in `[-1, 1]`.
pub fn gen_random_model(seed: u64, dims: &[usize], activation: Activation) -> Result<MlpModel, ModelError> {
    let acts = alloc::vec![activation; dims.len().saturating_sub(1)];
    gen_random_model_with(seed, dims, &acts)
}

/// Like [`gen_random_model`] with one activation per layer.
pub fn gen_random_model_with(
    seed: u64,
    dims: &[usize],
    activations: &[Activation],
) -> Result<MlpModel, ModelError> {
    if dims.len() < 2 {
        return Err(ModelError::TooFewDims(dims.len()));
    }
    if dims.contains(&0) {
        return Err(ModelError::ZeroWidth);
    }
    if activations.len() != dims.len() - 1 {
        return Err(ModelError::ActivationCount(activations.len(), dims.len() - 1));
    }
    let mut rng = rng::substream(seed, rng::MODEL, 0);
    let layers = dims
        .windows(2)
        .zip(activations)
        .map(|(w, &activation)| {
            let (cols, rows) = (w[0], w[1]);
            let data = (0..rows * cols).map(|_| rng.random_range(-1.0..=1.0)).collect();
            Ok(Layer {
                weights: RealMatrix::from_rows(rows, cols, data)?,
                activation,
            })
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    MlpModel::new(layers, 1.0)
}

/// Per-layer field activations of one quantized forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTrace {
    /// `a_0 = encode(x)`, then `a_1, ..., a_L`.
    pub activations: Vec<Vec<u64>>,
    /// `decode(a_L)`.
    pub output: Vec<f64>,
}

impl QuantizedTrace {
    pub fn output_field(&self) -> &[u64] {
        self.activations.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// The field-encoded model `Q_i = encode(W_i)`; ground truth for the protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedModel {
    codec: FixedPointCodec,
    weights: Vec<FieldMatrix>,
    activations: Vec<Activation>,
}

impl QuantizedModel {
    pub fn new(model: &MlpModel, codec: FixedPointCodec) -> Result<Self, ModelError> {
        let width = model.max_input_width();
        if width > codec.max_width() {
            return Err(ModelError::WidthBudget {
                width,
                budget: codec.max_width(),
            });
        }
        let weights = model
            .layers()
            .iter()
            .map(|l| encode_matrix(&codec, &l.weights))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            codec,
            weights,
            activations: model.activations(),
        })
    }

    /// Builds the oracle directly from field weights, e.g. a recombined split.
    pub fn from_field_weights(
        codec: FixedPointCodec,
        weights: Vec<FieldMatrix>,
        activations: Vec<Activation>,
    ) -> Result<Self, ModelError> {
        if weights.is_empty() {
            return Err(ModelError::TooFewDims(1));
        }
        if weights.len() != activations.len() {
            return Err(ModelError::ActivationCount(activations.len(), weights.len()));
        }
        for (i, w) in weights.iter().enumerate() {
            if i > 0 && weights[i - 1].rows() != w.cols() {
                return Err(ModelError::Chain {
                    layer: i + 1,
                    expected: w.cols(),
                    got: weights[i - 1].rows(),
                });
            }
            if w.cols() > codec.max_width() {
                return Err(ModelError::WidthBudget {
                    width: w.cols(),
                    budget: codec.max_width(),
                });
            }
        }
        Ok(Self {
            codec,
            weights,
            activations,
        })
    }

    pub fn codec(&self) -> &FixedPointCodec {
        &self.codec
    }

    pub fn weights(&self) -> &[FieldMatrix] {
        &self.weights
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn encode_input(&self, x: &[f64]) -> Result<Vec<u64>, ModelError> {
        if x.len() != self.weights[0].cols() {
            return Err(ShapeError::Mismatch {
                expected: self.weights[0].cols(),
                got: x.len(),
            }
            .into());
        }
        Ok(x.iter().map(|&v| self.codec.encode(v)).collect::<Result<_, _>>()?)
    }

    /// Total field forward pass: `a_i = σ(rescale(Q_i a_{i-1}))`, no bound checks.
    ///
    /// Returns `a_0, ..., a_L`.
    pub fn forward_field(&self, input: &[u64]) -> Result<Vec<Vec<u64>>, ModelError> {
        let field = self.codec.field();
        let mut acts = Vec::with_capacity(self.weights.len() + 1);
        acts.push(input.to_vec());
        for (w, act) in self.weights.iter().zip(&self.activations) {
            let y = w.matvec(field, acts.last().unwrap())?;
            let a = y
                .into_iter()
                .map(|e| act.apply_field(field, self.codec.rescale(e)))
                .collect();
            acts.push(a);
        }
        Ok(acts)
    }

    /// Field inference with every overflow check enabled.
    pub fn infer_quantized(&self, x: &[f64]) -> Result<QuantizedTrace, ModelError> {
        let field = self.codec.field();
        let mut acts = Vec::with_capacity(self.weights.len() + 1);
        acts.push(self.encode_input(x)?);
        for (i, (w, act)) in self.weights.iter().zip(&self.activations).enumerate() {
            let y = w.matvec(field, acts.last().unwrap())?;
            let mut a = Vec::with_capacity(y.len());
            for e in y {
                let v = act.apply_field(field, self.codec.rescale_after_product(e)?);
                if !self.codec.in_bound(v) {
                    return Err(ModelError::ActivationOverflow { layer: i + 1 });
                }
                a.push(v);
            }
            acts.push(a);
        }
        let output = acts.last().unwrap().iter().map(|&e| self.codec.decode(e)).collect();
        Ok(QuantizedTrace {
            activations: acts,
            output,
        })
    }
}

/// Elementwise bounded encoding of a real matrix.
pub fn encode_matrix(codec: &FixedPointCodec, w: &RealMatrix) -> Result<FieldMatrix, CodecError> {
    let data = w
        .as_slice()
        .iter()
        .map(|&v| codec.encode(v))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FieldMatrix::from_rows(codec.field(), w.rows(), w.cols(), data)
        .expect("shape copied from a valid matrix"))
}
