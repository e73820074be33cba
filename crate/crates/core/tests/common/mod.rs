#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use splitinfer_core::codec::FixedPointCodec;
use splitinfer_core::decompose::{decompose, DavidPart, Decomposition};
use splitinfer_core::field::PrimeField;
use splitinfer_core::model::{gen_random_model_with, Activation, MlpModel, QuantizedModel};

pub struct Fixture {
    pub model: MlpModel,
    pub quant: QuantizedModel,
    pub decomp: Decomposition,
    pub david: DavidPart,
}

impl Fixture {
    pub fn build(model: MlpModel, codec: FixedPointCodec, ranks: &[usize]) -> Self {
        let quant = QuantizedModel::new(&model, codec).unwrap();
        let decomp = decompose(&model, ranks, codec).unwrap();
        let david = decomp.david_part();
        Self { model, quant, decomp, david }
    }

    pub fn field(&self) -> PrimeField {
        *self.quant.codec().field()
    }
}

/// Random depth 1..=4, widths 1..=64, mixed activations, random ranks.
pub fn random_fixture(seed: u64) -> Fixture {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let layers = rng.random_range(1..=4usize);
    let dims: Vec<usize> = (0..=layers).map(|_| rng.random_range(1..=64)).collect();
    let acts: Vec<Activation> = (0..layers)
        .map(|_| if rng.random_bool(0.5) { Activation::Relu } else { Activation::Identity })
        .collect();
    let ranks: Vec<usize> = dims.windows(2).map(|w| rng.random_range(0..=w[0].min(w[1]))).collect();
    let model = gen_random_model_with(seed, &dims, &acts).unwrap();
    let codec = FixedPointCodec::auto_bound(PrimeField::mersenne61(), 16, model.max_input_width()).unwrap();
    Fixture::build(model, codec, &ranks)
}

pub fn random_input(seed: u64, width: usize) -> Vec<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5eed_1234_abcd_0000);
    (0..width).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

/// Model with integer weights in `[-bound, bound]` and `frac_bits = 0`.
pub fn integer_fixture(p: u64, dims: &[usize], acts: &[Activation], weight_bound: i64, value_bound: f64, seed: u64) -> Fixture {
    use splitinfer_core::matrix::RealMatrix;
    use splitinfer_core::model::Layer;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let layers = dims
        .windows(2)
        .zip(acts)
        .map(|(w, &activation)| {
            let data = (0..w[0] * w[1]).map(|_| rng.random_range(-weight_bound..=weight_bound) as f64).collect();
            Layer { weights: RealMatrix::from_rows(w[1], w[0], data).unwrap(), activation }
        })
        .collect();
    let model = MlpModel::new(layers, weight_bound as f64).unwrap();
    let width = model.max_input_width();
    let codec = FixedPointCodec::new(PrimeField::new(p).unwrap(), 0, value_bound, width).unwrap();
    let ranks: Vec<usize> = dims.windows(2).map(|w| w[0].min(w[1]).min(1)).collect();
    Fixture::build(model, codec, &ranks)
}

pub fn integer_input(rng: &mut ChaCha20Rng, width: usize, bound: i64) -> Vec<f64> {
    (0..width).map(|_| rng.random_range(-bound..=bound) as f64).collect()
}
