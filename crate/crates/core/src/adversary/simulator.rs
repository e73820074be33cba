use alloc::vec::Vec;

use rand::Rng;

use crate::decompose::DavidPart;
use crate::matrix::random_vector;
use crate::field::PrimeField;
use crate::protocol::Transcript;

/// What a simulator that knows only `x`, `Θ(x)` and David's weights produces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimulatedView<'a> {
    pub david: &'a DavidPart,
    /// One message per layer; `messages[i-1]` stands in for the input to layer `i`.
    pub messages: Vec<Vec<u64>>,
    pub output: Vec<u64>,
}

impl SimulatedView<'_> {
    /// `(layer, data)` pairs in the same shape as [`Transcript::layer_inputs`].
    pub fn layer_inputs(&self) -> impl Iterator<Item = (u32, &[u64])> {
        self.messages
            .iter()
            .enumerate()
            .map(|(i, m)| (i as u32 + 1, m.as_slice()))
    }
}

/// Builds a simulated view.
///
/// Layer 1 carries the encoded input itself, since it is public to both
/// parties; every later layer is an independent uniform vector.
pub fn simulate_view<'a, R: Rng + ?Sized>(
    input: &[u64],
    output: &[u64],
    david: &'a DavidPart,
    rng: &mut R,
) -> SimulatedView<'a> {
    let field = PrimeField::new(david.modulus).expect("david part holds a prime modulus");
    let mut messages = Vec::with_capacity(david.num_layers());
    messages.push(input.to_vec());
    for &width in &david.dims[1..david.num_layers()] {
        messages.push(random_vector(&field, width, rng));
    }
    SimulatedView {
        david,
        messages,
        output: output.to_vec(),
    }
}

/// Masked messages (layer ≥ 2) of a real transcript.
pub fn masked_inputs(t: &Transcript) -> impl Iterator<Item = (u32, &[u64])> {
    t.layer_inputs().filter(|(l, _)| *l >= 2)
}
