use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha20Rng;

use crate::field::PrimeField;
use crate::protocol::{Adversary, Transcript};

/// A single-layer deviation from the honest reply.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CheatStrategy {
    HonestPlay,
    /// Adds `delta` to the reply (zip-truncated to the reply length).
    AdditiveNoise { layer: u32, delta: Vec<u64> },
    /// Replaces the reply with a uniform vector.
    RandomReply { layer: u32 },
    /// Adds `offset` to one coordinate.
    CoordinateFlip { layer: u32, index: usize, offset: u64 },
}

impl CheatStrategy {
    pub fn layer(&self) -> Option<u32> {
        match self {
            CheatStrategy::HonestPlay => None,
            CheatStrategy::AdditiveNoise { layer, .. }
            | CheatStrategy::RandomReply { layer }
            | CheatStrategy::CoordinateFlip { layer, .. } => Some(*layer),
        }
    }

    fn apply<R: Rng>(&self, layer: u32, field: &PrimeField, reply: &mut [u64], rng: &mut R) {
        if self.layer() != Some(layer) {
            return;
        }
        match self {
            CheatStrategy::HonestPlay => {}
            CheatStrategy::AdditiveNoise { delta, .. } => {
                for (y, d) in reply.iter_mut().zip(delta) {
                    *y = field.add(*y, *d % field.modulus());
                }
            }
            CheatStrategy::RandomReply { .. } => {
                for y in reply.iter_mut() {
                    *y = rng.random_range(0..field.modulus());
                }
            }
            CheatStrategy::CoordinateFlip { index, offset, .. } => {
                if let Some(y) = reply.get_mut(*index) {
                    *y = field.add(*y, *offset % field.modulus());
                }
            }
        }
    }
}

/// A David that applies a sequence of single-layer strategies.
#[derive(Debug, Clone)]
pub struct CheatingDavid {
    strategies: Vec<CheatStrategy>,
    rng: ChaCha20Rng,
}

impl CheatingDavid {
    pub fn new(strategy: CheatStrategy, rng: ChaCha20Rng) -> Self {
        Self::sequence(alloc::vec![strategy], rng)
    }

    pub fn sequence(strategies: Vec<CheatStrategy>, rng: ChaCha20Rng) -> Self {
        Self { strategies, rng }
    }
}

impl Adversary for CheatingDavid {
    fn tamper(&mut self, layer: u32, _: &Transcript, field: &PrimeField, reply: &mut Vec<u64>) {
        for s in &self.strategies {
            s.apply(layer, field, reply, &mut self.rng);
        }
    }
}

/// Adapts a closure into an [`Adversary`]; it sees the full transcript so far.
pub struct AdaptiveDavid<F>(pub F);

impl<F> Adversary for AdaptiveDavid<F>
where
    F: FnMut(u32, &Transcript, &PrimeField, &mut Vec<u64>),
{
    fn tamper(&mut self, layer: u32, transcript: &Transcript, field: &PrimeField, reply: &mut Vec<u64>) {
        (self.0)(layer, transcript, field, reply)
    }
}
