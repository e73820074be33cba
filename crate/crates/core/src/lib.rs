//! Split inference of an MLP between a trusted party (Charlie) holding a
//! low-rank slice of every weight matrix and an untrusted party (David)
//! holding the dense residual.
//!
//! All protocol arithmetic happens in a prime field `Z_p`. Charlie masks each
//! hidden activation with a fresh one-time pad before sending it, removes the
//! pad's image from David's reply with a precomputed cancellation mask, and in
//! malicious mode verifies every reply with a batched Freivalds check.
//!
//! The crate is `no_std` (with `alloc`). File formats, TCP transport,
//! statistics and the command line live in the `splitinfer` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod adversary;
pub mod codec;
pub mod decompose;
pub mod field;
pub mod matrix;
pub mod model;
pub mod protocol;
pub mod rng;
pub mod svd;
pub mod wire;

pub use codec::{CodecError, FixedPointCodec};
pub use decompose::{decompose, DavidPart, Decomposition};
pub use field::{PrimeField, MERSENNE_61};
pub use matrix::{FieldMatrix, RealMatrix};
pub use model::{Activation, MlpModel, QuantizedModel};
