//! Party state machines for the three inference protocols.
//!
//! * [`Mode::Insecure`]: Charlie sends every activation in the clear.
//! * [`Mode::Honest`]: activations after layer 1 are one-time-padded; Charlie
//!   strips the pad's image `c_i = W_i^D r_{i-1}` from David's reply.
//! * [`Mode::Malicious`]: as `Honest`, plus a batched Freivalds check of every
//!   reply before it is unmasked; a failed check aborts the session.
//!
//! Layer indices are 1-based throughout, matching `W_1 .. W_L`.

use alloc::string::String;

use thiserror::Error;

use crate::codec::CodecError;
use crate::field::FieldError;

mod charlie;
mod david;
mod freivalds;
mod masks;
mod message;
mod session;

pub use charlie::CharlieState;
pub use david::{Adversary, DavidState, Honest};
pub use freivalds::freivalds_check;
pub use masks::{precompute, precompute_one, CheckMatrices, LayerMasks, MaskMaterial, MaskSet};
pub use message::{Direction, Message, Outcome, Transcript};
pub use session::{drive_charlie, drive_david, duplex, run_protocol, run_session, Endpoint, SessionResult, Transport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Insecure,
    Honest,
    Malicious,
}

impl Mode {
    pub fn tag(self) -> &'static str {
        match self {
            Mode::Insecure => "insecure",
            Mode::Honest => "honest",
            Mode::Malicious => "malicious",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "insecure" => Some(Mode::Insecure),
            "honest" => Some(Mode::Honest),
            "malicious" => Some(Mode::Malicious),
            _ => None,
        }
    }

    pub fn to_byte(self) -> u8 {
        match self {
            Mode::Insecure => 0,
            Mode::Honest => 1,
            Mode::Malicious => 2,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Mode::Insecure),
            1 => Some(Mode::Honest),
            2 => Some(Mode::Malicious),
            _ => None,
        }
    }

    /// Whether layer inputs after the first are padded.
    pub fn masks_inputs(self) -> bool {
        !matches!(self, Mode::Insecure)
    }
}

/// Session failures. An integrity rejection is not an error: it is
/// [`Outcome::Abort`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("unexpected {got} message while {expected}")]
    Phase { expected: &'static str, got: &'static str },
    #[error("layer {layer}: expected {expected} elements, got {got}")]
    Dimension { layer: u32, expected: usize, got: usize },
    #[error("expected layer {expected}, got layer {got}")]
    LayerOrder { expected: u32, got: u32 },
    #[error("mask set {0} was already used")]
    MaskReuse(u64),
    #[error("mask set does not fit this session: {0}")]
    MaskMismatch(&'static str),
    #[error("malicious mode needs check_count >= 1")]
    CheckCount,
    #[error("at least one inference must be precomputed")]
    NoInferences,
    #[error("Freivalds matrices have incompatible shapes")]
    CheckShape,
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("transport failure: {0}")]
    Transport(String),
}
