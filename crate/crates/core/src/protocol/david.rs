use alloc::vec::Vec;

use super::message::{Direction, Message, Outcome, Transcript};
use super::ProtocolError;
use crate::decompose::DavidPart;
use crate::field::PrimeField;

/// Hook through which a deviating David rewrites its replies.
///
/// `reply` arrives holding the honest product `W_i^D · ã_{i-1}`; the
/// transcript holds everything David has seen so far, including the current
/// layer input.
pub trait Adversary {
    fn tamper(&mut self, layer: u32, transcript: &Transcript, field: &PrimeField, reply: &mut Vec<u64>);
}

/// Follows the protocol.
#[derive(Debug, Clone, Copy, Default)]
pub struct Honest;

impl Adversary for Honest {
    fn tamper(&mut self, _: u32, _: &Transcript, _: &PrimeField, _: &mut Vec<u64>) {}
}

impl<A: Adversary + ?Sized> Adversary for &mut A {
    fn tamper(&mut self, layer: u32, transcript: &Transcript, field: &PrimeField, reply: &mut Vec<u64>) {
        (**self).tamper(layer, transcript, field, reply)
    }
}

/// The untrusted worker: multiplies whatever it receives by its residual weights.
#[derive(Debug)]
pub struct DavidState<'p, A = Honest> {
    part: &'p DavidPart,
    field: PrimeField,
    next_layer: u32,
    adversary: A,
    transcript: Transcript,
}

impl<'p> DavidState<'p, Honest> {
    pub fn new(part: &'p DavidPart) -> Result<Self, ProtocolError> {
        Self::with_adversary(part, Honest)
    }
}

impl<'p, A: Adversary> DavidState<'p, A> {
    pub fn with_adversary(part: &'p DavidPart, adversary: A) -> Result<Self, ProtocolError> {
        Ok(Self {
            part,
            field: PrimeField::new(part.modulus)?,
            next_layer: 1,
            adversary,
            transcript: Transcript::default(),
        })
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn into_transcript(self) -> Transcript {
        self.transcript
    }

    pub fn is_finished(&self) -> bool {
        self.transcript.outcome.is_some()
    }

    /// Handles one message from Charlie. Layer inputs produce a reply;
    /// `FinalOutput` and `Abort` end the session and produce nothing.
    pub fn step(&mut self, incoming: Message) -> Result<Option<Message>, ProtocolError> {
        if self.is_finished() {
            return Err(ProtocolError::Phase {
                expected: "the session is finished",
                got: incoming.kind(),
            });
        }
        let layers = self.part.num_layers() as u32;
        match incoming {
            Message::LayerInput { layer, data } => {
                if layer != self.next_layer || layer > layers {
                    return Err(ProtocolError::LayerOrder {
                        expected: self.next_layer,
                        got: layer,
                    });
                }
                let w = &self.part.weights[layer as usize - 1];
                if data.len() != w.cols() {
                    return Err(ProtocolError::Dimension {
                        layer,
                        expected: w.cols(),
                        got: data.len(),
                    });
                }
                for &e in &data {
                    self.field.check(e)?;
                }
                let mut reply = w.matvec(&self.field, &data).expect("width checked");
                self.transcript
                    .entries
                    .push((Direction::CharlieToDavid, Message::LayerInput { layer, data }));
                self.adversary.tamper(layer, &self.transcript, &self.field, &mut reply);
                let msg = Message::LayerReply { layer, data: reply };
                self.transcript.push(Direction::DavidToCharlie, &msg);
                self.next_layer += 1;
                Ok(Some(msg))
            }
            Message::FinalOutput { data } => {
                if self.next_layer != layers + 1 {
                    return Err(ProtocolError::Phase {
                        expected: "more layers to run",
                        got: "FinalOutput",
                    });
                }
                let width = *self.part.dims.last().expect("non-empty dims");
                if data.len() != width {
                    return Err(ProtocolError::Dimension {
                        layer: layers,
                        expected: width,
                        got: data.len(),
                    });
                }
                for &e in &data {
                    self.field.check(e)?;
                }
                self.transcript.outcome = Some(Outcome::Output(data.clone()));
                self.transcript
                    .entries
                    .push((Direction::CharlieToDavid, Message::FinalOutput { data }));
                Ok(None)
            }
            msg @ Message::Abort { .. } => {
                self.transcript.push(Direction::CharlieToDavid, &msg);
                self.transcript.outcome = Some(Outcome::Abort);
                Ok(None)
            }
            Message::LayerReply { .. } => Err(ProtocolError::Phase {
                expected: "awaiting a Charlie message",
                got: "LayerReply",
            }),
        }
    }
}
