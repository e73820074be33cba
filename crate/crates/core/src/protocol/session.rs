//! Driving the two state machines over a message transport.

use alloc::collections::VecDeque;
use alloc::rc::Rc;
use alloc::string::ToString;
use core::cell::RefCell;

use super::charlie::CharlieState;
use super::david::{Adversary, DavidState};
use super::masks::MaskSet;
use super::message::{Message, Outcome, Transcript};
use super::{Mode, ProtocolError};
use crate::decompose::{DavidPart, Decomposition};

/// Ordered, exactly-once delivery of messages to the peer.
pub trait Transport {
    fn send(&mut self, msg: &Message) -> Result<(), ProtocolError>;
    fn recv(&mut self) -> Result<Message, ProtocolError>;
}

impl<T: Transport + ?Sized> Transport for &mut T {
    fn send(&mut self, msg: &Message) -> Result<(), ProtocolError> {
        (**self).send(msg)
    }

    fn recv(&mut self) -> Result<Message, ProtocolError> {
        (**self).recv()
    }
}

type Queue = Rc<RefCell<VecDeque<Message>>>;

/// One end of an in-process duplex channel.
#[derive(Debug)]
pub struct Endpoint {
    inbox: Queue,
    outbox: Queue,
}

/// A connected pair of in-process endpoints.
pub fn duplex() -> (Endpoint, Endpoint) {
    let a: Queue = Rc::default();
    let b: Queue = Rc::default();
    (
        Endpoint {
            inbox: a.clone(),
            outbox: b.clone(),
        },
        Endpoint { inbox: b, outbox: a },
    )
}

impl Transport for Endpoint {
    fn send(&mut self, msg: &Message) -> Result<(), ProtocolError> {
        self.outbox.borrow_mut().push_back(msg.clone());
        Ok(())
    }

    fn recv(&mut self) -> Result<Message, ProtocolError> {
        self.inbox
            .borrow_mut()
            .pop_front()
            .ok_or_else(|| ProtocolError::Transport("in-process channel is empty".to_string()))
    }
}

/// Runs Charlie to completion against a remote David.
pub fn drive_charlie<T: Transport>(charlie: &mut CharlieState<'_>, transport: &mut T) -> Result<Outcome, ProtocolError> {
    let mut out = charlie.step(None)?;
    while let Some(msg) = out.take() {
        transport.send(&msg)?;
        if charlie.is_finished() {
            break;
        }
        let reply = transport.recv()?;
        out = charlie.step(Some(reply))?;
    }
    Ok(charlie.outcome().cloned().expect("finished session has an outcome"))
}

/// Serves Charlie's messages until the session ends.
pub fn drive_david<T: Transport, A: Adversary>(
    david: &mut DavidState<'_, A>,
    transport: &mut T,
) -> Result<(), ProtocolError> {
    while !david.is_finished() {
        let msg = transport.recv()?;
        if let Some(reply) = david.step(msg)? {
            transport.send(&reply)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionResult {
    pub outcome: Outcome,
    pub charlie: Transcript,
    pub david: Transcript,
}

/// Runs both parties over an in-process duplex channel, in lock step.
pub fn run_protocol<A: Adversary>(
    mut charlie: CharlieState<'_>,
    mut david: DavidState<'_, A>,
) -> Result<SessionResult, ProtocolError> {
    let (mut c_end, mut d_end) = duplex();
    let mut out = charlie.step(None)?;
    while let Some(msg) = out.take() {
        c_end.send(&msg)?;
        let received = d_end.recv()?;
        if let Some(reply) = david.step(received)? {
            d_end.send(&reply)?;
            out = charlie.step(Some(c_end.recv()?))?;
        }
    }
    let outcome = charlie.outcome().cloned().expect("finished session has an outcome");
    Ok(SessionResult {
        outcome,
        charlie: charlie.into_transcript(),
        david: david.into_transcript(),
    })
}

/// Claims `masks`, then runs one in-process session on input `x`.
pub fn run_session<A: Adversary>(
    decomp: &Decomposition,
    david_part: &DavidPart,
    mode: Mode,
    x: &[f64],
    masks: &mut MaskSet,
    adversary: A,
) -> Result<SessionResult, ProtocolError> {
    let charlie = CharlieState::new(decomp, mode, masks, x)?;
    let david = DavidState::with_adversary(david_part, adversary)?;
    run_protocol(charlie, david)
}
