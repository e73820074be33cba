use alloc::vec::Vec;

use super::freivalds::freivalds_check;
use super::masks::MaskMaterial;
use super::message::{Direction, Message, Outcome, Transcript};
use super::{Mode, ProtocolError};
use crate::decompose::Decomposition;
use crate::matrix::{vec_add, vec_sub};

#[derive(Debug, Clone)]
enum Phase {
    Ready,
    AwaitingReply {
        layer: u32,
        /// `ã_{i-1}` exactly as sent.
        sent: Vec<u64>,
        /// `a_i^C = W_i^C · a_{i-1}`.
        local: Vec<u64>,
    },
    Finished,
}

/// The trusted party.
#[derive(Debug, Clone)]
pub struct CharlieState<'d> {
    decomp: &'d Decomposition,
    mode: Mode,
    masks: MaskMaterial,
    phase: Phase,
    /// `a_0 = encode(x), a_1, ...` as computed so far.
    activations: Vec<Vec<u64>>,
    transcript: Transcript,
}

impl<'d> CharlieState<'d> {
    /// Claims `masks` for this session and encodes `x`.
    ///
    /// The mask set is consumed even if validation below fails, so material
    /// that touched a session is never offered again.
    pub fn new(
        decomp: &'d Decomposition,
        mode: Mode,
        masks: &mut super::MaskSet,
        x: &[f64],
    ) -> Result<Self, ProtocolError> {
        let masks = masks.take()?;
        let dims = decomp.dims();
        if x.len() != dims[0] {
            return Err(ProtocolError::Dimension {
                layer: 1,
                expected: dims[0],
                got: x.len(),
            });
        }
        let input = x
            .iter()
            .map(|&v| decomp.codec().encode(v))
            .collect::<Result<Vec<_>, _>>()?;
        Self::with_material(decomp, mode, masks, input)
    }

    /// Starts from an already encoded input `a_0`.
    pub fn with_material(
        decomp: &'d Decomposition,
        mode: Mode,
        masks: MaskMaterial,
        input: Vec<u64>,
    ) -> Result<Self, ProtocolError> {
        validate(decomp, mode, &masks)?;
        let dims = decomp.dims();
        if input.len() != dims[0] {
            return Err(ProtocolError::Dimension {
                layer: 1,
                expected: dims[0],
                got: input.len(),
            });
        }
        let field = decomp.codec().field();
        for &e in &input {
            field.check(e)?;
        }
        Ok(Self {
            decomp,
            mode,
            masks,
            phase: Phase::Ready,
            activations: alloc::vec![input],
            transcript: Transcript::default(),
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn inference_id(&self) -> u64 {
        self.masks.inference_id
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn into_transcript(self) -> Transcript {
        self.transcript
    }

    pub fn activations(&self) -> &[Vec<u64>] {
        &self.activations
    }

    pub fn outcome(&self) -> Option<&Outcome> {
        self.transcript.outcome.as_ref()
    }

    pub fn is_finished(&self) -> bool {
        matches!(self.phase, Phase::Finished)
    }

    /// Advances the session by one message.
    ///
    /// Call with `None` to emit the first layer input, then with each reply.
    /// Every accepted reply yields exactly one outgoing message: the next
    /// layer's input, the final output, or an abort.
    pub fn step(&mut self, incoming: Option<Message>) -> Result<Option<Message>, ProtocolError> {
        match (&self.phase, incoming) {
            (Phase::Ready, None) => {
                let a0 = self.activations[0].clone();
                let out = self.send_layer(1, a0)?;
                Ok(Some(out))
            }
            (Phase::AwaitingReply { .. }, Some(Message::LayerReply { layer, data })) => {
                self.on_reply(layer, data).map(Some)
            }
            (phase, msg) => Err(ProtocolError::Phase {
                expected: match phase {
                    Phase::Ready => "starting a session",
                    Phase::AwaitingReply { .. } => "awaiting a LayerReply",
                    Phase::Finished => "the session is finished",
                },
                got: msg.as_ref().map_or("no", Message::kind),
            }),
        }
    }

    /// Masks `a_{i-1}` (except for layer 1), computes Charlie's partial
    /// product and emits the layer input.
    fn send_layer(&mut self, layer: u32, input: Vec<u64>) -> Result<Message, ProtocolError> {
        let idx = layer as usize - 1;
        let field = self.decomp.codec().field();
        let split = &self.decomp.layers()[idx];
        let local = split
            .charlie_field
            .matvec(field, &input)
            .expect("activation width matches layer input");
        let sent = match &self.masks.layers[idx].pad {
            Some(r) => vec_add(field, &input, r),
            None => input,
        };
        let msg = Message::LayerInput {
            layer,
            data: sent.clone(),
        };
        self.transcript.push(Direction::CharlieToDavid, &msg);
        self.phase = Phase::AwaitingReply { layer, sent, local };
        Ok(msg)
    }

    fn on_reply(&mut self, layer: u32, reply: Vec<u64>) -> Result<Message, ProtocolError> {
        let Phase::AwaitingReply {
            layer: expected, ..
        } = self.phase
        else {
            unreachable!("checked by step")
        };
        if layer != expected {
            return Err(ProtocolError::LayerOrder { expected, got: layer });
        }
        let idx = layer as usize - 1;
        let codec = *self.decomp.codec();
        let field = codec.field();
        let width = self.decomp.layers()[idx].charlie_field.rows();
        if reply.len() != width {
            return Err(ProtocolError::Dimension {
                layer,
                expected: width,
                got: reply.len(),
            });
        }
        for &e in &reply {
            field.check(e)?;
        }
        let Phase::AwaitingReply { sent, local, .. } = core::mem::replace(&mut self.phase, Phase::Finished) else {
            unreachable!()
        };
        self.transcript.entries.push((
            Direction::DavidToCharlie,
            Message::LayerReply {
                layer,
                data: reply.clone(),
            },
        ));

        let masks = &self.masks.layers[idx];
        if let Some(chk) = &masks.check {
            if !freivalds_check(field, &chk.z, &chk.v, &sent, &reply)? {
                let abort = Message::Abort { layer };
                self.transcript.push(Direction::CharlieToDavid, &abort);
                self.transcript.outcome = Some(Outcome::Abort);
                return Ok(abort);
            }
        }
        let david = match &masks.cancel {
            Some(c) => vec_sub(field, &reply, c),
            None => reply,
        };
        let act = self.decomp.activations()[idx];
        let a: Vec<u64> = local
            .iter()
            .zip(&david)
            .map(|(&c, &d)| act.apply_field(field, codec.rescale(field.add(c, d))))
            .collect();
        self.activations.push(a.clone());

        if idx + 1 < self.decomp.num_layers() {
            self.send_layer(layer + 1, a)
        } else {
            let msg = Message::FinalOutput { data: a.clone() };
            self.transcript.push(Direction::CharlieToDavid, &msg);
            self.transcript.outcome = Some(Outcome::Output(a));
            Ok(msg)
        }
    }
}

fn validate(d: &Decomposition, mode: Mode, masks: &MaskMaterial) -> Result<(), ProtocolError> {
    if masks.mode != mode {
        return Err(ProtocolError::MaskMismatch("mode differs"));
    }
    if masks.layers.len() != d.num_layers() {
        return Err(ProtocolError::MaskMismatch("layer count differs"));
    }
    for (i, (m, s)) in masks.layers.iter().zip(d.layers()).enumerate() {
        let (rows, cols) = (s.david_field.rows(), s.david_field.cols());
        let want_pad = mode.masks_inputs() && i > 0;
        match (&m.pad, &m.cancel) {
            (Some(r), Some(c)) if want_pad && r.len() == cols && c.len() == rows => {}
            (None, None) if !want_pad => {}
            _ => return Err(ProtocolError::MaskMismatch("pad or cancellation mask missing or misshapen")),
        }
        match &m.check {
            Some(chk)
                if mode == Mode::Malicious
                    && chk.z.cols() == rows
                    && chk.v.cols() == cols
                    && chk.z.rows() == chk.v.rows()
                    && chk.z.rows() > 0 => {}
            None if mode != Mode::Malicious => {}
            _ => return Err(ProtocolError::MaskMismatch("verification matrices missing or misshapen")),
        }
    }
    Ok(())
}
