use alloc::vec::Vec;

/// Protocol messages between the parties.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    /// Charlie → David: the (possibly masked) input `ã_{i-1}` to layer `layer`.
    LayerInput { layer: u32, data: Vec<u64> },
    /// David → Charlie: `ã_i^D = W_i^D · ã_{i-1}`.
    LayerReply { layer: u32, data: Vec<u64> },
    /// Charlie → David: the field-encoded model output `a_L`.
    FinalOutput { data: Vec<u64> },
    /// Charlie → David: an integrity check failed at `layer`.
    Abort { layer: u32 },
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::LayerInput { .. } => "LayerInput",
            Message::LayerReply { .. } => "LayerReply",
            Message::FinalOutput { .. } => "FinalOutput",
            Message::Abort { .. } => "Abort",
        }
    }

    pub fn payload(&self) -> &[u64] {
        match self {
            Message::LayerInput { data, .. } | Message::LayerReply { data, .. } | Message::FinalOutput { data } => data,
            Message::Abort { .. } => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    CharlieToDavid,
    DavidToCharlie,
}

/// Session result: the field output `Π(x)` or `⊥`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Output(Vec<u64>),
    Abort,
}

impl Outcome {
    pub fn is_abort(&self) -> bool {
        matches!(self, Outcome::Abort)
    }

    pub fn output(&self) -> Option<&[u64]> {
        match self {
            Outcome::Output(v) => Some(v),
            Outcome::Abort => None,
        }
    }
}

/// Ordered record of every message one party sent or received.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Transcript {
    pub entries: Vec<(Direction, Message)>,
    pub outcome: Option<Outcome>,
}

impl Transcript {
    pub(crate) fn push(&mut self, dir: Direction, msg: &Message) {
        self.entries.push((dir, msg.clone()));
    }

    /// Every `LayerInput` David received, in order, as `(layer, data)`.
    pub fn layer_inputs(&self) -> impl Iterator<Item = (u32, &[u64])> {
        self.entries.iter().filter_map(|(_, m)| match m {
            Message::LayerInput { layer, data } => Some((*layer, data.as_slice())),
            _ => None,
        })
    }

    pub fn final_output(&self) -> Option<&[u64]> {
        self.entries.iter().find_map(|(_, m)| match m {
            Message::FinalOutput { data } => Some(data.as_slice()),
            _ => None,
        })
    }
}
