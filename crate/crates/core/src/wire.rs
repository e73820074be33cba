//! Length-prefixed binary framing of protocol messages.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "SLP1"
//! 4       1     tag
//! 5       4     layer index, u32 little-endian
//! 9       8     payload length in elements, u64 little-endian
//! 17      8n    payload, n x u64 little-endian
//! ```
//!
//! Tags: `0x01` LayerInput, `0x02` LayerReply, `0x03` FinalOutput,
//! `0x04` Abort, `0x10` SessionHello, `0x11` SessionAccept.

use alloc::vec::Vec;

use thiserror::Error;

use crate::protocol::{Message, Mode};

pub const MAGIC: [u8; 4] = *b"SLP1";
pub const HEADER_LEN: usize = 17;
pub const PROTOCOL_VERSION: u32 = 1;
/// Upper bound on payload elements accepted from the wire.
pub const MAX_PAYLOAD: u64 = 1 << 24;

pub const TAG_LAYER_INPUT: u8 = 0x01;
pub const TAG_LAYER_REPLY: u8 = 0x02;
pub const TAG_FINAL_OUTPUT: u8 = 0x03;
pub const TAG_ABORT: u8 = 0x04;
pub const TAG_HELLO: u8 = 0x10;
pub const TAG_ACCEPT: u8 = 0x11;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("bad frame magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unknown frame tag {0:#04x}")]
    UnknownTag(u8),
    #[error("truncated frame: need {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
    #[error("payload element {value} is not a residue modulo {modulus}")]
    Residue { value: u64, modulus: u64 },
    #[error("payload of {0} elements exceeds the frame limit")]
    TooLarge(u64),
    #[error("malformed {0} payload")]
    Malformed(&'static str),
}

/// Session parameters Charlie proposes when connecting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionHello {
    pub version: u32,
    pub mode: Mode,
    pub modulus: u64,
    pub frac_bits: u32,
    /// `d_1, ..., d_{L+1}`.
    pub dims: Vec<usize>,
    pub check_count: u32,
}

impl SessionHello {
    pub fn num_layers(&self) -> usize {
        self.dims.len().saturating_sub(1)
    }
}

/// Why David refused a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Refusal {
    Version = 1,
    Modulus = 2,
    FracBits = 3,
    Dims = 4,
    Mode = 5,
    Malformed = 6,
}

impl Refusal {
    pub fn code(self) -> u64 {
        self as u64
    }

    pub fn from_code(code: u64) -> Option<Self> {
        Some(match code {
            1 => Refusal::Version,
            2 => Refusal::Modulus,
            3 => Refusal::FracBits,
            4 => Refusal::Dims,
            5 => Refusal::Mode,
            6 => Refusal::Malformed,
            _ => return None,
        })
    }

    pub fn describe(self) -> &'static str {
        match self {
            Refusal::Version => "protocol version mismatch",
            Refusal::Modulus => "field modulus mismatch",
            Refusal::FracBits => "fraction bits mismatch",
            Refusal::Dims => "dimension chain mismatch",
            Refusal::Mode => "unsupported mode",
            Refusal::Malformed => "malformed hello",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Frame {
    Message(Message),
    Hello(SessionHello),
    /// `Ok(())` accepts; `Err` carries the refusal reason.
    Accept(Result<(), Refusal>),
}

impl From<Message> for Frame {
    fn from(m: Message) -> Self {
        Frame::Message(m)
    }
}

/// Parsed fixed-size header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub tag: u8,
    pub layer: u32,
    pub len: u64,
}

impl Header {
    pub fn payload_bytes(&self) -> usize {
        self.len as usize * 8
    }
}

pub fn encode_frame(frame: &Frame) -> Vec<u8> {
    let mut out = Vec::new();
    encode_frame_into(frame, &mut out);
    out
}

/// Appends the encoding of `frame` to `out`.
pub fn encode_frame_into(frame: &Frame, out: &mut Vec<u8>) {
    let (tag, layer, payload): (u8, u32, Vec<u64>) = match frame {
        Frame::Message(Message::LayerInput { layer, data }) => (TAG_LAYER_INPUT, *layer, data.clone()),
        Frame::Message(Message::LayerReply { layer, data }) => (TAG_LAYER_REPLY, *layer, data.clone()),
        Frame::Message(Message::FinalOutput { data }) => (TAG_FINAL_OUTPUT, 0, data.clone()),
        Frame::Message(Message::Abort { layer }) => (TAG_ABORT, *layer, Vec::new()),
        Frame::Hello(h) => {
            let mut p = Vec::with_capacity(6 + h.dims.len());
            p.push(h.version as u64);
            p.push(h.mode.to_byte() as u64);
            p.push(h.modulus);
            p.push(h.frac_bits as u64);
            p.push(h.num_layers() as u64);
            p.extend(h.dims.iter().map(|&d| d as u64));
            p.push(h.check_count as u64);
            (TAG_HELLO, 0, p)
        }
        Frame::Accept(Ok(())) => (TAG_ACCEPT, 0, alloc::vec![0, 0]),
        Frame::Accept(Err(r)) => (TAG_ACCEPT, 0, alloc::vec![1, r.code()]),
    };
    out.reserve(HEADER_LEN + 8 * payload.len());
    out.extend_from_slice(&MAGIC);
    out.push(tag);
    out.extend_from_slice(&layer.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    for e in payload {
        out.extend_from_slice(&e.to_le_bytes());
    }
}

pub fn parse_header(bytes: &[u8]) -> Result<Header, WireError> {
    if bytes.len() < HEADER_LEN {
        return Err(WireError::Truncated {
            needed: HEADER_LEN,
            have: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().expect("4 bytes");
    if magic != MAGIC {
        return Err(WireError::BadMagic(magic));
    }
    let tag = bytes[4];
    if !matches!(
        tag,
        TAG_LAYER_INPUT | TAG_LAYER_REPLY | TAG_FINAL_OUTPUT | TAG_ABORT | TAG_HELLO | TAG_ACCEPT
    ) {
        return Err(WireError::UnknownTag(tag));
    }
    let layer = u32::from_le_bytes(bytes[5..9].try_into().expect("4 bytes"));
    let len = u64::from_le_bytes(bytes[9..17].try_into().expect("8 bytes"));
    if len > MAX_PAYLOAD {
        return Err(WireError::TooLarge(len));
    }
    Ok(Header { tag, layer, len })
}

/// Decodes a payload for `header`. When `modulus` is given, every element of
/// a protocol message must be a residue modulo it.
pub fn decode_payload(header: Header, payload: &[u8], modulus: Option<u64>) -> Result<Frame, WireError> {
    if payload.len() < header.payload_bytes() {
        return Err(WireError::Truncated {
            needed: HEADER_LEN + header.payload_bytes(),
            have: HEADER_LEN + payload.len(),
        });
    }
    let data: Vec<u64> = payload[..header.payload_bytes()]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let check = |data: &[u64]| -> Result<(), WireError> {
        if let Some(p) = modulus {
            if let Some(&value) = data.iter().find(|&&e| e >= p) {
                return Err(WireError::Residue { value, modulus: p });
            }
        }
        Ok(())
    };
    let layer = header.layer;
    Ok(match header.tag {
        TAG_LAYER_INPUT => {
            check(&data)?;
            Frame::Message(Message::LayerInput { layer, data })
        }
        TAG_LAYER_REPLY => {
            check(&data)?;
            Frame::Message(Message::LayerReply { layer, data })
        }
        TAG_FINAL_OUTPUT => {
            check(&data)?;
            Frame::Message(Message::FinalOutput { data })
        }
        TAG_ABORT => {
            if !data.is_empty() {
                return Err(WireError::Malformed("Abort"));
            }
            Frame::Message(Message::Abort { layer })
        }
        TAG_HELLO => Frame::Hello(decode_hello(&data)?),
        TAG_ACCEPT => match data.as_slice() {
            [0, 0] => Frame::Accept(Ok(())),
            [1, code] => Frame::Accept(Err(Refusal::from_code(*code).ok_or(WireError::Malformed("SessionAccept"))?)),
            _ => return Err(WireError::Malformed("SessionAccept")),
        },
        other => return Err(WireError::UnknownTag(other)),
    })
}

fn decode_hello(data: &[u64]) -> Result<SessionHello, WireError> {
    const BAD: WireError = WireError::Malformed("SessionHello");
    if data.len() < 7 {
        return Err(BAD);
    }
    let layers = data[4] as usize;
    if layers == 0 || data.len() != 5 + layers + 1 + 1 {
        return Err(BAD);
    }
    let to_u32 = |v: u64| u32::try_from(v).map_err(|_| BAD);
    Ok(SessionHello {
        version: to_u32(data[0])?,
        mode: u8::try_from(data[1]).ok().and_then(Mode::from_byte).ok_or(BAD)?,
        modulus: data[2],
        frac_bits: to_u32(data[3])?,
        dims: data[5..5 + layers + 1].iter().map(|&d| d as usize).collect(),
        check_count: to_u32(data[5 + layers + 1])?,
    })
}

/// Decodes one frame from the front of `bytes`, returning it with the number
/// of bytes consumed.
pub fn decode_frame(bytes: &[u8], modulus: Option<u64>) -> Result<(Frame, usize), WireError> {
    let header = parse_header(bytes)?;
    let frame = decode_payload(header, &bytes[HEADER_LEN..], modulus)?;
    Ok((frame, HEADER_LEN + header.payload_bytes()))
}

/// Splits a concatenated stream of complete frames.
pub fn split_frames(mut bytes: &[u8], modulus: Option<u64>) -> Result<Vec<Frame>, WireError> {
    let mut frames = Vec::new();
    while !bytes.is_empty() {
        let (f, used) = decode_frame(bytes, modulus)?;
        frames.push(f);
        bytes = &bytes[used..];
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn abort_is_seventeen_bytes() {
        let b = encode_frame(&Message::Abort { layer: 3 }.into());
        assert_eq!(b.len(), 17);
        assert_eq!(&b[0..4], b"SLP1");
        assert_eq!(b[4], 0x04);
        assert_eq!(&b[5..9], &[3, 0, 0, 0]);
        assert_eq!(&b[9..17], &[0; 8]);
    }

    #[test]
    fn layer_reply_layout() {
        let b = encode_frame(&Message::LayerReply { layer: 2, data: vec![1, 2, 3] }.into());
        assert_eq!(b.len(), 17 + 24);
        assert_eq!(b[4], 0x02);
        assert_eq!(&b[5..9], &[2, 0, 0, 0]);
        assert_eq!(&b[9..17], &[3, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(&b[17..25], &[1, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(&b[25..33], &[2, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(&b[33..41], &[3, 0, 0, 0, 0, 0, 0, 0]);
        let (f, used) = decode_frame(&b, Some(101)).unwrap();
        assert_eq!(used, b.len());
        assert_eq!(f, Message::LayerReply { layer: 2, data: vec![1, 2, 3] }.into());
    }

    #[test]
    fn decode_errors() {
        let mut b = encode_frame(&Message::LayerInput { layer: 1, data: vec![5, 200] }.into());
        assert_eq!(
            decode_frame(&b, Some(101)),
            Err(WireError::Residue { value: 200, modulus: 101 })
        );
        assert!(decode_frame(&b, None).is_ok());
        assert!(matches!(decode_frame(&b[..20], None), Err(WireError::Truncated { .. })));
        assert!(matches!(decode_frame(&b[..10], None), Err(WireError::Truncated { .. })));
        b[4] = 0x7f;
        assert_eq!(decode_frame(&b, None), Err(WireError::UnknownTag(0x7f)));
        b[0] = b'X';
        assert!(matches!(decode_frame(&b, None), Err(WireError::BadMagic(_))));
    }

    #[test]
    fn hello_and_accept_round_trip() {
        let hello = SessionHello {
            version: PROTOCOL_VERSION,
            mode: Mode::Malicious,
            modulus: crate::MERSENNE_61,
            frac_bits: 16,
            dims: vec![4, 8, 2],
            check_count: 2,
        };
        for f in [
            Frame::Hello(hello),
            Frame::Accept(Ok(())),
            Frame::Accept(Err(Refusal::Dims)),
        ] {
            let b = encode_frame(&f);
            assert_eq!(decode_frame(&b, Some(101)).unwrap(), (f, b.len()));
        }
    }

    fn arb_message() -> impl Strategy<Value = Message> {
        let data = prop::collection::vec(0u64..crate::MERSENNE_61, 0..16);
        prop_oneof![
            (any::<u32>(), data.clone()).prop_map(|(layer, data)| Message::LayerInput { layer, data }),
            (any::<u32>(), data.clone()).prop_map(|(layer, data)| Message::LayerReply { layer, data }),
            data.prop_map(|data| Message::FinalOutput { data }),
            any::<u32>().prop_map(|layer| Message::Abort { layer }),
        ]
    }

    proptest! {
        #[test]
        fn concatenated_frames_resplit(msgs in prop::collection::vec(arb_message(), 0..8)) {
            let mut stream = Vec::new();
            for m in &msgs {
                encode_frame_into(&Frame::Message(m.clone()), &mut stream);
            }
            let frames = split_frames(&stream, Some(crate::MERSENNE_61)).unwrap();
            let back: Vec<Message> = frames
                .into_iter()
                .map(|f| match f { Frame::Message(m) => m, _ => unreachable!() })
                .collect();
            prop_assert_eq!(back, msgs);
        }
    }
}
