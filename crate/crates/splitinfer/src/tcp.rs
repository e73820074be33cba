//! Framed TCP transport: David as a worker service, Charlie as the client.

use std::io::{self, BufReader, BufWriter, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::Sender;
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use splitinfer_core::adversary::{CheatStrategy, CheatingDavid};
use splitinfer_core::decompose::{DavidPart, Decomposition};
use splitinfer_core::protocol::{
    drive_charlie, drive_david, CharlieState, DavidState, MaskSet, Message, Mode, Outcome, ProtocolError, Transcript,
    Transport,
};
use splitinfer_core::rng;
use splitinfer_core::wire::{
    decode_payload, encode_frame_into, parse_header, Frame, Refusal, SessionHello, WireError, HEADER_LEN,
    PROTOCOL_VERSION,
};
use thiserror::Error;

pub const DEFAULT_PORT: u16 = 7462;
pub const ADDR_ENV: &str = "SLIPWIRE_ADDR";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

/// `$SLIPWIRE_ADDR`, or the loopback default port.
pub fn default_addr() -> String {
    std::env::var(ADDR_ENV).unwrap_or_else(|_| format!("127.0.0.1:{DEFAULT_PORT}"))
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("connection error: {0}")]
    Io(#[from] io::Error),
    #[error("wire error: {0}")]
    Wire(#[from] WireError),
    #[error("session refused: {}", .0.describe())]
    Refused(Refusal),
    #[error("unexpected {0} frame")]
    Unexpected(&'static str),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

/// One framed connection.
#[derive(Debug)]
pub struct TcpTransport {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
    modulus: Option<u64>,
    buf: Vec<u8>,
}

impl TcpTransport {
    pub fn new(stream: TcpStream) -> io::Result<Self> {
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(DEFAULT_TIMEOUT))?;
        stream.set_write_timeout(Some(DEFAULT_TIMEOUT))?;
        Ok(Self {
            reader: BufReader::new(stream.try_clone()?),
            writer: BufWriter::new(stream),
            modulus: None,
            buf: Vec::new(),
        })
    }

    /// Enables residue validation of incoming protocol messages.
    pub fn set_modulus(&mut self, modulus: u64) {
        self.modulus = Some(modulus);
    }

    pub fn send_frame(&mut self, frame: &Frame) -> Result<(), SessionError> {
        self.buf.clear();
        encode_frame_into(frame, &mut self.buf);
        self.writer.write_all(&self.buf)?;
        self.writer.flush()?;
        Ok(())
    }

    pub fn recv_frame(&mut self) -> Result<Frame, SessionError> {
        let mut header = [0u8; HEADER_LEN];
        self.reader.read_exact(&mut header)?;
        let header = parse_header(&header)?;
        let mut payload = vec![0u8; header.payload_bytes()];
        self.reader.read_exact(&mut payload)?;
        Ok(decode_payload(header, &payload, self.modulus)?)
    }

    pub fn shutdown(&self) {
        let _ = self.writer.get_ref().shutdown(std::net::Shutdown::Both);
    }
}

fn frame_kind(f: &Frame) -> &'static str {
    match f {
        Frame::Message(m) => m.kind(),
        Frame::Hello(_) => "SessionHello",
        Frame::Accept(_) => "SessionAccept",
    }
}

impl Transport for TcpTransport {
    fn send(&mut self, msg: &Message) -> Result<(), ProtocolError> {
        self.send_frame(&Frame::Message(msg.clone()))
            .map_err(|e| ProtocolError::Transport(e.to_string()))
    }

    fn recv(&mut self) -> Result<Message, ProtocolError> {
        match self.recv_frame() {
            Ok(Frame::Message(m)) => Ok(m),
            Ok(other) => Err(ProtocolError::Transport(format!("unexpected {} frame", frame_kind(&other)))),
            Err(e) => Err(ProtocolError::Transport(e.to_string())),
        }
    }
}

/// The hello Charlie sends for `decomp`.
pub fn hello_for(decomp: &Decomposition, mode: Mode, check_count: usize) -> SessionHello {
    SessionHello {
        version: PROTOCOL_VERSION,
        mode,
        modulus: decomp.codec().field().modulus(),
        frac_bits: decomp.codec().frac_bits(),
        dims: decomp.dims(),
        check_count: if mode == Mode::Malicious { check_count as u32 } else { 0 },
    }
}

/// David's acceptance rule: every parameter must match the stored part.
pub fn check_hello(hello: &SessionHello, part: &DavidPart) -> Result<(), Refusal> {
    if hello.version != PROTOCOL_VERSION {
        return Err(Refusal::Version);
    }
    if hello.modulus != part.modulus {
        return Err(Refusal::Modulus);
    }
    if hello.frac_bits != part.frac_bits {
        return Err(Refusal::FracBits);
    }
    if hello.dims != part.dims {
        return Err(Refusal::Dims);
    }
    if hello.mode == Mode::Malicious && hello.check_count == 0 {
        return Err(Refusal::Mode);
    }
    Ok(())
}

/// Connects and completes the handshake.
pub fn connect_charlie<A: ToSocketAddrs>(addr: A, hello: &SessionHello) -> Result<TcpTransport, SessionError> {
    let mut t = TcpTransport::new(TcpStream::connect(addr)?)?;
    t.send_frame(&Frame::Hello(hello.clone()))?;
    match t.recv_frame()? {
        Frame::Accept(Ok(())) => {
            t.set_modulus(hello.modulus);
            Ok(t)
        }
        Frame::Accept(Err(reason)) => Err(SessionError::Refused(reason)),
        other => Err(SessionError::Unexpected(frame_kind(&other))),
    }
}

/// Runs one inference against a remote David.
///
/// The mask set is claimed before connecting, so a consumed set is rejected
/// before anything is sent, and a failed connection still consumes it.
pub fn run_remote<A: ToSocketAddrs>(
    addr: A,
    decomp: &Decomposition,
    mode: Mode,
    check_count: usize,
    x: &[f64],
    masks: &mut MaskSet,
) -> Result<(Outcome, Transcript), SessionError> {
    let mut charlie = CharlieState::new(decomp, mode, masks, x)?;
    let mut transport = connect_charlie(addr, &hello_for(decomp, mode, check_count))?;
    let outcome = drive_charlie(&mut charlie, &mut transport)?;
    transport.shutdown();
    Ok((outcome, charlie.into_transcript()))
}

/// What the server observed on one connection.
#[derive(Debug)]
pub struct SessionRecord {
    pub connection: u64,
    pub hello: Option<SessionHello>,
    pub result: Result<Transcript, String>,
}

/// David's listening service. Each connection carries one session and is
/// handled on its own thread; the residual weights are shared read-only.
#[derive(Debug)]
pub struct DavidServer {
    listener: TcpListener,
    part: Arc<DavidPart>,
    cheat: Option<CheatStrategy>,
    seed: u64,
    sink: Option<Sender<SessionRecord>>,
}

impl DavidServer {
    pub fn bind<A: ToSocketAddrs>(addr: A, part: DavidPart) -> io::Result<Self> {
        Ok(Self {
            listener: TcpListener::bind(addr)?,
            part: Arc::new(part),
            cheat: None,
            seed: 0,
            sink: None,
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Deviates on every session; connection `j` draws its randomness from
    /// the adversary substream `j` of `seed`.
    pub fn with_cheat(mut self, strategy: CheatStrategy, seed: u64) -> Self {
        self.cheat = Some(strategy);
        self.seed = seed;
        self
    }

    /// Reports every finished connection on `sink`.
    pub fn with_sink(mut self, sink: Sender<SessionRecord>) -> Self {
        self.sink = Some(sink);
        self
    }

    /// Accepts `limit` connections (or forever), then waits for their sessions.
    pub fn serve(self, limit: Option<u64>) -> io::Result<()> {
        let mut workers = Vec::new();
        let mut id = 0u64;
        while limit.is_none_or(|n| id < n) {
            let (stream, _) = self.listener.accept()?;
            let part = Arc::clone(&self.part);
            let cheat = self.cheat.clone();
            let (seed, sink) = (self.seed, self.sink.clone());
            let conn = id;
            workers.push(thread::spawn(move || {
                let record = handle_connection(stream, &part, cheat, seed, conn);
                if let Some(tx) = sink {
                    let _ = tx.send(record);
                }
            }));
            id += 1;
            if limit.is_none() {
                workers.retain(|w| !w.is_finished());
            }
        }
        for w in workers {
            let _ = w.join();
        }
        Ok(())
    }

    pub fn spawn(self, limit: Option<u64>) -> JoinHandle<io::Result<()>> {
        thread::spawn(move || self.serve(limit))
    }
}

fn handle_connection(
    stream: TcpStream,
    part: &DavidPart,
    cheat: Option<CheatStrategy>,
    seed: u64,
    connection: u64,
) -> SessionRecord {
    let mut hello = None;
    let result = (|| -> Result<Transcript, SessionError> {
        let mut t = TcpTransport::new(stream)?;
        let h = match t.recv_frame()? {
            Frame::Hello(h) => h,
            other => {
                t.send_frame(&Frame::Accept(Err(Refusal::Malformed)))?;
                return Err(SessionError::Unexpected(frame_kind(&other)));
            }
        };
        hello = Some(h.clone());
        if let Err(reason) = check_hello(&h, part) {
            t.send_frame(&Frame::Accept(Err(reason)))?;
            return Err(SessionError::Refused(reason));
        }
        t.send_frame(&Frame::Accept(Ok(())))?;
        t.set_modulus(part.modulus);
        let adversary = CheatingDavid::new(
            cheat.unwrap_or(CheatStrategy::HonestPlay),
            rng::substream(seed, rng::ADVERSARY, connection),
        );
        let mut david = DavidState::with_adversary(part, adversary)?;
        drive_david(&mut david, &mut t)?;
        Ok(david.into_transcript())
    })();
    SessionRecord {
        connection,
        hello,
        result: result.map_err(|e| e.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use splitinfer_core::codec::FixedPointCodec;
    use splitinfer_core::decompose::decompose;
    use splitinfer_core::field::PrimeField;
    use splitinfer_core::model::{gen_random_model, Activation};
    use splitinfer_core::protocol::precompute_one;
    use std::sync::mpsc;

    fn setup() -> Decomposition {
        let m = gen_random_model(1, &[3, 4, 2], Activation::Relu).unwrap();
        let codec = FixedPointCodec::auto_bound(PrimeField::mersenne61(), 16, 4).unwrap();
        decompose(&m, &[1, 1], codec).unwrap()
    }

    #[test]
    fn mismatched_hello_is_refused_with_reason() {
        let d = setup();
        let mut part = d.david_part();
        part.dims[1] = 5;
        let server = DavidServer::bind("127.0.0.1:0", part).unwrap();
        let addr = server.local_addr().unwrap();
        let (tx, rx) = mpsc::channel();
        let h = server.with_sink(tx).spawn(Some(1));
        let err = connect_charlie(addr, &hello_for(&d, Mode::Honest, 0)).unwrap_err();
        assert!(matches!(err, SessionError::Refused(Refusal::Dims)));
        assert!(rx.recv().unwrap().result.is_err());
        h.join().unwrap().unwrap();
    }

    #[test]
    fn disconnect_is_a_session_error_and_masks_stay_used() {
        let d = setup();
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let h = thread::spawn(move || {
            let (s, _) = listener.accept().unwrap();
            let mut t = TcpTransport::new(s).unwrap();
            assert!(matches!(t.recv_frame().unwrap(), Frame::Hello(_)));
            t.send_frame(&Frame::Accept(Ok(()))).unwrap();
            assert!(matches!(t.recv_frame().unwrap(), Frame::Message(Message::LayerInput { layer: 1, .. })));
            t.shutdown();
        });
        let mut masks = precompute_one(&d, Mode::Honest, 0, 5, 0).unwrap();
        let err = run_remote(addr, &d, Mode::Honest, 0, &[0.1, 0.2, 0.3], &mut masks).unwrap_err();
        assert!(matches!(err, SessionError::Protocol(ProtocolError::Transport(_))));
        assert!(masks.is_consumed());
        h.join().unwrap();
        let again = run_remote(addr, &d, Mode::Honest, 0, &[0.1, 0.2, 0.3], &mut masks).unwrap_err();
        assert!(matches!(again, SessionError::Protocol(ProtocolError::MaskReuse(0))));
    }

    #[test]
    fn default_address_uses_the_standard_port() {
        if std::env::var(ADDR_ENV).is_err() {
            assert_eq!(default_addr(), "127.0.0.1:7462");
        }
    }
}
