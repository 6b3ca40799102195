use std::fmt;
use std::io::{self, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::time::{Duration, Instant};

use super::{decode_frame, encode, Message, WireError, DEFAULT_MAX_FRAME};

pub const DEFAULT_PORT: u16 = 7787;
pub const ADDR_ENV: &str = "FEDKIT_ADDR";

/// `FEDKIT_ADDR` if set, else `127.0.0.1:7787`.
pub fn default_addr() -> String {
    std::env::var(ADDR_ENV).unwrap_or_else(|_| format!("127.0.0.1:{DEFAULT_PORT}"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransportMode {
    InProcess,
    TcpPlain,
    TcpSecure,
}

impl fmt::Display for TransportMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransportMode::InProcess => "in_process",
            TransportMode::TcpPlain => "tcp_plain",
            TransportMode::TcpSecure => "tcp_secure",
        })
    }
}

/// Reliable, ordered, message-boundary-preserving link to one peer.
pub trait Transport: Send {
    fn send(&mut self, msg: &Message) -> Result<(), WireError>;

    /// Blocks until a full message arrives, or `timeout` elapses
    /// (`None` waits forever).
    fn recv(&mut self, timeout: Option<Duration>) -> Result<Message, WireError>;

    fn mode(&self) -> TransportMode;
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn send(&mut self, msg: &Message) -> Result<(), WireError> {
        (**self).send(msg)
    }
    fn recv(&mut self, timeout: Option<Duration>) -> Result<Message, WireError> {
        (**self).recv(timeout)
    }
    fn mode(&self) -> TransportMode {
        (**self).mode()
    }
}

/// In-process endpoint; frames travel as encoded bytes over a channel.
pub struct ChannelTransport {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
    max_frame: usize,
}

/// Two connected in-process endpoints.
pub fn in_process_pair() -> (ChannelTransport, ChannelTransport) {
    let (a_tx, b_rx) = mpsc::channel();
    let (b_tx, a_rx) = mpsc::channel();
    let mk = |tx, rx| ChannelTransport {
        tx,
        rx,
        max_frame: DEFAULT_MAX_FRAME,
    };
    (mk(a_tx, a_rx), mk(b_tx, b_rx))
}

impl Transport for ChannelTransport {
    fn send(&mut self, msg: &Message) -> Result<(), WireError> {
        self.tx
            .send(encode(msg))
            .map_err(|_| WireError::ConnectionLost("in-process peer dropped".into()))
    }

    fn recv(&mut self, timeout: Option<Duration>) -> Result<Message, WireError> {
        let start = Instant::now();
        let frame = match timeout {
            Some(t) => self.rx.recv_timeout(t).map_err(|e| match e {
                RecvTimeoutError::Timeout => WireError::Timeout(start.elapsed()),
                RecvTimeoutError::Disconnected => {
                    WireError::ConnectionLost("in-process peer dropped".into())
                }
            })?,
            None => self
                .rx
                .recv()
                .map_err(|_| WireError::ConnectionLost("in-process peer dropped".into()))?,
        };
        let (msg, used) = decode_frame(&frame, self.max_frame)?;
        if used != frame.len() {
            return Err(WireError::Protocol("extra bytes in channel frame".into()));
        }
        Ok(msg)
    }

    fn mode(&self) -> TransportMode {
        TransportMode::InProcess
    }
}

/// A byte stream whose blocking reads can be bounded.
pub trait TimedStream: Read + Write + Send {
    fn set_read_timeout(&mut self, timeout: Option<Duration>) -> io::Result<()>;
}

impl TimedStream for TcpStream {
    fn set_read_timeout(&mut self, timeout: Option<Duration>) -> io::Result<()> {
        TcpStream::set_read_timeout(self, timeout)
    }
}

/// Framed messages over any [`TimedStream`].
pub struct StreamTransport<S> {
    stream: S,
    buf: Vec<u8>,
    mode: TransportMode,
    max_frame: usize,
}

impl<S: TimedStream> StreamTransport<S> {
    pub fn new(stream: S, mode: TransportMode) -> Self {
        Self {
            stream,
            buf: Vec::new(),
            mode,
            max_frame: DEFAULT_MAX_FRAME,
        }
    }

    pub fn with_max_frame(mut self, max_frame: usize) -> Self {
        self.max_frame = max_frame;
        self
    }

    pub fn get_ref(&self) -> &S {
        &self.stream
    }
}

fn lost(e: io::Error) -> WireError {
    WireError::ConnectionLost(e.to_string())
}

impl<S: TimedStream> Transport for StreamTransport<S> {
    fn send(&mut self, msg: &Message) -> Result<(), WireError> {
        let frame = encode(msg);
        self.stream.write_all(&frame).map_err(lost)?;
        self.stream.flush().map_err(lost)
    }

    fn recv(&mut self, timeout: Option<Duration>) -> Result<Message, WireError> {
        let start = Instant::now();
        let mut chunk = [0u8; 64 * 1024];
        loop {
            if !self.buf.is_empty() {
                match decode_frame(&self.buf, self.max_frame) {
                    Ok((msg, used)) => {
                        self.buf.drain(..used);
                        return Ok(msg);
                    }
                    Err(WireError::Incomplete { .. }) => {}
                    Err(e) => return Err(e),
                }
            }
            let remaining = match timeout {
                Some(t) => match t.checked_sub(start.elapsed()) {
                    Some(r) if r >= Duration::from_millis(1) => Some(r),
                    _ => return Err(WireError::Timeout(start.elapsed())),
                },
                None => None,
            };
            self.stream.set_read_timeout(remaining).map_err(lost)?;
            match self.stream.read(&mut chunk) {
                Ok(0) => return Err(WireError::ConnectionLost("peer closed the connection".into())),
                Ok(n) => self.buf.extend_from_slice(&chunk[..n]),
                Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {
                    return Err(WireError::Timeout(start.elapsed()))
                }
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(lost(e)),
            }
        }
    }

    fn mode(&self) -> TransportMode {
        self.mode
    }
}

pub type TcpTransport = StreamTransport<TcpStream>;

impl StreamTransport<TcpStream> {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self, WireError> {
        let stream = TcpStream::connect(addr).map_err(WireError::Io)?;
        stream.set_nodelay(true).map_err(WireError::Io)?;
        Ok(Self::new(stream, TransportMode::TcpPlain))
    }

    /// Accepts one plain connection.
    pub fn accept(listener: &TcpListener) -> Result<Self, WireError> {
        let (stream, _) = listener.accept().map_err(WireError::Io)?;
        stream.set_nodelay(true).map_err(WireError::Io)?;
        Ok(Self::new(stream, TransportMode::TcpPlain))
    }
}
