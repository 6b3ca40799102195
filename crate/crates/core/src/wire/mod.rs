//! Wire protocol: message schema, canonical binary framing and transports.

mod codec;
mod message;
mod tls;
mod transport;

use std::time::Duration;

pub use codec::{
    decode, decode_frame, decode_weights, encode, encode_weights, CHECKSUM_LEN, DEFAULT_MAX_FRAME,
    HEADER_LEN, MAGIC, PROTOCOL_VERSION,
};
pub use message::{ClientMetrics, Message, SessionConfig};
pub use tls::{
    client_config, Identity, SecureClientTransport, SecureServerTransport, TlsClientStream,
    TlsServerStream,
};
pub use transport::{
    default_addr, in_process_pair, ChannelTransport, StreamTransport, TcpTransport, TimedStream,
    Transport, TransportMode, ADDR_ENV, DEFAULT_PORT,
};

#[derive(Debug, thiserror::Error)]
pub enum WireError {
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("checksum mismatch: frame says {expected:#010x}, computed {actual:#010x}")]
    Corruption { expected: u32, actual: u32 },
    #[error("incomplete frame: {available} of {needed} bytes")]
    Incomplete { needed: usize, available: usize },
    #[error("timed out after {0:?}")]
    Timeout(Duration),
    #[error("connection lost: {0}")]
    ConnectionLost(String),
    #[error("tls: {0}")]
    Tls(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
