//! TLS-wrapped TCP transport.
//!
//! The server holds a certificate and key; clients trust exactly the
//! certificates they are given. [`Identity::self_signed`] covers local and
//! test deployments.

use std::io;
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::Arc;
use std::time::Duration;

use rustls::pki_types::{CertificateDer, PrivateKeyDer, PrivatePkcs8KeyDer, ServerName};
use rustls::{ClientConfig, ClientConnection, RootCertStore, ServerConfig, ServerConnection, StreamOwned};

use super::{StreamTransport, TimedStream, TransportMode, WireError};

pub type TlsClientStream = StreamOwned<ClientConnection, TcpStream>;
pub type TlsServerStream = StreamOwned<ServerConnection, TcpStream>;

impl TimedStream for TlsClientStream {
    fn set_read_timeout(&mut self, timeout: Option<Duration>) -> io::Result<()> {
        self.sock.set_read_timeout(timeout)
    }
}

impl TimedStream for TlsServerStream {
    fn set_read_timeout(&mut self, timeout: Option<Duration>) -> io::Result<()> {
        self.sock.set_read_timeout(timeout)
    }
}

fn tls_err(e: impl std::fmt::Display) -> WireError {
    WireError::Tls(e.to_string())
}

fn provider() -> Arc<rustls::crypto::CryptoProvider> {
    Arc::new(rustls::crypto::ring::default_provider())
}

/// A server certificate (DER) with its PKCS#8 private key.
#[derive(Clone)]
pub struct Identity {
    pub cert_der: Vec<u8>,
    pub key_der: Vec<u8>,
}

impl Identity {
    /// Fresh self-signed certificate valid for `names` (DNS names or IPs).
    pub fn self_signed(names: &[&str]) -> Result<Self, WireError> {
        let names: Vec<String> = names.iter().map(|s| s.to_string()).collect();
        let ck = rcgen::generate_simple_self_signed(names).map_err(tls_err)?;
        Ok(Self {
            cert_der: ck.cert.der().to_vec(),
            key_der: ck.key_pair.serialize_der(),
        })
    }

    pub fn server_config(&self) -> Result<Arc<ServerConfig>, WireError> {
        let cert = CertificateDer::from(self.cert_der.clone());
        let key = PrivateKeyDer::Pkcs8(PrivatePkcs8KeyDer::from(self.key_der.clone()));
        let cfg = ServerConfig::builder_with_provider(provider())
            .with_safe_default_protocol_versions()
            .map_err(tls_err)?
            .with_no_client_auth()
            .with_single_cert(vec![cert], key)
            .map_err(tls_err)?;
        Ok(Arc::new(cfg))
    }
}

/// Client configuration trusting only `trusted_der` certificates.
pub fn client_config(trusted_der: &[Vec<u8>]) -> Result<Arc<ClientConfig>, WireError> {
    let mut roots = RootCertStore::empty();
    for der in trusted_der {
        roots
            .add(CertificateDer::from(der.clone()))
            .map_err(tls_err)?;
    }
    let cfg = ClientConfig::builder_with_provider(provider())
        .with_safe_default_protocol_versions()
        .map_err(tls_err)?
        .with_root_certificates(roots)
        .with_no_client_auth();
    Ok(Arc::new(cfg))
}

fn handshake<C, D>(stream: &mut StreamOwned<C, TcpStream>) -> Result<(), WireError>
where
    C: std::ops::DerefMut<Target = rustls::ConnectionCommon<D>>,
    D: rustls::SideData,
{
    while stream.conn.is_handshaking() {
        stream.conn.complete_io(&mut stream.sock).map_err(tls_err)?;
    }
    Ok(())
}

pub type SecureClientTransport = StreamTransport<TlsClientStream>;
pub type SecureServerTransport = StreamTransport<TlsServerStream>;

impl StreamTransport<TlsClientStream> {
    /// Connects and completes the handshake, verifying the server as
    /// `server_name`.
    pub fn connect_tls(
        addr: impl ToSocketAddrs,
        server_name: &str,
        config: Arc<ClientConfig>,
    ) -> Result<Self, WireError> {
        let name = ServerName::try_from(server_name.to_string()).map_err(tls_err)?;
        let conn = ClientConnection::new(config, name).map_err(tls_err)?;
        let sock = TcpStream::connect(addr).map_err(WireError::Io)?;
        sock.set_nodelay(true).map_err(WireError::Io)?;
        let mut stream = StreamOwned::new(conn, sock);
        handshake(&mut stream)?;
        Ok(Self::new(stream, TransportMode::TcpSecure))
    }
}

impl StreamTransport<TlsServerStream> {
    /// Accepts one connection and completes the handshake.
    pub fn accept_tls(listener: &TcpListener, config: Arc<ServerConfig>) -> Result<Self, WireError> {
        let (sock, _) = listener.accept().map_err(WireError::Io)?;
        sock.set_nodelay(true).map_err(WireError::Io)?;
        let conn = ServerConnection::new(config).map_err(tls_err)?;
        let mut stream = StreamOwned::new(conn, sock);
        handshake(&mut stream)?;
        Ok(Self::new(stream, TransportMode::TcpSecure))
    }
}
