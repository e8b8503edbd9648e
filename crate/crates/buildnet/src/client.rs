//! Reference client for the decision service.

use std::io::{self, ErrorKind};
use std::net::{SocketAddr, TcpStream, ToSocketAddrs};
use std::time::Duration;

use crate::protocol::*;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_millis(100);

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("cannot connect: {0}")]
    Connect(io::Error),
    #[error("no reply within {0:?}")]
    Timeout(Duration),
    #[error("connection failed: {0}")]
    Io(io::Error),
    #[error("malformed reply: {0}")]
    Malformed(String),
    #[error("server rejected request ({:?}): {}", .0.code, .0.message)]
    Rejected(ErrorResponse),
}

pub struct Client {
    stream: TcpStream,
    timeout: Duration,
}

fn is_timeout(e: &io::Error) -> bool {
    matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut)
}

impl Client {
    pub fn connect(addr: impl ToSocketAddrs, timeout: Duration) -> Result<Client, ClientError> {
        let addrs: Vec<SocketAddr> = addr.to_socket_addrs().map_err(ClientError::Connect)?.collect();
        let mut last = io::Error::new(ErrorKind::InvalidInput, "no address");
        for a in addrs {
            match TcpStream::connect_timeout(&a, timeout) {
                Ok(stream) => {
                    stream.set_nodelay(true).map_err(ClientError::Connect)?;
                    stream.set_read_timeout(Some(timeout)).map_err(ClientError::Connect)?;
                    stream.set_write_timeout(Some(timeout)).map_err(ClientError::Connect)?;
                    return Ok(Client { stream, timeout });
                }
                Err(e) => last = e,
            }
        }
        Err(if is_timeout(&last) { ClientError::Timeout(timeout) } else { ClientError::Connect(last) })
    }

    /// Sends an arbitrary payload and returns the parsed reply.
    pub fn exchange_raw(&mut self, payload: &[u8]) -> Result<Reply, ClientError> {
        let io_err = |e: io::Error, t| if is_timeout(&e) { ClientError::Timeout(t) } else { ClientError::Io(e) };
        write_frame(&mut self.stream, payload).map_err(|e| io_err(e, self.timeout))?;
        let bytes = match read_frame(&mut self.stream) {
            Ok(b) => b,
            Err(FrameError::Closed) => return Err(ClientError::Io(ErrorKind::UnexpectedEof.into())),
            Err(FrameError::TooLarge(n)) => return Err(ClientError::Malformed(format!("{n} byte reply"))),
            Err(FrameError::Io(e)) => return Err(io_err(e, self.timeout)),
        };
        serde_json::from_slice(&bytes).map_err(|e| ClientError::Malformed(e.to_string()))
    }

    pub fn exchange(&mut self, request: &PredictRequest) -> Result<Reply, ClientError> {
        self.exchange_raw(&serde_json::to_vec(request).expect("requests serialize"))
    }

    /// A prediction, with error replies surfaced as [`ClientError::Rejected`].
    pub fn predict(&mut self, request: &PredictRequest) -> Result<PredictResponse, ClientError> {
        match self.exchange(request)? {
            Reply::Prediction(p) => Ok(p),
            Reply::Error(e) => Err(ClientError::Rejected(e)),
        }
    }
}

/// One-shot connect, predict, disconnect.
pub fn client_predict(
    addr: impl ToSocketAddrs,
    request: &PredictRequest,
    timeout: Duration,
) -> Result<PredictResponse, ClientError> {
    Client::connect(addr, timeout)?.predict(request)
}
