//! Wire format of the decision service.
//!
//! Every message is a 4-byte big-endian payload length followed by that
//! many bytes of UTF-8 JSON. A client sends one [`PredictRequest`] per
//! message and receives exactly one [`Reply`], in order.
//!
//! ```text
//! {"protocol":1,"request_id":"r1","state":{"vector":[0.0, ...]}}
//! {"protocol":1,"request_id":"r2","state":{"macro":{"own_count":[...], ...}},
//!  "policy":{"mode":"probabilistic","blind":true,"exclude":["carrier"]}}
//! ```
//!
//! A prediction reply is `{"prediction":{...}}`; a rejected request gets
//! `{"error":{"request_id":...,"code":...,"message":...}}` and the
//! connection stays open.

use std::io::{self, Read, Write};

use buildnet_core::forward_model::MacroState;
use serde::{Deserialize, Serialize};

pub const PROTOCOL_VERSION: u32 = 1;

/// Messages above this size are refused; the stream cannot be resynchronized
/// afterwards, so the connection is closed.
pub const MAX_MESSAGE_BYTES: u32 = 1 << 20;

fn default_protocol() -> u32 {
    PROTOCOL_VERSION
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictRequest {
    #[serde(default = "default_protocol")]
    pub protocol: u32,
    pub request_id: String,
    pub state: RequestState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<PolicyOverride>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestState {
    /// An already encoded state vector.
    Vector(Vec<f64>),
    /// A forward-model state; the server encodes it.
    Macro(MacroState),
}

/// Fields replacing the server's default policy for one request.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PolicyOverride {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blind: Option<bool>,
    /// Build names; replaces the server's exclusion list when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exclude: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChosenBuild {
    pub name: String,
    pub index: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildProbability {
    pub build: String,
    pub p: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub request_id: String,
    pub chosen_build: ChosenBuild,
    /// Post-exclusion probabilities in output-class order.
    pub distribution: Vec<BuildProbability>,
    pub model_version: String,
    pub latency_micros: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    /// Payload is not UTF-8 JSON of the request schema.
    Malformed,
    UnsupportedProtocol,
    /// Well-formed request with an unusable state or policy.
    InvalidRequest,
    /// Message longer than [`MAX_MESSAGE_BYTES`].
    TooLarge,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorResponse {
    /// Empty when the request could not be parsed far enough to find it.
    pub request_id: String,
    pub code: ErrorCode,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reply {
    Prediction(PredictResponse),
    Error(ErrorResponse),
}

pub fn write_frame(w: &mut impl Write, payload: &[u8]) -> io::Result<()> {
    let len = u32::try_from(payload.len()).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "frame too large"))?;
    let mut buf = Vec::with_capacity(4 + payload.len());
    buf.extend_from_slice(&len.to_be_bytes());
    buf.extend_from_slice(payload);
    w.write_all(&buf)?;
    w.flush()
}

#[derive(Debug)]
pub enum FrameError {
    /// Clean end of stream before a new frame began.
    Closed,
    TooLarge(u32),
    Io(io::Error),
}

/// Reads one frame. A stream ending between frames is [`FrameError::Closed`];
/// ending inside one is an IO error.
pub fn read_frame(r: &mut impl Read) -> Result<Vec<u8>, FrameError> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut len[got..]) {
            Ok(0) if got == 0 => return Err(FrameError::Closed),
            Ok(0) => return Err(FrameError::Io(io::ErrorKind::UnexpectedEof.into())),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(FrameError::Io(e)),
        }
    }
    let len = u32::from_be_bytes(len);
    if len > MAX_MESSAGE_BYTES {
        return Err(FrameError::TooLarge(len));
    }
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload).map_err(FrameError::Io)?;
    Ok(payload)
}
