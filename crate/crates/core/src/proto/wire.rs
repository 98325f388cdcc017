//! Framing and message types.
//!
//! Every message is a 4-byte big-endian length followed by that many bytes of
//! single-line JSON.

use std::io::{self, Read, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::sim::Pose;

/// Largest accepted frame body in bytes.
pub const MAX_FRAME_LEN: u32 = 1 << 20;

pub mod codes {
    pub const MALFORMED: &str = "malformed";
    pub const OUT_OF_ORDER: &str = "out_of_order";
    pub const POLICY_FAILURE: &str = "policy_failure";
    pub const SESSION_REJECTED: &str = "session_rejected";
}

pub fn write_frame<W: Write + ?Sized>(w: &mut W, body: &[u8]) -> io::Result<()> {
    let len = u32::try_from(body.len())
        .ok()
        .filter(|&n| n <= MAX_FRAME_LEN)
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "frame too large"))?;
    w.write_all(&len.to_be_bytes())?;
    w.write_all(body)?;
    w.flush()
}

/// Reads one frame; `Ok(None)` on a clean end of stream before the prefix.
pub fn read_frame<R: Read + ?Sized>(r: &mut R) -> io::Result<Option<Vec<u8>>> {
    let mut prefix = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut prefix[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(io::ErrorKind::UnexpectedEof.into()),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    let len = u32::from_be_bytes(prefix);
    if len > MAX_FRAME_LEN {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("frame of {len} bytes exceeds limit"),
        ));
    }
    let mut body = vec![0u8; len as usize];
    r.read_exact(&mut body)?;
    Ok(Some(body))
}

pub fn encode<T: Serialize>(msg: &T) -> Vec<u8> {
    serde_json::to_vec(msg).expect("message types always serialize")
}

pub fn send<W: Write + ?Sized, T: Serialize>(w: &mut W, msg: &T) -> io::Result<Vec<u8>> {
    let body = encode(msg);
    write_frame(w, &body)?;
    Ok(body)
}

pub fn decode<T: DeserializeOwned>(body: &[u8]) -> Result<T, serde_json::Error> {
    serde_json::from_slice(body)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Observation {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
}

impl From<&Pose> for Observation {
    fn from(p: &Pose) -> Self {
        Self {
            x: p.x,
            y: p.y,
            heading: p.heading,
            image_ref: None,
        }
    }
}

impl Observation {
    pub fn pose(&self) -> Pose {
        Pose::new(self.x, self.y, self.heading)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NavRequest {
    pub session_id: String,
    pub seq: u64,
    /// May be empty after the first request of a session.
    #[serde(default)]
    pub instruction: String,
    pub observation: Observation,
    /// Client clock in milliseconds.
    #[serde(default)]
    pub timestamp: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NavResponse {
    pub session_id: String,
    pub seq: u64,
    pub chunks: Vec<String>,
    pub entropies: Vec<f64>,
    pub t_star: usize,
    pub server_latency_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorResponse {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq: Option<u64>,
    pub error: ErrorBody,
}

/// Anything the server may send.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ServerMessage {
    Response(NavResponse),
    Error(ErrorResponse),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_round_trip() {
        let mut buf = Vec::new();
        write_frame(&mut buf, b"{\"a\":1}").unwrap();
        write_frame(&mut buf, b"").unwrap();
        assert_eq!(&buf[..4], &[0, 0, 0, 7]);
        let mut r = &buf[..];
        assert_eq!(read_frame(&mut r).unwrap().unwrap(), b"{\"a\":1}");
        assert_eq!(read_frame(&mut r).unwrap().unwrap(), b"");
        assert_eq!(read_frame(&mut r).unwrap(), None);
    }

    #[test]
    fn truncated_and_oversized_frames() {
        let mut r: &[u8] = &[0, 0];
        assert_eq!(read_frame(&mut r).unwrap_err().kind(), io::ErrorKind::UnexpectedEof);
        let mut r: &[u8] = &[0, 0, 0, 5, b'x'];
        assert_eq!(read_frame(&mut r).unwrap_err().kind(), io::ErrorKind::UnexpectedEof);
        let big = (MAX_FRAME_LEN + 1).to_be_bytes();
        let mut r: &[u8] = &big;
        assert_eq!(read_frame(&mut r).unwrap_err().kind(), io::ErrorKind::InvalidData);
    }

    #[test]
    fn field_names_are_fixed() {
        let req = NavRequest {
            session_id: "s".into(),
            seq: 1,
            instruction: "go".into(),
            observation: Observation::from(&Pose::new(1.0, 2.0, 90.0)),
            timestamp: 5,
        };
        assert_eq!(
            String::from_utf8(encode(&req)).unwrap(),
            r#"{"session_id":"s","seq":1,"instruction":"go","observation":{"x":1.0,"y":2.0,"heading":90.0},"timestamp":5}"#
        );
        let err: ServerMessage =
            decode(br#"{"seq":3,"error":{"code":"out_of_order","message":"m"}}"#).unwrap();
        assert!(matches!(err, ServerMessage::Error(ErrorResponse { seq: Some(3), .. })));
        let ok: ServerMessage = decode(
            br#"{"session_id":"s","seq":1,"chunks":["stop"],"entropies":[0.0],"t_star":1,"server_latency_ms":0.1}"#,
        )
        .unwrap();
        assert!(matches!(ok, ServerMessage::Response(_)));
        assert!(decode::<NavRequest>(br#"{"session_id":"s","seq":1,"observation":{"x":0,"y":0,"heading":0},"extra":1}"#).is_err());
    }
}
