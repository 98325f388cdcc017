//! Client side: drives a local world with chunks from a remote policy.

use std::io::{self, BufReader, BufWriter};
use std::net::{SocketAddr, TcpStream, ToSocketAddrs};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::wire::{self, NavRequest, Observation, ServerMessage};
use crate::grammar::{parse_chunk, ActionUnits};
use crate::sim::episode::{drive_episode, reference_for, Decision, EpisodeResult};
use crate::sim::{SimError, World};

#[derive(Clone, Debug, PartialEq)]
pub struct ClientConfig {
    pub session_id: String,
    pub instruction: String,
    pub units: ActionUnits,
    /// Connect and per-read timeout.
    pub timeout: Duration,
}

/// One request/response exchange, as the raw frame bodies.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exchange {
    pub request: String,
    pub response: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClientRun {
    pub result: EpisodeResult,
    pub transcript: Vec<Exchange>,
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("connection lost: {source}")]
    ConnectionLost {
        source: io::Error,
        partial: Option<Box<ClientRun>>,
    },
    #[error("protocol error: {message}")]
    ProtocolError {
        message: String,
        partial: Option<Box<ClientRun>>,
    },
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl ClientError {
    /// The steps executed before the failure, if any.
    pub fn partial(&self) -> Option<&ClientRun> {
        match self {
            ClientError::ConnectionLost { partial, .. } | ClientError::ProtocolError { partial, .. } => {
                partial.as_deref()
            }
            ClientError::Sim(_) => None,
        }
    }
}

enum Failure {
    Io(io::Error),
    Protocol(String),
}

pub struct Connection {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

impl Connection {
    pub fn open<A: ToSocketAddrs>(addr: A, timeout: Duration) -> io::Result<Self> {
        let addrs: Vec<SocketAddr> = addr.to_socket_addrs()?.collect();
        let mut last = io::Error::new(io::ErrorKind::InvalidInput, "no address to connect to");
        for a in addrs {
            match TcpStream::connect_timeout(&a, timeout) {
                Ok(stream) => {
                    stream.set_nodelay(true)?;
                    stream.set_read_timeout(Some(timeout))?;
                    stream.set_write_timeout(Some(timeout))?;
                    return Ok(Self {
                        reader: BufReader::new(stream.try_clone()?),
                        writer: BufWriter::new(stream),
                    });
                }
                Err(e) => last = e,
            }
        }
        Err(last)
    }

    /// Sends one frame body and waits for the reply body.
    pub fn exchange(&mut self, body: &[u8]) -> io::Result<Vec<u8>> {
        wire::write_frame(&mut self.writer, body)?;
        wire::read_frame(&mut self.reader)?
            .ok_or_else(|| io::Error::new(io::ErrorKind::UnexpectedEof, "server closed the connection"))
    }
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Runs one episode in `world`, asking the server at `addr` for chunks.
pub fn client_run<A: ToSocketAddrs>(addr: A, world: &World, config: &ClientConfig) -> Result<ClientRun, ClientError> {
    let reference = reference_for(world, &config.units)?;
    let mut conn = Connection::open(addr, config.timeout).map_err(|source| ClientError::ConnectionLost {
        source,
        partial: None,
    })?;
    let mut transcript = Vec::new();
    let mut seq = 0u64;
    let outcome = drive_episode(world, &config.units, &reference, |pose, _| {
        seq += 1;
        let req = NavRequest {
            session_id: config.session_id.clone(),
            seq,
            instruction: if seq == 1 { config.instruction.clone() } else { String::new() },
            observation: Observation::from(pose),
            timestamp: now_ms(),
        };
        let body = wire::encode(&req);
        let reply = conn.exchange(&body).map_err(Failure::Io)?;
        transcript.push(Exchange {
            request: String::from_utf8_lossy(&body).into_owned(),
            response: String::from_utf8_lossy(&reply).into_owned(),
        });
        let resp = match wire::decode::<ServerMessage>(&reply) {
            Ok(ServerMessage::Response(r)) => r,
            Ok(ServerMessage::Error(e)) => {
                return Err(Failure::Protocol(format!("{}: {}", e.error.code, e.error.message)))
            }
            Err(e) => return Err(Failure::Protocol(format!("undecodable reply: {e}"))),
        };
        if resp.seq != seq || resp.session_id != config.session_id {
            return Err(Failure::Protocol(format!(
                "reply for {}#{} to request {}#{seq}",
                resp.session_id, resp.seq, config.session_id
            )));
        }
        if resp.chunks.is_empty()
            || resp.entropies.len() != resp.chunks.len()
            || !(1..=resp.chunks.len()).contains(&resp.t_star)
        {
            return Err(Failure::Protocol(format!(
                "inconsistent reply: {} chunks, {} entropies, t_star {}",
                resp.chunks.len(),
                resp.entropies.len(),
                resp.t_star
            )));
        }
        let chunks = resp
            .chunks
            .iter()
            .map(|t| parse_chunk(t, &config.units))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| Failure::Protocol(format!("bad chunk text: {e}")))?;
        Ok(Decision {
            chunks,
            entropies: resp.entropies,
            t_star: resp.t_star,
        })
    });
    match outcome {
        Ok(result) => Ok(ClientRun { result, transcript }),
        Err(aborted) => {
            let partial = Some(Box::new(ClientRun {
                result: aborted.partial,
                transcript,
            }));
            Err(match aborted.error {
                Failure::Io(source) => ClientError::ConnectionLost { source, partial },
                Failure::Protocol(message) => ClientError::ProtocolError { message, partial },
            })
        }
    }
}

/// Index of the first exchange whose reply differs, ignoring
/// `server_latency_ms`.
pub fn replay_transcript<A: ToSocketAddrs>(
    addr: A,
    transcript: &[Exchange],
    timeout: Duration,
) -> io::Result<Option<usize>> {
    let mut conn = Connection::open(addr, timeout)?;
    for (i, ex) in transcript.iter().enumerate() {
        let reply = conn.exchange(ex.request.as_bytes())?;
        if mask_latency(&reply) != mask_latency(ex.response.as_bytes()) {
            return Ok(Some(i));
        }
    }
    Ok(None)
}

/// Reply bytes with the latency value replaced by zero.
pub fn mask_latency(body: &[u8]) -> Vec<u8> {
    match serde_json::from_slice::<ServerMessage>(body) {
        Ok(ServerMessage::Response(mut r)) => {
            r.server_latency_ms = 0.0;
            wire::encode(&r)
        }
        _ => body.to_vec(),
    }
}
