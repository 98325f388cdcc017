//! Length-prefixed JSON over TCP between a robot-side client and a policy server.

pub mod client;
pub mod server;
pub mod wire;

pub use client::{client_run, replay_transcript, ClientConfig, ClientError, ClientRun, Exchange};
pub use server::{serve, PolicyFactory, ServerConfig, ServerHandle};
pub use wire::{ErrorResponse, NavRequest, NavResponse, Observation, ServerMessage};
