//! Authoritative session server for shared-space sessions, with the
//! control API, network diagnostics and scripted bot clients.

pub mod bot;
pub mod control;
pub mod log;
pub mod netdiag;
pub mod replay;
pub mod server;
pub mod session;
pub mod transport;

pub use bot::{run_bot, run_ensemble, shipped_script, BotOptions, BotReport, BotScript};
pub use netdiag::{inject, probe, ProbeOptions};
pub use replay::{replay, ReplaySummary};
pub use server::{start, ServerHandle, ServerOptions, ServerSummary};
pub use session::{EventKind, Session, SessionEvent};
