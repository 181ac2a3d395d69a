//! Re-drives a recorded session and checks that it regenerates the same
//! record, frame digests included.

use std::sync::Arc;

use copresence_core::protocol::{JoinRequest, Message, PROTOCOL_VERSION};
use copresence_core::states::ParamRegistry;
use serde::Serialize;
use thiserror::Error;

use crate::session::{EventKind, Session, SessionError, SessionEvent};

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("log does not start with session_started")]
    NoStart,
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("divergence at event {seq}: recorded {recorded}, replayed {replayed}")]
    Diverged { seq: u64, recorded: String, replayed: String },
    #[error("replay produced {replayed} events, log has {recorded}")]
    Length { recorded: usize, replayed: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplaySummary {
    pub events: usize,
    pub ticks: u64,
    pub final_digest: Option<String>,
}

pub fn replay(log: &[SessionEvent], registry: Arc<ParamRegistry>) -> Result<ReplaySummary, ReplayError> {
    let Some(EventKind::SessionStarted { config }) = log.first().map(|e| &e.kind) else {
        return Err(ReplayError::NoStart);
    };
    let mut s = Session::new((**config).clone(), registry)?;
    let mut out = s.drain_events();
    for ev in &log[1..] {
        match &ev.kind {
            EventKind::Joined { role, node_label, .. } => {
                let _ = s.join(JoinRequest { version: PROTOCOL_VERSION, role: *role, node_label: node_label.clone() });
            }
            EventKind::JoinRejected { request, .. } => {
                let _ = s.join(request.clone());
            }
            EventKind::Left { id, reason } => {
                s.leave(*id, reason);
            }
            EventKind::Input { from: Some(id), message } => {
                // an explicit leave is recorded as its own event
                if *message != Message::Leave {
                    s.ingest(*id, message.clone());
                }
            }
            EventKind::Input { from: None, message: Message::FacilitatorCommand { command } } => {
                let _ = s.console_command(command.clone());
            }
            EventKind::Frame { .. } => {
                s.tick();
            }
            _ => {}
        }
        out.extend(s.drain_events());
    }
    for (rec, rep) in log.iter().zip(&out) {
        if rec != rep {
            return Err(ReplayError::Diverged {
                seq: rec.seq,
                recorded: serde_json::to_string(rec).unwrap_or_default(),
                replayed: serde_json::to_string(rep).unwrap_or_default(),
            });
        }
    }
    if out.len() != log.len() {
        return Err(ReplayError::Length { recorded: log.len(), replayed: out.len() });
    }
    let final_digest = log.iter().rev().find_map(|e| match &e.kind {
        EventKind::Frame { digest, .. } => Some(digest.clone()),
        _ => None,
    });
    Ok(ReplaySummary { events: log.len(), ticks: s.tick_count(), final_digest })
}
