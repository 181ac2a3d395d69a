//! Live network checks against a session server and message-level fault
//! injection for client transports.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::time::Duration;

use copresence_core::netdiag::{FaultError, FaultProfile, NetReport};
use copresence_core::protocol::Message;
use thiserror::Error;
use tokio::sync::mpsc;
use tokio::time::Instant;

use crate::transport;

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("cannot reach {addr}: {source}")]
    Connect { addr: SocketAddr, source: std::io::Error },
    #[error("probe needs at least 2 pings, got {0}")]
    TooFew(usize),
    #[error(transparent)]
    Fault(#[from] FaultError),
}

#[derive(Debug, Clone)]
pub struct ProbeOptions {
    pub pings: usize,
    pub interval: Duration,
    /// How long to wait for stragglers after the last ping.
    pub timeout: Duration,
    pub fault: Option<FaultProfile>,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self { pings: 20, interval: Duration::from_millis(20), timeout: Duration::from_secs(1), fault: None }
    }
}

/// Sends pings before joining (the server answers them without a session
/// slot) and matches pongs by nonce. Late and duplicate pongs are ignored.
pub async fn probe(addr: SocketAddr, opts: &ProbeOptions) -> Result<NetReport, ProbeError> {
    if opts.pings < 2 {
        return Err(ProbeError::TooFew(opts.pings));
    }
    let conn = transport::connect(addr).await.map_err(|source| ProbeError::Connect { addr, source })?;
    let mut incoming = conn.incoming;
    let out = match opts.fault {
        Some(p) => inject(conn.outgoing, p)?,
        None => conn.outgoing,
    };

    let mut sent: HashMap<u64, Instant> = HashMap::new();
    let mut rtts = Vec::with_capacity(opts.pings);
    let mut ticker = tokio::time::interval(opts.interval);
    let mut next = 0u64;
    let mut deadline: Option<Instant> = None;
    loop {
        let wait = async {
            match deadline {
                Some(d) => tokio::time::sleep_until(d).await,
                None => std::future::pending().await,
            }
        };
        tokio::select! {
            _ = ticker.tick(), if (next as usize) < opts.pings => {
                sent.insert(next, Instant::now());
                if out.send(Message::Ping { nonce: next }).await.is_err() {
                    break;
                }
                next += 1;
                if next as usize == opts.pings {
                    deadline = Some(Instant::now() + opts.timeout);
                }
            }
            m = incoming.recv() => match m {
                Some(Ok(Message::Pong { nonce })) => {
                    if let Some(t0) = sent.remove(&nonce) {
                        rtts.push(t0.elapsed().as_secs_f64() * 1e3);
                    }
                    if rtts.len() == opts.pings {
                        break;
                    }
                }
                Some(_) => {}
                None => break,
            },
            _ = wait => break,
        }
    }
    Ok(NetReport::from_rtts(opts.pings, &rtts))
}

/// Whether fault injection applies: only the streams that tolerate loss.
fn faultable(m: &Message) -> bool {
    matches!(m, Message::PoseUpdate(_) | Message::Ping { .. })
}

/// Wraps an outgoing message queue. Faultable messages are numbered in
/// order of submission and each one's drop, duplication and delay come
/// from [`FaultProfile::fate`]; other messages pass straight through.
pub fn inject(downstream: mpsc::Sender<Message>, profile: FaultProfile) -> Result<mpsc::Sender<Message>, FaultError> {
    profile.validate()?;
    let (tx, mut rx) = mpsc::channel::<Message>(1024);
    tokio::spawn(async move {
        let mut seq = 0u64;
        while let Some(m) = rx.recv().await {
            if !faultable(&m) {
                if downstream.send(m).await.is_err() {
                    return;
                }
                continue;
            }
            let fate = profile.fate(seq);
            seq += 1;
            let copies = fate.copies();
            if copies == 0 {
                continue;
            }
            if fate.delay_ms <= 0.0 {
                for _ in 0..copies {
                    if downstream.send(m.clone()).await.is_err() {
                        return;
                    }
                }
                continue;
            }
            let ds = downstream.clone();
            let at = Instant::now() + Duration::from_secs_f64(fate.delay_ms / 1e3);
            tokio::spawn(async move {
                tokio::time::sleep_until(at).await;
                for _ in 0..copies {
                    if ds.send(m.clone()).await.is_err() {
                        return;
                    }
                }
            });
        }
    });
    Ok(tx)
}
