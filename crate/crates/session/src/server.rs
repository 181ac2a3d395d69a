//! TCP session server. A single task owns the [`Session`]; connection tasks
//! and the control API reach it through one ordered queue.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use copresence_core::config::SessionConfig;
use copresence_core::protocol::{encode, DecodeError, FacilitatorCommand, FrameBuffer, Message};
use copresence_core::states::ParamRegistry;
use serde::Serialize;
use thiserror::Error;
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{broadcast, mpsc, oneshot};
use tokio::task::JoinHandle;
use tokio::time::MissedTickBehavior;

use crate::control;
use crate::log::{EventSink, LogError};
use crate::session::{error_reply, Session, SessionError};
use crate::transport::READ_CHUNK;

#[derive(Debug, Error)]
pub enum ServerError {
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error("session task ended unexpectedly")]
    Gone,
}

#[derive(Debug, Clone)]
pub struct ServerOptions {
    pub config: SessionConfig,
    pub registry: Arc<ParamRegistry>,
    pub bind: SocketAddr,
    /// Control API (HTTP and WebSocket) address; `None` disables it.
    pub control_bind: Option<SocketAddr>,
    pub log_path: Option<PathBuf>,
    /// Bearer token for `POST /command`; generated when absent.
    pub token: Option<String>,
    /// Frames a client may fall behind before it is disconnected.
    pub outbound_capacity: usize,
    /// Stop this many ticks after the script finishes.
    pub stop_after_finish: Option<u64>,
}

impl ServerOptions {
    pub fn new(config: SessionConfig) -> Self {
        Self {
            config,
            registry: Arc::new(ParamRegistry::canonical()),
            bind: SocketAddr::from(([127, 0, 0, 1], 0)),
            control_bind: None,
            log_path: None,
            token: None,
            outbound_capacity: 256,
            stop_after_finish: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ServerSummary {
    pub ticks: u64,
    pub events: u64,
    pub log_error: Option<String>,
    pub last_digest: Option<String>,
    pub finished: bool,
}

pub(crate) type Outbound = Arc<Vec<u8>>;

pub(crate) enum Input {
    Connected { conn: u64, out: mpsc::Sender<Outbound> },
    Message { conn: u64, message: Message },
    Closed { conn: u64, reason: String },
    Console { command: FacilitatorCommand, reply: oneshot::Sender<Result<(), String>> },
    Summary { reply: oneshot::Sender<serde_json::Value> },
}

pub struct ServerHandle {
    pub addr: SocketAddr,
    pub control_addr: Option<SocketAddr>,
    pub token: String,
    inputs: mpsc::Sender<Input>,
    events: broadcast::Sender<Arc<str>>,
    shutdown: Option<oneshot::Sender<()>>,
    task: JoinHandle<ServerSummary>,
    background: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    /// Session events as JSON lines, from now on.
    pub fn subscribe(&self) -> broadcast::Receiver<Arc<str>> {
        self.events.subscribe()
    }

    pub async fn console(&self, command: FacilitatorCommand) -> Result<Result<(), String>, ServerError> {
        let (reply, rx) = oneshot::channel();
        self.inputs.send(Input::Console { command, reply }).await.map_err(|_| ServerError::Gone)?;
        rx.await.map_err(|_| ServerError::Gone)
    }

    pub async fn summary(&self) -> Result<serde_json::Value, ServerError> {
        let (reply, rx) = oneshot::channel();
        self.inputs.send(Input::Summary { reply }).await.map_err(|_| ServerError::Gone)?;
        rx.await.map_err(|_| ServerError::Gone)
    }

    /// Waits for the session to stop on its own (see
    /// [`ServerOptions::stop_after_finish`]).
    pub async fn wait(mut self) -> Result<ServerSummary, ServerError> {
        let summary = (&mut self.task).await.map_err(|_| ServerError::Gone)?;
        self.stop_background();
        Ok(summary)
    }

    pub async fn shutdown(mut self) -> Result<ServerSummary, ServerError> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        self.wait().await
    }

    /// Runs until the session stops on its own or `stop` resolves,
    /// whichever comes first.
    pub async fn run_until<F: std::future::Future>(mut self, stop: F) -> Result<ServerSummary, ServerError> {
        tokio::select! {
            done = &mut self.task => {
                self.stop_background();
                done.map_err(|_| ServerError::Gone)
            }
            _ = stop => self.shutdown().await,
        }
    }

    fn stop_background(&mut self) {
        for h in self.background.drain(..) {
            h.abort();
        }
    }
}

pub async fn start(opts: ServerOptions) -> Result<ServerHandle, ServerError> {
    let mut session = Session::new(opts.config.clone(), opts.registry.clone())?;
    let sink = match &opts.log_path {
        Some(p) => EventSink::create(p)?,
        None => EventSink::disabled(),
    };
    let listener =
        TcpListener::bind(opts.bind).await.map_err(|source| ServerError::Bind { addr: opts.bind, source })?;
    let addr = listener.local_addr().map_err(|source| ServerError::Bind { addr: opts.bind, source })?;

    let (inputs, rx) = mpsc::channel::<Input>(4096);
    let (events, _) = broadcast::channel::<Arc<str>>(4096);
    let (shutdown_tx, shutdown_rx) = oneshot::channel();
    let token = opts.token.clone().unwrap_or_else(control::generate_token);

    let mut background = vec![tokio::spawn(accept_loop(listener, inputs.clone(), opts.outbound_capacity.max(1)))];
    let mut control_addr = None;
    if let Some(bind) = opts.control_bind {
        let state = control::ControlState {
            inputs: inputs.clone(),
            events: events.clone(),
            token: token.clone().into(),
            registry: opts.registry.clone(),
        };
        let (a, h) = control::serve(bind, state).await?;
        control_addr = Some(a);
        background.push(h);
    }

    let initial = session.drain_events();
    let runner = Runner {
        session,
        sink,
        events: events.clone(),
        conns: HashMap::new(),
        event_count: 0,
        last_digest: None,
    };
    let task = tokio::spawn(runner.run(initial, rx, shutdown_rx, opts.stop_after_finish));
    tracing::info!(%addr, ?control_addr, "session server listening");
    Ok(ServerHandle { addr, control_addr, token, inputs, events, shutdown: Some(shutdown_tx), task, background })
}

struct Conn {
    out: mpsc::Sender<Outbound>,
    member: Option<u32>,
}

struct Runner {
    session: Session,
    sink: EventSink,
    events: broadcast::Sender<Arc<str>>,
    conns: HashMap<u64, Conn>,
    event_count: u64,
    last_digest: Option<String>,
}

impl Runner {
    async fn run(
        mut self,
        initial: Vec<crate::session::SessionEvent>,
        mut rx: mpsc::Receiver<Input>,
        mut shutdown: oneshot::Receiver<()>,
        stop_after_finish: Option<u64>,
    ) -> ServerSummary {
        self.publish(initial);
        let period = Duration::from_secs_f64(self.session.config().tick_interval());
        let mut interval = tokio::time::interval(period);
        interval.set_missed_tick_behavior(MissedTickBehavior::Burst);
        let flush_every = (self.session.config().tick_rate.round() as u64).max(1);
        let mut finished_at: Option<u64> = None;
        loop {
            tokio::select! {
                biased;
                _ = &mut shutdown => break,
                _ = interval.tick() => {
                    self.tick();
                    let t = self.session.tick_count();
                    if t % flush_every == 0 {
                        self.sink.flush();
                        self.report_sink();
                    }
                    if self.session.machine().is_finished() {
                        let at = *finished_at.get_or_insert(t);
                        if stop_after_finish.is_some_and(|n| t >= at + n) {
                            break;
                        }
                    }
                }
                Some(input) = rx.recv() => self.handle(input),
            }
        }
        self.sink.flush();
        self.report_sink();
        ServerSummary {
            ticks: self.session.tick_count(),
            events: self.event_count,
            log_error: self.sink.failure().map(str::to_owned),
            last_digest: self.last_digest,
            finished: self.session.machine().is_finished(),
        }
    }

    fn report_sink(&mut self) {
        if let Some(e) = self.sink.take_failure() {
            tracing::error!(error = %e, "session log write failed; logging disabled");
        }
    }

    fn publish(&mut self, events: Vec<crate::session::SessionEvent>) {
        for ev in events {
            if let crate::session::EventKind::Frame { digest, .. } = &ev.kind {
                self.last_digest = Some(digest.clone());
            }
            let line = serde_json::to_string(&ev).expect("events serialize");
            self.sink.write_line(&line);
            let _ = self.events.send(line.into());
            self.event_count += 1;
        }
    }

    fn flush_session(&mut self) {
        let events = self.session.drain_events();
        self.publish(events);
    }

    fn tick(&mut self) {
        let frame = self.session.tick();
        self.flush_session();
        let bytes: Outbound = match encode(&Message::WorldFrame(frame)) {
            Ok(b) => Arc::new(b),
            Err(e) => {
                tracing::error!(error = %e, "frame could not be encoded");
                return;
            }
        };
        let mut slow = Vec::new();
        for (&id, c) in &self.conns {
            if c.member.is_some() && c.out.try_send(bytes.clone()).is_err() {
                slow.push(id);
            }
        }
        for id in slow {
            self.drop_conn(id, "slow consumer");
        }
    }

    fn drop_conn(&mut self, conn: u64, reason: &str) {
        if let Some(c) = self.conns.remove(&conn) {
            if let Some(member) = c.member {
                self.session.leave(member, reason);
                self.flush_session();
            }
        }
    }

    fn send(&mut self, conn: u64, m: &Message) {
        let Some(c) = self.conns.get(&conn) else { return };
        let Ok(bytes) = encode(m) else { return };
        if c.out.try_send(Arc::new(bytes)).is_err() {
            self.drop_conn(conn, "slow consumer");
        }
    }

    fn handle(&mut self, input: Input) {
        match input {
            Input::Connected { conn, out } => {
                self.conns.insert(conn, Conn { out, member: None });
            }
            Input::Closed { conn, reason } => self.drop_conn(conn, &reason),
            Input::Message { conn, message } => self.on_message(conn, message),
            Input::Console { command, reply } => {
                let r = self.session.console_command(command);
                self.flush_session();
                let _ = reply.send(r);
            }
            Input::Summary { reply } => {
                let mut v = self.session.summary();
                v["connections"] = self.conns.len().into();
                let _ = reply.send(v);
            }
        }
    }

    fn on_message(&mut self, conn: u64, message: Message) {
        let Some(c) = self.conns.get(&conn) else { return };
        match (c.member, message) {
            (_, Message::Ping { nonce }) => self.send(conn, &Message::Pong { nonce }),
            (None, Message::JoinRequest(req)) => {
                let reply = match self.session.join(req) {
                    Ok(accept) => {
                        if let Some(c) = self.conns.get_mut(&conn) {
                            c.member = Some(accept.participant_id);
                        }
                        Message::JoinAccept(Box::new(accept))
                    }
                    Err(reason) => Message::JoinReject { reason },
                };
                self.flush_session();
                self.send(conn, &reply);
            }
            (None, _) => self.send(conn, &error_reply("not_joined", "send a join_request first")),
            (Some(_), Message::JoinRequest(_)) => self.send(conn, &error_reply("joined", "already joined")),
            (Some(id), Message::Leave) => {
                self.session.leave(id, "leave");
                self.flush_session();
                if let Some(c) = self.conns.get_mut(&conn) {
                    c.member = None;
                }
            }
            (Some(id), message) => {
                let replies = self.session.ingest(id, message);
                self.flush_session();
                for r in replies {
                    self.send(conn, &r);
                }
            }
        }
    }
}

async fn accept_loop(listener: TcpListener, inputs: mpsc::Sender<Input>, capacity: usize) {
    let mut next = 0u64;
    loop {
        let (stream, peer) = match listener.accept().await {
            Ok(x) => x,
            Err(e) => {
                tracing::warn!(error = %e, "accept failed");
                continue;
            }
        };
        next += 1;
        tracing::debug!(%peer, conn = next, "client connected");
        tokio::spawn(connection(next, stream, inputs.clone(), capacity));
    }
}

async fn connection(conn: u64, stream: TcpStream, inputs: mpsc::Sender<Input>, capacity: usize) {
    let _ = stream.set_nodelay(true);
    let (mut rd, mut wr) = stream.into_split();
    // a full queue makes the session task drop this client
    let (out_tx, mut out_rx) = mpsc::channel::<Outbound>(capacity);
    if inputs.send(Input::Connected { conn, out: out_tx }).await.is_err() {
        return;
    }
    let mut fb = FrameBuffer::new();
    let mut buf = vec![0u8; READ_CHUNK];
    let reason = loop {
        tokio::select! {
            read = rd.read(&mut buf) => {
                let n = match read {
                    Ok(0) => break "disconnect".to_string(),
                    Ok(n) => n,
                    Err(e) => break format!("read error: {e}"),
                };
                fb.extend(&buf[..n]);
                let mut fatal = None;
                loop {
                    match fb.next_message() {
                        Ok(Some(message)) => {
                            if inputs.send(Input::Message { conn, message }).await.is_err() {
                                return;
                            }
                        }
                        Ok(None) => break,
                        Err(e @ DecodeError::FrameTooLarge(_)) => {
                            fatal = Some(e.to_string());
                            break;
                        }
                        Err(e) => {
                            let bytes = encode(&error_reply("decode", &e.to_string())).unwrap_or_default();
                            let _ = wr.write_all(&bytes).await;
                        }
                    }
                }
                if let Some(f) = fatal {
                    break f;
                }
            }
            out = out_rx.recv() => match out {
                Some(bytes) => {
                    if let Err(e) = wr.write_all(&bytes).await {
                        break format!("write error: {e}");
                    }
                }
                // the session dropped this client
                None => break String::new(),
            }
        }
    };
    let _ = wr.shutdown().await;
    if !reason.is_empty() {
        let _ = inputs.send(Input::Closed { conn, reason }).await;
    }
}
