//! The authoritative session state and its event record. Everything here is
//! synchronous and deterministic; the server in [`crate::server`] only
//! decides the order in which inputs arrive.

use std::collections::BTreeMap;
use std::sync::Arc;

use copresence_core::config::{ConfigError, SessionConfig};
use copresence_core::protocol::{
    accept_pose, encode_payload, AvatarView, FacilitatorCommand, Hand, JoinAccept, JoinRequest, Message, Mudra,
    PoseDisposition, PoseUpdate, Role, WorldFrame, PROTOCOL_VERSION,
};
use copresence_core::simdyn::{self, InteractionForce, SimState};
use copresence_core::spatial::{body_luminosities, group_luminosity, radial_transform, to_shared, Pose, RigidTransform};
use copresence_core::states::{MachineEvent, ParamRegistry, Phase, StateError, StateMachine, reference_sequences};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("state script: {0}")]
    States(#[from] StateError),
    #[error("simulation: {0}")]
    Sim(#[from] simdyn::SimError),
}

pub const REJECT_FULL: &str = "session full";
pub const REJECT_FACILITATOR: &str = "a facilitator is already connected";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub seq: u64,
    /// Ticks completed when the event was recorded.
    pub tick: u64,
    /// Session clock in seconds (`tick / tick_rate`).
    pub time: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventKind {
    SessionStarted { config: Box<SessionConfig> },
    Joined { id: u32, role: Role, node_index: Option<usize>, node_label: String },
    JoinRejected { request: JoinRequest, reason: String },
    Left { id: u32, reason: String },
    /// A client message that may change state; `from` is `None` for the
    /// control console.
    Input { from: Option<u32>, message: Message },
    CommandApplied { from: Option<u32>, command: FacilitatorCommand },
    CommandRejected { from: Option<u32>, command: FacilitatorCommand, reason: String },
    StateEntered { index: usize, phase: Phase, name: String },
    SequenceFinished,
    SimError { detail: String },
    Frame { frame_tick: u64, digest: String, group_luminosity: f64, avatars: usize },
}

impl EventKind {
    pub fn tag(&self) -> &'static str {
        match self {
            EventKind::SessionStarted { .. } => "session_started",
            EventKind::Joined { .. } => "joined",
            EventKind::JoinRejected { .. } => "join_rejected",
            EventKind::Left { .. } => "left",
            EventKind::Input { .. } => "input",
            EventKind::CommandApplied { .. } => "command_applied",
            EventKind::CommandRejected { .. } => "command_rejected",
            EventKind::StateEntered { .. } => "state_entered",
            EventKind::SequenceFinished => "sequence_finished",
            EventKind::SimError { .. } => "sim_error",
            EventKind::Frame { .. } => "frame",
        }
    }
}

/// Latest accepted pose, already in the shared frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedPose {
    pub seq: u64,
    pub head: Pose,
    pub left: Pose,
    pub right: Pose,
    pub mudra: [Mudra; 2],
    pub received_tick: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub id: u32,
    pub role: Role,
    pub node_index: Option<usize>,
    pub node_label: String,
    pub transform: RigidTransform,
    pub pose: Option<SharedPose>,
    pub spectating: bool,
    pub pose_updates: u64,
    pub stale_dropped: u64,
    grabs: [Option<usize>; 2],
    pinched: [bool; 2],
}

impl Member {
    pub fn last_seq(&self) -> Option<u64> {
        self.pose.as_ref().map(|p| p.seq)
    }

    /// Has a body in the shared space.
    fn embodied(&self) -> bool {
        self.role != Role::Observer && !self.spectating && self.pose.is_some()
    }
}

#[derive(Debug, Clone)]
pub struct Session {
    config: SessionConfig,
    members: BTreeMap<u32, Member>,
    next_id: u32,
    sim: SimState,
    machine: StateMachine,
    tick: u64,
    events: Vec<SessionEvent>,
    next_seq: u64,
    last_frame: Option<WorldFrame>,
}

impl Session {
    /// Validates the config; an empty sequence list means the shipped
    /// reference script. Records `session_started` and the first state.
    pub fn new(mut config: SessionConfig, registry: Arc<ParamRegistry>) -> Result<Self, SessionError> {
        if config.sequences.is_empty() {
            config.sequences = reference_sequences();
        }
        config.validate(&registry)?;
        let sim = simdyn::build_ring(&config.topology, None)?;
        let machine = StateMachine::new(&config.sequences, registry)?;
        let mut s = Session {
            config,
            members: BTreeMap::new(),
            next_id: 1,
            sim,
            machine,
            tick: 0,
            events: Vec::new(),
            next_seq: 0,
            last_frame: None,
        };
        s.record(EventKind::SessionStarted { config: Box::new(s.config.clone()) });
        let cur = s.machine.current();
        let entered = EventKind::StateEntered { index: 0, phase: cur.phase, name: cur.state.name.clone() };
        s.record(entered);
        Ok(s)
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn members(&self) -> impl Iterator<Item = &Member> {
        self.members.values()
    }

    pub fn member(&self, id: u32) -> Option<&Member> {
        self.members.get(&id)
    }

    pub fn sim(&self) -> &SimState {
        &self.sim
    }

    pub fn machine(&self) -> &StateMachine {
        &self.machine
    }

    pub fn tick_count(&self) -> u64 {
        self.tick
    }

    pub fn last_frame(&self) -> Option<&WorldFrame> {
        self.last_frame.as_ref()
    }

    pub fn facilitator(&self) -> Option<u32> {
        self.members.values().find(|m| m.role == Role::Facilitator).map(|m| m.id)
    }

    /// Events recorded since the last call.
    pub fn drain_events(&mut self) -> Vec<SessionEvent> {
        std::mem::take(&mut self.events)
    }

    fn record(&mut self, kind: EventKind) {
        let ev = SessionEvent {
            seq: self.next_seq,
            tick: self.tick,
            time: self.tick as f64 * self.config.tick_interval(),
            kind,
        };
        self.next_seq += 1;
        self.events.push(ev);
    }

    pub fn join(&mut self, req: JoinRequest) -> Result<JoinAccept, String> {
        match self.admit(&req) {
            Ok(node_index) => {
                let id = self.next_id;
                self.next_id += 1;
                let transform = match node_index {
                    Some(k) => radial_transform(k, self.config.max_participants).map_err(|e| e.to_string())?,
                    None => RigidTransform::IDENTITY,
                };
                self.members.insert(
                    id,
                    Member {
                        id,
                        role: req.role,
                        node_index,
                        node_label: req.node_label.clone(),
                        transform,
                        pose: None,
                        spectating: false,
                        pose_updates: 0,
                        stale_dropped: 0,
                        grabs: [None; 2],
                        pinched: [false; 2],
                    },
                );
                self.record(EventKind::Joined { id, role: req.role, node_index, node_label: req.node_label });
                Ok(JoinAccept {
                    participant_id: id,
                    role: req.role,
                    node_index,
                    n_participants: self.config.max_participants,
                    session_config: self.config.clone(),
                    snapshot: self.last_frame.clone(),
                })
            }
            Err(reason) => {
                self.record(EventKind::JoinRejected { request: req, reason: reason.clone() });
                Err(reason)
            }
        }
    }

    fn admit(&self, req: &JoinRequest) -> Result<Option<usize>, String> {
        if req.version != PROTOCOL_VERSION {
            return Err(format!("protocol version {} not supported (server speaks {PROTOCOL_VERSION})", req.version));
        }
        match req.role {
            Role::Observer => Ok(None),
            Role::Facilitator if self.facilitator().is_some() => Err(REJECT_FACILITATOR.into()),
            Role::Facilitator => Ok(None),
            Role::Participant => {
                let taken: Vec<usize> = self.members.values().filter_map(|m| m.node_index).collect();
                (0..self.config.max_participants)
                    .find(|k| !taken.contains(k))
                    .map(Some)
                    .ok_or_else(|| REJECT_FULL.to_string())
            }
        }
    }

    pub fn leave(&mut self, id: u32, reason: &str) -> bool {
        if self.members.remove(&id).is_none() {
            return false;
        }
        self.record(EventKind::Left { id, reason: reason.into() });
        true
    }

    /// Applies one message from a joined client and returns the replies
    /// owed to that client.
    pub fn ingest(&mut self, from: u32, message: Message) -> Vec<Message> {
        let Some(member) = self.members.get(&from) else {
            return vec![error_reply("not_joined", "join before sending")];
        };
        let role = member.role;
        match message {
            Message::Ping { nonce } => vec![Message::Pong { nonce }],
            Message::PoseUpdate(update) => {
                self.record(EventKind::Input { from: Some(from), message: Message::PoseUpdate(update.clone()) });
                self.apply_pose(from, update);
                Vec::new()
            }
            Message::FacilitatorCommand { command } => {
                self.record(EventKind::Input {
                    from: Some(from),
                    message: Message::FacilitatorCommand { command: command.clone() },
                });
                if role != Role::Facilitator {
                    let reason = "permission denied: only the facilitator may steer the session".to_string();
                    self.record(EventKind::CommandRejected { from: Some(from), command, reason: reason.clone() });
                    return vec![error_reply("permission", &reason)];
                }
                match self.apply_command(Some(from), command) {
                    Ok(()) => Vec::new(),
                    Err(reason) => vec![error_reply("command", &reason)],
                }
            }
            Message::Leave => {
                self.leave(from, "leave");
                Vec::new()
            }
            other => vec![error_reply("unexpected", &format!("{} is not accepted from clients", other.tag()))],
        }
    }

    /// A command from the control console, which acts with facilitator
    /// authority. Spectate applies to the connected facilitator.
    pub fn console_command(&mut self, command: FacilitatorCommand) -> Result<(), String> {
        self.record(EventKind::Input { from: None, message: Message::FacilitatorCommand { command: command.clone() } });
        self.apply_command(None, command)
    }

    fn apply_pose(&mut self, from: u32, update: PoseUpdate) {
        let tick = self.tick;
        let Some(m) = self.members.get_mut(&from) else { return };
        if m.role == Role::Observer {
            return;
        }
        if accept_pose(m.last_seq(), &update) == PoseDisposition::Drop {
            m.stale_dropped += 1;
            return;
        }
        if ![&update.head, &update.left, &update.right].iter().all(|p| p.is_valid()) {
            m.stale_dropped += 1;
            return;
        }
        let t = m.transform;
        m.pose_updates += 1;
        m.pose = Some(SharedPose {
            seq: update.seq,
            head: to_shared(&update.head, &t),
            left: to_shared(&update.left, &t),
            right: to_shared(&update.right, &t),
            mudra: [update.mudra_left, update.mudra_right],
            received_tick: tick,
        });
    }

    fn apply_command(&mut self, from: Option<u32>, command: FacilitatorCommand) -> Result<(), String> {
        let outcome = self.execute(&command);
        match &outcome {
            Ok(machine_events) => {
                self.record(EventKind::CommandApplied { from, command });
                for ev in machine_events.clone() {
                    self.record_machine(ev);
                }
            }
            Err(reason) => {
                self.record(EventKind::CommandRejected { from, command, reason: reason.clone() });
            }
        }
        outcome.map(|_| ())
    }

    fn execute(&mut self, command: &FacilitatorCommand) -> Result<Vec<MachineEvent>, String> {
        match command {
            FacilitatorCommand::SetScale { scale } => {
                self.sim = simdyn::set_scale(&self.sim, *scale).map_err(|e| e.to_string())?;
                Ok(Vec::new())
            }
            FacilitatorCommand::Spectate { on } => {
                let id = self.facilitator().ok_or("no facilitator is connected")?;
                let m = self.members.get_mut(&id).expect("facilitator present");
                m.spectating = *on;
                if *on {
                    m.grabs = [None; 2];
                }
                Ok(Vec::new())
            }
            other => {
                let mc = other.machine_command().expect("remaining commands drive the machine");
                self.machine.apply(&mc).map_err(|e| e.to_string())
            }
        }
    }

    fn record_machine(&mut self, ev: MachineEvent) {
        let kind = match ev {
            MachineEvent::StateEntered { index, phase, name } => EventKind::StateEntered { index, phase, name },
            MachineEvent::Finished => EventKind::SequenceFinished,
        };
        self.record(kind);
    }

    /// Pinch transitions bind or release grabs, then the current anchors
    /// are returned as forces. Members are visited in id order.
    fn update_grabs(&mut self) -> Vec<InteractionForce> {
        let scale = self.sim.scale;
        let radius = self.config.grab_radius;
        let ip = self.config.interaction;
        let mut forces = Vec::new();
        for m in self.members.values_mut() {
            let Some(pose) = m.pose.as_ref().filter(|_| m.role != Role::Observer && !m.spectating) else {
                m.grabs = [None; 2];
                m.pinched = [false; 2];
                continue;
            };
            for (h, hand) in [Hand::Left, Hand::Right].into_iter().enumerate() {
                let point = match hand {
                    Hand::Left => pose.left.position,
                    Hand::Right => pose.right.position,
                };
                let pinched = pose.mudra[h].is_pinched();
                if pinched && !m.pinched[h] {
                    m.grabs[h] = simdyn::pick_bead(&self.sim, point, radius);
                } else if !pinched {
                    m.grabs[h] = None;
                }
                m.pinched[h] = pinched;
                if let Some(bead) = m.grabs[h] {
                    forces.push(InteractionForce {
                        owner: m.id,
                        target_bead: bead,
                        anchor: point * (1.0 / scale),
                        stiffness: ip.stiffness,
                        max_force: ip.max_force,
                    });
                }
            }
        }
        forces
    }

    /// One server tick: grabs, dynamics, script clock, light, frame.
    pub fn tick(&mut self) -> WorldFrame {
        let forces = self.update_grabs();
        let substeps = self.config.substeps();
        let ip = simdyn::IntegratorParams {
            dt: self.config.tick_interval() / substeps as f64,
            ..self.config.integrator
        };
        let good = self.sim.clone();
        for _ in 0..substeps {
            match simdyn::step(&self.sim, &self.config.topology, &forces, &ip) {
                Ok(next) => self.sim = next,
                Err(e) => {
                    self.record(EventKind::SimError { detail: e.to_string() });
                    self.sim = good;
                    for m in self.members.values_mut() {
                        m.grabs = [None; 2];
                    }
                    break;
                }
            }
        }

        let dt = self.config.tick_interval() * self.config.time_scale;
        for ev in self.machine.tick(dt) {
            self.record_machine(ev);
        }
        self.tick += 1;

        let bodies: Vec<&Member> = self.members.values().filter(|m| m.embodied()).collect();
        let centers: Vec<_> = bodies
            .iter()
            .map(|m| self.config.kernel.body_center(&m.pose.as_ref().expect("embodied").head))
            .collect();
        let lum = body_luminosities(&centers, &self.config.kernel);
        let avatars: Vec<AvatarView> = bodies
            .iter()
            .zip(&lum)
            .map(|(m, &luminosity)| {
                let p = m.pose.as_ref().expect("embodied");
                AvatarView {
                    id: m.id,
                    role: m.role,
                    head: p.head,
                    left: p.left,
                    right: p.right,
                    luminosity,
                    seq: p.seq,
                }
            })
            .collect();
        let cur = self.machine.current();
        let frame = WorldFrame {
            tick: self.tick,
            state_index: self.machine.index(),
            state_name: cur.state.name.clone(),
            finished: self.machine.is_finished(),
            avatars,
            sim_positions: WorldFrame::quantize_positions(self.sim.world_positions()),
            group_luminosity: group_luminosity(&centers, &self.config.kernel),
            scale: self.sim.scale,
        };
        let message = Message::WorldFrame(frame).quantized();
        let digest = frame_digest(&message);
        let Message::WorldFrame(frame) = message else { unreachable!() };
        self.record(EventKind::Frame {
            frame_tick: frame.tick,
            digest,
            group_luminosity: frame.group_luminosity,
            avatars: frame.avatars.len(),
        });
        self.last_frame = Some(frame.clone());
        frame
    }

    /// Roster, script position and overrides as JSON, for the control API.
    pub fn summary(&self) -> serde_json::Value {
        let cur = self.machine.current();
        let roster: Vec<_> = self
            .members
            .values()
            .map(|m| {
                serde_json::json!({
                    "id": m.id,
                    "role": m.role,
                    "node_index": m.node_index,
                    "node_label": m.node_label,
                    "spectating": m.spectating,
                    "last_seq": m.last_seq(),
                    "net": {
                        "pose_updates": m.pose_updates,
                        "stale_dropped": m.stale_dropped,
                        "ticks_since_pose": m.pose.as_ref().map(|p| self.tick - p.received_tick),
                    },
                })
            })
            .collect();
        serde_json::json!({
            "tick": self.tick,
            "time": self.tick as f64 * self.config.tick_interval(),
            "state": {
                "index": self.machine.index(),
                "count": self.machine.len(),
                "name": cur.state.name,
                "phase": cur.phase,
                "mode": self.machine.mode(),
                "elapsed": self.machine.elapsed(),
                "duration": cur.state.duration,
                "total_duration": self.machine.total_duration(),
                "finished": self.machine.is_finished(),
            },
            "effective_params": self.machine.effective_params().ok(),
            "overrides": self.machine.overrides(),
            "scale": self.sim.scale,
            "group_luminosity": self.last_frame.as_ref().map(|f| f.group_luminosity),
            "roster": roster,
        })
    }
}

/// SHA-256 of the canonical payload, hex encoded.
pub fn frame_digest(message: &Message) -> String {
    let payload = encode_payload(message).expect("frames hold finite values");
    hex::encode(Sha256::digest(&payload))
}

pub fn error_reply(code: &str, detail: &str) -> Message {
    Message::Error { code: code.into(), detail: detail.into() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use copresence_core::spatial::Vec3;

    fn session(n: usize) -> Session {
        let cfg = SessionConfig { max_participants: n, ..Default::default() };
        Session::new(cfg, Arc::new(ParamRegistry::canonical())).unwrap()
    }

    fn req(role: Role) -> JoinRequest {
        JoinRequest { version: PROTOCOL_VERSION, role, node_label: "n".into() }
    }

    fn pose_at(seq: u64, head: Vec3) -> PoseUpdate {
        PoseUpdate {
            seq,
            head: Pose::at(head),
            left: Pose::at(head + Vec3::new(-0.2, -0.5, 0.0)),
            right: Pose::at(head + Vec3::new(0.2, -0.5, 0.0)),
            mudra_left: Mudra::None,
            mudra_right: Mudra::None,
        }
    }

    #[test]
    fn lowest_free_slot() {
        let mut s = session(4);
        let a = s.join(req(Role::Participant)).unwrap();
        assert_eq!((a.participant_id, a.node_index), (1, Some(0)));
        let b = s.join(req(Role::Participant)).unwrap();
        assert_eq!(b.node_index, Some(1));
        assert!(s.leave(1, "leave"));
        assert_eq!(s.join(req(Role::Participant)).unwrap().node_index, Some(0));
    }

    #[test]
    fn capacity_and_roles() {
        let mut s = session(5);
        for _ in 0..5 {
            s.join(req(Role::Participant)).unwrap();
        }
        assert_eq!(s.join(req(Role::Participant)).unwrap_err(), REJECT_FULL);
        let obs = s.join(req(Role::Observer)).unwrap();
        assert_eq!(obs.node_index, None);
        let f = s.join(req(Role::Facilitator)).unwrap();
        assert_eq!(f.node_index, None);
        assert_eq!(s.join(req(Role::Facilitator)).unwrap_err(), REJECT_FACILITATOR);
        // rejects do not consume ids
        assert_eq!(s.join(req(Role::Observer)).unwrap().participant_id, f.participant_id + 1);
    }

    #[test]
    fn version_mismatch_rejected() {
        let mut s = session(5);
        let r = JoinRequest { version: PROTOCOL_VERSION + 1, ..req(Role::Participant) };
        assert!(s.join(r).unwrap_err().contains("version"));
    }

    #[test]
    fn stale_pose_ignored() {
        let mut s = session(4);
        let id = s.join(req(Role::Participant)).unwrap().participant_id;
        s.ingest(id, Message::PoseUpdate(pose_at(5, Vec3::new(0.0, 1.6, 1.0))));
        let before = s.member(id).unwrap().pose.clone();
        s.ingest(id, Message::PoseUpdate(pose_at(4, Vec3::new(0.0, 1.6, 0.0))));
        s.ingest(id, Message::PoseUpdate(pose_at(5, Vec3::new(0.0, 1.6, 0.0))));
        assert_eq!(s.member(id).unwrap().pose, before);
        assert_eq!(s.member(id).unwrap().stale_dropped, 2);
    }

    #[test]
    fn poses_are_composed_radially() {
        let mut s = session(4);
        s.join(req(Role::Participant)).unwrap();
        let id = s.join(req(Role::Participant)).unwrap().participant_id;
        s.ingest(id, Message::PoseUpdate(pose_at(1, Vec3::new(1.0, 1.6, 0.0))));
        let head = s.member(id).unwrap().pose.as_ref().unwrap().head.position;
        assert!(head.distance(Vec3::new(0.0, 1.6, -1.0)) < 1e-12, "{head:?}");
    }

    #[test]
    fn coincident_heads_give_three() {
        let mut s = session(4);
        let a = s.join(req(Role::Participant)).unwrap().participant_id;
        let b = s.join(req(Role::Participant)).unwrap().participant_id;
        // node 0 is the identity and node 1 a quarter turn: both map the
        // local center to the shared center
        s.ingest(a, Message::PoseUpdate(pose_at(1, Vec3::new(0.0, 1.6, 0.0))));
        s.ingest(b, Message::PoseUpdate(pose_at(1, Vec3::new(0.0, 1.6, 0.0))));
        let f = s.tick();
        assert!((f.group_luminosity - 3.0).abs() < 1e-12);
        for av in &f.avatars {
            assert!(av.luminosity > s.config().kernel.base_luminosity);
        }
    }

    #[test]
    fn empty_session_still_ticks() {
        let mut s = session(4);
        let f1 = s.tick();
        let f2 = s.tick();
        assert!(f1.avatars.is_empty());
        assert_eq!((f1.tick, f2.tick), (1, 2));
        assert_ne!(f1.sim_positions, f2.sim_positions);
    }

    #[test]
    fn only_facilitator_commands() {
        let mut s = session(4);
        let p = s.join(req(Role::Participant)).unwrap().participant_id;
        let replies = s.ingest(p, Message::FacilitatorCommand { command: FacilitatorCommand::Skip });
        assert!(matches!(&replies[..], [Message::Error { code, .. }] if code == "permission"));
        assert_eq!(s.machine().index(), 0);
        let f = s.join(req(Role::Facilitator)).unwrap().participant_id;
        assert!(s.ingest(f, Message::FacilitatorCommand { command: FacilitatorCommand::Skip }).is_empty());
        assert_eq!(s.machine().index(), 1);
        let kinds: Vec<_> = s.drain_events().iter().map(|e| e.kind.tag()).collect();
        assert!(kinds.contains(&"command_rejected") && kinds.contains(&"command_applied"));
    }

    #[test]
    fn spectating_facilitator_is_invisible() {
        let mut s = session(4);
        let f = s.join(req(Role::Facilitator)).unwrap().participant_id;
        let p = s.join(req(Role::Participant)).unwrap().participant_id;
        s.ingest(f, Message::PoseUpdate(pose_at(1, Vec3::new(0.0, 1.6, 0.0))));
        s.ingest(p, Message::PoseUpdate(pose_at(1, Vec3::new(0.0, 1.6, 0.0))));
        assert_eq!(s.tick().avatars.len(), 2);
        s.ingest(f, Message::FacilitatorCommand { command: FacilitatorCommand::Spectate { on: true } });
        assert!(s.member(f).unwrap().spectating);
        let frame = s.tick();
        assert_eq!(frame.avatars.iter().map(|a| a.id).collect::<Vec<_>>(), vec![p]);
        assert!((frame.group_luminosity - 1.0).abs() < 1e-12);
    }

    #[test]
    fn set_scale_reaches_next_frame() {
        let mut s = session(4);
        let f = s.join(req(Role::Facilitator)).unwrap().participant_id;
        s.ingest(f, Message::FacilitatorCommand { command: FacilitatorCommand::SetScale { scale: 2.0 } });
        assert_eq!(s.tick().scale, 2.0);
        let replies = s.ingest(f, Message::FacilitatorCommand { command: FacilitatorCommand::SetScale { scale: -1.0 } });
        assert_eq!(replies.len(), 1);
    }

    #[test]
    fn console_spectate_needs_facilitator() {
        let mut s = session(4);
        assert!(s.console_command(FacilitatorCommand::Spectate { on: true }).is_err());
        assert!(s.console_command(FacilitatorCommand::Hold).is_ok());
    }

    #[test]
    fn pinch_drags_a_bead() {
        let mut s = session(4);
        let p = s.join(req(Role::Participant)).unwrap().participant_id;
        let mut control = s.clone();
        let bead = s.sim().world_position(0);
        let mut up = pose_at(1, Vec3::new(bead.x, 1.6, bead.z));
        up.right = Pose::at(bead);
        s.ingest(p, Message::PoseUpdate(up.clone()));
        control.ingest(p, Message::PoseUpdate(up.clone()));
        s.tick();
        control.tick();
        up.seq = 2;
        up.mudra_right = Mudra::Index;
        s.ingest(p, Message::PoseUpdate(up.clone()));
        for seq in 3..60 {
            s.tick();
            control.tick();
            up.seq = seq;
            up.right = Pose::at(bead + Vec3::new(0.0, 0.005 * seq as f64, 0.0));
            s.ingest(p, Message::PoseUpdate(up.clone()));
        }
        assert!(s.sim().positions[0].y > control.sim().positions[0].y + 0.05);
    }

    #[test]
    fn blowup_resets_to_finite_state() {
        let cfg = SessionConfig {
            tick_rate: 1.0,
            integrator: simdyn::IntegratorParams { dt: 1.0, friction: 0.1, temperature: 0.1, seed: 3 },
            ..Default::default()
        };
        let mut s = Session::new(cfg, Arc::new(ParamRegistry::canonical())).unwrap();
        let mut saw = false;
        for _ in 0..2000 {
            s.tick();
            if s.drain_events().iter().any(|e| e.kind.tag() == "sim_error") {
                saw = true;
                break;
            }
        }
        assert!(saw);
        assert!(s.sim().positions.iter().all(|p| p.is_finite()));
    }
}
