//! Scripted headless participants.
//!
//! A bot joins, then answers every world frame with one pose update: the
//! script clock advances by one tick interval per frame received, so a
//! script plays the same way regardless of scheduling. Trajectories are
//! piecewise linear in the bot's local play-space frame.

use std::net::SocketAddr;
use std::time::{Duration, Instant};

use copresence_core::netdiag::FaultProfile;
use copresence_core::protocol::{
    Hand, JoinRequest, Message, Mudra, PoseUpdate, Role, WorldFrame, PROTOCOL_VERSION,
};
use copresence_core::spatial::{radial_transform, Pose, RigidTransform, Vec3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netdiag::inject;
use crate::session::frame_digest;
use crate::transport;

pub const HEAD_HEIGHT: f64 = 1.6;
/// Hand rest position relative to the head.
pub const HAND_OFFSET: [f64; 3] = [0.2, -0.5, 0.0];
pub const SCRIPT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum BotError {
    #[error("script: {0}")]
    Script(String),
    #[error("cannot reach {addr}: {source}")]
    Connect { addr: SocketAddr, source: std::io::Error },
    #[error("fault profile: {0}")]
    Fault(String),
    #[error("{count} of {total} bots failed: {detail}")]
    Ensemble { count: usize, total: usize, detail: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case", deny_unknown_fields)]
pub enum Action {
    /// Walk the head (hands follow) to a local point.
    MoveTo { to: [f64; 3], over: f64 },
    SetMudra { hand: Hand, mudra: Mudra },
    /// Lean down and forward, then back up.
    Bow { over: f64 },
    /// Both hands up above the head and back down.
    RaiseArms { over: f64 },
    Idle { seconds: f64 },
    /// Copy another avatar's last pose, reflected through the shared
    /// center. `target` defaults to the lowest other participant id.
    Mimic {
        seconds: f64,
        #[serde(default)]
        target: Option<u32>,
    },
    /// Put `hand` on the nearest bead, pinch, drag it by `pull` over
    /// `seconds`, release.
    GrabNearest {
        hand: Hand,
        seconds: f64,
        #[serde(default)]
        pull: [f64; 3],
    },
}

impl Action {
    fn duration(&self) -> f64 {
        match self {
            Action::SetMudra { .. } => 0.0,
            Action::MoveTo { over, .. } | Action::Bow { over } | Action::RaiseArms { over } => *over,
            Action::Idle { seconds } | Action::Mimic { seconds, .. } | Action::GrabNearest { seconds, .. } => *seconds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BotScript {
    pub version: u32,
    pub name: String,
    /// Local head position before the first action.
    #[serde(default = "default_start")]
    pub start: [f64; 3],
    pub actions: Vec<Action>,
}

fn default_start() -> [f64; 3] {
    [0.0, HEAD_HEIGHT, 1.0]
}

impl BotScript {
    pub fn from_json(doc: &[u8]) -> Result<Self, BotError> {
        let mut de = serde_json::Deserializer::from_slice(doc);
        let s: BotScript = serde_path_to_error::deserialize(&mut de)
            .map_err(|e| BotError::Script(format!("at {}: {}", e.path(), e.inner())))?;
        s.validate()?;
        Ok(s)
    }

    /// Actions run one after another, so no two overlap on either hand;
    /// every timed action must take a positive, finite time.
    pub fn validate(&self) -> Result<(), BotError> {
        if self.version != SCRIPT_VERSION {
            return Err(BotError::Script(format!("version {} not supported", self.version)));
        }
        if !self.start.iter().all(|v| v.is_finite()) {
            return Err(BotError::Script("start must be finite".into()));
        }
        for (i, a) in self.actions.iter().enumerate() {
            let d = a.duration();
            let instant = matches!(a, Action::SetMudra { .. });
            if !instant && !(d > 0.0 && d.is_finite()) {
                return Err(BotError::Script(format!("actions[{i}]: duration must be positive, got {d}")));
            }
            let point = match a {
                Action::MoveTo { to, .. } => Some(to),
                Action::GrabNearest { pull, .. } => Some(pull),
                _ => None,
            };
            if point.is_some_and(|p| !p.iter().all(|v| v.is_finite())) {
                return Err(BotError::Script(format!("actions[{i}]: non-finite coordinate")));
            }
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.actions.iter().map(Action::duration).sum()
    }

    pub fn idle(seconds: f64) -> Self {
        Self { version: SCRIPT_VERSION, name: "idle".into(), start: default_start(), actions: vec![Action::Idle { seconds }] }
    }
}

const SHIPPED: &[(&str, &str)] = &[
    ("bow", include_str!("../scripts/bow.json")),
    ("breathing_arms", include_str!("../scripts/breathing_arms.json")),
    ("mimic", include_str!("../scripts/mimic.json")),
    ("coalesce", include_str!("../scripts/coalesce.json")),
    ("hold_thread", include_str!("../scripts/hold_thread.json")),
];

pub fn shipped_script_names() -> impl Iterator<Item = &'static str> {
    SHIPPED.iter().map(|(n, _)| *n)
}

pub fn shipped_script(name: &str) -> Option<BotScript> {
    SHIPPED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, doc)| BotScript::from_json(doc.as_bytes()).expect("shipped scripts are valid"))
}

fn v(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

/// Triangle wave on [0, 1]: 0 at the ends, 1 in the middle.
fn there_and_back(s: f64) -> f64 {
    1.0 - (2.0 * s - 1.0).abs()
}

/// What the bot is doing with one hand when not following the head.
#[derive(Debug, Clone, Copy)]
struct HandHold {
    from: Vec3,
    pull: Vec3,
}

/// Plays a script against incoming frames.
struct Player {
    script: BotScript,
    me: u32,
    transform: RigidTransform,
    action: usize,
    t_in_action: f64,
    /// Head position at the start of the current action.
    anchor: Vec3,
    head: Vec3,
    hand_lift: f64,
    hands: [Option<Vec3>; 2],
    mudra: [Mudra; 2],
    hold: Option<(usize, HandHold)>,
}

impl Player {
    fn new(script: BotScript, me: u32, transform: RigidTransform) -> Self {
        let start = v(script.start);
        Self {
            script,
            me,
            transform,
            action: 0,
            t_in_action: 0.0,
            anchor: start,
            head: start,
            hand_lift: 0.0,
            hands: [None; 2],
            mudra: [Mudra::None; 2],
            hold: None,
        }
    }

    fn done(&self) -> bool {
        self.action >= self.script.actions.len()
    }

    fn to_local(&self, shared: Vec3) -> Vec3 {
        self.transform.inverse().apply_point(shared)
    }

    fn begin(&mut self, frame: &WorldFrame) {
        self.anchor = self.head;
        if let Some(Action::GrabNearest { hand, pull, .. }) = self.script.actions.get(self.action).cloned() {
            let h = hand as usize;
            let here = self.transform.apply_point(self.rest_hand(h));
            let nearest = (0..frame.sim_positions.len())
                .filter_map(|b| frame.bead_position(b))
                .min_by(|a, b| a.distance(here).total_cmp(&b.distance(here)));
            if let Some(bead) = nearest {
                self.hold = Some((h, HandHold { from: self.to_local(bead), pull: v(pull) }));
            }
        }
    }

    fn rest_hand(&self, h: usize) -> Vec3 {
        let side = if h == 0 { -1.0 } else { 1.0 };
        self.head + Vec3::new(side * HAND_OFFSET[0], HAND_OFFSET[1] + self.hand_lift, HAND_OFFSET[2])
    }

    /// Applies the current action at fraction `s` of its duration.
    fn apply(&mut self, s: f64, frame: &WorldFrame) {
        let Some(action) = self.script.actions.get(self.action).cloned() else { return };
        match action {
            Action::MoveTo { to, .. } => self.head = self.anchor.lerp(v(to), s),
            Action::SetMudra { hand, mudra } => self.mudra[hand as usize] = mudra,
            Action::Bow { .. } => self.head = self.anchor + Vec3::new(0.0, -0.3, -0.2) * there_and_back(s),
            Action::RaiseArms { .. } => self.hand_lift = 0.9 * there_and_back(s),
            Action::Idle { .. } => {}
            Action::Mimic { target, .. } => {
                let other = frame
                    .avatars
                    .iter()
                    .filter(|a| a.id != self.me && a.role == Role::Participant)
                    .find(|a| target.is_none_or(|t| a.id == t));
                if let Some(o) = other {
                    let inv = self.transform.inverse();
                    let mirror = |p: Vec3| inv.apply_point(Vec3::new(-p.x, p.y, -p.z));
                    let (head, l, r) = (mirror(o.head.position), mirror(o.left.position), mirror(o.right.position));
                    self.head = head;
                    self.hands = [Some(l), Some(r)];
                }
            }
            Action::GrabNearest { .. } => {
                if let Some((h, hold)) = self.hold {
                    self.hands[h] = Some(hold.from + hold.pull * s);
                    self.mudra[h] = if s < 1.0 { Mudra::Index } else { Mudra::None };
                }
            }
        }
    }

    fn finish_action(&mut self) {
        match self.script.actions.get(self.action) {
            Some(Action::Mimic { .. }) => self.hands = [None; 2],
            Some(Action::GrabNearest { .. }) => {
                if let Some((h, _)) = self.hold.take() {
                    self.hands[h] = None;
                    self.mudra[h] = Mudra::None;
                }
            }
            _ => {}
        }
        self.action += 1;
        self.t_in_action = 0.0;
    }

    /// Moves the script clock forward by `dt` and returns the pose to send.
    fn advance(&mut self, dt: f64, frame: &WorldFrame, first: bool) -> (Pose, Pose, Pose) {
        if first && !self.done() {
            self.begin(frame);
        }
        let mut left = dt;
        while !self.done() {
            let d = self.script.actions[self.action].duration();
            // tolerance keeps accumulated tick sums from spilling a frame
            if self.t_in_action + left < d - 1e-9 {
                self.t_in_action += left;
                let s = self.t_in_action / d;
                self.apply(s, frame);
                break;
            }
            left = (left - (d - self.t_in_action)).max(0.0);
            self.t_in_action = d;
            self.apply(1.0, frame);
            self.finish_action();
            if !self.done() {
                self.begin(frame);
                if self.script.actions[self.action].duration() > 0.0 {
                    self.apply(0.0, frame);
                }
            }
        }
        let hand = |h: usize| Pose::at(self.hands[h].unwrap_or_else(|| self.rest_hand(h)));
        (Pose::at(self.head), hand(0), hand(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct BotReport {
    pub name: String,
    pub participant_id: Option<u32>,
    pub node_index: Option<usize>,
    pub frames_received: u64,
    /// State names in the order first seen, without repeats of the
    /// current state.
    pub states_observed: Vec<String>,
    /// `(tick, group_luminosity)` for every frame.
    pub luminosity_trace: Vec<(u64, f64)>,
    /// Oldest pose of ours reflected in a frame, relative to the newest we
    /// had sent, in milliseconds of tick time.
    pub max_pose_staleness: f64,
    pub finished: bool,
    /// Digest of the first frame with the script finished.
    pub final_frame_digest: Option<String>,
    pub final_tick: Option<u64>,
    pub wall_seconds: f64,
    pub errors: Vec<String>,
    /// The connection ended before the run was complete.
    pub partial: bool,
}

#[derive(Debug, Clone)]
pub struct BotOptions {
    pub name: String,
    pub role: Role,
    /// Keep streaming the last pose after the script until the session's
    /// state script finishes.
    pub until_finished: bool,
    pub max_wall: Option<Duration>,
    pub fault: Option<FaultProfile>,
}

impl BotOptions {
    pub fn named(name: &str) -> Self {
        Self { name: name.into(), role: Role::Participant, until_finished: false, max_wall: None, fault: None }
    }
}

pub async fn run_bot(addr: SocketAddr, script: BotScript, opts: BotOptions) -> Result<BotReport, BotError> {
    script.validate()?;
    let started = Instant::now();
    let conn = transport::connect(addr).await.map_err(|source| BotError::Connect { addr, source })?;
    let mut incoming = conn.incoming;
    let out = match opts.fault {
        Some(p) => inject(conn.outgoing, p).map_err(|e| BotError::Fault(e.to_string()))?,
        None => conn.outgoing,
    };
    let mut report = BotReport { name: opts.name.clone(), ..Default::default() };
    let join = JoinRequest { version: PROTOCOL_VERSION, role: opts.role, node_label: opts.name.clone() };
    if out.send(Message::JoinRequest(join)).await.is_err() {
        report.partial = true;
        report.errors.push("connection closed before join".into());
        return Ok(report);
    }

    let deadline = opts.max_wall.map(|d| tokio::time::Instant::now() + d);
    let sleep_until = |d: Option<tokio::time::Instant>| async move {
        match d {
            Some(d) => tokio::time::sleep_until(d).await,
            None => std::future::pending().await,
        }
    };

    let mut player: Option<Player> = None;
    let mut tick_dt = 0.0;
    let mut seq = 0u64;
    let mut complete = false;
    loop {
        let m = tokio::select! {
            m = incoming.recv() => m,
            _ = sleep_until(deadline) => { complete = true; break; }
        };
        let Some(m) = m else { break };
        match m {
            Err(e) => report.errors.push(format!("decode: {e}")),
            Ok(Message::JoinReject { reason }) => {
                report.errors.push(format!("join rejected: {reason}"));
                complete = true;
                break;
            }
            Ok(Message::JoinAccept(acc)) => {
                report.participant_id = Some(acc.participant_id);
                report.node_index = acc.node_index;
                tick_dt = acc.session_config.tick_interval();
                let transform = match acc.node_index {
                    Some(k) => radial_transform(k, acc.n_participants).unwrap_or(RigidTransform::IDENTITY),
                    None => RigidTransform::IDENTITY,
                };
                player = Some(Player::new(script.clone(), acc.participant_id, transform));
            }
            Ok(Message::Error { code, detail }) => report.errors.push(format!("{code}: {detail}")),
            Ok(Message::WorldFrame(frame)) => {
                let Some(p) = player.as_mut() else { continue };
                let first = report.frames_received == 0;
                report.frames_received += 1;
                if report.states_observed.last() != Some(&frame.state_name) {
                    report.states_observed.push(frame.state_name.clone());
                }
                report.luminosity_trace.push((frame.tick, frame.group_luminosity));
                if let Some(av) = frame.avatars.iter().find(|a| a.id == p.me) {
                    let lag = seq.saturating_sub(av.seq) as f64 * tick_dt * 1e3;
                    report.max_pose_staleness = report.max_pose_staleness.max(lag);
                }
                if frame.finished && report.final_frame_digest.is_none() {
                    report.finished = true;
                    report.final_tick = Some(frame.tick);
                    report.final_frame_digest = Some(frame_digest(&Message::WorldFrame(frame.clone())));
                }
                if opts.until_finished && report.finished {
                    complete = true;
                    break;
                }
                let (head, left, right) = p.advance(tick_dt, &frame, first);
                seq += 1;
                let update = PoseUpdate {
                    seq,
                    head,
                    left,
                    right,
                    mudra_left: p.mudra[0],
                    mudra_right: p.mudra[1],
                };
                if out.send(Message::PoseUpdate(update)).await.is_err() {
                    break;
                }
                if !opts.until_finished && p.done() {
                    complete = true;
                    break;
                }
            }
            Ok(_) => {}
        }
    }
    if !complete {
        report.partial = true;
        report.errors.push("server closed the connection mid-script".into());
    }
    let _ = out.send(Message::Leave).await;
    report.wall_seconds = started.elapsed().as_secs_f64();
    Ok(report)
}

/// One bot per script, run concurrently. Each bot's fault stream gets its
/// own seed (`profile.seed + i`). Join rejections stay in the individual
/// reports; connection failures fail the ensemble.
pub async fn run_ensemble(
    addr: SocketAddr,
    bots: Vec<(String, BotScript)>,
    fault: Option<FaultProfile>,
    until_finished: bool,
    max_wall: Option<Duration>,
) -> Result<Vec<BotReport>, BotError> {
    let total = bots.len();
    let handles: Vec<_> = bots
        .into_iter()
        .enumerate()
        .map(|(i, (name, script))| {
            let opts = BotOptions {
                name: name.clone(),
                role: Role::Participant,
                until_finished,
                max_wall,
                fault: fault.map(|p| FaultProfile { seed: p.seed.wrapping_add(i as u64), ..p }),
            };
            (name, tokio::spawn(run_bot(addr, script, opts)))
        })
        .collect();
    let mut reports = Vec::new();
    let mut failed = Vec::new();
    for (name, h) in handles {
        match h.await {
            Ok(Ok(r)) => reports.push(r),
            Ok(Err(e)) => failed.push(format!("{name}: {e}")),
            Err(e) => failed.push(format!("{name}: {e}")),
        }
    }
    if !failed.is_empty() {
        return Err(BotError::Ensemble { count: failed.len(), total, detail: failed.join("; ") });
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame() -> WorldFrame {
        WorldFrame {
            tick: 1,
            state_index: 0,
            state_name: "a".into(),
            finished: false,
            avatars: vec![],
            sim_positions: vec![[0, 10_000, 10_000], [20_000, 10_000, 0]],
            group_luminosity: 0.0,
            scale: 1.0,
        }
    }

    fn play(script: BotScript, ticks: usize, dt: f64) -> Vec<(Pose, Pose, Pose, [Mudra; 2])> {
        let f = frame();
        let mut p = Player::new(script, 1, RigidTransform::IDENTITY);
        (0..ticks)
            .map(|i| {
                let (h, l, r) = p.advance(dt, &f, i == 0);
                (h, l, r, p.mudra)
            })
            .collect()
    }

    #[test]
    fn shipped_scripts_parse() {
        for name in shipped_script_names() {
            let s = shipped_script(name).unwrap();
            assert_eq!(s.name, name);
            assert!(s.duration() > 0.0);
        }
    }

    #[test]
    fn move_to_is_linear() {
        let s = BotScript {
            version: 1,
            name: "m".into(),
            start: [0.0, 1.6, 1.0],
            actions: vec![Action::MoveTo { to: [0.0, 1.6, 0.0], over: 1.0 }],
        };
        let poses = play(s, 12, 0.1);
        // pose i is sent at t = (i + 1) dt
        assert!((poses[4].0.position.z - 0.5).abs() < 1e-12);
        assert!(poses[9].0.position.z.abs() < 1e-12);
        assert!(poses[11].0.position.z.abs() < 1e-12);
        assert!((poses[4].2.position.x - 0.2).abs() < 1e-12);
    }

    #[test]
    fn breathing_raises_hands_three_times() {
        let s = shipped_script("breathing_arms").unwrap();
        let n = (s.duration() / 0.05).round() as usize;
        let ys: Vec<f64> = play(s, n, 0.05).iter().map(|p| p.1.position.y).collect();
        let peaks = ys.windows(3).filter(|w| w[1] > w[0] && w[1] >= w[2] && w[1] > 1.5).count();
        assert_eq!(peaks, 3);
    }

    #[test]
    fn grab_reaches_then_pinches_then_releases() {
        let s = BotScript {
            version: 1,
            name: "g".into(),
            start: [0.0, 1.6, 1.0],
            actions: vec![
                Action::GrabNearest { hand: Hand::Right, seconds: 1.0, pull: [0.0, 0.5, 0.0] },
                Action::Idle { seconds: 0.5 },
            ],
        };
        let poses = play(s, 16, 0.1);
        // nearest bead to the right hand at (0.2, 1.1, 1.0) is (0, 1, 1)
        assert!(poses[0].2.position.distance(Vec3::new(0.0, 1.05, 1.0)) < 1e-12);
        assert_eq!(poses[0].3[1], Mudra::Index);
        assert!((poses[4].2.position.y - 1.25).abs() < 1e-9);
        assert_eq!(poses[12].3[1], Mudra::None);
        assert!((poses[12].2.position.x - 0.2).abs() < 1e-12);
    }

    #[test]
    fn bad_scripts_rejected() {
        let doc = br#"{"version":1,"name":"x","actions":[{"action":"idle","seconds":0}]}"#;
        assert!(BotScript::from_json(doc).is_err());
        let doc = br#"{"version":1,"name":"x","actions":[{"action":"jump"}]}"#;
        let e = BotScript::from_json(doc).unwrap_err().to_string();
        assert!(e.contains("actions[0]"), "{e}");
    }
}
