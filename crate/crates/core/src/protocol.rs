//! Wire protocol between clients and the session server.
//!
//! A frame is a 4-byte big-endian payload length followed by the payload:
//! one message as canonical JSON (UTF-8, sorted keys, no whitespace).
//! Before encoding, positions are rounded to 0.0001 m and rotations and
//! light values to 1e-6, so equal messages always produce equal bytes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::SessionConfig;
use crate::spatial::{Pose, Quat, Vec3};
use crate::states::{MachineCommand, ParamValue};

pub const PROTOCOL_VERSION: u32 = 1;
pub const DEFAULT_PORT: u16 = 38801;
pub const MAX_PAYLOAD: usize = 1 << 20;
const HEADER: usize = 4;

/// Quantized position units per meter (0.0001 m resolution).
pub const POSITION_SCALE: f64 = 1e4;
/// Quantized units per unit of rotation component or light value.
pub const ANGLE_SCALE: f64 = 1e6;

#[derive(Debug, Error, PartialEq)]
pub enum EncodeError {
    #[error("payload of {0} bytes exceeds the 1 MiB frame limit")]
    TooLarge(usize),
    #[error("message contains a non-finite number")]
    NonFinite,
    #[error("serialization failed: {0}")]
    Serialize(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum DecodeError {
    #[error("incomplete frame")]
    NeedMoreData,
    #[error("declared payload of {0} bytes exceeds the 1 MiB frame limit")]
    FrameTooLarge(usize),
    #[error("unknown message type {0:?}")]
    UnknownTag(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("protocol version {found} not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Participant,
    Facilitator,
    Observer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mudra {
    #[default]
    None,
    Index,
    Middle,
}

impl Mudra {
    pub fn is_pinched(self) -> bool {
        self != Mudra::None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hand {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum FacilitatorCommand {
    Hold,
    Resume,
    Skip,
    SetOverride { key: String, value: ParamValue },
    ClearOverride { key: String },
    SetScale { scale: f64 },
    Spectate { on: bool },
}

impl FacilitatorCommand {
    /// The state-machine part of the command, if any.
    pub fn machine_command(&self) -> Option<MachineCommand> {
        Some(match self {
            FacilitatorCommand::Hold => MachineCommand::Hold,
            FacilitatorCommand::Resume => MachineCommand::Resume,
            FacilitatorCommand::Skip => MachineCommand::Skip,
            FacilitatorCommand::SetOverride { key, value } => {
                MachineCommand::SetOverride { key: key.clone(), value: value.clone() }
            }
            FacilitatorCommand::ClearOverride { key } => MachineCommand::ClearOverride { key: key.clone() },
            FacilitatorCommand::SetScale { .. } | FacilitatorCommand::Spectate { .. } => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JoinRequest {
    pub version: u32,
    pub role: Role,
    pub node_label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JoinAccept {
    pub participant_id: u32,
    pub role: Role,
    /// Radial slot; `None` for the facilitator and observers.
    pub node_index: Option<usize>,
    pub n_participants: usize,
    pub session_config: SessionConfig,
    /// Latest frame, for clients joining mid-session.
    pub snapshot: Option<WorldFrame>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseUpdate {
    pub seq: u64,
    pub head: Pose,
    pub left: Pose,
    pub right: Pose,
    pub mudra_left: Mudra,
    pub mudra_right: Mudra,
}

impl PoseUpdate {
    pub fn mudra(&self, hand: Hand) -> Mudra {
        match hand {
            Hand::Left => self.mudra_left,
            Hand::Right => self.mudra_right,
        }
    }

    pub fn hand(&self, hand: Hand) -> &Pose {
        match hand {
            Hand::Left => &self.left,
            Hand::Right => &self.right,
        }
    }
}

/// One visible body in a broadcast frame, in the shared frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvatarView {
    pub id: u32,
    pub role: Role,
    pub head: Pose,
    pub left: Pose,
    pub right: Pose,
    pub luminosity: f64,
    /// Sequence number of the pose update this view reflects.
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldFrame {
    pub tick: u64,
    pub state_index: usize,
    pub state_name: String,
    pub finished: bool,
    pub avatars: Vec<AvatarView>,
    /// Bead positions in 0.0001 m units, render scale applied.
    pub sim_positions: Vec<[i64; 3]>,
    pub group_luminosity: f64,
    pub scale: f64,
}

impl WorldFrame {
    pub fn quantize_positions(points: impl IntoIterator<Item = Vec3>) -> Vec<[i64; 3]> {
        let q = |v: f64| (v * POSITION_SCALE).round() as i64;
        points.into_iter().map(|p| [q(p.x), q(p.y), q(p.z)]).collect()
    }

    pub fn bead_position(&self, bead: usize) -> Option<Vec3> {
        self.sim_positions.get(bead).map(|&[x, y, z]| {
            Vec3::new(x as f64 / POSITION_SCALE, y as f64 / POSITION_SCALE, z as f64 / POSITION_SCALE)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    JoinRequest(JoinRequest),
    JoinAccept(Box<JoinAccept>),
    JoinReject { reason: String },
    PoseUpdate(PoseUpdate),
    Ping { nonce: u64 },
    Pong { nonce: u64 },
    FacilitatorCommand { command: FacilitatorCommand },
    WorldFrame(WorldFrame),
    Leave,
    Error { code: String, detail: String },
}

const TAGS: &[&str] = &[
    "join_request",
    "join_accept",
    "join_reject",
    "pose_update",
    "ping",
    "pong",
    "facilitator_command",
    "world_frame",
    "leave",
    "error",
];

fn q(v: f64, scale: f64) -> f64 {
    // dividing the integer count yields the double nearest the decimal value
    let r = (v * scale).round() / scale;
    // avoid encoding negative zero
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn q_pose(p: &Pose) -> Pose {
    Pose {
        position: Vec3::new(q(p.position.x, POSITION_SCALE), q(p.position.y, POSITION_SCALE), q(p.position.z, POSITION_SCALE)),
        orientation: Quat {
            w: q(p.orientation.w, ANGLE_SCALE),
            x: q(p.orientation.x, ANGLE_SCALE),
            y: q(p.orientation.y, ANGLE_SCALE),
            z: q(p.orientation.z, ANGLE_SCALE),
        },
    }
}

fn pose_finite(p: &Pose) -> bool {
    p.position.is_finite() && p.orientation.is_finite()
}

impl WorldFrame {
    fn quantized(&self) -> WorldFrame {
        let mut avatars: Vec<AvatarView> = self
            .avatars
            .iter()
            .map(|a| AvatarView {
                head: q_pose(&a.head),
                left: q_pose(&a.left),
                right: q_pose(&a.right),
                luminosity: q(a.luminosity, ANGLE_SCALE),
                ..a.clone()
            })
            .collect();
        avatars.sort_by_key(|a| a.id);
        WorldFrame {
            avatars,
            group_luminosity: q(self.group_luminosity, ANGLE_SCALE),
            scale: q(self.scale, ANGLE_SCALE),
            ..self.clone()
        }
    }

    fn is_finite(&self) -> bool {
        self.group_luminosity.is_finite()
            && self.scale.is_finite()
            && self.avatars.iter().all(|a| {
                a.luminosity.is_finite() && pose_finite(&a.head) && pose_finite(&a.left) && pose_finite(&a.right)
            })
    }
}

impl Message {
    /// The message as it will read after a trip through the wire.
    pub fn quantized(&self) -> Message {
        match self {
            Message::PoseUpdate(p) => Message::PoseUpdate(PoseUpdate {
                head: q_pose(&p.head),
                left: q_pose(&p.left),
                right: q_pose(&p.right),
                ..p.clone()
            }),
            Message::WorldFrame(f) => Message::WorldFrame(f.quantized()),
            Message::JoinAccept(a) => Message::JoinAccept(Box::new(JoinAccept {
                snapshot: a.snapshot.as_ref().map(WorldFrame::quantized),
                ..(**a).clone()
            })),
            other => other.clone(),
        }
    }

    fn is_finite(&self) -> bool {
        match self {
            Message::PoseUpdate(p) => pose_finite(&p.head) && pose_finite(&p.left) && pose_finite(&p.right),
            Message::WorldFrame(f) => f.is_finite(),
            Message::JoinAccept(a) => a.snapshot.as_ref().is_none_or(WorldFrame::is_finite),
            Message::FacilitatorCommand { command: FacilitatorCommand::SetScale { scale } } => scale.is_finite(),
            Message::FacilitatorCommand { command: FacilitatorCommand::SetOverride { value: ParamValue::Scalar(v), .. } } => {
                v.is_finite()
            }
            _ => true,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Message::JoinRequest(_) => "join_request",
            Message::JoinAccept(_) => "join_accept",
            Message::JoinReject { .. } => "join_reject",
            Message::PoseUpdate(_) => "pose_update",
            Message::Ping { .. } => "ping",
            Message::Pong { .. } => "pong",
            Message::FacilitatorCommand { .. } => "facilitator_command",
            Message::WorldFrame(_) => "world_frame",
            Message::Leave => "leave",
            Message::Error { .. } => "error",
        }
    }
}

/// Canonical JSON payload of a message, without the length prefix.
pub fn encode_payload(m: &Message) -> Result<Vec<u8>, EncodeError> {
    if !m.is_finite() {
        return Err(EncodeError::NonFinite);
    }
    crate::canonical::to_vec(&m.quantized()).map_err(|e| EncodeError::Serialize(e.to_string()))
}

pub fn encode(m: &Message) -> Result<Vec<u8>, EncodeError> {
    let payload = encode_payload(m)?;
    if payload.len() > MAX_PAYLOAD {
        return Err(EncodeError::TooLarge(payload.len()));
    }
    let mut out = Vec::with_capacity(HEADER + payload.len());
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(&payload);
    Ok(out)
}

/// A decoded message and the number of bytes it occupied; anything after
/// `consumed` belongs to the next frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub message: Message,
    pub consumed: usize,
}

/// Declared payload length, once the prefix is available.
pub fn frame_len(buf: &[u8]) -> Result<usize, DecodeError> {
    let prefix: [u8; HEADER] = buf.get(..HEADER).ok_or(DecodeError::NeedMoreData)?.try_into().unwrap();
    let len = u32::from_be_bytes(prefix) as usize;
    if len > MAX_PAYLOAD {
        return Err(DecodeError::FrameTooLarge(len));
    }
    Ok(len)
}

pub fn decode_payload(payload: &[u8]) -> Result<Message, DecodeError> {
    let value: serde_json::Value =
        serde_json::from_slice(payload).map_err(|e| DecodeError::Protocol(e.to_string()))?;
    let tag = value
        .get("type")
        .ok_or_else(|| DecodeError::Protocol("missing message type".into()))?
        .as_str()
        .ok_or_else(|| DecodeError::Protocol("message type is not a string".into()))?;
    if !TAGS.contains(&tag) {
        return Err(DecodeError::UnknownTag(tag.to_string()));
    }
    let message: Message = serde_json::from_value(value).map_err(|e| DecodeError::Protocol(e.to_string()))?;
    if let Message::JoinRequest(req) = &message {
        if req.version != PROTOCOL_VERSION {
            return Err(DecodeError::VersionMismatch { found: req.version, expected: PROTOCOL_VERSION });
        }
    }
    Ok(message)
}

pub fn decode(buf: &[u8]) -> Result<Decoded, DecodeError> {
    let len = frame_len(buf)?;
    let end = HEADER + len;
    let payload = buf.get(HEADER..end).ok_or(DecodeError::NeedMoreData)?;
    Ok(Decoded { message: decode_payload(payload)?, consumed: end })
}

/// Accumulates stream bytes and yields complete messages.
#[derive(Debug, Default)]
pub struct FrameBuffer {
    buf: Vec<u8>,
}

impl FrameBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn extend(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }

    /// `Ok(None)` until a whole frame is buffered. A malformed frame is
    /// consumed before its error is returned.
    pub fn next_message(&mut self) -> Result<Option<Message>, DecodeError> {
        let len = match frame_len(&self.buf) {
            Err(DecodeError::NeedMoreData) => return Ok(None),
            Err(e) => return Err(e),
            Ok(len) => len,
        };
        if self.buf.len() < HEADER + len {
            return Ok(None);
        }
        let result = decode_payload(&self.buf[HEADER..HEADER + len]);
        self.buf.drain(..HEADER + len);
        result.map(Some)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoseDisposition {
    Keep,
    Drop,
}

/// Latest-wins: only strictly newer sequence numbers are applied.
pub fn accept_pose(last_seq: Option<u64>, incoming: &PoseUpdate) -> PoseDisposition {
    match last_seq {
        Some(last) if incoming.seq <= last => PoseDisposition::Drop,
        _ => PoseDisposition::Keep,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pose_update(seq: u64) -> PoseUpdate {
        PoseUpdate {
            seq,
            head: Pose::at(Vec3::new(0.123456, 1.6, -0.3)),
            left: Pose::at(Vec3::new(-0.2, 1.2, 0.0)),
            right: Pose::at(Vec3::new(0.2, 1.2, 0.0)),
            mudra_left: Mudra::None,
            mudra_right: Mudra::Index,
        }
    }

    #[test]
    fn ping_frame_layout() {
        let bytes = encode(&Message::Ping { nonce: 0 }).unwrap();
        let payload = br#"{"nonce":0,"type":"ping"}"#;
        assert_eq!(&bytes[..4], &(payload.len() as u32).to_be_bytes());
        assert_eq!(&bytes[4..], payload);
    }

    #[test]
    fn latest_wins() {
        assert_eq!(accept_pose(Some(10), &pose_update(11)), PoseDisposition::Keep);
        assert_eq!(accept_pose(Some(10), &pose_update(10)), PoseDisposition::Drop);
        assert_eq!(accept_pose(Some(10), &pose_update(7)), PoseDisposition::Drop);
        assert_eq!(accept_pose(None, &pose_update(0)), PoseDisposition::Keep);
    }

    #[test]
    fn truncated_prefix_needs_more() {
        assert_eq!(decode(&[0, 0]), Err(DecodeError::NeedMoreData));
        let bytes = encode(&Message::Leave).unwrap();
        assert_eq!(decode(&bytes[..bytes.len() - 1]), Err(DecodeError::NeedMoreData));
        let mut fb = FrameBuffer::new();
        fb.extend(&bytes[..3]);
        assert_eq!(fb.next_message(), Ok(None));
        assert_eq!(fb.buffered(), 3);
    }

    #[test]
    fn unknown_tag_is_named() {
        let payload = br#"{"type":"teleport"}"#;
        let mut frame = (payload.len() as u32).to_be_bytes().to_vec();
        frame.extend_from_slice(payload);
        assert_eq!(decode(&frame), Err(DecodeError::UnknownTag("teleport".into())));
    }

    #[test]
    fn oversized_frames_rejected() {
        let frame = ((MAX_PAYLOAD + 1) as u32).to_be_bytes();
        assert_eq!(decode(&frame), Err(DecodeError::FrameTooLarge(MAX_PAYLOAD + 1)));
        let huge = Message::Error { code: "x".into(), detail: "y".repeat(MAX_PAYLOAD) };
        assert!(matches!(encode(&huge), Err(EncodeError::TooLarge(_))));
    }

    #[test]
    fn version_mismatch_reported() {
        let req = Message::JoinRequest(JoinRequest { version: 9, role: Role::Participant, node_label: "n".into() });
        let bytes = encode(&req).unwrap();
        assert_eq!(decode(&bytes), Err(DecodeError::VersionMismatch { found: 9, expected: PROTOCOL_VERSION }));
    }

    #[test]
    fn remainder_is_left() {
        let mut bytes = encode(&Message::Ping { nonce: 5 }).unwrap();
        let first = bytes.len();
        bytes.extend(encode(&Message::Pong { nonce: 5 }).unwrap());
        let d = decode(&bytes).unwrap();
        assert_eq!(d.consumed, first);
        assert_eq!(decode(&bytes[d.consumed..]).unwrap().message, Message::Pong { nonce: 5 });
    }

    #[test]
    fn quantization_and_canonical_avatars() {
        let m = Message::PoseUpdate(pose_update(3));
        let back = decode(&encode(&m).unwrap()).unwrap().message;
        match &back {
            Message::PoseUpdate(p) => assert_eq!(p.head.position.x, 0.1235),
            other => panic!("{other:?}"),
        }
        assert_eq!(encode(&back).unwrap(), encode(&m).unwrap());

        let av = |id| AvatarView {
            id,
            role: Role::Participant,
            head: Pose::default(),
            left: Pose::default(),
            right: Pose::default(),
            luminosity: 1.0,
            seq: 0,
        };
        let frame = |avatars| {
            Message::WorldFrame(WorldFrame {
                tick: 1,
                state_index: 0,
                state_name: "a".into(),
                finished: false,
                avatars,
                sim_positions: vec![[1, 2, 3]],
                group_luminosity: 2.0,
                scale: 1.0,
            })
        };
        assert_eq!(encode(&frame(vec![av(1), av(2)])).unwrap(), encode(&frame(vec![av(2), av(1)])).unwrap());
    }

    #[test]
    fn non_finite_rejected() {
        let mut p = pose_update(1);
        p.head.position.x = f64::NAN;
        assert_eq!(encode(&Message::PoseUpdate(p)), Err(EncodeError::NonFinite));
    }
}
