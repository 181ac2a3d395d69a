//! Network quality summaries and deterministic fault schedules.
//!
//! The measurement side (sending pings over a live connection) lives with
//! the session server; this module holds the pure parts: the report and its
//! verdict thresholds, the node acceptance gate, and the per-message fate
//! function used by fault injection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Loss below which a link can be good.
pub const GOOD_LOSS: f64 = 0.01;
/// Jitter (ms) below which a link can be good.
pub const GOOD_JITTER_MS: f64 = 30.0;
/// Loss above which a link is unusable.
pub const UNUSABLE_LOSS: f64 = 0.10;
/// Mean round trip (ms) above which a link is unusable.
pub const UNUSABLE_RTT_MS: f64 = 400.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Good,
    Degraded,
    Unusable,
}

pub fn classify(loss_fraction: f64, rtt_mean_ms: f64, rtt_jitter_ms: f64) -> Verdict {
    if loss_fraction > UNUSABLE_LOSS || rtt_mean_ms > UNUSABLE_RTT_MS {
        Verdict::Unusable
    } else if loss_fraction < GOOD_LOSS && rtt_jitter_ms < GOOD_JITTER_MS {
        Verdict::Good
    } else {
        Verdict::Degraded
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetReport {
    /// Pings sent.
    pub samples: usize,
    pub received: usize,
    pub rtt_mean: f64,
    /// Sample standard deviation of the round-trip times.
    pub rtt_jitter: f64,
    pub loss_fraction: f64,
    pub verdict: Verdict,
}

impl NetReport {
    /// Summarises `sent` probes of which `rtts_ms` came back. With no
    /// replies the timing fields are zero and the loss decides the verdict.
    pub fn from_rtts(sent: usize, rtts_ms: &[f64]) -> NetReport {
        let received = rtts_ms.len().min(sent);
        let loss_fraction = if sent == 0 { 1.0 } else { (sent - received) as f64 / sent as f64 };
        let rtt_mean = if rtts_ms.is_empty() { 0.0 } else { rtts_ms.iter().sum::<f64>() / rtts_ms.len() as f64 };
        let rtt_jitter = if rtts_ms.len() < 2 {
            0.0
        } else {
            let ss: f64 = rtts_ms.iter().map(|r| (r - rtt_mean).powi(2)).sum();
            (ss / (rtts_ms.len() - 1) as f64).sqrt()
        };
        NetReport {
            samples: sent,
            received,
            rtt_mean,
            rtt_jitter,
            loss_fraction,
            verdict: classify(loss_fraction, rtt_mean, rtt_jitter),
        }
    }
}

/// Why a node was flagged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateReason {
    PacketLoss,
    HighLatency,
    Jitter,
}

impl GateReason {
    pub fn label(self) -> &'static str {
        match self {
            GateReason::PacketLoss => "packet loss",
            GateReason::HighLatency => "high latency",
            GateReason::Jitter => "jitter",
        }
    }

    /// Suggested remediation for the node host.
    pub fn advice(self) -> &'static str {
        match self {
            GateReason::PacketLoss => "use a wired connection or move closer to the router; stop other uploads",
            GateReason::HighLatency => "check the route to the server; prefer a nearer server region",
            GateReason::Jitter => "pause competing traffic on the local network and retest",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", content = "reason", rename_all = "snake_case")]
pub enum GateOutcome {
    Pass,
    /// Usable but flagged.
    Warn(GateReason),
    Fail(GateReason),
}

impl GateOutcome {
    pub fn passed(self) -> bool {
        !matches!(self, GateOutcome::Fail(_))
    }
}

/// Nodes pass unless unusable; degraded nodes pass with a warning.
pub fn stability_gate(report: &NetReport) -> GateOutcome {
    match report.verdict {
        Verdict::Good => GateOutcome::Pass,
        Verdict::Unusable => {
            if report.loss_fraction > UNUSABLE_LOSS {
                GateOutcome::Fail(GateReason::PacketLoss)
            } else {
                GateOutcome::Fail(GateReason::HighLatency)
            }
        }
        Verdict::Degraded => {
            if report.loss_fraction >= GOOD_LOSS {
                GateOutcome::Warn(GateReason::PacketLoss)
            } else {
                GateOutcome::Warn(GateReason::Jitter)
            }
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum FaultError {
    #[error("{what} must be within [0, 1], got {value}")]
    Probability { what: &'static str, value: f64 },
    #[error("{what} must be a non-negative number of milliseconds, got {value}")]
    Delay { what: &'static str, value: f64 },
}

/// Message-level impairment applied above a reliable stream.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultProfile {
    pub seed: u64,
    /// Milliseconds added to every message.
    #[serde(default)]
    pub base_delay: f64,
    /// Half-width (ms) of the uniform delay variation.
    #[serde(default)]
    pub jitter: f64,
    #[serde(default)]
    pub drop_p: f64,
    #[serde(default)]
    pub dup_p: f64,
}

impl FaultProfile {
    pub fn validate(&self) -> Result<(), FaultError> {
        for (what, value) in [("drop_p", self.drop_p), ("dup_p", self.dup_p)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(FaultError::Probability { what, value });
            }
        }
        for (what, value) in [("base_delay", self.base_delay), ("jitter", self.jitter)] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(FaultError::Delay { what, value });
            }
        }
        Ok(())
    }

    /// What happens to message number `seq`; depends only on the seed and `seq`.
    pub fn fate(&self, seq: u64) -> Fate {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(seq);
        let u_drop: f64 = rng.random();
        let u_dup: f64 = rng.random();
        let u_jitter: f64 = rng.random();
        let delay_ms = (self.base_delay + self.jitter * (2.0 * u_jitter - 1.0)).max(0.0);
        Fate { drop: u_drop < self.drop_p, duplicate: u_dup < self.dup_p, delay_ms }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fate {
    pub drop: bool,
    /// Delivered twice (ignored when dropped).
    pub duplicate: bool,
    pub delay_ms: f64,
}

impl Fate {
    pub fn copies(&self) -> usize {
        match (self.drop, self.duplicate) {
            (true, _) => 0,
            (false, true) => 2,
            (false, false) => 1,
        }
    }
}
