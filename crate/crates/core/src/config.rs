use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simdyn::{IntegratorParams, RingTopology, SimError};
use crate::spatial::{BodyKernel, PlaySpace, SpatialError};
use crate::states::{ParamRegistry, StateError, StateSequence};

/// Upper bound on participant slots in one session.
pub const MAX_PARTICIPANTS: usize = 5;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("max_participants must be in 1..={MAX_PARTICIPANTS}, got {0}")]
    Participants(usize),
    #[error("invalid {what}: {value}")]
    Invalid { what: &'static str, value: f64 },
    #[error(transparent)]
    Spatial(#[from] SpatialError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("sequence {index}: {source}")]
    Sequence { index: usize, source: StateError },
    #[error("config JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// Spring constants for pinch-to-grab.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionParams {
    pub stiffness: f64,
    pub max_force: f64,
}

impl Default for InteractionParams {
    fn default() -> Self {
        Self { stiffness: 50.0, max_force: 5.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    /// Participant slots; also the number of radial positions around the center.
    pub max_participants: usize,
    /// Ticks per second.
    pub tick_rate: f64,
    /// Script seconds elapsed per wall-clock second (1 for a live session).
    pub time_scale: f64,
    pub play_space: PlaySpace,
    pub kernel: BodyKernel,
    pub topology: RingTopology,
    pub integrator: IntegratorParams,
    pub interaction: InteractionParams,
    /// Pick radius for pinch-to-grab, meters in the shared frame.
    pub grab_radius: f64,
    /// Script played in order; empty means the shipped reference script.
    pub sequences: Vec<StateSequence>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            max_participants: MAX_PARTICIPANTS,
            tick_rate: 30.0,
            time_scale: 1.0,
            play_space: PlaySpace::default(),
            kernel: BodyKernel::default(),
            topology: RingTopology::default(),
            integrator: IntegratorParams::default(),
            interaction: InteractionParams::default(),
            grab_radius: 0.15,
            sequences: Vec::new(),
        }
    }
}

impl SessionConfig {
    pub fn from_json(doc: &[u8]) -> Result<Self, ConfigError> {
        Ok(serde_json::from_slice(doc)?)
    }

    pub fn validate(&self, registry: &ParamRegistry) -> Result<(), ConfigError> {
        if !(1..=MAX_PARTICIPANTS).contains(&self.max_participants) {
            return Err(ConfigError::Participants(self.max_participants));
        }
        for (what, value) in [("tick_rate", self.tick_rate), ("time_scale", self.time_scale), ("grab_radius", self.grab_radius)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ConfigError::Invalid { what, value });
            }
        }
        PlaySpace::new(self.play_space.width, self.play_space.depth)?;
        self.kernel.validate()?;
        self.topology.validate()?;
        self.integrator.validate()?;
        if !(self.interaction.stiffness >= 0.0) {
            return Err(ConfigError::Invalid { what: "interaction stiffness", value: self.interaction.stiffness });
        }
        if !(self.interaction.max_force > 0.0) {
            return Err(ConfigError::Invalid { what: "interaction max_force", value: self.interaction.max_force });
        }
        for (index, seq) in self.sequences.iter().enumerate() {
            seq.validate(registry).map_err(|source| ConfigError::Sequence { index, source })?;
        }
        Ok(())
    }

    /// Wall-clock seconds between ticks.
    pub fn tick_interval(&self) -> f64 {
        1.0 / self.tick_rate
    }

    /// Integration substeps per tick so that each is no longer than the
    /// configured time step.
    pub fn substeps(&self) -> usize {
        (self.tick_interval() / self.integrator.dt).ceil().max(1.0) as usize
    }
}
