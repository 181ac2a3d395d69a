use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{AestheticState, ParamRegistry, ParamValue, Phase, StateError, StateSequence};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledState {
    pub phase: Phase,
    pub state: AestheticState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MachineMode {
    Running,
    Held,
    Finished,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum MachineEvent {
    StateEntered { index: usize, phase: Phase, name: String },
    Finished,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum MachineCommand {
    Hold,
    Resume,
    Skip,
    SetOverride { key: String, value: ParamValue },
    ClearOverride { key: String },
}

/// Plays the states of one or more sequences back to back.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMachine {
    registry: Arc<ParamRegistry>,
    states: Arc<[ScheduledState]>,
    index: usize,
    elapsed: f64,
    mode: MachineMode,
    overrides: BTreeMap<String, ParamValue>,
}

impl StateMachine {
    pub fn new(sequences: &[StateSequence], registry: Arc<ParamRegistry>) -> Result<Self, StateError> {
        let states: Vec<ScheduledState> = sequences
            .iter()
            .flat_map(|seq| {
                seq.states.iter().map(move |st| ScheduledState { phase: seq.phase, state: st.clone() })
            })
            .collect();
        if states.is_empty() {
            return Err(StateError::Empty);
        }
        Ok(Self {
            registry,
            states: states.into(),
            index: 0,
            elapsed: 0.0,
            mode: MachineMode::Running,
            overrides: BTreeMap::new(),
        })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn elapsed(&self) -> f64 {
        self.elapsed
    }

    pub fn mode(&self) -> MachineMode {
        self.mode
    }

    pub fn is_finished(&self) -> bool {
        self.mode == MachineMode::Finished
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn current(&self) -> &ScheduledState {
        &self.states[self.index]
    }

    pub fn schedule(&self) -> &[ScheduledState] {
        &self.states
    }

    pub fn overrides(&self) -> &BTreeMap<String, ParamValue> {
        &self.overrides
    }

    pub fn registry(&self) -> &ParamRegistry {
        &self.registry
    }

    pub fn total_duration(&self) -> f64 {
        self.states.iter().map(|s| s.state.duration).sum()
    }

    fn entered(&self) -> MachineEvent {
        let cur = self.current();
        MachineEvent::StateEntered { index: self.index, phase: cur.phase, name: cur.state.name.clone() }
    }

    /// Advances by `dt` seconds. Time past a boundary carries into the next
    /// state, so several boundaries may be crossed in one call.
    pub fn tick(&mut self, dt: f64) -> Vec<MachineEvent> {
        let mut events = Vec::new();
        if self.mode != MachineMode::Running || !(dt > 0.0) {
            return events;
        }
        self.elapsed += dt;
        loop {
            let duration = self.current().state.duration;
            if self.elapsed < duration {
                break;
            }
            if self.index + 1 == self.states.len() {
                self.elapsed = duration;
                self.mode = MachineMode::Finished;
                events.push(MachineEvent::Finished);
                break;
            }
            self.elapsed -= duration;
            self.index += 1;
            events.push(self.entered());
        }
        events
    }

    /// Current values: the state's params, blended from the previous state
    /// during its crossfade window, with facilitator overrides on top.
    pub fn effective_params(&self) -> Result<BTreeMap<String, ParamValue>, StateError> {
        if self.is_finished() {
            return Err(StateError::Finished);
        }
        let cur = &self.current().state;
        let mut out = cur.params.clone();
        if self.index > 0 && cur.crossfade > 0.0 && self.elapsed < cur.crossfade {
            let w = self.elapsed / cur.crossfade;
            let prev = &self.states[self.index - 1].state.params;
            for (key, value) in out.iter_mut() {
                if let (Some(from), Some(to)) = (prev.get(key).and_then(ParamValue::as_scalar), value.as_scalar()) {
                    *value = ParamValue::Scalar(from + (to - from) * w);
                }
            }
        }
        for (key, value) in &self.overrides {
            out.insert(key.clone(), value.clone());
        }
        Ok(out)
    }

    pub fn apply(&mut self, command: &MachineCommand) -> Result<Vec<MachineEvent>, StateError> {
        match command {
            MachineCommand::Hold => {
                if self.mode == MachineMode::Running {
                    self.mode = MachineMode::Held;
                }
            }
            MachineCommand::Resume => {
                if self.mode == MachineMode::Held {
                    self.mode = MachineMode::Running;
                }
            }
            MachineCommand::Skip => {
                if self.is_finished() {
                    return Err(StateError::Finished);
                }
                if self.index + 1 == self.states.len() {
                    self.elapsed = self.current().state.duration;
                    self.mode = MachineMode::Finished;
                    return Ok(vec![MachineEvent::Finished]);
                }
                self.index += 1;
                self.elapsed = 0.0;
                return Ok(vec![self.entered()]);
            }
            MachineCommand::SetOverride { key, value } => {
                self.registry.check(key, value)?;
                self.overrides.insert(key.clone(), value.clone());
            }
            MachineCommand::ClearOverride { key } => {
                if self.registry.get(key).is_none() {
                    return Err(StateError::UnregisteredParameter(key.clone()));
                }
                self.overrides.remove(key);
            }
        }
        Ok(Vec::new())
    }
}
