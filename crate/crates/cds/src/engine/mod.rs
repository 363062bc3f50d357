//! Reified execution: least-model derivation per tick, timed states, and
//! bounded trajectory enumeration under guarded interference.

pub mod derive;
pub mod explore;

use std::collections::BTreeSet;

use serde_json::{json, Value};
use thiserror::Error;

use crate::heap::HeapState;
use crate::interference::InterferenceAction;

pub use derive::{apply_step, ground_with_binding, holds, Evaluator, GroundAtom, GroundTerm};
pub use explore::{explore_states, trajectories, StateGraph};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EngineError {
    #[error("symbol `{symbol}` is not bound to a node or key")]
    UnboundSymbol { symbol: String },
    #[error("a link step cannot modify the tail sentinel")]
    TailModified,
}

/// One tick of a trajectory: the concrete heap plus its cached least model.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TimedState {
    pub state: HeapState,
    pub derived: BTreeSet<GroundAtom>,
}

impl TimedState {
    pub fn new(evaluator: &Evaluator, state: HeapState) -> Self {
        let derived = evaluator.derive(&state);
        TimedState { state, derived }
    }
}

/// What happened between two consecutive ticks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ActionEvent {
    /// The environment did nothing this tick.
    Idle,
    /// The environment ran one operation block (possibly a guarded subset
    /// of its steps) atomically.
    Interference(InterferenceAction),
    /// The instrumented thread itself applied one link step.
    ProgramStep {
        op: String,
        index: usize,
        step: crate::dsl::Step,
        binding: crate::instance::Binding,
    },
}

impl ActionEvent {
    pub fn kind(&self) -> &'static str {
        match self {
            ActionEvent::Idle => "idle",
            ActionEvent::Interference(_) => "interference",
            ActionEvent::ProgramStep { .. } => "program-step",
        }
    }

    pub fn actor(&self) -> &'static str {
        match self {
            ActionEvent::ProgramStep { .. } => "self",
            _ => "environment",
        }
    }

    /// Short human-readable form, resolving node ids against the state the
    /// event fired in.
    pub fn render(&self, state: &HeapState) -> String {
        match self {
            ActionEvent::Idle => "idle".to_string(),
            ActionEvent::Interference(a) => a.render(state),
            ActionEvent::ProgramStep { op, index, step, .. } => {
                format!("{op} step {}: {step}", index + 1)
            }
        }
    }
}

/// A bounded alternating sequence of states and events:
/// `states.len() == events.len() + 1`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub states: Vec<TimedState>,
    pub events: Vec<ActionEvent>,
}

impl Trajectory {
    pub fn start(initial: TimedState) -> Self {
        Trajectory { states: vec![initial], events: Vec::new() }
    }

    pub fn last(&self) -> &TimedState {
        self.states.last().expect("trajectory holds at least the start state")
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn push(&mut self, event: ActionEvent, next: TimedState) {
        self.events.push(event);
        self.states.push(next);
    }

    /// Witness form for reports: the event per tick plus the derived-atom
    /// delta it caused. Full states stay out of the report by design.
    pub fn witness(&self) -> Value {
        let mut ticks = Vec::new();
        for (i, ev) in self.events.iter().enumerate() {
            let before = &self.states[i];
            let after = &self.states[i + 1];
            let added: Vec<String> = after
                .derived
                .difference(&before.derived)
                .map(|a| a.render(&after.state))
                .collect();
            let removed: Vec<String> = before
                .derived
                .difference(&after.derived)
                .map(|a| a.render(&before.state))
                .collect();
            ticks.push(json!({
                "tick": i + 1,
                "event": ev.render(&before.state),
                "kind": ev.kind(),
                "actor": ev.actor(),
                "derived_added": added,
                "derived_removed": removed,
            }));
        }
        json!(ticks)
    }
}

/// First trajectory in enumeration order satisfying the condition, if any.
pub fn satisfiable<F>(condition: F, candidates: impl IntoIterator<Item = Trajectory>) -> Option<Trajectory>
where
    F: Fn(&Trajectory) -> bool,
{
    candidates.into_iter().find(|t| condition(t))
}
