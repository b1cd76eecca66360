//! Turns per-step local decisions into one consistent action sequence and
//! location row per entity.
//!
//! The stages run in order:
//! 1. [`prune_conflicts`] keeps the first decision of each step.
//! 2. [`fix_actions`] is a forward pass over the last observed action and location.
//! 3. [`enforce_existence`] drops a destroy that a later move contradicts.
//! 4. [`resolve_locations`] picks the initial location and fills missing targets.
//! 5. [`settle`] removes moves that do not change the location.
//!
//! [`reason`] runs all five.

use serde::{Deserialize, Serialize};

use crate::abstraction::PassiveLocationFact;
use crate::corpus::{replay, ActionKind, Entity, LocationValue, StepAction};
use crate::local_rules::{match_argument, LocalDecision};
use crate::text::normalize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityTimeline {
    pub entity: String,
    /// `slots[t - 1]` holds the decisions for step `t`.
    pub slots: Vec<Vec<LocalDecision>>,
    pub passive: Vec<PassiveLocationFact>,
}

impl EntityTimeline {
    pub fn empty(entity: &str, steps: usize) -> Self {
        EntityTimeline {
            entity: entity.to_string(),
            slots: vec![Vec::new(); steps],
            passive: Vec::new(),
        }
    }

    /// Collects the decisions and passive facts that concern `entity`.
    pub fn build(entity: &Entity, steps: usize, decisions: &[LocalDecision], passive: &[PassiveLocationFact]) -> Self {
        let mut tl = EntityTimeline::empty(&entity.name, steps);
        for d in decisions.iter().filter(|d| d.entity == entity.name) {
            if (1..=steps).contains(&d.step_index) {
                tl.slots[d.step_index - 1].push(d.clone());
            }
        }
        tl.passive = passive
            .iter()
            .filter(|f| (1..=steps).contains(&f.step_index) && match_argument(&f.holder, entity, f.step_index))
            .cloned()
            .collect();
        tl
    }

    pub fn steps(&self) -> usize {
        self.slots.len()
    }

    pub fn has_decisions(&self) -> bool {
        self.slots.iter().any(|s| !s.is_empty())
    }

    /// First passive location stated for the entity at each step.
    fn passive_by_step(&self) -> Vec<Option<LocationValue>> {
        let mut out = vec![None; self.steps()];
        for f in &self.passive {
            let slot = &mut out[f.step_index - 1];
            if slot.is_none() {
                *slot = LocationValue::parse(&normalize(&f.location.text))
                    .ok()
                    .filter(|l| matches!(l, LocationValue::Known(_)));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningOptions {
    /// Rewrite a second destroy at a new location to `None` instead of `Move`.
    pub strict_destroy: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedSequence {
    pub actions: Vec<StepAction>,
    pub initial_location: LocationValue,
}

impl FixedSequence {
    pub fn cells(&self) -> Vec<LocationValue> {
        replay(&self.initial_location, &self.actions)
    }
}

/// One action per step: the first decision in frame order wins.
pub fn prune_conflicts(timeline: &EntityTimeline) -> Vec<StepAction> {
    timeline
        .slots
        .iter()
        .enumerate()
        .map(|(i, slot)| {
            if slot.len() > 1 {
                log::debug!(
                    "{}: step {} has {} decisions; keeping {} from {}",
                    timeline.entity,
                    i + 1,
                    slot.len(),
                    slot[0].action.kind(),
                    slot[0].provenance.frame_node
                );
            }
            slot.first().map(|d| d.action.clone()).unwrap_or_default()
        })
        .collect()
}

/// Location an action leaves the entity at, as observed by the forward pass.
fn observed_location(a: &StepAction) -> Option<LocationValue> {
    match a {
        StepAction::Create { to } | StepAction::Move { to, .. } => to.clone(),
        StepAction::Destroy { from } => from.clone(),
        StepAction::None => None,
    }
}

/// Forward pass over the pruned timeline.
///
/// After a create or move, a repeated create at the same location becomes
/// `None` and one at a new location becomes a move. After a destroy, a second
/// destroy at the same location becomes `None` and one at a new location
/// becomes a move (or `None` in strict mode). Rewritten moves become the last
/// observed action.
pub fn fix_actions(timeline: &EntityTimeline, opts: ReasoningOptions) -> Vec<StepAction> {
    fix_action_sequence(&prune_conflicts(timeline), opts)
}

pub fn fix_action_sequence(actions: &[StepAction], opts: ReasoningOptions) -> Vec<StepAction> {
    let mut out = Vec::with_capacity(actions.len());
    let mut last: Option<(ActionKind, Option<LocationValue>)> = None;
    for a in actions {
        if a.is_none() {
            out.push(StepAction::None);
            continue;
        }
        let fixed = match (&last, a) {
            (Some((ActionKind::Create | ActionKind::Move, last_loc)), StepAction::Create { to }) => {
                if to == last_loc {
                    StepAction::None
                } else {
                    StepAction::Move {
                        from: last_loc.clone(),
                        to: to.clone(),
                    }
                }
            }
            (Some((ActionKind::Destroy, last_loc)), StepAction::Destroy { from }) => {
                if from == last_loc || opts.strict_destroy {
                    StepAction::None
                } else {
                    StepAction::Move {
                        from: last_loc.clone(),
                        to: from.clone(),
                    }
                }
            }
            _ => a.clone(),
        };
        if !fixed.is_none() {
            last = Some((fixed.kind(), observed_location(&fixed)));
        }
        out.push(fixed);
    }
    out
}

/// Whether the entity exists before step 1: it does unless its first action
/// creates it.
pub fn exists_initially(actions: &[StepAction]) -> bool {
    !matches!(actions.iter().find(|a| !a.is_none()), Some(StepAction::Create { .. }))
}

/// Makes the sequence valid for an entity that can only be created while
/// absent and only moved or destroyed while present.
///
/// A move after a destroy means the destroy was the wrong decision and it is
/// dropped. A create while present is handled like a repeated create, and a
/// destroy while absent is dropped.
pub fn enforce_existence(actions: &[StepAction]) -> Vec<StepAction> {
    let mut out = actions.to_vec();
    let mut exists = exists_initially(actions);
    let mut last_destroy: Option<usize> = None;
    let mut cur: Option<LocationValue> = None;
    for t in 0..out.len() {
        match out[t].clone() {
            StepAction::None => {}
            StepAction::Create { to } => {
                if exists {
                    out[t] = if to == cur {
                        StepAction::None
                    } else {
                        StepAction::Move {
                            from: cur.clone(),
                            to: to.clone(),
                        }
                    };
                }
                exists = true;
                if !out[t].is_none() {
                    cur = to;
                }
            }
            StepAction::Destroy { from } => {
                if exists {
                    exists = false;
                    last_destroy = Some(t);
                    cur = from;
                } else {
                    out[t] = StepAction::None;
                }
            }
            StepAction::Move { from, to } => {
                if !exists {
                    match last_destroy.take() {
                        Some(d) => out[d] = StepAction::None,
                        None => out[t] = StepAction::Create { to: to.clone() },
                    }
                    exists = true;
                }
                let _ = from;
                cur = to;
            }
        }
    }
    out
}

/// [`fix_action_sequence`] followed by [`enforce_existence`].
pub fn make_consistent(actions: &[StepAction], opts: ReasoningOptions) -> Vec<StepAction> {
    enforce_existence(&fix_action_sequence(actions, opts))
}

/// Chooses the initial location and fills in missing targets.
///
/// - If the entity is created by its first action it starts nonexistent.
///   Otherwise it starts at the first source location stated before it first
///   moves, or at `?` if there is none.
/// - A move or create without a target takes the first source location
///   stated later, up to and including the next move. Passive facts at steps
///   without an action count as such statements. If nothing is found the
///   target is `?`.
/// - A passive fact at a step that has an action supplies that action's
///   missing source location (or the target, for a create).
pub fn resolve_locations(actions: &[StepAction], timeline: &EntityTimeline) -> FixedSequence {
    let m = actions.len();
    let passive = if timeline.steps() == m {
        timeline.passive_by_step()
    } else {
        vec![None; m]
    };
    let mut acts = actions.to_vec();
    for (a, p) in acts.iter_mut().zip(&passive) {
        let Some(p) = p else { continue };
        match a {
            StepAction::Move { from: f @ None, .. } | StepAction::Destroy { from: f @ None } => *f = Some(p.clone()),
            StepAction::Create { to: t @ None } => *t = Some(p.clone()),
            _ => {}
        }
    }

    let initial_location = if exists_initially(&acts) {
        let mut found = None;
        for (a, p) in acts.iter().zip(&passive) {
            let evidence = if a.is_none() { p.as_ref() } else { a.from_loc() };
            if let Some(l) = evidence {
                found = Some(l.clone());
                break;
            }
            if matches!(a.kind(), ActionKind::Move | ActionKind::Destroy) {
                break;
            }
        }
        found.unwrap_or(LocationValue::Unknown)
    } else {
        LocationValue::Nonexistent
    };

    for t in 0..m {
        let needs_target = matches!(
            acts[t],
            StepAction::Move { to: None, .. } | StepAction::Create { to: None }
        );
        if !needs_target {
            continue;
        }
        let mut target = None;
        for s in t + 1..m {
            match &acts[s] {
                StepAction::None => {
                    if let Some(p) = &passive[s] {
                        target = Some(p.clone());
                        break;
                    }
                }
                StepAction::Move { from, .. } | StepAction::Destroy { from } => {
                    target = from.clone();
                    break;
                }
                StepAction::Create { .. } => break,
            }
        }
        let target = Some(target.unwrap_or(LocationValue::Unknown));
        match &mut acts[t] {
            StepAction::Move { to, .. } | StepAction::Create { to } => *to = target,
            _ => unreachable!(),
        }
    }

    FixedSequence {
        actions: acts,
        initial_location,
    }
}

/// Replays the sequence, turning moves to the current location into `None`
/// and annotating every move and destroy with the location it leaves.
pub fn settle(seq: FixedSequence) -> FixedSequence {
    let mut cur = seq.initial_location.clone();
    let actions = seq
        .actions
        .into_iter()
        .map(|a| match a {
            StepAction::None => StepAction::None,
            StepAction::Create { to } => {
                let to = to.unwrap_or(LocationValue::Unknown);
                cur = to.clone();
                StepAction::Create { to: Some(to) }
            }
            StepAction::Destroy { .. } => {
                let from = std::mem::replace(&mut cur, LocationValue::Nonexistent);
                StepAction::Destroy { from: Some(from) }
            }
            StepAction::Move { to, .. } => {
                let to = to.unwrap_or(LocationValue::Unknown);
                if to == cur {
                    StepAction::None
                } else {
                    let from = std::mem::replace(&mut cur, to.clone());
                    StepAction::Move {
                        from: Some(from),
                        to: Some(to),
                    }
                }
            }
        })
        .collect();
    FixedSequence {
        actions,
        initial_location: seq.initial_location,
    }
}

/// Full global reasoning for one entity.
pub fn reason(timeline: &EntityTimeline, opts: ReasoningOptions) -> FixedSequence {
    let fixed = enforce_existence(&fix_actions(timeline, opts));
    settle(resolve_locations(&fixed, timeline))
}
