//! Per-frame heuristics that turn event frames into decisions about tracked
//! entities.
//!
//! | class   | required roles            | decision                                  |
//! |---------|---------------------------|-------------------------------------------|
//! | Move    | Affected (Agent optional) | Affected moves                            |
//! | Move    | Agent                     | Agent moves                               |
//! | Destroy | Affected                  | Affected destroyed                        |
//! | Create  | Affected_Result           | Affected_Result created                   |
//! | Create  | Affected                  | Affected created                          |
//! | Change  | Affected, Res             | Affected destroyed, Res created           |
//! | Change  | Affected                  | Affected destroyed                        |
//!
//! Rules are tried in table order and the first applicable rule decides the
//! frame. Destroy decisions take any location attached to the frame as
//! their source location.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::abstraction::{ArgRef, EventFrame, AFFECTED, AFFECTED_RESULT, AGENT, RES, RESULT};
use crate::corpus::{ActionKind, Entity, LocationValue, StepAction};
use crate::error::{Error, Result};
use crate::parse_model::ActionClass;
use crate::text::normalize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleId {
    MoveAffected,
    MoveAgent,
    DestroyAffected,
    CreateAffectedResult,
    CreateAffected,
    ChangeAffectedRes,
    ChangeAffectedOnly,
}

impl RuleId {
    pub const ALL: [RuleId; 7] = [
        RuleId::MoveAffected,
        RuleId::MoveAgent,
        RuleId::DestroyAffected,
        RuleId::CreateAffectedResult,
        RuleId::CreateAffected,
        RuleId::ChangeAffectedRes,
        RuleId::ChangeAffectedOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RuleId::MoveAffected => "move_affected",
            RuleId::MoveAgent => "move_agent",
            RuleId::DestroyAffected => "destroy_affected",
            RuleId::CreateAffectedResult => "create_affected_result",
            RuleId::CreateAffected => "create_affected",
            RuleId::ChangeAffectedRes => "change_affected_res",
            RuleId::ChangeAffectedOnly => "change_affected_only",
        }
    }

    fn class(self) -> ActionClass {
        match self {
            RuleId::MoveAffected | RuleId::MoveAgent => ActionClass::Move,
            RuleId::DestroyAffected => ActionClass::Destroy,
            RuleId::CreateAffectedResult | RuleId::CreateAffected => ActionClass::Create,
            RuleId::ChangeAffectedRes | RuleId::ChangeAffectedOnly => ActionClass::Change,
        }
    }

    /// (role, action) effects when the rule fires on `frame`, or `None` if it
    /// does not apply.
    fn effects(self, frame: &EventFrame) -> Option<Vec<(&ArgRef, ActionKind)>> {
        if frame.action_class != self.class() {
            return None;
        }
        let role = |r: &str| frame.role(r);
        match self {
            RuleId::MoveAffected => Some(vec![(role(AFFECTED)?, ActionKind::Move)]),
            RuleId::MoveAgent => Some(vec![(role(AGENT)?, ActionKind::Move)]),
            RuleId::DestroyAffected => Some(vec![(role(AFFECTED)?, ActionKind::Destroy)]),
            RuleId::CreateAffectedResult => Some(vec![(role(AFFECTED_RESULT)?, ActionKind::Create)]),
            RuleId::CreateAffected => Some(vec![(role(AFFECTED)?, ActionKind::Create)]),
            RuleId::ChangeAffectedRes => {
                let res = role(RES).or_else(|| role(RESULT))?;
                Some(vec![(role(AFFECTED)?, ActionKind::Destroy), (res, ActionKind::Create)])
            }
            RuleId::ChangeAffectedOnly => Some(vec![(role(AFFECTED)?, ActionKind::Destroy)]),
        }
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RuleId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        RuleId::ALL
            .into_iter()
            .find(|r| r.name() == s.trim())
            .ok_or_else(|| format!("unknown rule {s:?}"))
    }
}

/// Enabled subset of the rule table.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RuleSet {
    disabled: HashSet<RuleId>,
}

impl RuleSet {
    pub fn all() -> Self {
        RuleSet::default()
    }

    pub fn without(mut self, rule: RuleId) -> Self {
        self.disabled.insert(rule);
        self
    }

    /// Override file: one rule name per line to disable; `#` starts a comment.
    pub fn parse_overrides(text: &str, file: &str) -> Result<Self> {
        let mut set = RuleSet::all();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let rule: RuleId = line.parse().map_err(|m: String| Error::format(file, i + 1, m))?;
            set.disabled.insert(rule);
        }
        Ok(set)
    }

    pub fn enabled(&self) -> impl Iterator<Item = RuleId> + '_ {
        RuleId::ALL.into_iter().filter(|r| !self.disabled.contains(r))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub frame_node: String,
    pub rule: RuleId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalDecision {
    pub step_index: usize,
    pub entity: String,
    pub action: StepAction,
    pub provenance: Provenance,
}

/// True iff the argument's head phrase names one of the entity's aliases, or
/// the argument overlaps a registered coreference mention of the entity.
pub fn match_argument(arg: &ArgRef, entity: &Entity, step_index: usize) -> bool {
    let text = normalize(&arg.text);
    let by_alias = entity
        .normalized_aliases()
        .any(|alias| !alias.is_empty() && (text == alias || text.ends_with(&format!(" {alias}"))));
    by_alias || entity.coref_in_step(step_index).any(|s| s.overlaps(&arg.span))
}

fn loc(arg: Option<&ArgRef>) -> Option<LocationValue> {
    arg.and_then(|a| LocationValue::parse(&normalize(&a.text)).ok())
        .filter(|l| matches!(l, LocationValue::Known(_)))
}

fn action_for(kind: ActionKind, frame: &EventFrame) -> StepAction {
    match kind {
        ActionKind::Move => StepAction::Move {
            from: loc(frame.from_loc.as_ref()),
            to: loc(frame.to_loc.as_ref()),
        },
        ActionKind::Create => StepAction::Create {
            to: loc(frame.to_loc.as_ref().or(frame.at_loc.as_ref())),
        },
        ActionKind::Destroy => StepAction::Destroy {
            from: loc(frame
                .from_loc
                .as_ref()
                .or(frame.at_loc.as_ref())
                .or(frame.to_loc.as_ref())),
        },
        ActionKind::None => StepAction::None,
    }
}

/// Decisions for the tracked `entities` from the frames of one step, in
/// frame order. At most one decision per (entity, frame).
pub fn apply_rules(
    frames: &[EventFrame],
    entities: &[Entity],
    step_index: usize,
    rules: &RuleSet,
) -> Vec<LocalDecision> {
    let mut out = Vec::new();
    for frame in frames {
        let Some((rule, effects)) = rules.enabled().find_map(|r| r.effects(frame).map(|e| (r, e))) else {
            continue;
        };
        let mut decided: HashSet<&str> = HashSet::new();
        for (arg, kind) in effects {
            for entity in entities {
                if decided.contains(entity.name.as_str()) || !match_argument(arg, entity, step_index) {
                    continue;
                }
                decided.insert(&entity.name);
                out.push(LocalDecision {
                    step_index,
                    entity: entity.name.clone(),
                    action: action_for(kind, frame),
                    provenance: Provenance {
                        frame_node: frame.node.clone(),
                        rule,
                    },
                });
            }
        }
    }
    out
}
