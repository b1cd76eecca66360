//! End-to-end prediction: abstraction, local rules and global reasoning over
//! every step of a procedure.

use crate::abstraction::{abstract_events, Abstraction, Lexicon};
use crate::corpus::{GridRow, Procedure, StateGrid};
use crate::error::{Error, Result};
use crate::global_reasoning::{reason, EntityTimeline, FixedSequence, ReasoningOptions};
use crate::local_rules::{apply_rules, LocalDecision, RuleSet};
use crate::par::{self, Execution};
use crate::parse_model::LogicalFormGraph;

#[derive(Debug, Clone)]
pub struct Predictor {
    pub lexicon: Lexicon,
    pub rules: RuleSet,
    pub options: ReasoningOptions,
}

impl Default for Predictor {
    fn default() -> Self {
        Predictor {
            lexicon: Lexicon::builtin(),
            rules: RuleSet::all(),
            options: ReasoningOptions::default(),
        }
    }
}

/// Intermediate results kept for inspection.
#[derive(Debug, Clone)]
pub struct Trace {
    pub abstractions: Vec<Abstraction>,
    pub decisions: Vec<LocalDecision>,
    pub sequences: Vec<(String, FixedSequence)>,
    pub grid: StateGrid,
}

pub(crate) fn parse_for<'a>(
    procedure: &Procedure,
    parses: &'a [LogicalFormGraph],
    step: usize,
) -> Result<&'a LogicalFormGraph> {
    parses
        .iter()
        .find(|g| g.sentence_index == step)
        .ok_or_else(|| Error::MissingParse {
            procedure: procedure.id.clone(),
            step,
        })
}

impl Predictor {
    /// Abstracted events of every step, in step order.
    pub fn abstract_procedure(&self, procedure: &Procedure, parses: &[LogicalFormGraph]) -> Result<Vec<Abstraction>> {
        procedure
            .steps
            .iter()
            .map(|s| abstract_events(parse_for(procedure, parses, s.index)?, &s.tokens, &self.lexicon))
            .collect()
    }

    pub fn trace(&self, procedure: &Procedure, parses: &[LogicalFormGraph]) -> Result<Trace> {
        let abstractions = self.abstract_procedure(procedure, parses)?;
        let decisions: Vec<LocalDecision> = abstractions
            .iter()
            .zip(&procedure.steps)
            .flat_map(|(a, s)| apply_rules(&a.frames, &procedure.entities, s.index, &self.rules))
            .collect();
        let passive: Vec<_> = abstractions.iter().flat_map(|a| a.passive.iter().cloned()).collect();
        let m = procedure.len();
        let sequences: Vec<(String, FixedSequence)> = procedure
            .entities
            .iter()
            .map(|e| {
                let tl = EntityTimeline::build(e, m, &decisions, &passive);
                (e.name.clone(), reason(&tl, self.options))
            })
            .collect();
        let grid = StateGrid {
            procedure_id: procedure.id.clone(),
            rows: sequences
                .iter()
                .map(|(name, seq)| GridRow {
                    entity: name.clone(),
                    cells: seq.cells(),
                })
                .collect(),
        };
        Ok(Trace {
            abstractions,
            decisions,
            sequences,
            grid,
        })
    }

    /// Predicted location grid for one procedure.
    pub fn predict(&self, procedure: &Procedure, parses: &[LogicalFormGraph]) -> Result<StateGrid> {
        Ok(self.trace(procedure, parses)?.grid)
    }

    /// Predicts every procedure; output order follows input order.
    pub fn predict_all(&self, inputs: &[(&Procedure, &[LogicalFormGraph])], exec: Execution) -> Result<Vec<StateGrid>> {
        par::try_map(inputs, exec, |(p, g)| self.predict(p, g))
    }
}
