//! Evaluation at three granularities.
//!
//! * Sentence level: per (procedure, entity, event) questions. Cat1 asks
//!   whether the event happens at all, Cat2 at which steps, Cat3 at which
//!   locations. Cat2 and Cat3 are asked only when the gold grid has the event.
//!   A category with no questions scores 100.
//! * Document level: set overlap of Inputs, Outputs, Conversions and Moves,
//!   pooled over all procedures, with the final score the mean of the four F1s.
//! * Decision level: every gold Create/Move/Destroy decision is bucketed by
//!   whether the entity and its location are mentioned in the step, with an
//!   overlay flag for steps holding several action verbs.
//!
//! Locations are compared after [`normalize`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;

use crate::abstraction::Lexicon;
use crate::corpus::{
    derive_actions, find_mentions, grid_key_difference, ActionKind, LabeledProcedure, LocationValue, StateGrid,
};
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::parse_model::LogicalFormGraph;
use crate::pipeline::parse_for;
use crate::text::{find_token_seq, normalize, tokenize};

fn pct(num: usize, den: usize) -> f64 {
    if den == 0 {
        100.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

fn norm_loc(l: &LocationValue) -> String {
    match l {
        LocationValue::Known(s) => normalize(s),
        other => other.to_string(),
    }
}

/// Pairs predicted and gold grids by procedure id and checks that both cover
/// the same entities with the same number of steps.
fn pair_grids<'a>(pred: &'a [StateGrid], gold: &'a [StateGrid]) -> Result<Vec<(&'a StateGrid, &'a StateGrid)>> {
    let (only_pred, only_gold) = grid_key_difference(pred, gold);
    if !only_pred.is_empty() || !only_gold.is_empty() {
        let fmt = |s: &BTreeSet<String>| s.iter().cloned().collect::<Vec<_>>().join(", ");
        return Err(Error::Mismatch(format!(
            "prediction and gold cover different entities; only predicted: [{}]; only gold: [{}]",
            fmt(&only_pred),
            fmt(&only_gold)
        )));
    }
    let by_id: BTreeMap<&str, &StateGrid> = pred.iter().map(|g| (g.procedure_id.as_str(), g)).collect();
    gold.iter()
        .map(|g| {
            let p = by_id[g.procedure_id.as_str()];
            for gr in &g.rows {
                let pr = p.row(&gr.entity).expect("same key sets");
                if pr.cells.len() != gr.cells.len() {
                    return Err(Error::Mismatch(format!(
                        "{}/{}: predicted {} steps, gold {}",
                        g.procedure_id,
                        gr.entity,
                        pr.cells.len().saturating_sub(1),
                        gr.cells.len().saturating_sub(1)
                    )));
                }
            }
            Ok((p, g))
        })
        .collect()
}

// ---------------------------------------------------------------- sentence

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Event {
    Create,
    Destroy,
    Move,
}

const EVENTS: [Event; 3] = [Event::Create, Event::Destroy, Event::Move];

impl Event {
    fn kind(self) -> ActionKind {
        match self {
            Event::Create => ActionKind::Create,
            Event::Destroy => ActionKind::Destroy,
            Event::Move => ActionKind::Move,
        }
    }
}

/// Steps (1-based) at which `event` happens, with the locations that answer
/// "where": the new location for creations, the old one for destructions and
/// both for moves.
fn event_profile(cells: &[LocationValue], event: Event) -> (Vec<usize>, Vec<String>) {
    let mut steps = Vec::new();
    let mut locs = Vec::new();
    for (i, a) in derive_actions(cells).iter().enumerate() {
        if a.kind() != event.kind() {
            continue;
        }
        steps.push(i + 1);
        match event {
            Event::Create => locs.push(norm_loc(&cells[i + 1])),
            Event::Destroy => locs.push(norm_loc(&cells[i])),
            Event::Move => {
                locs.push(norm_loc(&cells[i]));
                locs.push(norm_loc(&cells[i + 1]));
            }
        }
    }
    (steps, locs)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct QuestionCount {
    pub asked: usize,
    pub correct: usize,
}

impl QuestionCount {
    fn add(&mut self, o: QuestionCount) {
        self.asked += o.asked;
        self.correct += o.correct;
    }

    fn ask(&mut self, ok: bool) {
        self.asked += 1;
        self.correct += ok as usize;
    }

    pub fn score(&self) -> f64 {
        pct(self.correct, self.asked)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SentenceScores {
    pub cat1: f64,
    pub cat2: f64,
    pub cat3: f64,
    pub macro_avg: f64,
    pub micro_avg: f64,
    pub counts: [QuestionCount; 3],
}

fn sentence_counts(pred: &StateGrid, gold: &StateGrid) -> [QuestionCount; 3] {
    let mut c = [QuestionCount::default(); 3];
    for gr in &gold.rows {
        let pr = pred.row(&gr.entity).expect("paired");
        for ev in EVENTS {
            let (gs, gl) = event_profile(&gr.cells, ev);
            let (ps, pl) = event_profile(&pr.cells, ev);
            c[0].ask(gs.is_empty() == ps.is_empty());
            if !gs.is_empty() {
                c[1].ask(gs == ps);
                c[2].ask(gl == pl);
            }
        }
    }
    c
}

pub fn eval_sentence_level(pred: &[StateGrid], gold: &[StateGrid], exec: Execution) -> Result<SentenceScores> {
    let pairs = pair_grids(pred, gold)?;
    let mut counts = [QuestionCount::default(); 3];
    for part in par::map(&pairs, exec, |(p, g)| sentence_counts(p, g)) {
        for k in 0..3 {
            counts[k].add(part[k]);
        }
    }
    let (cat1, cat2, cat3) = (counts[0].score(), counts[1].score(), counts[2].score());
    let total = counts.iter().fold(QuestionCount::default(), |mut a, c| {
        a.add(*c);
        a
    });
    Ok(SentenceScores {
        cat1,
        cat2,
        cat3,
        macro_avg: (cat1 + cat2 + cat3) / 3.0,
        micro_avg: total.score(),
        counts,
    })
}

// ---------------------------------------------------------------- document

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub predicted: usize,
    pub gold: usize,
    pub matched: usize,
}

impl Prf {
    /// Empty prediction gives precision 0 unless gold is empty too; empty
    /// gold gives recall 100. Both empty scores 100 throughout.
    pub fn from_counts(predicted: usize, gold: usize, matched: usize) -> Self {
        let precision = if predicted == 0 {
            if gold == 0 {
                100.0
            } else {
                0.0
            }
        } else {
            pct(matched, predicted)
        };
        let recall = pct(matched, gold);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf {
            precision,
            recall,
            f1,
            predicted,
            gold,
            matched,
        }
    }

    fn of<T: Ord>(pred: &BTreeSet<T>, gold: &BTreeSet<T>) -> Self {
        Prf::from_counts(pred.len(), gold.len(), pred.intersection(gold).count())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DocumentScores {
    pub inputs: Prf,
    pub outputs: Prf,
    pub conversions: Prf,
    pub moves: Prf,
    pub average_f1: f64,
}

/// Document-level facts of one procedure.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DocumentFacts {
    /// (procedure, entity)
    pub inputs: BTreeSet<(String, String)>,
    /// (procedure, entity)
    pub outputs: BTreeSet<(String, String)>,
    /// (procedure, step, destroyed entity, created entity)
    pub conversions: BTreeSet<(String, usize, String, String)>,
    /// (procedure, entity, step, from, to)
    pub moves: BTreeSet<(String, String, usize, String, String)>,
}

impl DocumentFacts {
    fn extend(&mut self, o: DocumentFacts) {
        self.inputs.extend(o.inputs);
        self.outputs.extend(o.outputs);
        self.conversions.extend(o.conversions);
        self.moves.extend(o.moves);
    }
}

/// Inputs exist at step 0, are destroyed and never created. Outputs do not
/// exist at step 0, are created and exist at the last step. A conversion
/// pairs an entity destroyed at step t with one created at t when the
/// destroyed entity's old location equals the created one's new location,
/// or both are unknown.
pub fn document_facts(grid: &StateGrid) -> DocumentFacts {
    let pid = &grid.procedure_id;
    let mut f = DocumentFacts::default();
    let actions: Vec<_> = grid.rows.iter().map(|r| derive_actions(&r.cells)).collect();
    for (row, acts) in grid.rows.iter().zip(&actions) {
        let has = |k: ActionKind| acts.iter().any(|a| a.kind() == k);
        let (first, last) = (&row.cells[0], &row.cells[row.cells.len() - 1]);
        if first.exists() && has(ActionKind::Destroy) && !has(ActionKind::Create) {
            f.inputs.insert((pid.clone(), row.entity.clone()));
        }
        if !first.exists() && has(ActionKind::Create) && last.exists() {
            f.outputs.insert((pid.clone(), row.entity.clone()));
        }
        for (i, a) in acts.iter().enumerate() {
            if a.kind() == ActionKind::Move {
                f.moves.insert((
                    pid.clone(),
                    row.entity.clone(),
                    i + 1,
                    norm_loc(&row.cells[i]),
                    norm_loc(&row.cells[i + 1]),
                ));
            }
        }
    }
    for t in 0..grid.steps() {
        for (d, da) in grid.rows.iter().zip(&actions) {
            if da[t].kind() != ActionKind::Destroy {
                continue;
            }
            for (c, ca) in grid.rows.iter().zip(&actions) {
                if ca[t].kind() != ActionKind::Create {
                    continue;
                }
                let (from, to) = (&d.cells[t], &c.cells[t + 1]);
                let unknown = *from == LocationValue::Unknown && *to == LocationValue::Unknown;
                if unknown || norm_loc(from) == norm_loc(to) {
                    f.conversions
                        .insert((pid.clone(), t + 1, d.entity.clone(), c.entity.clone()));
                }
            }
        }
    }
    f
}

fn pooled_facts(grids: &[&StateGrid], exec: Execution) -> DocumentFacts {
    let mut all = DocumentFacts::default();
    for f in par::map(grids, exec, |g| document_facts(g)) {
        all.extend(f);
    }
    all
}

pub fn eval_document_level(pred: &[StateGrid], gold: &[StateGrid], exec: Execution) -> Result<DocumentScores> {
    let pairs = pair_grids(pred, gold)?;
    let p = pooled_facts(&pairs.iter().map(|(p, _)| *p).collect::<Vec<_>>(), exec);
    let g = pooled_facts(&pairs.iter().map(|(_, g)| *g).collect::<Vec<_>>(), exec);
    let inputs = Prf::of(&p.inputs, &g.inputs);
    let outputs = Prf::of(&p.outputs, &g.outputs);
    let conversions = Prf::of(&p.conversions, &g.conversions);
    let moves = Prf::of(&p.moves, &g.moves);
    let average_f1 = (inputs.f1 + outputs.f1 + conversions.f1 + moves.f1) / 4.0;
    Ok(DocumentScores {
        inputs,
        outputs,
        conversions,
        moves,
        average_f1,
    })
}

// ---------------------------------------------------------------- decision

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionCategory {
    Local,
    GlobalLoc,
    GlobalEnt,
    GlobalLocAndEnt,
    Uncategorized,
}

impl DecisionCategory {
    pub const ALL: [DecisionCategory; 5] = [
        DecisionCategory::Local,
        DecisionCategory::GlobalLoc,
        DecisionCategory::GlobalEnt,
        DecisionCategory::GlobalLocAndEnt,
        DecisionCategory::Uncategorized,
    ];

    pub fn label(self) -> &'static str {
        match self {
            DecisionCategory::Local => "Local",
            DecisionCategory::GlobalLoc => "Global Loc",
            DecisionCategory::GlobalEnt => "Global Ent",
            DecisionCategory::GlobalLocAndEnt => "Global Loc+Ent",
            DecisionCategory::Uncategorized => "Uncategorized",
        }
    }

    /// Category from entity mention, location mention and gold action.
    /// `location` is the gold location after the step.
    pub fn classify(
        entity_mentioned: bool,
        location_mentioned: bool,
        location: &LocationValue,
        tag: ActionKind,
    ) -> Self {
        use ActionKind::*;
        let move_or_create = matches!(tag, Move | Create);
        match (entity_mentioned, location_mentioned) {
            (true, true) if move_or_create => DecisionCategory::Local,
            (true, false) if move_or_create => DecisionCategory::GlobalLoc,
            (false, lm) if (lm || *location == LocationValue::Nonexistent) && (move_or_create || tag == Destroy) => {
                DecisionCategory::GlobalEnt
            }
            (false, false) if move_or_create => DecisionCategory::GlobalLocAndEnt,
            _ => DecisionCategory::Uncategorized,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CategorizedDecision {
    pub procedure_id: String,
    pub entity: String,
    pub step: usize,
    pub gold_action: ActionKind,
    pub category: DecisionCategory,
    /// `None` when no parses were supplied.
    pub ambiguous: Option<bool>,
}

/// Whether a known location occurs in the step, on token boundaries.
pub fn location_mentioned(location: &LocationValue, tokens: &[String]) -> bool {
    let LocationValue::Known(l) = location else {
        return false;
    };
    [l.to_lowercase(), normalize(l)].iter().any(|variant| {
        let needle: Vec<String> = tokenize(variant).into_iter().map(|t| t.to_lowercase()).collect();
        !needle.is_empty() && !find_token_seq(tokens, &needle).is_empty()
    })
}

/// Number of parse nodes in the step whose ontology type maps to an action class.
pub fn action_verb_count(g: &LogicalFormGraph, lex: &Lexicon) -> Result<usize> {
    let mut n = 0;
    for node in &g.nodes {
        if lex.class_of(node)?.is_event() {
            n += 1;
        }
    }
    Ok(n)
}

pub type ParseIndex = crate::parse_model::ParseIndex<LogicalFormGraph>;

fn categorize_one(
    lp: &LabeledProcedure,
    parses: Option<&ParseIndex>,
    lex: &Lexicon,
) -> Result<Vec<CategorizedDecision>> {
    let p = &lp.procedure;
    let verbs: Option<Vec<usize>> = match parses {
        None => None,
        Some(idx) => {
            let gs = idx.get(&p.id).map(Vec::as_slice).unwrap_or(&[]);
            Some(
                p.steps
                    .iter()
                    .map(|s| action_verb_count(parse_for(p, gs, s.index)?, lex))
                    .collect::<Result<_>>()?,
            )
        }
    };
    let mut out = Vec::new();
    for row in &lp.gold.rows {
        let entity = p
            .entity(&row.entity)
            .ok_or_else(|| Error::Mismatch(format!("{}: gold row {:?} has no entity", p.id, row.entity)))?;
        for (i, a) in derive_actions(&row.cells).iter().enumerate() {
            let tag = a.kind();
            if tag == ActionKind::None {
                continue;
            }
            let step = &p.steps[i];
            let me = !find_mentions(entity, step).is_empty();
            let loc = &row.cells[i + 1];
            let ml = location_mentioned(loc, &step.tokens);
            out.push(CategorizedDecision {
                procedure_id: p.id.clone(),
                entity: row.entity.clone(),
                step: step.index,
                gold_action: tag,
                category: DecisionCategory::classify(me, ml, loc, tag),
                ambiguous: verbs.as_ref().map(|v| me && v[i] >= 2),
            });
        }
    }
    Ok(out)
}

/// Categories of every gold Create/Move/Destroy decision, in corpus order.
/// The ambiguity overlay needs `parses`; without them it is left unset.
pub fn categorize_decisions(
    corpus: &[LabeledProcedure],
    parses: Option<&ParseIndex>,
    lex: &Lexicon,
    exec: Execution,
) -> Result<Vec<CategorizedDecision>> {
    Ok(par::try_map(corpus, exec, |lp| categorize_one(lp, parses, lex))?
        .into_iter()
        .flatten()
        .collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DecisionCounts {
    pub support: usize,
    pub action_correct: usize,
    /// Decisions with a location to check (all but Destroy).
    pub location_support: usize,
    pub location_correct: usize,
    pub both_correct: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryScores {
    pub counts: DecisionCounts,
    pub action_acc: Option<f64>,
    pub location_acc: Option<f64>,
    pub both_acc: Option<f64>,
}

impl CategoryScores {
    fn from_counts(c: DecisionCounts, action_only: bool) -> Self {
        let acc = |num: usize, den: usize| (den > 0).then(|| pct(num, den));
        CategoryScores {
            counts: c,
            action_acc: acc(c.action_correct, c.support),
            location_acc: if action_only {
                None
            } else {
                acc(c.location_correct, c.location_support)
            },
            both_acc: if action_only {
                None
            } else {
                acc(c.both_correct, c.support)
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecisionScores {
    pub categories: BTreeMap<DecisionCategory, CategoryScores>,
    /// Action accuracy over decisions flagged ambiguous; absent without parses.
    pub ambiguous: Option<CategoryScores>,
    pub total: CategoryScores,
}

pub fn eval_decision_level(
    pred: &[StateGrid],
    gold: &[StateGrid],
    decisions: &[CategorizedDecision],
) -> Result<DecisionScores> {
    pair_grids(pred, gold)?;
    let pred_by: BTreeMap<&str, &StateGrid> = pred.iter().map(|g| (g.procedure_id.as_str(), g)).collect();
    let gold_by: BTreeMap<&str, &StateGrid> = gold.iter().map(|g| (g.procedure_id.as_str(), g)).collect();
    let mut per: BTreeMap<DecisionCategory, DecisionCounts> = DecisionCategory::ALL
        .iter()
        .map(|&c| (c, DecisionCounts::default()))
        .collect();
    let mut ambiguous = DecisionCounts::default();
    let mut total = DecisionCounts::default();
    let any_overlay = decisions.iter().any(|d| d.ambiguous.is_some());
    for d in decisions {
        let lookup = |by: &BTreeMap<&str, &StateGrid>| {
            by.get(d.procedure_id.as_str())
                .and_then(|g| g.row(&d.entity))
                .map(|r| r.cells.clone())
                .ok_or_else(|| Error::Mismatch(format!("no grid row for {}/{}", d.procedure_id, d.entity)))
        };
        let (pc, gc) = (lookup(&pred_by)?, lookup(&gold_by)?);
        if d.step == 0 || d.step >= gc.len() {
            return Err(Error::Mismatch(format!(
                "{}/{}: step {} out of range",
                d.procedure_id, d.entity, d.step
            )));
        }
        let t = d.step;
        let pa = derive_actions(&pc[t - 1..=t])[0].kind();
        let action_ok = pa == d.gold_action;
        let has_loc = d.gold_action != ActionKind::Destroy;
        let loc_ok = norm_loc(&pc[t]) == norm_loc(&gc[t]);
        let both_ok = action_ok && (!has_loc || loc_ok);
        let bump = |c: &mut DecisionCounts| {
            c.support += 1;
            c.action_correct += action_ok as usize;
            if has_loc {
                c.location_support += 1;
                c.location_correct += loc_ok as usize;
            }
            c.both_correct += both_ok as usize;
        };
        bump(per.get_mut(&d.category).expect("all categories present"));
        bump(&mut total);
        if d.ambiguous == Some(true) {
            bump(&mut ambiguous);
        }
    }
    Ok(DecisionScores {
        categories: per
            .into_iter()
            .map(|(k, c)| (k, CategoryScores::from_counts(c, false)))
            .collect(),
        ambiguous: any_overlay.then(|| CategoryScores::from_counts(ambiguous, true)),
        total: CategoryScores::from_counts(total, false),
    })
}

/// Supports per category plus the ambiguous overlay, as in a statistics table.
pub fn category_supports(decisions: &[CategorizedDecision]) -> (BTreeMap<DecisionCategory, usize>, usize) {
    let mut m: BTreeMap<DecisionCategory, usize> = DecisionCategory::ALL.iter().map(|&c| (c, 0)).collect();
    for d in decisions {
        *m.get_mut(&d.category).expect("all categories present") += 1;
    }
    (m, decisions.iter().filter(|d| d.ambiguous == Some(true)).count())
}

// ---------------------------------------------------------------- report

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tier {
    Sentence,
    Document,
    Decision,
    All,
}

impl std::str::FromStr for Tier {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sentence" => Ok(Tier::Sentence),
            "document" => Ok(Tier::Document),
            "decision" => Ok(Tier::Decision),
            "all" => Ok(Tier::All),
            other => Err(Error::Invalid(format!("unknown tier {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MetricReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sentence: Option<SentenceScores>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub document: Option<DocumentScores>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decision: Option<DecisionScores>,
}

/// Scores `pred` against the gold grids of `corpus`.
pub fn evaluate(
    pred: &[StateGrid],
    corpus: &[LabeledProcedure],
    parses: Option<&ParseIndex>,
    lex: &Lexicon,
    tier: Tier,
    exec: Execution,
) -> Result<MetricReport> {
    let gold: Vec<StateGrid> = corpus.iter().map(|lp| lp.gold.clone()).collect();
    let want = |t: Tier| tier == t || tier == Tier::All;
    let mut r = MetricReport::default();
    if want(Tier::Sentence) {
        r.sentence = Some(eval_sentence_level(pred, &gold, exec)?);
    }
    if want(Tier::Document) {
        r.document = Some(eval_document_level(pred, &gold, exec)?);
    }
    if want(Tier::Decision) {
        let decisions = categorize_decisions(corpus, parses, lex, exec)?;
        r.decision = Some(eval_decision_level(pred, &gold, &decisions)?);
    }
    Ok(r)
}

fn cell(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"))
}

impl MetricReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned plain-text tables.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        if let Some(s) = &self.sentence {
            writeln!(out, "Sentence level").unwrap();
            writeln!(
                out,
                "{:>8} {:>8} {:>8} {:>10} {:>10}",
                "Cat1", "Cat2", "Cat3", "Macro-Avg", "Micro-Avg"
            )
            .unwrap();
            writeln!(
                out,
                "{:>8.2} {:>8.2} {:>8.2} {:>10.2} {:>10.2}",
                s.cat1, s.cat2, s.cat3, s.macro_avg, s.micro_avg
            )
            .unwrap();
            out.push('\n');
        }
        if let Some(d) = &self.document {
            writeln!(out, "Document level").unwrap();
            writeln!(out, "{:<12} {:>9} {:>9} {:>9}", "", "P", "R", "F1").unwrap();
            for (name, p) in [
                ("Inputs", &d.inputs),
                ("Outputs", &d.outputs),
                ("Conversions", &d.conversions),
                ("Moves", &d.moves),
            ] {
                writeln!(out, "{name:<12} {:>9.2} {:>9.2} {:>9.2}", p.precision, p.recall, p.f1).unwrap();
            }
            writeln!(out, "{:<12} {:>9} {:>9} {:>9.2}", "Average", "", "", d.average_f1).unwrap();
            out.push('\n');
        }
        if let Some(d) = &self.decision {
            writeln!(out, "Decision level").unwrap();
            writeln!(out, "{:<15} {:>7} {:>8} {:>8} {:>8}", "", "N", "A", "L", "Both").unwrap();
            let mut row = |name: &str, c: &CategoryScores| {
                writeln!(
                    out,
                    "{name:<15} {:>7} {:>8} {:>8} {:>8}",
                    c.counts.support,
                    cell(c.action_acc),
                    cell(c.location_acc),
                    cell(c.both_acc)
                )
                .unwrap();
            };
            for (k, c) in &d.categories {
                row(k.label(), c);
            }
            if let Some(a) = &d.ambiguous {
                row("Ambiguous", a);
            }
            row("Total", &d.total);
        }
        out
    }

    /// Every defined score in the report.
    pub fn all_scores(&self) -> Vec<f64> {
        let mut v = Vec::new();
        if let Some(s) = &self.sentence {
            v.extend([s.cat1, s.cat2, s.cat3, s.macro_avg, s.micro_avg]);
        }
        if let Some(d) = &self.document {
            for p in [&d.inputs, &d.outputs, &d.conversions, &d.moves] {
                v.extend([p.precision, p.recall, p.f1]);
            }
            v.push(d.average_f1);
        }
        if let Some(d) = &self.decision {
            for c in d
                .categories
                .values()
                .chain(d.ambiguous.iter())
                .chain(std::iter::once(&d.total))
            {
                v.extend([c.action_acc, c.location_acc, c.both_acc].into_iter().flatten());
            }
        }
        v
    }
}
