//! Procedures, entities, gold location grids and the actions implied by them.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{read_to_string, Error, Result};
use crate::text::{find_token_seq, normalize, tokenize, Span};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub index: usize,
    pub text: String,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CorefMention {
    pub step: usize,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entity {
    /// The annotation string as it appears in the corpus; used as the key in grids.
    pub name: String,
    pub canonical_name: String,
    pub aliases: Vec<String>,
    pub coref_mentions: Vec<CorefMention>,
}

impl Entity {
    /// Builds an entity from a `;`-separated annotation string.
    pub fn from_annotation(name: &str) -> Self {
        let aliases: Vec<String> = name
            .split(';')
            .map(str::trim)
            .filter(|a| !a.is_empty())
            .map(str::to_string)
            .collect();
        Entity::with_aliases(name, aliases)
    }

    pub fn with_aliases(name: &str, aliases: Vec<String>) -> Self {
        let canonical_name = aliases.first().cloned().unwrap_or_else(|| name.trim().to_string());
        Entity {
            name: name.trim().to_string(),
            canonical_name,
            aliases,
            coref_mentions: Vec::new(),
        }
    }

    pub fn normalized_aliases(&self) -> impl Iterator<Item = String> + '_ {
        self.aliases.iter().map(|a| normalize(a))
    }

    pub fn coref_in_step(&self, step: usize) -> impl Iterator<Item = Span> + '_ {
        self.coref_mentions
            .iter()
            .filter(move |m| m.step == step)
            .map(|m| m.span)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Procedure {
    pub id: String,
    pub steps: Vec<Step>,
    pub entities: Vec<Entity>,
}

impl Procedure {
    /// Number of steps `m`.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn step(&self, index: usize) -> Option<&Step> {
        index.checked_sub(1).and_then(|i| self.steps.get(i))
    }

    pub fn entity(&self, name: &str) -> Option<&Entity> {
        self.entities.iter().find(|e| e.name == name)
    }
}

/// A location cell: a known place, `?` or `-`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LocationValue {
    Known(String),
    Unknown,
    Nonexistent,
}

impl LocationValue {
    pub fn parse(raw: &str) -> Result<Self> {
        match raw.trim() {
            "-" => Ok(LocationValue::Nonexistent),
            "?" => Ok(LocationValue::Unknown),
            other => {
                let n = normalize(other);
                if n.is_empty() {
                    Err(Error::Invalid("empty location value".into()))
                } else {
                    Ok(LocationValue::Known(n))
                }
            }
        }
    }

    pub fn known(s: &str) -> Self {
        LocationValue::Known(normalize(s))
    }

    pub fn exists(&self) -> bool {
        !matches!(self, LocationValue::Nonexistent)
    }
}

impl fmt::Display for LocationValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LocationValue::Known(s) => f.write_str(s),
            LocationValue::Unknown => f.write_str("?"),
            LocationValue::Nonexistent => f.write_str("-"),
        }
    }
}

impl Serialize for LocationValue {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LocationValue {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        LocationValue::parse(&raw).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridRow {
    pub entity: String,
    pub cells: Vec<LocationValue>,
}

/// Entity x step location matrix; column 0 is the state before the first step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateGrid {
    pub procedure_id: String,
    pub rows: Vec<GridRow>,
}

impl StateGrid {
    pub fn row(&self, entity: &str) -> Option<&GridRow> {
        self.rows.iter().find(|r| r.entity == entity)
    }

    pub fn steps(&self) -> usize {
        self.rows.first().map_or(0, |r| r.cells.len().saturating_sub(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ActionKind {
    None,
    Create,
    Destroy,
    Move,
}

impl ActionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ActionKind::None => "NONE",
            ActionKind::Create => "CREATE",
            ActionKind::Destroy => "DESTROY",
            ActionKind::Move => "MOVE",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "NONE" => Some(ActionKind::None),
            "CREATE" => Some(ActionKind::Create),
            "DESTROY" => Some(ActionKind::Destroy),
            "MOVE" => Some(ActionKind::Move),
            _ => None,
        }
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Action applied to one entity at one step.
///
/// A `Move` or `Create` whose `to` is `None` has no target yet; global
/// reasoning fills it. Actions derived from a grid always carry one.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "UPPERCASE")]
pub enum StepAction {
    #[default]
    None,
    Create {
        to: Option<LocationValue>,
    },
    Destroy {
        from: Option<LocationValue>,
    },
    Move {
        from: Option<LocationValue>,
        to: Option<LocationValue>,
    },
}

impl StepAction {
    pub fn kind(&self) -> ActionKind {
        match self {
            StepAction::None => ActionKind::None,
            StepAction::Create { .. } => ActionKind::Create,
            StepAction::Destroy { .. } => ActionKind::Destroy,
            StepAction::Move { .. } => ActionKind::Move,
        }
    }

    pub fn from_loc(&self) -> Option<&LocationValue> {
        match self {
            StepAction::Destroy { from } | StepAction::Move { from, .. } => from.as_ref(),
            _ => None,
        }
    }

    pub fn to_loc(&self) -> Option<&LocationValue> {
        match self {
            StepAction::Create { to } | StepAction::Move { to, .. } => to.as_ref(),
            _ => None,
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, StepAction::None)
    }
}

/// Output tags of the sequence labeller used by neural consumers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CrfTag {
    /// Does not exist after getting destroyed.
    #[serde(rename = "O_D")]
    OD,
    /// Does not exist before getting created.
    #[serde(rename = "O_C")]
    OC,
    /// Exists and does not change.
    E,
    C,
    D,
}

impl CrfTag {
    pub const ALL: [CrfTag; 5] = [CrfTag::OD, CrfTag::OC, CrfTag::E, CrfTag::C, CrfTag::D];

    pub fn as_str(self) -> &'static str {
        match self {
            CrfTag::OD => "O_D",
            CrfTag::OC => "O_C",
            CrfTag::E => "E",
            CrfTag::C => "C",
            CrfTag::D => "D",
        }
    }
}

/// Per-step tags for a grid row. Moves are tagged `E`; the tag set only
/// tracks existence.
pub fn crf_tags(row: &[LocationValue]) -> Vec<CrfTag> {
    let actions = derive_actions(row);
    let mut destroyed_before = false;
    actions
        .iter()
        .enumerate()
        .map(|(i, a)| match a.kind() {
            ActionKind::Create => CrfTag::C,
            ActionKind::Destroy => {
                destroyed_before = true;
                CrfTag::D
            }
            _ if row[i + 1].exists() => CrfTag::E,
            _ if destroyed_before => CrfTag::OD,
            _ => CrfTag::OC,
        })
        .collect()
}

/// Actions implied by consecutive cells of a grid row.
pub fn derive_actions(row: &[LocationValue]) -> Vec<StepAction> {
    row.windows(2)
        .map(|w| match (&w[0], &w[1]) {
            (LocationValue::Nonexistent, LocationValue::Nonexistent) => StepAction::None,
            (LocationValue::Nonexistent, to) => StepAction::Create { to: Some(to.clone()) },
            (from, LocationValue::Nonexistent) => StepAction::Destroy {
                from: Some(from.clone()),
            },
            (from, to) if from == to => StepAction::None,
            (from, to) => StepAction::Move {
                from: Some(from.clone()),
                to: Some(to.clone()),
            },
        })
        .collect()
}

/// Applies actions to an initial cell. Targetless creates and moves land on `?`.
pub fn replay(initial: &LocationValue, actions: &[StepAction]) -> Vec<LocationValue> {
    let mut cells = Vec::with_capacity(actions.len() + 1);
    let mut cur = initial.clone();
    cells.push(cur.clone());
    for a in actions {
        cur = match a {
            StepAction::None => cur,
            StepAction::Destroy { .. } => LocationValue::Nonexistent,
            StepAction::Create { to } | StepAction::Move { to, .. } => to.clone().unwrap_or(LocationValue::Unknown),
        };
        cells.push(cur.clone());
    }
    cells
}

/// Token spans in `step` referring to `entity`: alias matches on token
/// boundaries plus registered coreference mentions. Overlapping matches are
/// resolved in favor of the earliest, then longest, span.
pub fn find_mentions(entity: &Entity, step: &Step) -> Vec<Span> {
    let mut spans: Vec<Span> = Vec::new();
    for alias in &entity.aliases {
        for variant in [alias.to_lowercase(), normalize(alias)] {
            let needle: Vec<String> = tokenize(&variant).into_iter().map(|t| t.to_lowercase()).collect();
            spans.extend(find_token_seq(&step.tokens, &needle));
        }
    }
    spans.extend(entity.coref_in_step(step.index));
    spans.sort_by(|a, b| a.start.cmp(&b.start).then(b.end.cmp(&a.end)));
    let mut kept: Vec<Span> = Vec::new();
    for s in spans {
        if kept.last().is_none_or(|k| !k.overlaps(&s)) {
            kept.push(s);
        }
    }
    kept
}

/// Parses that can enumerate noun phrases of a sentence.
pub trait NounPhraseSource {
    fn sentence_index(&self) -> usize;
    /// Noun phrases as (span, surface text), in any order.
    fn noun_phrases(&self, tokens: &[String]) -> Vec<(Span, String)>;
}

/// Normalized noun phrases from the parses of every step, deduplicated and
/// ordered by first occurrence (step, token position).
pub fn location_candidates<P: NounPhraseSource>(procedure: &Procedure, parses: &[P]) -> Result<Vec<String>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for step in &procedure.steps {
        let parse = parses
            .iter()
            .find(|p| p.sentence_index() == step.index)
            .ok_or_else(|| Error::MissingParse {
                procedure: procedure.id.clone(),
                step: step.index,
            })?;
        let mut nps = parse.noun_phrases(&step.tokens);
        nps.sort_by_key(|(span, _)| *span);
        for (_, text) in nps {
            let n = normalize(&text);
            if !n.is_empty() && seen.insert(n.clone()) {
                out.push(n);
            }
        }
    }
    Ok(out)
}

/// A procedure paired with its gold grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledProcedure {
    pub procedure: Procedure,
    pub gold: StateGrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    /// One procedure object per line.
    Json,
    /// A directory holding `paragraphs.tsv` and `grids.tsv`.
    ProparaTsv,
}

impl std::str::FromStr for CorpusFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "json" => Ok(CorpusFormat::Json),
            "propara-tsv" => Ok(CorpusFormat::ProparaTsv),
            other => Err(format!("unknown corpus format {other:?}")),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RawStep {
    index: usize,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tokens: Option<Vec<String>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawEntity {
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    aliases: Option<Vec<String>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawProcedure {
    id: String,
    steps: Vec<RawStep>,
    entities: Vec<RawEntity>,
    gold_grid: BTreeMap<String, Vec<String>>,
}

pub fn load_procedures(path: &Path, format: CorpusFormat) -> Result<Vec<LabeledProcedure>> {
    match format {
        CorpusFormat::Json => {
            let text = read_to_string(path)?;
            parse_corpus_json(&text, &path.display().to_string())
        }
        CorpusFormat::ProparaTsv => {
            let paragraphs = path.join("paragraphs.tsv");
            let grids = path.join("grids.tsv");
            import_propara_tsv(
                &read_to_string(&paragraphs)?,
                &paragraphs.display().to_string(),
                &read_to_string(&grids)?,
                &grids.display().to_string(),
            )
        }
    }
}

/// Parses a JSON Lines corpus. Blank lines are skipped.
pub fn parse_corpus_json(text: &str, file: &str) -> Result<Vec<LabeledProcedure>> {
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawProcedure = serde_json::from_str(line).map_err(|e| Error::format(file, line_no, e.to_string()))?;
        let lp = build_procedure(raw).map_err(|msg| Error::format(file, line_no, msg))?;
        if !ids.insert(lp.procedure.id.clone()) {
            return Err(Error::format(
                file,
                line_no,
                format!("duplicate procedure id {:?}", lp.procedure.id),
            ));
        }
        out.push(lp);
    }
    Ok(out)
}

fn build_procedure(raw: RawProcedure) -> std::result::Result<LabeledProcedure, String> {
    if raw.steps.is_empty() {
        return Err("procedure has no steps".into());
    }
    let mut steps = Vec::with_capacity(raw.steps.len());
    for (i, s) in raw.steps.into_iter().enumerate() {
        if s.index != i + 1 {
            return Err(format!(
                "step indices must be contiguous from 1; found {} at position {}",
                s.index,
                i + 1
            ));
        }
        let tokens = s.tokens.unwrap_or_else(|| tokenize(&s.text));
        steps.push(Step {
            index: s.index,
            text: s.text,
            tokens,
        });
    }
    let mut entities = Vec::with_capacity(raw.entities.len());
    let mut seen = HashSet::new();
    for e in raw.entities {
        let entity = match e.aliases {
            Some(aliases) if !aliases.is_empty() => Entity::with_aliases(&e.name, aliases),
            _ => Entity::from_annotation(&e.name),
        };
        if entity.name.is_empty() || entity.aliases.is_empty() {
            return Err("entity name must be non-empty".into());
        }
        if !seen.insert(normalize(&entity.name)) {
            return Err(format!("duplicate entity {:?}", entity.name));
        }
        entities.push(entity);
    }
    let m = steps.len();
    let mut rows = Vec::with_capacity(entities.len());
    for e in &entities {
        let cells = raw
            .gold_grid
            .get(&e.name)
            .ok_or_else(|| format!("gold_grid has no row for entity {:?}", e.name))?;
        rows.push(GridRow {
            entity: e.name.clone(),
            cells: parse_row(cells, m).map_err(|msg| format!("entity {:?}: {msg}", e.name))?,
        });
    }
    if let Some(extra) = raw.gold_grid.keys().find(|k| !entities.iter().any(|e| &e.name == *k)) {
        return Err(format!("gold_grid row {extra:?} does not name a declared entity"));
    }
    let procedure = Procedure {
        id: raw.id.clone(),
        steps,
        entities,
    };
    Ok(LabeledProcedure {
        procedure,
        gold: StateGrid {
            procedure_id: raw.id,
            rows,
        },
    })
}

fn parse_row<S: AsRef<str>>(cells: &[S], m: usize) -> std::result::Result<Vec<LocationValue>, String> {
    if cells.len() != m + 1 {
        return Err(format!("expected {} cells, found {}", m + 1, cells.len()));
    }
    cells
        .iter()
        .enumerate()
        .map(|(t, c)| LocationValue::parse(c.as_ref()).map_err(|e| format!("cell {t}: {e}")))
        .collect()
}

/// Serializes a corpus back to the JSON Lines model.
pub fn corpus_to_json(corpus: &[LabeledProcedure]) -> String {
    let mut out = String::new();
    for lp in corpus {
        let raw = RawProcedure {
            id: lp.procedure.id.clone(),
            steps: lp
                .procedure
                .steps
                .iter()
                .map(|s| RawStep {
                    index: s.index,
                    text: s.text.clone(),
                    tokens: Some(s.tokens.clone()),
                })
                .collect(),
            entities: lp
                .procedure
                .entities
                .iter()
                .map(|e| RawEntity {
                    name: e.name.clone(),
                    aliases: Some(e.aliases.clone()),
                })
                .collect(),
            gold_grid: lp
                .gold
                .rows
                .iter()
                .map(|r| (r.entity.clone(), r.cells.iter().map(|c| c.to_string()).collect()))
                .collect(),
        };
        out.push_str(&serde_json::to_string(&raw).expect("corpus serializes"));
        out.push('\n');
    }
    out
}

/// Imports the tab-separated layout.
///
/// `paragraphs`: `para_id<TAB>sent_index<TAB>sentence`, sentences numbered from 1.
///
/// `grids`: per paragraph, a header `para_id<TAB>PARTICIPANTS<TAB>e1<TAB>e2...`
/// followed by one line per step `para_id<TAB>t<TAB>loc_e1<TAB>loc_e2...` for
/// t = 0..m. Entities are columns and steps are rows.
pub fn import_propara_tsv(
    paragraphs: &str,
    paragraphs_file: &str,
    grids: &str,
    grids_file: &str,
) -> Result<Vec<LabeledProcedure>> {
    let mut sentences: BTreeMap<String, Vec<(usize, String)>> = BTreeMap::new();
    let mut para_order: Vec<String> = Vec::new();
    for (i, line) in paragraphs.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(Error::format(
                paragraphs_file,
                i + 1,
                format!("expected 3 columns, found {}", cols.len()),
            ));
        }
        let idx: usize = cols[1]
            .trim()
            .parse()
            .map_err(|_| Error::format(paragraphs_file, i + 1, format!("bad sentence index {:?}", cols[1])))?;
        let id = cols[0].trim().to_string();
        if !sentences.contains_key(&id) {
            para_order.push(id.clone());
        }
        sentences.entry(id).or_default().push((idx, cols[2].trim().to_string()));
    }

    struct GridBlock {
        line: usize,
        entities: Vec<String>,
        steps: Vec<Vec<String>>,
    }
    let mut blocks: BTreeMap<String, GridBlock> = BTreeMap::new();
    for (i, line) in grids.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 2 {
            return Err(Error::format(grids_file, i + 1, "expected at least 2 columns"));
        }
        let id = cols[0].trim().to_string();
        if cols[1].trim() == "PARTICIPANTS" {
            if blocks.contains_key(&id) {
                return Err(Error::format(
                    grids_file,
                    i + 1,
                    format!("duplicate grid for paragraph {id}"),
                ));
            }
            blocks.insert(
                id,
                GridBlock {
                    line: i + 1,
                    entities: cols[2..].iter().map(|c| c.trim().to_string()).collect(),
                    steps: Vec::new(),
                },
            );
            continue;
        }
        let block = blocks.get_mut(&id).ok_or_else(|| {
            Error::format(
                grids_file,
                i + 1,
                format!("step row before PARTICIPANTS header for {id}"),
            )
        })?;
        let t: usize = cols[1]
            .trim()
            .parse()
            .map_err(|_| Error::format(grids_file, i + 1, format!("bad step index {:?}", cols[1])))?;
        if t != block.steps.len() {
            return Err(Error::format(
                grids_file,
                i + 1,
                format!("expected step {}, found {t}", block.steps.len()),
            ));
        }
        let cells: Vec<String> = cols[2..].iter().map(|c| c.to_string()).collect();
        if cells.len() != block.entities.len() {
            return Err(Error::format(
                grids_file,
                i + 1,
                format!("expected {} cells, found {}", block.entities.len(), cells.len()),
            ));
        }
        block.steps.push(cells);
    }

    let mut out = Vec::new();
    for id in para_order {
        let mut sents = sentences.remove(&id).unwrap_or_default();
        sents.sort_by_key(|(i, _)| *i);
        let block = blocks
            .remove(&id)
            .ok_or_else(|| Error::format(grids_file, 0, format!("no grid for paragraph {id}")))?;
        let m = sents.len();
        if block.steps.len() != m + 1 {
            return Err(Error::format(
                grids_file,
                block.line,
                format!(
                    "paragraph {id}: expected {} step rows, found {}",
                    m + 1,
                    block.steps.len()
                ),
            ));
        }
        let mut gold_grid = BTreeMap::new();
        for (j, e) in block.entities.iter().enumerate() {
            gold_grid.insert(e.clone(), block.steps.iter().map(|row| row[j].clone()).collect());
        }
        let raw = RawProcedure {
            id: id.clone(),
            steps: sents
                .into_iter()
                .map(|(index, text)| RawStep {
                    index,
                    text,
                    tokens: None,
                })
                .collect(),
            entities: block
                .entities
                .iter()
                .map(|name| RawEntity {
                    name: name.clone(),
                    aliases: None,
                })
                .collect(),
            gold_grid,
        };
        out.push(build_procedure(raw).map_err(|msg| Error::format(grids_file, block.line, msg))?);
    }
    if let Some(id) = blocks.keys().next() {
        return Err(Error::format(
            paragraphs_file,
            0,
            format!("grid for paragraph {id} has no sentences"),
        ));
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
struct RawCorefMention {
    entity: String,
    step: usize,
    span: Span,
}

#[derive(Debug, Deserialize)]
struct RawCorefFile {
    procedure_id: String,
    mentions: Vec<RawCorefMention>,
}

/// Coreference sidecar: one `{"procedure_id", "mentions"}` object per line.
/// Registers mentions on the matching entities.
pub fn load_coref(path: &Path, corpus: &mut [LabeledProcedure]) -> Result<()> {
    let text = read_to_string(path)?;
    apply_coref(&text, &path.display().to_string(), corpus)
}

pub fn apply_coref(text: &str, file: &str, corpus: &mut [LabeledProcedure]) -> Result<()> {
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawCorefFile = serde_json::from_str(line).map_err(|e| Error::format(file, i + 1, e.to_string()))?;
        let proc = corpus
            .iter_mut()
            .find(|lp| lp.procedure.id == raw.procedure_id)
            .map(|lp| &mut lp.procedure)
            .ok_or_else(|| Error::format(file, i + 1, format!("unknown procedure {:?}", raw.procedure_id)))?;
        for m in raw.mentions {
            let n_tokens = proc
                .step(m.step)
                .map(|s| s.tokens.len())
                .ok_or_else(|| Error::format(file, i + 1, format!("step {} out of range", m.step)))?;
            if !m.span.within(n_tokens) {
                return Err(Error::format(
                    file,
                    i + 1,
                    format!(
                        "span [{}, {}) outside step {} ({} tokens)",
                        m.span.start, m.span.end, m.step, n_tokens
                    ),
                ));
            }
            let entity = proc
                .entities
                .iter_mut()
                .find(|e| e.name == m.entity)
                .ok_or_else(|| Error::format(file, i + 1, format!("unknown entity {:?}", m.entity)))?;
            let mention = CorefMention {
                step: m.step,
                span: m.span,
            };
            if !entity.coref_mentions.contains(&mention) {
                entity.coref_mentions.push(mention);
            }
        }
    }
    for lp in corpus.iter_mut() {
        for e in &mut lp.procedure.entities {
            e.coref_mentions.sort();
        }
    }
    Ok(())
}

/// Entities present in one set of grids but not the other, as `procedure/entity`.
pub fn grid_key_difference(a: &[StateGrid], b: &[StateGrid]) -> (BTreeSet<String>, BTreeSet<String>) {
    let keys = |gs: &[StateGrid]| -> BTreeSet<String> {
        gs.iter()
            .flat_map(|g| g.rows.iter().map(move |r| format!("{}/{}", g.procedure_id, r.entity)))
            .collect()
    };
    let (ka, kb) = (keys(a), keys(b));
    (
        ka.difference(&kb).cloned().collect(),
        kb.difference(&ka).cloned().collect(),
    )
}
