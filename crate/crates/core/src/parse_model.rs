//! Logical-form graphs and SRL frames read from parser output, plus the
//! ontology walk that maps event types to action classes.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::NounPhraseSource;
use crate::error::{read_to_string, Error, Result};
use crate::text::{span_text, Span};

/// Node indicators that mark a noun phrase in a logical form.
pub const NOUN_PHRASE_INDICATORS: &[&str] = &["THE", "A", "BARE", "INDEF-SET", "THE-SET", "QUANTIFIER", "SM"];

/// Indicator of predicate (event and relation) nodes.
pub const PREDICATE_INDICATOR: &str = "F";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActionClass {
    Create,
    Move,
    Destroy,
    Change,
    Other,
}

impl ActionClass {
    pub fn is_event(self) -> bool {
        self != ActionClass::Other
    }
}

impl FromStr for ActionClass {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_uppercase().as_str() {
            "CREATE" => Ok(ActionClass::Create),
            "MOVE" => Ok(ActionClass::Move),
            "DESTROY" => Ok(ActionClass::Destroy),
            "CHANGE" => Ok(ActionClass::Change),
            other => Err(format!("unknown action class {other:?}")),
        }
    }
}

impl fmt::Display for ActionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Uppercases and drops a leading `ONT::` package prefix.
pub fn normalize_type(t: &str) -> String {
    let t = t.trim();
    let t = t.strip_prefix("ONT::").or_else(|| t.strip_prefix("ont::")).unwrap_or(t);
    t.to_ascii_uppercase()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LfNode {
    pub id: String,
    pub indicator: String,
    #[serde(rename = "type")]
    pub onto_type: String,
    pub word: String,
    pub span: Span,
}

impl LfNode {
    pub fn is_noun_phrase(&self) -> bool {
        NOUN_PHRASE_INDICATORS.contains(&self.indicator.as_str())
    }

    pub fn is_predicate(&self) -> bool {
        self.indicator == PREDICATE_INDICATOR
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LfEdge {
    pub src: String,
    pub label: String,
    pub dst: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogicalFormGraph {
    pub sentence_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root: Option<String>,
    pub nodes: Vec<LfNode>,
    pub edges: Vec<LfEdge>,
}

impl LogicalFormGraph {
    /// Checks structural invariants and canonicalizes labels and types.
    pub fn validate(mut self) -> std::result::Result<Self, String> {
        let mut ids = HashSet::new();
        for n in &mut self.nodes {
            if !ids.insert(n.id.clone()) {
                return Err(format!("duplicate node id {}", n.id));
            }
            if n.span.end < n.span.start {
                return Err(format!("node {} has an inverted span", n.id));
            }
            n.onto_type = normalize_type(&n.onto_type);
            n.indicator = n.indicator.trim().to_ascii_uppercase();
        }
        for e in &mut self.edges {
            for end in [&e.src, &e.dst] {
                if !ids.contains(end) {
                    return Err(format!("edge references unknown node id {end}"));
                }
            }
            e.label = e.label.trim().to_ascii_uppercase();
        }
        if let Some(root) = &self.root {
            if !ids.contains(root) {
                return Err(format!("root references unknown node id {root}"));
            }
        }
        Ok(self)
    }

    pub fn node(&self, id: &str) -> Option<&LfNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    pub fn outgoing<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a LfEdge> + 'a {
        self.edges.iter().filter(move |e| e.src == id)
    }

    pub fn incoming<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a LfEdge> + 'a {
        self.edges.iter().filter(move |e| e.dst == id)
    }

    /// Token position of the node's head word inside its span.
    pub fn head_position(&self, node: &LfNode, tokens: &[String]) -> usize {
        let first = node.word.split_whitespace().next().unwrap_or("").to_lowercase();
        (node.span.start..node.span.end.min(tokens.len()))
            .find(|&i| tokens[i].to_lowercase() == first)
            .unwrap_or(node.span.start)
    }

    /// The node's phrase with trailing modifiers removed: the span is cut at
    /// the first child phrase that starts after the head word, which drops
    /// attached prepositional phrases and relative clauses.
    pub fn head_phrase_span(&self, node: &LfNode, tokens: &[String]) -> Span {
        let head = self.head_position(node, tokens);
        let cut = self
            .outgoing(&node.id)
            .filter_map(|e| self.node(&e.dst))
            .filter(|c| c.id != node.id && node.span.contains(&c.span) && c.span.start > head)
            .map(|c| c.span.start)
            .min()
            .unwrap_or(node.span.end);
        Span::new(node.span.start, cut.max(head + 1))
    }

    /// Single-token span over the head word, used for predicates.
    pub fn head_word_span(&self, node: &LfNode, tokens: &[String]) -> Span {
        let h = self.head_position(node, tokens);
        Span::new(h, h + 1)
    }

    /// Every node span lies within a sentence of `n_tokens` tokens.
    pub fn check_spans(&self, n_tokens: usize) -> std::result::Result<(), String> {
        match self.nodes.iter().find(|n| !n.span.within(n_tokens)) {
            Some(n) => Err(format!(
                "node {} span [{}, {}) outside sentence of {} tokens",
                n.id, n.span.start, n.span.end, n_tokens
            )),
            None => Ok(()),
        }
    }
}

impl NounPhraseSource for LogicalFormGraph {
    fn sentence_index(&self) -> usize {
        self.sentence_index
    }

    fn noun_phrases(&self, tokens: &[String]) -> Vec<(Span, String)> {
        self.nodes
            .iter()
            .filter(|n| n.is_noun_phrase() && n.span.within(tokens.len()))
            .map(|n| {
                let span = self.head_phrase_span(n, tokens);
                (span, span_text(tokens, span))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SrlPredicate {
    pub span: Span,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SrlArg {
    pub role: String,
    pub span: Span,
    pub text: String,
}

impl SrlArg {
    pub fn is_adjunct(&self) -> bool {
        self.role.starts_with("ARGM")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SrlFrame {
    pub predicate: SrlPredicate,
    pub args: Vec<SrlArg>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SrlDoc {
    pub sentence_index: usize,
    pub frames: Vec<SrlFrame>,
}

impl SrlDoc {
    pub fn validate(mut self) -> std::result::Result<Self, String> {
        for f in &mut self.frames {
            for a in &mut f.args {
                a.role = a.role.trim().to_ascii_uppercase();
                if a.span.overlaps(&f.predicate.span) {
                    return Err(format!(
                        "argument {:?} overlaps predicate {:?} in sentence {}",
                        a.text, f.predicate.text, self.sentence_index
                    ));
                }
            }
        }
        Ok(self)
    }

    pub fn check_spans(&self, n_tokens: usize) -> std::result::Result<(), String> {
        for f in &self.frames {
            for (span, text) in
                std::iter::once((f.predicate.span, &f.predicate.text)).chain(f.args.iter().map(|a| (a.span, &a.text)))
            {
                if !span.within(n_tokens) {
                    return Err(format!("span of {text:?} outside sentence of {n_tokens} tokens"));
                }
            }
        }
        Ok(())
    }
}

const LEADING_PREPOSITIONS: &[&str] = &[
    "to", "from", "in", "into", "on", "onto", "at", "through", "with", "by", "of", "over", "under", "inside", "out",
];

impl NounPhraseSource for SrlDoc {
    fn sentence_index(&self) -> usize {
        self.sentence_index
    }

    /// Argument phrases with one leading preposition dropped.
    fn noun_phrases(&self, tokens: &[String]) -> Vec<(Span, String)> {
        self.frames
            .iter()
            .flat_map(|f| f.args.iter())
            .filter(|a| a.span.within(tokens.len()))
            .map(|a| {
                let mut span = a.span;
                if span.len() > 1 && LEADING_PREPOSITIONS.contains(&tokens[span.start].to_lowercase().as_str()) {
                    span.start += 1;
                }
                (span, span_text(tokens, span))
            })
            .collect()
    }
}

fn load_json_array<T, F>(path: &Path, validate: F) -> Result<Vec<T>>
where
    T: serde::de::DeserializeOwned,
    F: Fn(T) -> std::result::Result<T, String>,
{
    let text = read_to_string(path)?;
    parse_json_array(&text, &path.display().to_string(), validate)
}

fn parse_json_array<T, F>(text: &str, file: &str, validate: F) -> Result<Vec<T>>
where
    T: serde::de::DeserializeOwned,
    F: Fn(T) -> std::result::Result<T, String>,
{
    let raw: Vec<serde_json::Value> =
        serde_json::from_str(text).map_err(|e| Error::format(file, e.line(), e.to_string()))?;
    raw.into_iter()
        .enumerate()
        .map(|(i, v)| {
            let item: T = serde_json::from_value(v).map_err(|e| Error::format(file, 0, format!("item {i}: {e}")))?;
            validate(item).map_err(|msg| Error::format(file, 0, format!("item {i}: {msg}")))
        })
        .collect()
}

fn sort_unique<T>(mut items: Vec<T>, file: &str, key: impl Fn(&T) -> usize) -> Result<Vec<T>> {
    items.sort_by_key(&key);
    if let Some(w) = items.windows(2).find(|w| key(&w[0]) == key(&w[1])) {
        return Err(Error::format(
            file,
            0,
            format!("duplicate sentence_index {}", key(&w[0])),
        ));
    }
    Ok(items)
}

/// Reads a JSON array of logical-form graphs, one per sentence.
pub fn load_trips(path: &Path) -> Result<Vec<LogicalFormGraph>> {
    let graphs = load_json_array(path, LogicalFormGraph::validate)?;
    sort_unique(graphs, &path.display().to_string(), |g| g.sentence_index)
}

pub fn parse_trips(text: &str, file: &str) -> Result<Vec<LogicalFormGraph>> {
    let graphs = parse_json_array(text, file, LogicalFormGraph::validate)?;
    sort_unique(graphs, file, |g| g.sentence_index)
}

/// Reads a JSON array of SRL documents, one per sentence.
pub fn load_srl(path: &Path) -> Result<Vec<SrlDoc>> {
    let docs = load_json_array(path, SrlDoc::validate)?;
    sort_unique(docs, &path.display().to_string(), |d| d.sentence_index)
}

pub fn parse_srl(text: &str, file: &str) -> Result<Vec<SrlDoc>> {
    let docs = parse_json_array(text, file, SrlDoc::validate)?;
    sort_unique(docs, file, |d| d.sentence_index)
}

/// Parses per procedure, keyed by procedure id.
pub type ParseIndex<T> = BTreeMap<String, Vec<T>>;

/// Path of a procedure's parse file: `<dir>/<id>.<kind>.json`.
pub fn parse_file(dir: &Path, procedure_id: &str, kind: &str) -> std::path::PathBuf {
    dir.join(format!("{procedure_id}.{kind}.json"))
}

/// Loads `<dir>/<id>.trips.json` for every id.
pub fn load_trips_dir<'a>(dir: &Path, ids: impl IntoIterator<Item = &'a str>) -> Result<ParseIndex<LogicalFormGraph>> {
    ids.into_iter()
        .map(|id| Ok((id.to_string(), load_trips(&parse_file(dir, id, "trips"))?)))
        .collect()
}

/// Loads `<dir>/<id>.srl.json` for every id.
pub fn load_srl_dir<'a>(dir: &Path, ids: impl IntoIterator<Item = &'a str>) -> Result<ParseIndex<SrlDoc>> {
    ids.into_iter()
        .map(|id| Ok((id.to_string(), load_srl(&parse_file(dir, id, "srl"))?)))
        .collect()
}

fn tsv_pairs(text: &str, file: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split('\t');
        match (cols.next(), cols.next(), cols.next()) {
            (Some(a), Some(b), None) if !a.trim().is_empty() && !b.trim().is_empty() => {
                out.push((i + 1, a.trim().to_string(), b.trim().to_string()))
            }
            _ => return Err(Error::format(file, i + 1, "expected two tab-separated columns")),
        }
    }
    Ok(out)
}

/// Single-parent type hierarchy.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Ontology {
    parents: HashMap<String, String>,
}

impl Ontology {
    pub fn parse(text: &str, file: &str) -> Result<Self> {
        let mut parents = HashMap::new();
        for (line, child, parent) in tsv_pairs(text, file)? {
            let child = normalize_type(&child);
            if parents.insert(child.clone(), normalize_type(&parent)).is_some() {
                return Err(Error::format(
                    file,
                    line,
                    format!("type {child} has more than one parent"),
                ));
            }
        }
        Ok(Ontology { parents })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_to_string(path)?, &path.display().to_string())
    }

    pub fn builtin() -> Self {
        Self::parse(include_str!("../data/ontology.tsv"), "builtin:ontology.tsv").expect("builtin ontology parses")
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        Ontology {
            parents: pairs
                .into_iter()
                .map(|(c, p)| (normalize_type(c), normalize_type(p)))
                .collect(),
        }
    }

    pub fn parent(&self, t: &str) -> Option<&str> {
        self.parents.get(t).map(String::as_str)
    }

    /// Fails on the first type whose ancestor chain loops.
    pub fn validate(&self) -> Result<()> {
        let mut keys: Vec<&String> = self.parents.keys().collect();
        keys.sort();
        for t in keys {
            let mut seen = HashSet::new();
            let mut cur = t.as_str();
            while let Some(p) = self.parent(cur) {
                if !seen.insert(cur) {
                    return Err(Error::OntologyCycle(cur.to_string()));
                }
                cur = p;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ActionClassMap {
    entries: BTreeMap<String, ActionClass>,
}

impl ActionClassMap {
    pub fn parse(text: &str, file: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (line, t, class) in tsv_pairs(text, file)? {
            let class: ActionClass = class.parse().map_err(|m: String| Error::format(file, line, m))?;
            let t = normalize_type(&t);
            if entries.insert(t.clone(), class).is_some() {
                return Err(Error::format(file, line, format!("duplicate mapping for {t}")));
            }
        }
        Ok(ActionClassMap { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_to_string(path)?, &path.display().to_string())
    }

    pub fn builtin() -> Self {
        Self::parse(include_str!("../data/action_classes.tsv"), "builtin:action_classes.tsv")
            .expect("builtin class map parses")
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, ActionClass)>) -> Self {
        ActionClassMap {
            entries: pairs.into_iter().map(|(t, c)| (normalize_type(t), c)).collect(),
        }
    }

    pub fn get(&self, t: &str) -> Option<ActionClass> {
        self.entries.get(t).copied()
    }
}

/// Class of `t`: its own mapping, else that of the nearest mapped ancestor,
/// else `Other`.
pub fn ontology_class(t: &str, ont: &Ontology, map: &ActionClassMap) -> Result<ActionClass> {
    let start = normalize_type(t);
    let mut cur = start.as_str();
    let mut visited = HashSet::new();
    loop {
        if let Some(c) = map.get(cur) {
            return Ok(c);
        }
        if !visited.insert(cur.to_string()) {
            return Err(Error::OntologyCycle(cur.to_string()));
        }
        match ont.parent(cur) {
            Some(p) => cur = p,
            None => return Ok(ActionClass::Other),
        }
    }
}
