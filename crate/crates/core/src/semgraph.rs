//! Phrase-level semantic graphs built from SRL frames or logical forms, and
//! the question/step extension used by QA-style consumers.
//!
//! Export format:
//! `{"nodes":[{"id","kind","step","span","text"}],"edges":[{"src","dst","type"}]}`.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{find_mentions, Entity, Procedure};
use crate::error::{Error, Result};
use crate::parse_model::{LogicalFormGraph, SrlDoc};
use crate::pipeline::parse_for;
use crate::text::{normalize, span_text, Span};

/// Edge type for cross-sentence links between alias matches or identical phrases.
pub const SAME: &str = "SAME";
/// Edge type for cross-sentence links involving a coreference mention.
pub const COREF: &str = "COREF";
pub const QUESTION: &str = "QUESTION";
pub const STEP: &str = "STEP";
/// Separator between role labels of a synthesized path edge.
pub const PATH_SEPARATOR: &str = "|";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Predicate,
    EntityMention,
    NounPhrase,
    Question,
    Step,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GNode {
    pub id: usize,
    pub kind: NodeKind,
    pub step: usize,
    pub span: Span,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GEdge {
    pub src: usize,
    pub dst: usize,
    #[serde(rename = "type")]
    pub type_label: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticGraph {
    pub nodes: Vec<GNode>,
    pub edges: Vec<GEdge>,
}

impl SemanticGraph {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let g: SemanticGraph = serde_json::from_str(text).map_err(|e| Error::Invalid(format!("graph json: {e}")))?;
        g.validate()?;
        Ok(g)
    }

    /// Ids are positions, edges point at existing nodes, no self-loops or
    /// repeated (src, dst, type) triples.
    pub fn validate(&self) -> Result<()> {
        if let Some((i, n)) = self.nodes.iter().enumerate().find(|(i, n)| n.id != *i) {
            return Err(Error::Invalid(format!("node at position {i} has id {}", n.id)));
        }
        let mut seen = HashSet::new();
        for e in &self.edges {
            if e.src >= self.nodes.len() || e.dst >= self.nodes.len() {
                return Err(Error::Invalid(format!(
                    "edge {} -> {} references a missing node",
                    e.src, e.dst
                )));
            }
            if e.src == e.dst {
                return Err(Error::Invalid(format!("self-loop on node {}", e.src)));
            }
            if !seen.insert(e) {
                return Err(Error::Invalid(format!(
                    "duplicate edge {} -> {} ({:?})",
                    e.src, e.dst, e.type_label
                )));
            }
        }
        Ok(())
    }

    pub fn neighbors(&self, id: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter_map(move |e| {
            if e.src == id {
                Some(e.dst)
            } else if e.dst == id {
                Some(e.src)
            } else {
                None
            }
        })
    }

    pub fn nodes_of_kind(&self, kind: NodeKind) -> impl Iterator<Item = &GNode> + '_ {
        self.nodes.iter().filter(move |n| n.kind == kind)
    }

    pub fn connected(&self, a: usize, b: usize) -> bool {
        self.edges
            .iter()
            .any(|e| (e.src == a && e.dst == b) || (e.src == b && e.dst == a))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphOptions {
    /// Add argument-argument edges for adjunct (ARGM-*) arguments.
    pub adjunct_arg_edges: bool,
}

impl Default for GraphOptions {
    fn default() -> Self {
        GraphOptions {
            adjunct_arg_edges: true,
        }
    }
}

#[derive(Default)]
struct Builder {
    g: SemanticGraph,
    by_span: HashMap<(usize, Span), usize>,
    edge_set: HashSet<GEdge>,
}

impl Builder {
    fn node(&mut self, kind: NodeKind, step: usize, span: Span, text: String) -> usize {
        if let Some(&id) = self.by_span.get(&(step, span)) {
            if self.g.nodes[id].kind == NodeKind::NounPhrase && kind == NodeKind::EntityMention {
                self.g.nodes[id].kind = kind;
            }
            return id;
        }
        let id = self.push(kind, step, span, text);
        self.by_span.insert((step, span), id);
        id
    }

    fn push(&mut self, kind: NodeKind, step: usize, span: Span, text: String) -> usize {
        let id = self.g.nodes.len();
        self.g.nodes.push(GNode {
            id,
            kind,
            step,
            span,
            text,
        });
        id
    }

    fn edge(&mut self, src: usize, dst: usize, label: &str) {
        if src == dst {
            return;
        }
        let e = GEdge {
            src,
            dst,
            type_label: label.to_string(),
        };
        if self.edge_set.insert(e.clone()) {
            self.g.edges.push(e);
        }
    }

    fn has_step_node_overlapping(&self, step: usize, span: &Span) -> bool {
        self.g.nodes.iter().any(|n| n.step == step && n.span.overlaps(span))
    }
}

/// Entity mention spans per step, computed once per procedure.
struct MentionIndex {
    // step -> [(entity index, span, via coref)]
    by_step: BTreeMap<usize, Vec<(usize, Span, bool)>>,
}

impl MentionIndex {
    fn new(procedure: &Procedure) -> Self {
        let mut by_step: BTreeMap<usize, Vec<(usize, Span, bool)>> = BTreeMap::new();
        for step in &procedure.steps {
            let v = by_step.entry(step.index).or_default();
            for (ei, e) in procedure.entities.iter().enumerate() {
                let coref: Vec<Span> = e.coref_in_step(step.index).collect();
                for span in find_mentions(e, step) {
                    v.push((ei, span, coref.contains(&span)));
                }
            }
        }
        MentionIndex { by_step }
    }

    fn at(&self, step: usize) -> &[(usize, Span, bool)] {
        self.by_step.get(&step).map(Vec::as_slice).unwrap_or(&[])
    }

    fn is_mention(&self, step: usize, span: &Span) -> bool {
        self.at(step).iter().any(|(_, s, _)| s.overlaps(span))
    }
}

fn phrase_kind(mentions: &MentionIndex, step: usize, span: &Span) -> NodeKind {
    if mentions.is_mention(step, span) {
        NodeKind::EntityMention
    } else {
        NodeKind::NounPhrase
    }
}

/// Adds a node for every entity mention not already covered by a phrase.
fn add_uncovered_mentions(b: &mut Builder, procedure: &Procedure, mentions: &MentionIndex) {
    for step in &procedure.steps {
        for &(_, span, _) in mentions.at(step.index) {
            if !b.has_step_node_overlapping(step.index, &span) {
                b.node(NodeKind::EntityMention, step.index, span, span_text(&step.tokens, span));
            }
        }
    }
}

/// Links each entity-mention node to the nearest earlier-step node of the
/// same entity, and noun phrases to the nearest earlier identical phrase.
fn link_across_sentences(b: &mut Builder, mentions: &MentionIndex) {
    #[derive(PartialEq, Eq, Hash, Clone)]
    enum Key {
        Entity(usize),
        Phrase(String),
    }
    let mut order: Vec<usize> = (0..b.g.nodes.len()).collect();
    order.sort_by_key(|&i| (b.g.nodes[i].step, i));
    // key -> (step, node id, via coref) of the latest occurrence in the
    // previous steps; `pending` holds the current step's occurrences.
    let mut last: HashMap<Key, (usize, usize, bool)> = HashMap::new();
    let mut pending: Vec<(Key, (usize, usize, bool))> = Vec::new();
    let mut current_step = None;
    let mut links: Vec<(usize, usize, &'static str)> = Vec::new();
    for id in order {
        let n = &b.g.nodes[id];
        if current_step != Some(n.step) {
            for (k, v) in pending.drain(..) {
                last.insert(k, v);
            }
            current_step = Some(n.step);
        }
        let mut keys: Vec<(Key, bool)> = Vec::new();
        match n.kind {
            NodeKind::EntityMention => {
                let mut seen = HashSet::new();
                for &(ei, span, coref) in mentions.at(n.step) {
                    if span.overlaps(&n.span) && seen.insert(ei) {
                        keys.push((Key::Entity(ei), coref));
                    }
                }
            }
            NodeKind::NounPhrase => keys.push((Key::Phrase(normalize(&n.text)), false)),
            _ => {}
        }
        for (k, coref) in keys {
            if let Some(&(_, prev, prev_coref)) = last.get(&k) {
                links.push((prev, id, if coref || prev_coref { COREF } else { SAME }));
            }
            pending.push((k, (n.step, id, coref)));
        }
    }
    for (src, dst, label) in links {
        b.edge(src, dst, label);
    }
}

fn srl_doc_for<'a>(procedure: &Procedure, docs: &'a [SrlDoc], step: usize) -> Result<&'a SrlDoc> {
    docs.iter()
        .find(|d| d.sentence_index == step)
        .ok_or_else(|| Error::MissingParse {
            procedure: procedure.id.clone(),
            step,
        })
}

fn span_error(procedure: &Procedure, step: usize, msg: String) -> Error {
    Error::Invalid(format!("{} step {step}: {msg}", procedure.id))
}

/// Graph from SRL frames: predicate-argument edges and argument-argument
/// edges within each frame, all untyped.
pub fn build_srl_graph(procedure: &Procedure, docs: &[SrlDoc], opts: &GraphOptions) -> Result<SemanticGraph> {
    let mentions = MentionIndex::new(procedure);
    let mut b = Builder::default();
    for step in &procedure.steps {
        let doc = srl_doc_for(procedure, docs, step.index)?;
        doc.check_spans(step.tokens.len())
            .map_err(|m| span_error(procedure, step.index, m))?;
        for frame in &doc.frames {
            let p = b.node(
                NodeKind::Predicate,
                step.index,
                frame.predicate.span,
                span_text(&step.tokens, frame.predicate.span),
            );
            let args: Vec<(usize, bool)> = frame
                .args
                .iter()
                .map(|a| {
                    let kind = phrase_kind(&mentions, step.index, &a.span);
                    (
                        b.node(kind, step.index, a.span, span_text(&step.tokens, a.span)),
                        a.is_adjunct(),
                    )
                })
                .collect();
            for &(a, _) in &args {
                b.edge(p, a, "");
            }
            for (i, &(a, a_adj)) in args.iter().enumerate() {
                for &(c, c_adj) in &args[i + 1..] {
                    if opts.adjunct_arg_edges || !(a_adj || c_adj) {
                        b.edge(a, c, "");
                    }
                }
            }
        }
    }
    add_uncovered_mentions(&mut b, procedure, &mentions);
    link_across_sentences(&mut b, &mentions);
    Ok(b.g)
}

fn is_relation_node(g: &LogicalFormGraph, id: &str) -> bool {
    g.outgoing(id).any(|e| e.label == "GROUND" || e.label == "FIGURE")
}

/// Shortest label sequence from `sources` to every reachable node of an
/// undirected labeled graph; among equally short paths the lexicographically
/// smallest label sequence wins.
fn best_paths(adj: &[Vec<(usize, &str)>], sources: &[usize]) -> Vec<Option<Vec<String>>> {
    let mut best: Vec<Option<Vec<String>>> = vec![None; adj.len()];
    let mut frontier: Vec<usize> = sources.to_vec();
    for &s in sources {
        best[s] = Some(Vec::new());
    }
    while !frontier.is_empty() {
        let mut next: BTreeMap<usize, Vec<String>> = BTreeMap::new();
        for &u in &frontier {
            let base = best[u].as_ref().expect("frontier nodes are labeled");
            for &(v, label) in &adj[u] {
                if best[v].is_some() {
                    continue;
                }
                let mut cand = base.clone();
                cand.push(label.to_string());
                match next.get(&v) {
                    Some(cur) if *cur <= cand => {}
                    _ => {
                        next.insert(v, cand);
                    }
                }
            }
        }
        frontier = next.keys().copied().collect();
        for (v, seq) in next {
            best[v] = Some(seq);
        }
    }
    best
}

/// Graph from logical forms. Noun phrases (cut to their head phrase) and
/// non-relational predicates (head word) become nodes; parse edges between
/// them keep their role label, and phrase pairs of one sentence that are
/// only connected through hidden parse nodes get an edge labeled with the
/// role labels of the shortest connecting path.
pub fn build_trips_graph(procedure: &Procedure, graphs: &[LogicalFormGraph]) -> Result<SemanticGraph> {
    let mentions = MentionIndex::new(procedure);
    let mut b = Builder::default();
    for step in &procedure.steps {
        let lf = parse_for(procedure, graphs, step.index)?;
        lf.check_spans(step.tokens.len())
            .map_err(|m| span_error(procedure, step.index, m))?;
        let tokens = &step.tokens;

        // LF node index -> phrase node id
        let mut cover: Vec<Option<usize>> = vec![None; lf.nodes.len()];
        for (i, n) in lf.nodes.iter().enumerate() {
            if n.is_noun_phrase() {
                let span = lf.head_phrase_span(n, tokens);
                let kind = phrase_kind(&mentions, step.index, &span);
                cover[i] = Some(b.node(kind, step.index, span, span_text(tokens, span)));
            } else if n.is_predicate() && !is_relation_node(lf, &n.id) {
                let span = lf.head_word_span(n, tokens);
                cover[i] = Some(b.node(NodeKind::Predicate, step.index, span, span_text(tokens, span)));
            }
        }
        // Hidden nodes lying inside a phrase belong to the smallest such phrase.
        let phrases: Vec<usize> = {
            let mut v: Vec<usize> = cover.iter().flatten().copied().collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        for (i, n) in lf.nodes.iter().enumerate() {
            if cover[i].is_none() {
                cover[i] = phrases
                    .iter()
                    .copied()
                    .filter(|&p| b.g.nodes[p].span.contains(&n.span))
                    .min_by_key(|&p| (b.g.nodes[p].span.len(), p));
            }
        }

        let mut adj: Vec<Vec<(usize, &str)>> = vec![Vec::new(); lf.nodes.len()];
        for e in &lf.edges {
            let (Some(u), Some(v)) = (lf.node_index(&e.src), lf.node_index(&e.dst)) else {
                continue;
            };
            adj[u].push((v, e.label.as_str()));
            adj[v].push((u, e.label.as_str()));
            if let (Some(pu), Some(pv)) = (cover[u], cover[v]) {
                b.edge(pu, pv, &e.label);
            }
        }

        let members = |p: usize| -> Vec<usize> { (0..lf.nodes.len()).filter(|&i| cover[i] == Some(p)).collect() };
        for (k, &p) in phrases.iter().enumerate() {
            let paths = best_paths(&adj, &members(p));
            for &q in &phrases[k + 1..] {
                if b.g.connected(p, q) {
                    continue;
                }
                let chosen = members(q)
                    .into_iter()
                    .filter_map(|i| paths[i].clone())
                    .min_by(|a, c| a.len().cmp(&c.len()).then_with(|| a.cmp(c)));
                if let Some(seq) = chosen {
                    b.edge(p, q, &seq.join(PATH_SEPARATOR));
                }
            }
        }
    }
    add_uncovered_mentions(&mut b, procedure, &mentions);
    link_across_sentences(&mut b, &mentions);
    Ok(b.g)
}

/// Adds a question node linked to every node mentioning `entity`, and one
/// node per step linked to every node of that step.
pub fn extend_qa_graph(g: &SemanticGraph, entity: &Entity, procedure: &Procedure) -> SemanticGraph {
    let mut b = Builder {
        g: g.clone(),
        by_span: HashMap::new(),
        edge_set: g.edges.iter().cloned().collect(),
    };
    let original = g.nodes.len();
    let q = b.push(
        NodeKind::Question,
        0,
        Span::new(0, 0),
        format!("where is {}?", entity.canonical_name),
    );
    let mut linked = 0;
    for step in &procedure.steps {
        let spans = find_mentions(entity, step);
        for id in 0..original {
            let n = &b.g.nodes[id];
            if n.step == step.index
                && matches!(n.kind, NodeKind::EntityMention | NodeKind::NounPhrase)
                && spans.iter().any(|s| s.overlaps(&n.span))
            {
                b.edge(q, id, QUESTION);
                linked += 1;
            }
        }
    }
    if linked == 0 {
        log::warn!("{}: entity {:?} has no node in the graph", procedure.id, entity.name);
    }
    for step in &procedure.steps {
        let s = b.push(
            NodeKind::Step,
            step.index,
            Span::new(0, step.tokens.len()),
            step.text.clone(),
        );
        for id in 0..original {
            if b.g.nodes[id].step == step.index {
                b.edge(s, id, STEP);
            }
        }
    }
    b.g
}
