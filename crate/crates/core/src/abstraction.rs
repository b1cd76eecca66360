//! Reduces a logical-form graph to event frames and passive location facts.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{read_to_string, Error, Result};
use crate::parse_model::{ontology_class, ActionClass, ActionClassMap, LfNode, LogicalFormGraph, Ontology};
use crate::text::{span_text, Span};

pub const AGENT: &str = "AGENT";
pub const AFFECTED: &str = "AFFECTED";
pub const RESULT: &str = "RESULT";
pub const AFFECTED_RESULT: &str = "AFFECTED_RESULT";
pub const RES: &str = "RES";

/// What a raw edge label means to the abstraction.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum RoleTarget {
    ToLoc,
    FromLoc,
    /// Static location; a passive fact on nouns, `at_loc` on events.
    AtLoc,
    Figure,
    Ground,
    Role(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RoleSynonyms {
    map: HashMap<String, RoleTarget>,
}

impl RoleSynonyms {
    /// Parses `raw_label<TAB>target` lines; target is one of `TO_LOC`,
    /// `FROM_LOC`, `AT_LOC`, `FIGURE`, `GROUND` or `ROLE:<NAME>`.
    pub fn parse(text: &str, file: &str) -> Result<Self> {
        let mut map = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (raw, target) = line
                .split_once('\t')
                .ok_or_else(|| Error::format(file, i + 1, "expected raw_label<TAB>target"))?;
            let target = match target.trim() {
                "TO_LOC" => RoleTarget::ToLoc,
                "FROM_LOC" => RoleTarget::FromLoc,
                "AT_LOC" => RoleTarget::AtLoc,
                "FIGURE" => RoleTarget::Figure,
                "GROUND" => RoleTarget::Ground,
                t => match t.strip_prefix("ROLE:") {
                    Some(name) if !name.is_empty() => RoleTarget::Role(name.to_ascii_uppercase()),
                    _ => return Err(Error::format(file, i + 1, format!("unknown role target {t:?}"))),
                },
            };
            let raw = raw.trim().to_ascii_uppercase();
            if map.insert(raw.clone(), target).is_some() {
                return Err(Error::format(file, i + 1, format!("duplicate label {raw}")));
            }
        }
        Ok(RoleSynonyms { map })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_to_string(path)?, &path.display().to_string())
    }

    pub fn builtin() -> Self {
        Self::parse(include_str!("../data/role_synonyms.tsv"), "builtin:role_synonyms.tsv")
            .expect("builtin role synonyms parse")
    }

    /// Unlisted labels pass through as roles named after the label.
    pub fn classify(&self, label: &str) -> RoleTarget {
        let label = label.to_ascii_uppercase();
        self.map
            .get(&label)
            .cloned()
            .unwrap_or_else(|| RoleTarget::Role(label.replace('-', "_")))
    }
}

/// Everything needed to interpret a logical form.
#[derive(Debug, Clone)]
pub struct Lexicon {
    pub ontology: Ontology,
    pub classes: ActionClassMap,
    pub roles: RoleSynonyms,
}

impl Lexicon {
    pub fn builtin() -> Self {
        Lexicon {
            ontology: Ontology::builtin(),
            classes: ActionClassMap::builtin(),
            roles: RoleSynonyms::builtin(),
        }
    }

    pub fn class_of(&self, node: &LfNode) -> Result<ActionClass> {
        ontology_class(&node.onto_type, &self.ontology, &self.classes)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArgRef {
    pub text: String,
    pub span: Span,
    pub node: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventFrame {
    pub step_index: usize,
    pub node: String,
    pub predicate_word: String,
    pub predicate_span: Span,
    pub onto_type: String,
    pub action_class: ActionClass,
    pub roles: BTreeMap<String, ArgRef>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub to_loc: Option<ArgRef>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub from_loc: Option<ArgRef>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub at_loc: Option<ArgRef>,
}

impl EventFrame {
    pub fn role(&self, name: &str) -> Option<&ArgRef> {
        self.roles.get(name)
    }

    pub fn has(&self, name: &str) -> bool {
        self.roles.contains_key(name)
    }
}

/// "the book on the shelf": a location stated without an action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassiveLocationFact {
    pub step_index: usize,
    pub holder: ArgRef,
    pub location: ArgRef,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Abstraction {
    pub frames: Vec<EventFrame>,
    pub passive: Vec<PassiveLocationFact>,
}

struct Ctx<'a> {
    g: &'a LogicalFormGraph,
    tokens: &'a [String],
    lex: &'a Lexicon,
}

impl Ctx<'_> {
    fn arg(&self, node: &LfNode) -> ArgRef {
        let span = self.g.head_phrase_span(node, self.tokens);
        ArgRef {
            text: span_text(self.tokens, span),
            span,
            node: node.id.clone(),
        }
    }

    /// The GROUND of a spatial relation node, if `node` is one.
    fn ground_of(&self, node: &LfNode) -> Option<&LfNode> {
        if node.is_noun_phrase() {
            return None;
        }
        self.g
            .outgoing(&node.id)
            .find(|e| self.lex.roles.classify(&e.label) == RoleTarget::Ground)
            .and_then(|e| self.g.node(&e.dst))
    }

    fn location_arg(&self, node: &LfNode) -> ArgRef {
        self.arg(self.ground_of(node).unwrap_or(node))
    }
}

/// Extracts event frames for every node whose type resolves to an action
/// class, and passive location facts from noun-to-noun locative attachments.
pub fn abstract_events(g: &LogicalFormGraph, tokens: &[String], lex: &Lexicon) -> Result<Abstraction> {
    g.check_spans(tokens.len())
        .map_err(|m| Error::Invalid(format!("sentence {}: {m}", g.sentence_index)))?;
    let cx = Ctx { g, tokens, lex };
    let mut frames = Vec::new();
    for node in &g.nodes {
        let class = lex.class_of(node)?;
        if !class.is_event() {
            continue;
        }
        let mut frame = EventFrame {
            step_index: g.sentence_index,
            node: node.id.clone(),
            predicate_word: node.word.clone(),
            predicate_span: g.head_word_span(node, tokens),
            onto_type: node.onto_type.clone(),
            action_class: class,
            roles: BTreeMap::new(),
            to_loc: None,
            from_loc: None,
            at_loc: None,
        };
        for edge in g.outgoing(&node.id) {
            let Some(target) = g.node(&edge.dst) else { continue };
            if target.id == node.id {
                continue;
            }
            match lex.roles.classify(&edge.label) {
                RoleTarget::ToLoc => {
                    frame.to_loc.get_or_insert_with(|| cx.location_arg(target));
                }
                RoleTarget::FromLoc => {
                    frame.from_loc.get_or_insert_with(|| cx.location_arg(target));
                }
                RoleTarget::AtLoc => {
                    frame.at_loc.get_or_insert_with(|| cx.location_arg(target));
                }
                RoleTarget::Figure | RoleTarget::Ground => {}
                RoleTarget::Role(name) => {
                    if let Some(ground) = cx.ground_of(target) {
                        // unlabeled locative modifier of the event
                        if !target.is_noun_phrase() && lex.class_of(target)? == ActionClass::Other {
                            frame.at_loc.get_or_insert_with(|| cx.arg(ground));
                            continue;
                        }
                    }
                    frame.roles.entry(name).or_insert_with(|| cx.arg(target));
                }
            }
        }
        frames.push(frame);
    }
    frames.sort_by(|a, b| {
        a.predicate_span
            .cmp(&b.predicate_span)
            .then_with(|| a.node.cmp(&b.node))
    });

    let mut passive = Vec::new();
    let mut seen = HashSet::new();
    for holder in g.nodes.iter().filter(|n| n.is_noun_phrase()) {
        for edge in g.outgoing(&holder.id) {
            let Some(target) = g.node(&edge.dst) else { continue };
            let location = match lex.roles.classify(&edge.label) {
                RoleTarget::AtLoc if target.is_noun_phrase() => Some(target),
                RoleTarget::ToLoc | RoleTarget::FromLoc => None,
                _ => cx.ground_of(target).filter(|n| n.is_noun_phrase()),
            };
            if let Some(loc) = location {
                if loc.id != holder.id && seen.insert((holder.id.clone(), loc.id.clone())) {
                    passive.push(PassiveLocationFact {
                        step_index: g.sentence_index,
                        holder: cx.arg(holder),
                        location: cx.arg(loc),
                    });
                }
            }
        }
    }
    Ok(Abstraction { frames, passive })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse_model::parse_trips;
    use crate::text::tokenize;
    use proptest::prelude::*;

    const BOOK_TO_LIBRARY: &str = r#"[{"sentence_index":1,"root":"V0","nodes":[
        {"id":"V0","indicator":"SPEECHACT","type":"SA_REQUEST","word":"","span":[0,9]},
        {"id":"V1","indicator":"F","type":"ONT::MOVE","word":"move","span":[0,9]},
        {"id":"V2","indicator":"THE","type":"ONT::BOOK","word":"book","span":[1,6]},
        {"id":"V3","indicator":"F","type":"ONT::IN-LOC","word":"in","span":[3,6]},
        {"id":"V4","indicator":"THE","type":"ONT::SHELF","word":"shelf","span":[4,6]},
        {"id":"V5","indicator":"THE","type":"ONT::LIBRARY","word":"library","span":[7,9]}],
      "edges":[
        {"src":"V0","label":"content","dst":"V1"},
        {"src":"V1","label":"affected","dst":"V2"},
        {"src":"V1","label":"to-loc","dst":"V5"},
        {"src":"V2","label":"mod","dst":"V3"},
        {"src":"V3","label":"figure","dst":"V2"},
        {"src":"V3","label":"ground","dst":"V4"}]}]"#;

    fn run(json: &str, sentence: &str) -> Abstraction {
        let g = &parse_trips(json, "t").unwrap()[0];
        abstract_events(g, &tokenize(sentence), &Lexicon::builtin()).unwrap()
    }

    #[test]
    fn move_sentence_with_passive_fact() {
        let a = run(BOOK_TO_LIBRARY, "Move the book in the shelf to the library");
        assert_eq!(a.frames.len(), 1);
        let f = &a.frames[0];
        assert_eq!(f.action_class, ActionClass::Move);
        assert_eq!(f.role(AFFECTED).unwrap().text, "the book");
        assert_eq!(f.to_loc.as_ref().unwrap().text, "the library");
        assert_eq!(f.roles.len(), 1);
        assert_eq!(a.passive.len(), 1);
        assert_eq!(a.passive[0].holder.text, "the book");
        assert_eq!(a.passive[0].location.text, "the shelf");
    }

    #[test]
    fn other_class_nodes_yield_no_frames() {
        let json = r#"[{"sentence_index":1,"nodes":[
            {"id":"V1","indicator":"F","type":"ONT::COGITATION","word":"think","span":[1,2]},
            {"id":"V2","indicator":"PRO","type":"ONT::PERSON","word":"I","span":[0,1]}],
            "edges":[{"src":"V1","label":"experiencer","dst":"V2"}]}]"#;
        assert_eq!(run(json, "I think"), Abstraction::default());
    }

    #[test]
    fn destroy_with_location_edge() {
        let json = r#"[{"sentence_index":1,"nodes":[
            {"id":"V1","indicator":"F","type":"ONT::CONSUME","word":"consumed","span":[3,4]},
            {"id":"V2","indicator":"THE","type":"ONT::GAS","word":"oxygen","span":[0,2]},
            {"id":"V3","indicator":"F","type":"ONT::IN-LOC","word":"in","span":[4,7]},
            {"id":"V4","indicator":"THE","type":"ONT::AIR","word":"air","span":[5,7]}],
            "edges":[{"src":"V1","label":"affected","dst":"V2"},{"src":"V1","label":"mod","dst":"V3"},
                     {"src":"V3","label":"figure","dst":"V1"},{"src":"V3","label":"ground","dst":"V4"}]}]"#;
        let a = run(json, "The oxygen is consumed in the air");
        let f = &a.frames[0];
        assert_eq!(f.action_class, ActionClass::Destroy);
        assert_eq!(f.at_loc.as_ref().unwrap().text, "the air");
        assert!(!f.has("MOD"));
        assert!(a.passive.is_empty());
    }

    #[test]
    fn unknown_labels_pass_through() {
        let json = r#"[{"sentence_index":1,"nodes":[
            {"id":"V1","indicator":"F","type":"ONT::MOVE","word":"rises","span":[1,2]},
            {"id":"V2","indicator":"BARE","type":"ONT::MAGMA","word":"magma","span":[0,1]},
            {"id":"V3","indicator":"BARE","type":"ONT::SPEED","word":"slowly","span":[2,3]}],
            "edges":[{"src":"V1","label":"affected","dst":"V2"},{"src":"V1","label":"manner-of","dst":"V3"}]}]"#;
        let a = run(json, "magma rises slowly");
        assert!(a.frames[0].has("MANNER_OF"));
    }

    #[test]
    fn role_synonym_file_errors() {
        assert!(RoleSynonyms::parse("GOAL\tSOMEWHERE\n", "r").is_err());
        assert!(RoleSynonyms::parse("GOAL\tTO_LOC\ngoal\tTO_LOC\n", "r").is_err());
        assert_eq!(
            RoleSynonyms::parse("agentive\tROLE:agent\n", "r")
                .unwrap()
                .classify("AGENTIVE"),
            RoleTarget::Role("AGENT".into())
        );
    }

    proptest! {
        #[test]
        fn role_keys_independent_of_words(words in prop::collection::vec("[a-z]{1,8}", 9)) {
            let sentence = words.join(" ");
            let mut json = BOOK_TO_LIBRARY.to_string();
            for (w, orig) in [(&words[0], "\"move\""), (&words[2], "\"book\""), (&words[5], "\"shelf\""), (&words[8], "\"library\"")] {
                json = json.replace(orig, &format!("\"{w}\""));
            }
            let a = run(&json, &sentence);
            let base = run(BOOK_TO_LIBRARY, "Move the book in the shelf to the library");
            prop_assert_eq!(a.frames.len(), base.frames.len());
            for (x, y) in a.frames.iter().zip(&base.frames) {
                prop_assert_eq!(x.roles.keys().collect::<Vec<_>>(), y.roles.keys().collect::<Vec<_>>());
                prop_assert_eq!(x.to_loc.is_some(), y.to_loc.is_some());
                for r in x.roles.values() {
                    prop_assert_eq!(&r.text, &span_text(&tokenize(&sentence), r.span));
                }
            }
        }
    }
}
