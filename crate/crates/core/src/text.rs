//! Tokenization and string normalization shared by every module.

const ARTICLES: [&str; 3] = ["the", "a", "an"];

/// Lowercase, trim, collapse internal whitespace and strip leading articles.
///
/// A lone article is kept so that normalization never produces an empty
/// string from non-empty input.
pub fn normalize(s: &str) -> String {
    let lower = s.to_lowercase();
    let mut words: Vec<&str> = lower.split_whitespace().collect();
    let mut start = 0;
    while words.len() - start > 1 && ARTICLES.contains(&words[start]) {
        start += 1;
    }
    words.drain(..start);
    words.join(" ")
}

fn is_split_punct(c: char) -> bool {
    c.is_ascii_punctuation() && c != '-' && c != '\''
}

/// Whitespace tokenization with punctuation split into separate tokens.
pub fn tokenize(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in s.split_whitespace() {
        let mut cur = String::new();
        for c in chunk.chars() {
            if is_split_punct(c) {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(c.to_string());
            } else {
                cur.push(c);
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

/// Half-open token span `[start, end)` within one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn within(&self, n_tokens: usize) -> bool {
        self.start < self.end && self.end <= n_tokens
    }
}

impl serde::Serialize for Span {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [self.start, self.end].serialize(s)
    }
}

impl<'de> serde::Deserialize<'de> for Span {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [start, end] = <[usize; 2]>::deserialize(d)?;
        Ok(Span { start, end })
    }
}

/// Joins the tokens covered by `span`, lowercased.
pub fn span_text(tokens: &[String], span: Span) -> String {
    tokens[span.start.min(tokens.len())..span.end.min(tokens.len())].join(" ")
}

/// Every occurrence of `needle` (already tokenized, lowercase) in `haystack`
/// on token boundaries, compared case-insensitively.
pub fn find_token_seq(haystack: &[String], needle: &[String]) -> Vec<Span> {
    if needle.is_empty() || needle.len() > haystack.len() {
        return Vec::new();
    }
    (0..=haystack.len() - needle.len())
        .filter(|&i| needle.iter().zip(&haystack[i..]).all(|(n, h)| h.to_lowercase() == *n))
        .map(|i| Span::new(i, i + needle.len()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalize_strips_articles_and_whitespace() {
        assert_eq!(normalize("  The   Library "), "library");
        assert_eq!(normalize("an Apple tree"), "apple tree");
        assert_eq!(normalize("the a book"), "book");
        assert_eq!(normalize("The"), "the");
        assert_eq!(normalize("carbon  dioxide"), "carbon dioxide");
    }

    #[test]
    fn tokenize_splits_punctuation() {
        assert_eq!(
            tokenize("Magma rises to the surface."),
            vec!["Magma", "rises", "to", "the", "surface", "."]
        );
        assert_eq!(tokenize("water-based, ok"), vec!["water-based", ",", "ok"]);
    }

    #[test]
    fn token_seq_matching_respects_boundaries() {
        let hay = tokenize("The carbon dioxide and carbon");
        let needle = vec!["carbon".to_string(), "dioxide".to_string()];
        assert_eq!(find_token_seq(&hay, &needle), vec![Span::new(1, 3)]);
        assert!(find_token_seq(&hay, &["bon".to_string()]).is_empty());
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(s in "[ a-zA-Z]{0,30}") {
            let once = normalize(&s);
            prop_assert_eq!(normalize(&once), once);
        }
    }
}
