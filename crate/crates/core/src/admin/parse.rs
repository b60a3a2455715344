//! Response parsing and word validation.

use std::collections::HashSet;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::embedding::normalize_term;
use crate::scoring::{RejectReason, ResponseWord, WordResponse, WordStatus};

/// A parsed word list plus any deviation from the requested length.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedList {
    pub words: Vec<String>,
    /// `(expected, found)` when the count differs from the request.
    pub count_deviation: Option<(usize, usize)>,
}

/// Extracts the first well-formed JSON array of strings from free text.
///
/// Returns `None` when no such array exists; never panics.
pub fn parse_word_list(raw: &str, expected_count: usize) -> Option<ParsedList> {
    for (i, _) in raw.match_indices('[') {
        let mut stream = serde_json::Deserializer::from_str(&raw[i..]).into_iter::<Vec<String>>();
        if let Some(Ok(words)) = stream.next() {
            let count_deviation = (words.len() != expected_count).then_some((expected_count, words.len()));
            return Some(ParsedList {
                words,
                count_deviation,
            });
        }
    }
    None
}

/// One free-association entry from a PACE response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Association {
    pub word: String,
    #[serde(default)]
    pub reason: String,
}

#[derive(Deserialize)]
struct Results {
    results: Vec<Association>,
}

/// Extracts `{"results": [{"word", "reason"}, ...]}` (or a bare array of
/// such objects) from free text.
pub fn parse_associations(raw: &str) -> Option<Vec<Association>> {
    for (i, c) in raw.char_indices() {
        let rest = &raw[i..];
        match c {
            '{' => {
                let mut s = serde_json::Deserializer::from_str(rest).into_iter::<Results>();
                if let Some(Ok(r)) = s.next() {
                    return Some(r.results);
                }
            }
            '[' => {
                let mut s = serde_json::Deserializer::from_str(rest).into_iter::<Vec<Association>>();
                if let Some(Ok(r)) = s.next() {
                    if !r.is_empty() {
                        return Some(r);
                    }
                }
            }
            _ => {}
        }
    }
    None
}

/// First non-empty line of a RAT response, with code fences and quotes
/// removed.
pub fn parse_rat_answer(raw: &str) -> Option<String> {
    raw.lines()
        .map(|l| {
            l.trim()
                .trim_matches('`')
                .trim()
                .trim_matches(|c| c == '"' || c == '\'')
        })
        .find(|l| !l.is_empty())
        .map(str::to_string)
}

/// A set of accepted lowercase nouns.
#[derive(Debug, Clone)]
pub struct Lexicon(Arc<HashSet<String>>);

impl Lexicon {
    pub fn new<S: AsRef<str>>(words: impl IntoIterator<Item = S>) -> Self {
        Self(Arc::new(
            words.into_iter().map(|w| normalize_term(w.as_ref())).collect(),
        ))
    }

    /// The shipped WordNet noun list.
    pub fn wordnet() -> Self {
        static LEX: OnceLock<Lexicon> = OnceLock::new();
        LEX.get_or_init(|| Lexicon::new(crate::data::nouns())).clone()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Rules applied by [`validate_words`].
#[derive(Debug, Clone)]
pub struct ValidationRules {
    /// Reject words outside this lexicon (also the proper-noun test).
    pub lexicon: Option<Lexicon>,
    pub cue: Option<String>,
    pub stem_guard: bool,
}

impl Default for ValidationRules {
    fn default() -> Self {
        Self {
            lexicon: Some(Lexicon::wordnet()),
            cue: None,
            stem_guard: true,
        }
    }
}

impl ValidationRules {
    pub fn with_cue(mut self, cue: &str) -> Self {
        self.cue = Some(normalize_term(cue));
        self
    }
}

/// Whether two normalized words look like variations of one another: one is
/// a prefix of the other (shorter at least 3 letters), or they share a
/// prefix of at least max(4, shorter − 2) letters.
pub fn is_variation(a: &str, b: &str) -> bool {
    let (short, long) = if a.chars().count() <= b.chars().count() {
        (a, b)
    } else {
        (b, a)
    };
    let short_len = short.chars().count();
    if short_len < 3 {
        return false;
    }
    if long.starts_with(short) {
        return true;
    }
    let common = short
        .chars()
        .zip(long.chars())
        .take_while(|(x, y)| x == y)
        .count();
    common >= 4.max(short_len.saturating_sub(2))
}

/// Flags each word valid or rejected with a reason; rejections are data.
pub fn validate_words(trial_id: &str, words: &[String], rules: &ValidationRules) -> WordResponse {
    let mut accepted: Vec<String> = Vec::new();
    let mut out = Vec::with_capacity(words.len());
    for raw in words {
        let w = normalize_term(raw);
        let reject = if w.is_empty() {
            Some(RejectReason::Empty)
        } else if w.contains(' ') {
            Some(RejectReason::MultiToken)
        } else if !w.chars().all(char::is_alphabetic) {
            Some(RejectReason::NonAlphabetic)
        } else if rules.lexicon.as_ref().is_some_and(|l| !l.contains(&w)) {
            Some(RejectReason::NotInLexicon)
        } else if accepted.contains(&w) {
            Some(RejectReason::Duplicate)
        } else if rules.cue.as_deref() == Some(w.as_str()) {
            Some(RejectReason::Cue)
        } else if rules.cue.as_deref().is_some_and(|c| is_variation(c, &w)) {
            Some(RejectReason::CueVariation)
        } else if rules.stem_guard && accepted.iter().any(|a| is_variation(a, &w)) {
            Some(RejectReason::Variation)
        } else {
            None
        };
        let status = match reject {
            Some(r) => WordStatus::Rejected(r),
            None => {
                accepted.push(w.clone());
                WordStatus::Valid
            }
        };
        out.push(ResponseWord { word: w, status });
    }
    WordResponse {
        trial_id: trial_id.to_string(),
        words: out,
    }
}
