//! Streaming phrase matcher over transcript tokens.
//!
//! Matching is exact per word after case folding. When several phrases can
//! complete from the same start token the longest one wins, and matched
//! tokens are consumed.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_PHRASE_WORDS: usize = 5;
pub const DEFAULT_MAX_GAP_MS: u64 = 1500;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phrase {
    pub phrase_id: String,
    pub words: Vec<String>,
}

impl Phrase {
    pub fn new(phrase_id: impl Into<String>, words: &[&str]) -> Self {
        Self {
            phrase_id: phrase_id.into(),
            words: words.iter().map(|w| w.to_string()).collect(),
        }
    }

    /// Builds a phrase from a space-separated sentence.
    pub fn from_sentence(phrase_id: impl Into<String>, sentence: &str) -> Self {
        Self {
            phrase_id: phrase_id.into(),
            words: sentence.split_whitespace().map(str::to_string).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), GrammarError> {
        let bad = |reason: &str| {
            Err(GrammarError::InvalidPhrase {
                phrase_id: self.phrase_id.clone(),
                reason: reason.to_string(),
            })
        };
        if self.phrase_id.is_empty() {
            return bad("empty phrase id");
        }
        if self.words.is_empty() || self.words.len() > MAX_PHRASE_WORDS {
            return bad("a phrase has between 1 and 5 words");
        }
        for w in &self.words {
            if w.is_empty() || w.chars().any(char::is_whitespace) {
                return bad("words must be non-empty and contain no whitespace");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GrammarError {
    #[error("empty vocabulary")]
    EmptyVocabulary,
    #[error("phrases `{first}` and `{second}` have the same words")]
    DuplicatePhraseWords { first: String, second: String },
    #[error("duplicate phrase id `{0}`")]
    DuplicatePhraseId(String),
    #[error("invalid phrase `{phrase_id}`: {reason}")]
    InvalidPhrase { phrase_id: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptToken {
    #[serde(rename = "t")]
    pub timestamp_ms: u64,
    pub word: String,
}

impl TranscriptToken {
    pub fn new(timestamp_ms: u64, word: impl Into<String>) -> Self {
        Self {
            timestamp_ms,
            word: word.into(),
        }
    }
}

/// A recognized phrase. `first_token..=last_token` are stream token indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CommandEvent {
    pub phrase_id: String,
    pub timestamp_ms: u64,
    pub first_token: u64,
    pub last_token: u64,
}

#[derive(Debug, Clone)]
pub struct Grammar {
    phrases: Vec<Phrase>,
    max_gap_ms: u64,
    // lowercase word sequence -> phrase index
    complete: HashMap<Vec<String>, usize>,
    // every proper prefix of some phrase
    prefixes: HashSet<Vec<String>>,
}

/// Validates and indexes a vocabulary.
pub fn compile(phrases: &[Phrase]) -> Result<Grammar, GrammarError> {
    Grammar::new(phrases, DEFAULT_MAX_GAP_MS)
}

impl Grammar {
    pub fn new(phrases: &[Phrase], max_gap_ms: u64) -> Result<Self, GrammarError> {
        if phrases.is_empty() {
            return Err(GrammarError::EmptyVocabulary);
        }
        let mut complete = HashMap::new();
        let mut prefixes = HashSet::new();
        let mut ids = HashSet::new();
        let mut normalized = Vec::with_capacity(phrases.len());
        for (i, p) in phrases.iter().enumerate() {
            p.validate()?;
            if !ids.insert(p.phrase_id.as_str()) {
                return Err(GrammarError::DuplicatePhraseId(p.phrase_id.clone()));
            }
            let words: Vec<String> = p.words.iter().map(|w| w.to_lowercase()).collect();
            if let Some(&j) = complete.get(&words) {
                let first: &Phrase = &phrases[j];
                return Err(GrammarError::DuplicatePhraseWords {
                    first: first.phrase_id.clone(),
                    second: p.phrase_id.clone(),
                });
            }
            for k in 1..words.len() {
                prefixes.insert(words[..k].to_vec());
            }
            complete.insert(words.clone(), i);
            normalized.push(Phrase {
                phrase_id: p.phrase_id.clone(),
                words,
            });
        }
        Ok(Self {
            phrases: normalized,
            max_gap_ms,
            complete,
            prefixes,
        })
    }

    pub fn max_gap_ms(&self) -> u64 {
        self.max_gap_ms
    }

    pub fn phrases(&self) -> &[Phrase] {
        &self.phrases
    }

    fn is_prefix(&self, words: &[String]) -> bool {
        self.prefixes.contains(words)
    }

    fn complete_match(&self, words: &[String]) -> Option<&Phrase> {
        self.complete.get(words).map(|&i| &self.phrases[i])
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Pending {
    word: String,
    timestamp_ms: u64,
    index: u64,
}

/// Partial-match state for one transcript stream.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MatchState {
    pending: Vec<Pending>,
    next_index: u64,
}

impl MatchState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_idle(&self) -> bool {
        self.pending.is_empty()
    }

    pub fn tokens_seen(&self) -> u64 {
        self.next_index
    }

    /// Feeds one token; returns the phrases it completes or abandons.
    pub fn feed(&mut self, g: &Grammar, tok: &TranscriptToken) -> Vec<CommandEvent> {
        let mut events = Vec::new();
        let item = Pending {
            word: tok.word.trim().to_lowercase(),
            timestamp_ms: tok.timestamp_ms,
            index: self.next_index,
        };
        self.next_index += 1;
        if let Some(last) = self.pending.last() {
            if item.timestamp_ms.saturating_sub(last.timestamp_ms) > g.max_gap_ms {
                self.resolve(g, &mut events, true);
            }
        }
        self.push(g, item, &mut events);
        events
    }

    /// Abandons a partial match whose last token is older than the gap limit.
    pub fn expire(&mut self, g: &Grammar, now_ms: u64) -> Vec<CommandEvent> {
        let mut events = Vec::new();
        if let Some(last) = self.pending.last() {
            if now_ms.saturating_sub(last.timestamp_ms) > g.max_gap_ms {
                self.resolve(g, &mut events, true);
            }
        }
        events
    }

    /// End of stream: resolves whatever is pending.
    pub fn finish(&mut self, g: &Grammar) -> Vec<CommandEvent> {
        let mut events = Vec::new();
        self.resolve(g, &mut events, true);
        events
    }

    fn words_with(&self, extra: Option<&str>) -> Vec<String> {
        self.pending
            .iter()
            .map(|p| p.word.clone())
            .chain(extra.map(str::to_string))
            .collect()
    }

    fn push(&mut self, g: &Grammar, item: Pending, events: &mut Vec<CommandEvent>) {
        let candidate = self.words_with(Some(&item.word));
        let extendable = g.is_prefix(&candidate);
        if extendable {
            self.pending.push(item);
            return;
        }
        if let Some(phrase) = g.complete_match(&candidate) {
            let first = self.pending.first().map_or(item.index, |p| p.index);
            events.push(CommandEvent {
                phrase_id: phrase.phrase_id.clone(),
                timestamp_ms: item.timestamp_ms,
                first_token: first,
                last_token: item.index,
            });
            self.pending.clear();
            return;
        }
        if self.pending.is_empty() {
            // Unknown word with nothing pending.
            return;
        }
        self.resolve(g, events, false);
        self.push(g, item, events);
    }

    /// Emits the longest complete phrase at the start of the pending buffer,
    /// then rescans whatever follows it. With `full` unset, rescanned tokens
    /// that form an open prefix stay pending.
    fn resolve(&mut self, g: &Grammar, events: &mut Vec<CommandEvent>, full: bool) {
        while !self.pending.is_empty() {
            let buffer = std::mem::take(&mut self.pending);
            let words: Vec<String> = buffer.iter().map(|p| p.word.clone()).collect();
            let matched = (1..=words.len())
                .rev()
                .find_map(|k| g.complete_match(&words[..k]).map(|p| (k, p)));
            let rest_from = match matched {
                Some((k, phrase)) => {
                    events.push(CommandEvent {
                        phrase_id: phrase.phrase_id.clone(),
                        timestamp_ms: buffer[k - 1].timestamp_ms,
                        first_token: buffer[0].index,
                        last_token: buffer[k - 1].index,
                    });
                    k
                }
                None => 1,
            };
            for item in buffer.into_iter().skip(rest_from) {
                self.push(g, item, events);
            }
            if !full {
                break;
            }
        }
    }
}

/// Functional form of [`MatchState::feed`].
pub fn feed(g: &Grammar, state: &MatchState, tok: &TranscriptToken) -> (MatchState, Vec<CommandEvent>) {
    let mut next = state.clone();
    let events = next.feed(g, tok);
    (next, events)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tokens(words: &[(&str, u64)]) -> Vec<TranscriptToken> {
        words.iter().map(|&(w, t)| TranscriptToken::new(t, w)).collect()
    }

    fn run(g: &Grammar, toks: &[TranscriptToken]) -> Vec<CommandEvent> {
        let mut s = MatchState::new();
        let mut out: Vec<_> = toks.iter().flat_map(|t| s.feed(g, t)).collect();
        out.extend(s.finish(g));
        out
    }

    fn skyrim() -> Vec<Phrase> {
        vec![
            Phrase::new("hello", &["hello"]),
            Phrase::new("buy", &["buy"]),
            Phrase::from_sentence("see_you_soon", "see you soon"),
        ]
    }

    #[test]
    fn compiles_vocabulary() {
        let g = compile(&skyrim()).unwrap();
        assert_eq!(g.phrases().len(), 3);
    }

    #[test]
    fn rejects_duplicates_and_empty() {
        let dup = vec![Phrase::new("a", &["buy", "it"]), Phrase::new("b", &["Buy", "it"])];
        assert!(matches!(compile(&dup), Err(GrammarError::DuplicatePhraseWords { .. })));
        assert_eq!(compile(&[]).unwrap_err(), GrammarError::EmptyVocabulary);
        let long = vec![Phrase::from_sentence("x", "a b c d e f")];
        assert!(matches!(compile(&long), Err(GrammarError::InvalidPhrase { .. })));
        let ids = vec![Phrase::new("a", &["x"]), Phrase::new("a", &["y"])];
        assert_eq!(compile(&ids).unwrap_err(), GrammarError::DuplicatePhraseId("a".into()));
    }

    #[test]
    fn longest_match_wins() {
        let g = compile(&[Phrase::from_sentence("long", "see you soon"), Phrase::new("see", &["see"])]).unwrap();
        let ev = run(&g, &tokens(&[("see", 0), ("you", 300), ("soon", 600)]));
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].phrase_id, "long");
        assert_eq!(ev[0].timestamp_ms, 600);
        assert_eq!((ev[0].first_token, ev[0].last_token), (0, 2));
    }

    #[test]
    fn pause_abandons_partial_match() {
        let g = compile(&[Phrase::from_sentence("long", "see you soon"), Phrase::new("see", &["see"])]).unwrap();
        let mut s = MatchState::new();
        assert!(s.feed(&g, &TranscriptToken::new(0, "see")).is_empty());
        let ev = s.feed(&g, &TranscriptToken::new(2000, "you"));
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].phrase_id, "see");
        assert_eq!(ev[0].timestamp_ms, 0);
        assert!(s.feed(&g, &TranscriptToken::new(2100, "soon")).is_empty());
        assert!(s.finish(&g).is_empty());
    }

    #[test]
    fn expire_fires_on_clock() {
        let g = compile(&[Phrase::from_sentence("long", "see you soon"), Phrase::new("see", &["see"])]).unwrap();
        let mut s = MatchState::new();
        s.feed(&g, &TranscriptToken::new(0, "see"));
        assert!(s.expire(&g, 1500).is_empty());
        assert_eq!(s.expire(&g, 1501)[0].phrase_id, "see");
        assert!(s.is_idle());
    }

    #[test]
    fn unknown_word_resets() {
        let g = compile(&skyrim()).unwrap();
        let mut s = MatchState::new();
        s.feed(&g, &TranscriptToken::new(0, "see"));
        assert!(s.feed(&g, &TranscriptToken::new(10, "xyzzy")).is_empty());
        assert!(s.is_idle());
        assert!(run(&g, &tokens(&[("xyzzy", 0)])).is_empty());
    }

    #[test]
    fn broken_prefix_rescans_tail() {
        let g = compile(&[Phrase::from_sentence("ab", "a b c"), Phrase::from_sentence("bd", "b d")]).unwrap();
        let ev = run(&g, &tokens(&[("a", 0), ("b", 10), ("d", 20)]));
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].phrase_id, "bd");
        assert_eq!((ev[0].first_token, ev[0].last_token), (1, 2));
    }

    #[test]
    fn case_folding() {
        let g = compile(&skyrim()).unwrap();
        let ev = run(&g, &tokens(&[("SEE", 0), ("You", 10), ("soON", 20)]));
        assert_eq!(ev[0].phrase_id, "see_you_soon");
    }
}
