//! Tokenization and the word lists that drive object filtering.
//!
//! Text is split on whitespace, the characters in [`STRIP_CHARS`] are removed
//! from every fragment (joining, not splitting: `red-hot` becomes `redhot`),
//! and the result is lowercased. Everything else, digits and non-ASCII
//! letters included, passes through.

mod gender;
mod synonyms;
mod wordnet;

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use gender::GenderMarkers;
pub use synonyms::SynonymLexicon;
pub use wordnet::{import_wordnet, import_wordnet_sources, parse_wordnet, WordNetSource};

/// Characters removed from tokens. Whitespace is handled by the split.
pub const STRIP_CHARS: [char; 7] = ['.', '\'', '!', '-', '?', ',', ' '];

const BUILTIN_STOPLIST: &str = include_str!("../../data/stoplist.txt");

#[derive(Debug, thiserror::Error)]
pub enum LexiconError {
    #[error("invalid token {0:?}")]
    InvalidToken(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("wordnet {file} at byte {offset}: {message}")]
    WordNet {
        file: &'static str,
        offset: usize,
        message: String,
    },
    #[error("gender markers: {0}")]
    Markers(String),
}

impl LexiconError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        LexiconError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub(crate) fn read_file(path: &Path) -> Result<String, LexiconError> {
    std::fs::read_to_string(path).map_err(|e| LexiconError::io(path, e))
}

/// A lowercase word with no whitespace and none of the [`STRIP_CHARS`].
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Token(String);

impl Token {
    /// Accepts `text` only if it is already in normalized form.
    pub fn new(text: impl Into<String>) -> Result<Self, LexiconError> {
        let text = text.into();
        match Token::normalize(&text) {
            Some(tok) if tok.0 == text => Ok(tok),
            _ => Err(LexiconError::InvalidToken(text)),
        }
    }

    /// Normalizes a single whitespace-free fragment. `None` if nothing survives
    /// stripping, or if the fragment contains whitespace.
    pub fn normalize(fragment: &str) -> Option<Self> {
        if fragment.chars().any(char::is_whitespace) {
            return None;
        }
        let stripped: String = fragment.chars().filter(|c| !STRIP_CHARS.contains(c)).collect();
        let lowered = stripped.to_lowercase();
        // Lowercasing can, in rare Unicode cases, emit characters we strip.
        let cleaned: String = lowered
            .chars()
            .filter(|c| !STRIP_CHARS.contains(c) && !c.is_whitespace())
            .collect();
        if cleaned.is_empty() {
            None
        } else {
            Some(Token(cleaned))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for Token {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl std::borrow::Borrow<str> for Token {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Token {
    type Error = LexiconError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Token::new(value)
    }
}

impl TryFrom<&str> for Token {
    type Error = LexiconError;

    fn try_from(value: &str) -> Result<Self, Self::Error> {
        Token::new(value)
    }
}

impl From<Token> for String {
    fn from(tok: Token) -> Self {
        tok.0
    }
}

/// Splits `text` into normalized tokens, preserving order.
pub fn tokenize(text: &str) -> Vec<Token> {
    text.split_whitespace().filter_map(Token::normalize).collect()
}

/// Joins tokens with single spaces.
pub fn join(tokens: &[Token]) -> String {
    tokens.iter().map(Token::as_str).collect::<Vec<_>>().join(" ")
}

/// Tokens that never count as objects.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Stoplist {
    tokens: BTreeSet<Token>,
}

impl Stoplist {
    /// The irrelevant-token list shipped with the crate.
    pub fn builtin() -> Self {
        Stoplist::parse(BUILTIN_STOPLIST)
    }

    /// One token per line; blank lines and lines starting with `#` are
    /// skipped. Entries are normalized like tokenizer output; entries that
    /// normalize to nothing (a lone `-`, say) are dropped.
    pub fn parse(text: &str) -> Self {
        let tokens = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .flat_map(tokenize)
            .collect();
        Stoplist { tokens }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LexiconError> {
        Ok(Stoplist::parse(&read_file(path.as_ref())?))
    }

    pub fn from_tokens(tokens: impl IntoIterator<Item = Token>) -> Self {
        Stoplist {
            tokens: tokens.into_iter().collect(),
        }
    }

    pub fn contains(&self, token: &str) -> bool {
        self.tokens.contains(token)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Token> {
        self.tokens.iter()
    }

    /// Serializes back to the one-per-line file format.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for tok in &self.tokens {
            out.push_str(tok.as_str());
            out.push('\n');
        }
        out
    }
}

/// Keeps the tokens that are not on the stoplist, in order.
pub fn remove_irrelevant(tokens: &[Token], stop: &Stoplist) -> Vec<Token> {
    tokens
        .iter()
        .filter(|t| !stop.contains(t.as_str()))
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(words: &[&str]) -> Vec<Token> {
        words.iter().map(|w| Token::new(*w).unwrap()).collect()
    }

    #[test]
    fn tokenize_prompt() {
        assert_eq!(
            tokenize("a person wearing a watch."),
            toks(&["a", "person", "wearing", "a", "watch"])
        );
    }

    #[test]
    fn tokenize_empty() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("  \t\n").is_empty());
    }

    #[test]
    fn tokenize_joins_stripped_fragments() {
        assert_eq!(tokenize("it's red-hot!"), toks(&["its", "redhot"]));
    }

    #[test]
    fn tokenize_drops_fragments_that_strip_to_nothing() {
        assert_eq!(tokenize("cat - dog ... ?"), toks(&["cat", "dog"]));
    }

    #[test]
    fn tokenize_keeps_digits_and_unicode() {
        assert_eq!(tokenize("Café 7UP"), toks(&["café", "7up"]));
    }

    #[test]
    fn token_rejects_unnormalized_text() {
        assert!(Token::new("Dog").is_err());
        assert!(Token::new("").is_err());
        assert!(Token::new("ice cream").is_err());
        assert!(Token::new("t-shirt").is_err());
        assert!(Token::new("tshirt").is_ok());
    }

    #[test]
    fn token_serde_validates() {
        let tok: Token = serde_json::from_str("\"burger\"").unwrap();
        assert_eq!(tok.as_str(), "burger");
        assert!(serde_json::from_str::<Token>("\"Burger!\"").is_err());
    }

    #[test]
    fn remove_irrelevant_examples() {
        let stop = Stoplist::builtin();
        assert_eq!(
            remove_irrelevant(&toks(&["a", "person", "holding", "a", "burger"]), &stop),
            toks(&["person", "holding", "burger"])
        );
        assert!(remove_irrelevant(&[], &stop).is_empty());
        assert!(remove_irrelevant(&toks(&["the", "and", "for"]), &stop).is_empty());
    }

    #[test]
    fn builtin_stoplist_matches_file_entries() {
        let entries = BUILTIN_STOPLIST
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .count();
        let stop = Stoplist::builtin();
        assert_eq!(stop.len(), entries);
        assert_eq!(stop.len(), 69);
        for word in ["a", "an", "the", "with", "good", "bad", "looks", "who", "is", "that", "’"] {
            assert!(stop.contains(word), "{word} missing");
        }
        for word in ["person", "holding", "burger", "man", "woman"] {
            assert!(!stop.contains(word), "{word} should not be a stopword");
        }
    }

    #[test]
    fn stoplist_parse_normalizes_and_skips_comments() {
        let stop = Stoplist::parse("# comment\nA\n-\n\nthe\nthe\n");
        assert_eq!(stop.len(), 2);
        assert!(stop.contains("a"));
        assert!(stop.contains("the"));
        assert_eq!(Stoplist::parse(&stop.to_file_string()), stop);
    }

    proptest! {
        #[test]
        fn tokenize_is_idempotent(text in "\\PC{0,60}") {
            let once = tokenize(&text);
            prop_assert_eq!(tokenize(&join(&once)), once);
        }

        #[test]
        fn tokens_are_valid(text in "\\PC{0,60}") {
            for tok in tokenize(&text) {
                prop_assert!(!tok.as_str().is_empty());
                prop_assert!(!tok.as_str().chars().any(|c| STRIP_CHARS.contains(&c) || c.is_whitespace()));
                prop_assert_eq!(Token::new(tok.as_str().to_string()).unwrap(), tok);
            }
        }

        #[test]
        fn remove_irrelevant_is_idempotent(words in proptest::collection::vec("(a|the|cat|dog|with|on|burger)", 0..12)) {
            let stop = Stoplist::builtin();
            let tokens: Vec<Token> = words.iter().map(|w| Token::new(w.as_str()).unwrap()).collect();
            let once = remove_irrelevant(&tokens, &stop);
            prop_assert!(once.iter().all(|t| !stop.contains(t.as_str())));
            prop_assert_eq!(remove_irrelevant(&once, &stop), once);
        }
    }
}
