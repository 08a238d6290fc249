use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use super::{read_file, LexiconError, Token};

const BUILTIN_SYNONYMS: &str = include_str!("../../data/synonyms.tsv");

static EMPTY: BTreeSet<Token> = BTreeSet::new();

/// Headword to synonym-set map. A headword never appears in its own set.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SynonymLexicon {
    entries: BTreeMap<Token, BTreeSet<Token>>,
}

impl SynonymLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// The small starter lexicon shipped with the crate.
    pub fn builtin() -> Self {
        SynonymLexicon::parse(BUILTIN_SYNONYMS).expect("shipped synonym lexicon parses")
    }

    /// Parses `headword<TAB>syn1,syn2,...` lines. Blank lines and `#` comments
    /// are skipped, repeated headwords are unioned, and self references are
    /// dropped.
    pub fn parse(text: &str) -> Result<Self, LexiconError> {
        let mut lex = SynonymLexicon::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let malformed = |message: &str| LexiconError::Malformed {
                line: line_no,
                message: message.to_string(),
            };
            let (head, rest) = line
                .split_once('\t')
                .ok_or_else(|| malformed("expected headword<TAB>synonyms"))?;
            if rest.contains('\t') {
                return Err(malformed("more than one tab"));
            }
            let head = Token::normalize(head.trim())
                .ok_or_else(|| malformed("headword is empty or contains whitespace"))?;
            let mut syns = Vec::new();
            for syn in rest.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                let tok = Token::normalize(syn)
                    .ok_or_else(|| malformed(&format!("invalid synonym {syn:?}")))?;
                syns.push(tok);
            }
            lex.insert(head, syns);
        }
        Ok(lex)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LexiconError> {
        SynonymLexicon::parse(&read_file(path.as_ref())?)
    }

    /// Adds synonyms for `head`, creating the entry if needed. `head` itself
    /// is filtered out of `synonyms`.
    pub fn insert(&mut self, head: Token, synonyms: impl IntoIterator<Item = Token>) {
        let entry = self.entries.entry(head.clone()).or_default();
        entry.extend(synonyms.into_iter().filter(|s| *s != head));
    }

    /// Synonyms of `word`; empty when the word has no entry.
    pub fn synonyms(&self, word: &str) -> &BTreeSet<Token> {
        self.entries.get(word).unwrap_or(&EMPTY)
    }

    pub fn contains_headword(&self, word: &str) -> bool {
        self.entries.contains_key(word)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Token, &BTreeSet<Token>)> {
        self.entries.iter()
    }

    /// Serializes to the TSV format accepted by [`SynonymLexicon::parse`],
    /// sorted by headword.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (head, syns) in &self.entries {
            out.push_str(head.as_str());
            out.push('\t');
            let joined: Vec<&str> = syns.iter().map(Token::as_str).collect();
            out.push_str(&joined.join(","));
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(words: &[&str]) -> BTreeSet<Token> {
        words.iter().map(|w| Token::new(*w).unwrap()).collect()
    }

    #[test]
    fn parses_headword_line() {
        let lex = SynonymLexicon::parse("person\tindividual,someone\n").unwrap();
        assert_eq!(lex.synonyms("person"), &set(&["individual", "someone"]));
    }

    #[test]
    fn drops_self_reference() {
        let lex = SynonymLexicon::parse("cup\tcup\n").unwrap();
        assert!(lex.contains_headword("cup"));
        assert!(lex.synonyms("cup").is_empty());
    }

    #[test]
    fn duplicate_headwords_union() {
        let lex = SynonymLexicon::parse("car\tauto\nbike\tcycle\ncar\tautomobile,auto\n").unwrap();
        assert_eq!(lex.len(), 2);
        assert_eq!(lex.synonyms("car"), &set(&["auto", "automobile"]));
        let dumped = lex.to_tsv();
        assert_eq!(dumped, "bike\tcycle\ncar\tauto,automobile\n");
        assert_eq!(SynonymLexicon::parse(&dumped).unwrap(), lex);
    }

    #[test]
    fn absent_lookup_is_empty() {
        let lex = SynonymLexicon::builtin();
        assert!(lex.synonyms("zeppelin").is_empty());
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = SynonymLexicon::parse("# header\ncar\tauto\nbroken line\n").unwrap_err();
        match err {
            LexiconError::Malformed { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let err = SynonymLexicon::parse("car\tauto\n\tsolo\n").unwrap_err();
        assert!(matches!(err, LexiconError::Malformed { line: 2, .. }));
        let err = SynonymLexicon::parse("ice cream\tgelato\n").unwrap_err();
        assert!(matches!(err, LexiconError::Malformed { line: 1, .. }));
    }

    #[test]
    fn builtin_has_no_self_references() {
        let lex = SynonymLexicon::builtin();
        assert!(!lex.is_empty());
        for (head, syns) in lex.iter() {
            assert!(!syns.contains(head));
        }
    }
}
