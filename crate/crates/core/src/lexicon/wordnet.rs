//! Importer for WordNet 3.x `index.<pos>` / `data.<pos>` database files.
//!
//! Data lines look like
//! `offset lex_filenum ss_type w_cnt word lex_id [word lex_id ...] p_cnt ... | gloss`
//! with `w_cnt` in hex. Index lines look like
//! `lemma pos synset_cnt p_cnt [ptr_symbol ...] sense_cnt tagsense_cnt offset ...`.
//! Lines starting with two spaces are the license header.
//!
//! Multi-word lemmas (`domestic_dog`) are dropped since the tokenizer can
//! never produce them.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use super::{read_file, LexiconError, SynonymLexicon, Token};

/// One part-of-speech pair of database files.
#[derive(Clone, Debug)]
pub struct WordNetSource {
    pub index: PathBuf,
    pub data: PathBuf,
}

impl WordNetSource {
    pub fn new(index: impl Into<PathBuf>, data: impl Into<PathBuf>) -> Self {
        WordNetSource {
            index: index.into(),
            data: data.into(),
        }
    }

    /// `index.<pos>` / `data.<pos>` inside a WordNet `dict` directory.
    pub fn in_dict(dir: &Path, pos: &str) -> Self {
        WordNetSource::new(dir.join(format!("index.{pos}")), dir.join(format!("data.{pos}")))
    }
}

pub fn import_wordnet(
    index_path: impl AsRef<Path>,
    data_path: impl AsRef<Path>,
) -> Result<SynonymLexicon, LexiconError> {
    let index = read_file(index_path.as_ref())?;
    let data = read_file(data_path.as_ref())?;
    parse_wordnet(&index, &data)
}

/// Imports several parts of speech (nouns and verbs, say) into one lexicon.
pub fn import_wordnet_sources(sources: &[WordNetSource]) -> Result<SynonymLexicon, LexiconError> {
    let mut lex = SynonymLexicon::new();
    for src in sources {
        let part = import_wordnet(&src.index, &src.data)?;
        for (head, syns) in part.iter() {
            lex.insert(head.clone(), syns.iter().cloned());
        }
    }
    Ok(lex)
}

fn lemma_token(raw: &str) -> Option<Token> {
    // Adjective lemmas carry syntactic markers such as `(p)`.
    let raw = raw.split('(').next().unwrap_or(raw);
    if raw.contains('_') {
        return None;
    }
    Token::normalize(&raw.to_lowercase())
}

/// Iterates non-header lines with the byte offset at which each starts.
fn lines_with_offsets(text: &str) -> impl Iterator<Item = (usize, &str)> {
    let mut offset = 0;
    text.split_inclusive('\n').map(move |chunk| {
        let start = offset;
        offset += chunk.len();
        (start, chunk.trim_end_matches(['\n', '\r']))
    })
}

fn is_skippable(line: &str) -> bool {
    line.starts_with("  ") || line.trim().is_empty()
}

fn parse_data(data: &str) -> Result<HashMap<u64, Vec<Token>>, LexiconError> {
    let mut synsets = HashMap::new();
    for (offset, line) in lines_with_offsets(data) {
        if is_skippable(line) {
            continue;
        }
        let err = |message: String| LexiconError::WordNet {
            file: "data",
            offset,
            message,
        };
        let body = line.split(" | ").next().unwrap_or(line);
        let fields: Vec<&str> = body.split_whitespace().collect();
        if fields.len() < 4 {
            return Err(err(format!("expected at least 4 fields, found {}", fields.len())));
        }
        let synset_offset: u64 = fields[0]
            .parse()
            .map_err(|_| err(format!("bad synset offset {:?}", fields[0])))?;
        let word_count = usize::from_str_radix(fields[3], 16)
            .map_err(|_| err(format!("bad word count {:?}", fields[3])))?;
        if word_count == 0 {
            return Err(err("synset has no words".to_string()));
        }
        let words_end = 4 + 2 * word_count;
        if fields.len() < words_end {
            return Err(err(format!(
                "synset declares {word_count} words but the line is too short"
            )));
        }
        let lemmas = fields[4..words_end]
            .iter()
            .step_by(2)
            .filter_map(|w| lemma_token(w))
            .collect();
        synsets.insert(synset_offset, lemmas);
    }
    Ok(synsets)
}

/// Builds a lexicon from the contents of an index file and its data file.
pub fn parse_wordnet(index: &str, data: &str) -> Result<SynonymLexicon, LexiconError> {
    let synsets = parse_data(data)?;
    let mut lex = SynonymLexicon::new();
    for (offset, line) in lines_with_offsets(index) {
        if is_skippable(line) {
            continue;
        }
        let err = |message: String| LexiconError::WordNet {
            file: "index",
            offset,
            message,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 4 {
            return Err(err(format!("expected at least 4 fields, found {}", fields.len())));
        }
        let parse_count = |i: usize| -> Result<usize, LexiconError> {
            fields
                .get(i)
                .and_then(|f| f.parse().ok())
                .ok_or_else(|| err(format!("bad count in field {}", i + 1)))
        };
        let synset_cnt = parse_count(2)?;
        let pointer_cnt = parse_count(3)?;
        // sense_cnt and tagsense_cnt follow the pointer symbols.
        let offsets_start = 4 + pointer_cnt + 2;
        if fields.len() < offsets_start + synset_cnt {
            return Err(err(format!(
                "index entry declares {synset_cnt} synsets but the line is too short"
            )));
        }
        let Some(lemma) = lemma_token(fields[0]) else {
            continue;
        };
        let mut members = BTreeSet::new();
        for raw in &fields[offsets_start..offsets_start + synset_cnt] {
            let synset_offset: u64 = raw
                .parse()
                .map_err(|_| err(format!("bad synset offset {raw:?}")))?;
            let words = synsets
                .get(&synset_offset)
                .ok_or_else(|| err(format!("synset {raw} not found in data file")))?;
            members.extend(words.iter().cloned());
        }
        lex.insert(lemma, members);
    }
    Ok(lex)
}
