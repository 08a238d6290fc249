//! Object extraction, synonym unification and the output-object count table.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::lexicon::{remove_irrelevant, tokenize, LexiconError, Stoplist, SynonymLexicon, Token};

/// Deduplicated, stoplist-free tokens taken from one text.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectSet(BTreeSet<Token>);

impl ObjectSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(token)
    }

    pub fn insert(&mut self, token: Token) -> bool {
        self.0.insert(token)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Token> {
        self.0.iter()
    }

    pub fn intersection_len(&self, other: &ObjectSet) -> usize {
        self.0.intersection(&other.0).count()
    }

    pub fn union_len(&self, other: &ObjectSet) -> usize {
        self.len() + other.len() - self.intersection_len(other)
    }

    pub fn as_set(&self) -> &BTreeSet<Token> {
        &self.0
    }
}

impl FromIterator<Token> for ObjectSet {
    fn from_iter<I: IntoIterator<Item = Token>>(iter: I) -> Self {
        ObjectSet(iter.into_iter().collect())
    }
}

impl IntoIterator for ObjectSet {
    type Item = Token;
    type IntoIter = std::collections::btree_set::IntoIter<Token>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.into_iter()
    }
}

impl<'a> IntoIterator for &'a ObjectSet {
    type Item = &'a Token;
    type IntoIter = std::collections::btree_set::Iter<'a, Token>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// tokenize, drop stopwords, dedupe.
pub fn extract_objects(text: &str, stop: &Stoplist) -> ObjectSet {
    remove_irrelevant(&tokenize(text), stop).into_iter().collect()
}

/// Rewrites output tokens that are synonyms of an input object to that input
/// object.
///
/// Inputs are visited in ascending order, so when two inputs claim the same
/// output token the smaller one wins. Output tokens that already equal an
/// input object are never rewritten; that keeps the operation idempotent even
/// for symmetric lexicons where two inputs are synonyms of each other.
pub fn unify_synonyms(inputs: &ObjectSet, outputs: &ObjectSet, lex: &SynonymLexicon) -> ObjectSet {
    let mut remaining: BTreeSet<Token> = outputs
        .iter()
        .filter(|t| !inputs.contains(t.as_str()))
        .cloned()
        .collect();
    let mut result: BTreeSet<Token> = outputs
        .iter()
        .filter(|t| inputs.contains(t.as_str()))
        .cloned()
        .collect();
    for input in inputs {
        for syn in lex.synonyms(input.as_str()) {
            if remaining.remove(syn) {
                result.insert(input.clone());
            }
        }
    }
    result.extend(remaining);
    ObjectSet(result)
}

/// Bag of output objects not present in their record's input set.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CountTable {
    counts: BTreeMap<Token, u64>,
}

impl CountTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `n` occurrences. Adding zero is a no-op so no key ever maps to 0.
    pub fn add(&mut self, token: Token, n: u64) {
        if n > 0 {
            *self.counts.entry(token).or_insert(0) += n;
        }
    }

    pub fn get(&self, token: &str) -> u64 {
        self.counts.get(token).copied().unwrap_or(0)
    }

    /// Number of distinct objects.
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Token, u64)> {
        self.counts.iter().map(|(t, n)| (t, *n))
    }

    pub fn merge(&mut self, other: &CountTable) {
        for (tok, n) in other.iter() {
            self.add(tok.clone(), n);
        }
    }

    /// Entries sorted by count descending, ties by token ascending.
    pub fn ranked(&self) -> Vec<(&Token, u64)> {
        let mut entries: Vec<_> = self.iter().collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        entries
    }

    /// The `k` highest-count entries in [`CountTable::ranked`] order.
    pub fn top(&self, k: usize) -> Vec<(Token, u64)> {
        self.ranked()
            .into_iter()
            .take(k)
            .map(|(t, n)| (t.clone(), n))
            .collect()
    }

    /// `token<TAB>count` lines sorted by token.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (tok, n) in self.iter() {
            let _ = writeln!(out, "{tok}\t{n}");
        }
        out
    }

    pub fn parse_tsv(text: &str) -> Result<Self, LexiconError> {
        let mut table = CountTable::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let malformed = |message: &str| LexiconError::Malformed {
                line: idx + 1,
                message: message.to_string(),
            };
            let (tok, n) = line
                .split_once('\t')
                .ok_or_else(|| malformed("expected token<TAB>count"))?;
            let tok = Token::new(tok).map_err(|_| malformed("invalid token"))?;
            let n: u64 = n.trim().parse().map_err(|_| malformed("invalid count"))?;
            if n == 0 {
                return Err(malformed("count must be positive"));
            }
            table.add(tok, n);
        }
        Ok(table)
    }
}

impl FromIterator<(Token, u64)> for CountTable {
    fn from_iter<I: IntoIterator<Item = (Token, u64)>>(iter: I) -> Self {
        let mut table = CountTable::new();
        for (t, n) in iter {
            table.add(t, n);
        }
        table
    }
}

/// Counts every output object absent from `inputs`. `outputs` should already
/// be synonym-unified.
pub fn accumulate_counts(table: &mut CountTable, inputs: &ObjectSet, outputs: &ObjectSet) {
    for obj in outputs {
        if !inputs.contains(obj.as_str()) {
            table.add(obj.clone(), 1);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn objs(words: &[&str]) -> ObjectSet {
        words.iter().map(|w| Token::new(*w).unwrap()).collect()
    }

    fn table(entries: &[(&str, u64)]) -> CountTable {
        entries.iter().map(|(w, n)| (Token::new(*w).unwrap(), *n)).collect()
    }

    #[test]
    fn extract_examples() {
        let stop = Stoplist::builtin();
        assert_eq!(
            extract_objects("a person holding a burger", &stop),
            objs(&["person", "holding", "burger"])
        );
        assert!(extract_objects("the the the", &stop).is_empty());
        assert_eq!(
            extract_objects("a man holding a mcdonalds burger with fries", &stop),
            objs(&["man", "holding", "mcdonalds", "burger", "fries"])
        );
    }

    #[test]
    fn extracted_set_is_disjoint_from_stoplist() {
        let stop = Stoplist::builtin();
        let set = extract_objects("A person, who is a good CEO, looks at the sky!", &stop);
        assert_eq!(set, objs(&["person", "ceo", "sky"]));
    }

    #[test]
    fn unify_examples() {
        let lex = SynonymLexicon::parse("person\tindividual\ncup\tmug\n").unwrap();
        assert_eq!(
            unify_synonyms(&objs(&["person"]), &objs(&["individual"]), &lex),
            objs(&["person"])
        );
        assert_eq!(
            unify_synonyms(&objs(&["person"]), &objs(&["person"]), &lex),
            objs(&["person"])
        );
        assert_eq!(
            unify_synonyms(&objs(&["cup", "man"]), &objs(&["mug", "woman"]), &lex),
            objs(&["cup", "woman"])
        );
    }

    #[test]
    fn unify_is_one_directional() {
        // person -> {individual} does not make "man" a synonym of person.
        let lex = SynonymLexicon::parse("person\tindividual\n").unwrap();
        assert_eq!(
            unify_synonyms(&objs(&["person"]), &objs(&["man"]), &lex),
            objs(&["man"])
        );
    }

    #[test]
    fn smaller_input_wins_contested_synonym() {
        let lex = SynonymLexicon::parse("mug\tbeaker\ncup\tbeaker\n").unwrap();
        assert_eq!(
            unify_synonyms(&objs(&["mug", "cup"]), &objs(&["beaker"]), &lex),
            objs(&["cup"])
        );
    }

    #[test]
    fn outputs_matching_inputs_are_not_rewritten() {
        let lex = SynonymLexicon::parse("cup\tmug\nmug\tcup\n").unwrap();
        let inputs = objs(&["cup", "mug"]);
        let once = unify_synonyms(&inputs, &objs(&["mug"]), &lex);
        assert_eq!(once, objs(&["mug"]));
        assert_eq!(unify_synonyms(&inputs, &once, &lex), once);
    }

    #[test]
    fn accumulate_examples() {
        let mut t = CountTable::new();
        accumulate_counts(&mut t, &objs(&["person"]), &objs(&["person", "man", "dog"]));
        assert_eq!(t, table(&[("man", 1), ("dog", 1)]));

        let before = t.clone();
        accumulate_counts(&mut t, &objs(&["a1", "b"]), &objs(&["a1", "b"]));
        assert_eq!(t, before);

        let mut t = CountTable::new();
        for _ in 0..2 {
            accumulate_counts(&mut t, &objs(&["burger"]), &objs(&["burger", "mcdonalds"]));
        }
        assert_eq!(t, table(&[("mcdonalds", 2)]));
    }

    #[test]
    fn top_breaks_ties_lexicographically() {
        let t = table(&[("b", 2), ("a", 2), ("c", 5), ("d", 1)]);
        let top: Vec<_> = t.top(3).into_iter().map(|(t, n)| (t.into_string(), n)).collect();
        assert_eq!(top, vec![("c".into(), 5), ("a".into(), 2), ("b".into(), 2)]);
    }

    #[test]
    fn tsv_round_trip_and_errors() {
        let t = table(&[("man", 1328), ("woman", 974)]);
        assert_eq!(CountTable::parse_tsv(&t.to_tsv()).unwrap(), t);
        assert!(CountTable::parse_tsv("man\t0\n").is_err());
        assert!(CountTable::parse_tsv("man 3\n").is_err());
        assert!(CountTable::parse_tsv("Man\t3\n").is_err());
    }

    fn word() -> impl Strategy<Value = Token> {
        proptest::sample::select(vec!["a", "b", "c", "d", "e", "f"]).prop_map(|w| Token::new(w).unwrap())
    }

    fn object_set() -> impl Strategy<Value = ObjectSet> {
        proptest::collection::btree_set(word(), 0..5).prop_map(|s| s.into_iter().collect())
    }

    fn lexicon() -> impl Strategy<Value = SynonymLexicon> {
        proptest::collection::vec((word(), proptest::collection::btree_set(word(), 0..3)), 0..5).prop_map(
            |entries| {
                let mut lex = SynonymLexicon::new();
                for (h, s) in entries {
                    lex.insert(h, s);
                }
                lex
            },
        )
    }

    proptest! {
        #[test]
        fn unify_is_idempotent_and_shrinks(inputs in object_set(), outputs in object_set(), lex in lexicon()) {
            let once = unify_synonyms(&inputs, &outputs, &lex);
            prop_assert!(once.len() <= outputs.len());
            prop_assert_eq!(unify_synonyms(&inputs, &once, &lex), once.clone());
            for y in once.iter().filter(|y| !inputs.contains(y.as_str())) {
                for x in inputs.iter() {
                    prop_assert!(!lex.synonyms(x.as_str()).contains(y));
                }
            }
        }

        #[test]
        fn counting_is_order_independent(records in proptest::collection::vec((object_set(), object_set()), 0..12), seed in any::<u64>()) {
            let mut forward = CountTable::new();
            for (x, y) in &records {
                accumulate_counts(&mut forward, x, y);
            }
            let mut shuffled = records.clone();
            // Deterministic permutation from the seed.
            let n = shuffled.len();
            if n > 1 {
                let mut s = seed;
                for i in (1..n).rev() {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    let j = (s >> 33) as usize % (i + 1);
                    shuffled.swap(i, j);
                }
            }
            let mut backward = CountTable::new();
            for (x, y) in &shuffled {
                accumulate_counts(&mut backward, x, y);
            }
            prop_assert_eq!(&forward, &backward);
            let expected: usize = records.iter().map(|(x, y)| y.iter().filter(|t| !x.contains(t.as_str())).count()).sum();
            prop_assert_eq!(forward.total(), expected as u64);
        }
    }
}
