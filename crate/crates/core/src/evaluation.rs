//! Turns caption records into a count table and a metric report.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adapters::CaptionRecord;
use crate::lexicon::{GenderMarkers, Stoplist, SynonymLexicon};
use crate::metrics::{
    distribution_bias, gender_distribution, generative_miss_rate, jaccard_hallucination, MetricReport, MetricsError,
    ObjectCount,
};
use crate::object_filter::{accumulate_counts, extract_objects, unify_synonyms, CountTable, ObjectSet};

/// Everything the object pipeline depends on.
#[derive(Clone, Debug, Default)]
pub struct Lexicons {
    pub stoplist: Stoplist,
    pub synonyms: SynonymLexicon,
    pub markers: GenderMarkers,
}

/// SHA-256 of each lexicon's canonical serialization. Reports are only
/// reproducible under the same lexicons, so runs record these.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconHashes {
    pub stoplist: String,
    pub synonyms: String,
    pub markers: String,
}

fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

impl Lexicons {
    pub fn builtin() -> Self {
        Lexicons {
            stoplist: Stoplist::builtin(),
            synonyms: SynonymLexicon::builtin(),
            markers: GenderMarkers::default(),
        }
    }

    pub fn hashes(&self) -> LexiconHashes {
        LexiconHashes {
            stoplist: sha256_hex(&self.stoplist.to_file_string()),
            synonyms: sha256_hex(&self.synonyms.to_tsv()),
            markers: sha256_hex(&self.markers.to_toml()),
        }
    }
}

/// Object sets derived from one record.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProcessedRecord {
    /// Objects of the reference text.
    pub inputs: ObjectSet,
    /// Caption objects as extracted, before synonym unification.
    pub caption_objects: ObjectSet,
    /// Caption objects with synonyms of input objects rewritten.
    pub outputs: ObjectSet,
}

pub fn process_record(record: &CaptionRecord, lex: &Lexicons) -> ProcessedRecord {
    let inputs = extract_objects(&record.prompt, &lex.stoplist);
    let caption_objects = extract_objects(&record.caption, &lex.stoplist);
    let outputs = unify_synonyms(&inputs, &caption_objects, &lex.synonyms);
    ProcessedRecord {
        inputs,
        caption_objects,
        outputs,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub report: MetricReport,
    pub counts: CountTable,
}

/// Computes every metric over `records`. A run whose captions never add an
/// object has an empty count table; its distribution bias is reported as 0.
pub fn evaluate(
    run_id: &str,
    records: &[CaptionRecord],
    n_failed: usize,
    k: usize,
    lex: &Lexicons,
) -> Result<Evaluation, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyRun);
    }
    if k == 0 {
        return Err(MetricsError::ZeroK);
    }
    let processed: Vec<ProcessedRecord> = records.iter().map(|r| process_record(r, lex)).collect();
    let mut counts = CountTable::new();
    for p in &processed {
        accumulate_counts(&mut counts, &p.inputs, &p.outputs);
    }
    let bd_raw = if counts.is_empty() {
        0.0
    } else {
        distribution_bias(&counts, k)?
    };
    let hj_raw = jaccard_hallucination(processed.iter().map(|p| (&p.inputs, &p.outputs)))?;
    let mg_raw = generative_miss_rate(records.iter().map(|r| r.matched))?;
    let gender = gender_distribution(processed.iter().map(|p| &p.caption_objects), &lex.markers)?;
    let top_k = counts
        .top(k)
        .into_iter()
        .map(|(token, count)| ObjectCount { token, count })
        .collect();
    let report = MetricReport {
        run_id: run_id.to_string(),
        n_records: records.len(),
        n_failed,
        k,
        n_objects: counts.len(),
        bd_raw,
        hj_raw,
        mg_raw,
        top_k,
        gender,
    };
    Ok(Evaluation { report, counts })
}
