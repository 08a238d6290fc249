//! Bias quantification for text-to-image model outputs and captioned image
//! datasets.
//!
//! A run pairs reference texts (prompts or dataset captions) with the
//! captions and classifier verdicts obtained for the matching images. From
//! those the crate derives three metrics:
//!
//! * distribution bias: area under the sorted, min-max normalized frequency
//!   curve of objects the captions add beyond the reference text
//! * Jaccard hallucination: mean Jaccard distance between reference and
//!   caption object sets
//! * generative miss rate: fraction of images the classifier rejects
//!
//! Runs are compared by normalizing each metric across a group and ranking
//! by distance from the origin of the resulting unit cube.

pub mod adapters;
pub mod engine;
pub mod evaluation;
pub mod lexicon;
pub mod metrics;
pub mod object_filter;
pub mod promptgen;
pub mod runstore;

pub use adapters::{BiasProfile, CaptionRecord, FailedRecord, InferenceEndpoint};
pub use engine::{execute_run, prepare_run, ProfileRef, Resources, RunJob, RunRequest};
pub use evaluation::{evaluate, Evaluation, LexiconHashes, Lexicons};
pub use lexicon::{GenderMarkers, Stoplist, SynonymLexicon, Token};
pub use metrics::{MetricReport, MetricsError, NormalizedReport, DEFAULT_TOP_K};
pub use object_filter::{CountTable, ObjectSet};
pub use promptgen::{PromptKind, PromptSet, PromptSpec, PromptTables};
pub use runstore::{
    AdapterConfig, ComparisonGroup, FieldError, RunConfig, RunLease, RunManifest, RunState, RunStore, StoreError,
};
