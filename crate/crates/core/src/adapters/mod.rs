//! Sources of caption records: line-delimited record files, a seeded
//! simulator of biased models, and an HTTP captioning/classification endpoint.

mod endpoint;
mod records;
mod simulate;

pub use endpoint::{
    fetch_all, fetch_caption, CaptionRequest, EndpointClient, EndpointError, FetchOutcome, ImageInput,
    InferenceEndpoint, ENDPOINT_ENV, TOKEN_ENV,
};
pub use records::{export_records, import_records, parse_records, RecordError};
pub use simulate::{simulate, BiasProfile, ProfileError, PRESET_PROFILES};

use serde::{Deserialize, Serialize};

/// One evaluated image: the reference text it was generated from (or the
/// dataset caption), what the captioner saw, and the classifier verdict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub record_id: String,
    pub prompt: String,
    pub caption: String,
    #[serde(rename = "match")]
    pub matched: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
}

/// A record the adapter could not obtain. Failures are stored with the run
/// and counted, but never enter a metric.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailedRecord {
    pub record_id: String,
    pub prompt: String,
    pub error: String,
}
