//! Run requests as accepted by the CLI and the HTTP API, their validation
//! into a stored run, and execution through the configured adapter.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adapters::{
    fetch_all, import_records, simulate, BiasProfile, CaptionRecord, CaptionRequest, EndpointClient, FailedRecord,
    ImageInput, InferenceEndpoint,
};
use crate::evaluation::Lexicons;
use crate::metrics::{MetricReport, DEFAULT_TOP_K};
use crate::promptgen::{builtin_task_corpus, PromptSet, PromptSpec, PromptTables, DEFAULT_TRIGGERS};
use crate::runstore::{AdapterConfig, FieldError, RunConfig, RunManifest, RunStore, StoreError};

/// Records are written to the store in batches of this size so progress
/// stays visible while a run executes.
const APPEND_BATCH: usize = 256;
const ENDPOINT_BATCH: usize = 16;

/// Prompt tables, caption corpus and lexicons a run draws on.
#[derive(Clone, Debug)]
pub struct Resources {
    pub tables: PromptTables,
    pub corpus: Vec<String>,
    pub lexicons: Lexicons,
}

impl Default for Resources {
    fn default() -> Self {
        Resources::builtin()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSetInfo {
    pub name: String,
    pub n_prompts: usize,
    pub description: String,
}

impl Resources {
    pub fn builtin() -> Self {
        Resources {
            tables: PromptTables::builtin(),
            corpus: builtin_task_corpus().into_iter().map(String::from).collect(),
            lexicons: Lexicons::builtin(),
        }
    }

    pub fn prompts(&self, set: &PromptSet) -> Result<Vec<PromptSpec>, crate::promptgen::PromptError> {
        set.prompts(&self.tables, self.corpus.iter().map(String::as_str))
    }

    /// The prompt sets available with these resources.
    pub fn catalog(&self) -> Vec<PromptSetInfo> {
        let mut sets = vec![
            (PromptSet::General, "object/action and occupation templates".to_string()),
            (PromptSet::Task(None), "corpus captions containing any default trigger".to_string()),
        ];
        for trig in DEFAULT_TRIGGERS {
            let set = PromptSet::parse(&format!("task:{trig}")).expect("valid trigger");
            sets.push((set, format!("corpus captions containing {trig:?}")));
        }
        let mut out: Vec<PromptSetInfo> = sets
            .into_iter()
            .map(|(set, description)| PromptSetInfo {
                name: set.name(),
                n_prompts: self.prompts(&set).map(|p| p.len()).unwrap_or(0),
                description,
            })
            .collect();
        out.push(PromptSetInfo {
            name: "records".into(),
            n_prompts: 0,
            description: "prompts supplied with imported records".into(),
        });
        out
    }
}

/// A simulator profile given by preset name / file path, or inline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileRef {
    Name(String),
    Inline(BiasProfile),
}

/// Everything a caller may specify for a new run. Absent fields take
/// defaults: `simulate` adapter, `base` profile, `general` prompts (or
/// `records` for imports), k = 100, seed 0, one sample per prompt.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRequest {
    #[serde(default)]
    pub run_id: Option<String>,
    #[serde(default)]
    pub prompt_set: Option<String>,
    #[serde(default)]
    pub adapter: Option<String>,
    #[serde(default)]
    pub profile: Option<ProfileRef>,
    /// Path of a record file (import, or endpoint re-captioning).
    #[serde(default)]
    pub records: Option<String>,
    /// Records supplied directly with the request.
    #[serde(default)]
    pub inline_records: Option<Vec<CaptionRecord>>,
    #[serde(default)]
    pub endpoint: Option<InferenceEndpoint>,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub samples: Option<usize>,
}

enum Source {
    Simulate {
        profile: BiasProfile,
        prompts: Vec<PromptSpec>,
        samples: usize,
    },
    Records(Vec<CaptionRecord>),
    Endpoint {
        endpoint: InferenceEndpoint,
        requests: Vec<CaptionRequest>,
    },
}

/// A created run together with the inputs needed to execute it.
pub struct RunJob {
    manifest: RunManifest,
    source: Source,
}

impl RunJob {
    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    pub fn run_id(&self) -> &str {
        &self.manifest.run_id
    }
}

fn load_records(path: &str, field: &str, errors: &mut Vec<FieldError>) -> Vec<CaptionRecord> {
    match import_records(Path::new(path)) {
        Ok(r) => r,
        Err(e) => {
            errors.push(FieldError::new(field, e.to_string()));
            Vec::new()
        }
    }
}

fn cycle_prompts(prompts: &[PromptSpec], samples: usize) -> Vec<CaptionRequest> {
    (0..samples)
        .map(|i| {
            let p = &prompts[i % prompts.len()];
            CaptionRequest {
                record_id: format!("{}#{}", p.id, i / prompts.len()),
                prompt: p.text.clone(),
                image: None,
            }
        })
        .collect()
}

/// Validates `req` and creates the pending run. Every invalid field is
/// reported at once.
pub fn prepare_run(store: &RunStore, req: RunRequest, res: &Resources) -> Result<RunJob, StoreError> {
    let mut errors = Vec::new();
    let adapter = req.adapter.as_deref().unwrap_or("simulate");
    if !matches!(adapter, "simulate" | "import" | "endpoint") {
        errors.push(FieldError::new("adapter", format!("unknown adapter {adapter:?}")));
    }
    let default_set = if adapter == "import" { "records" } else { "general" };
    let set_name = req.prompt_set.as_deref().unwrap_or(default_set);
    let prompt_set = PromptSet::parse(set_name);
    if prompt_set.is_none() {
        errors.push(FieldError::new("prompt_set", format!("unknown prompt set {set_name:?}")));
    }
    let k = req.k.unwrap_or(DEFAULT_TOP_K);
    if k < 2 {
        errors.push(FieldError::new("k", "must be at least 2"));
    }
    let seed = req.seed.unwrap_or(0);
    if req.samples == Some(0) {
        errors.push(FieldError::new("samples", "must be positive"));
    }
    if adapter != "simulate" && req.profile.is_some() {
        errors.push(FieldError::new("profile", "only used by the simulate adapter"));
    }
    if adapter != "endpoint" && req.endpoint.is_some() {
        errors.push(FieldError::new("endpoint", "only used by the endpoint adapter"));
    }
    if req.records.is_some() && req.inline_records.is_some() {
        errors.push(FieldError::new("records", "give a record file or inline records, not both"));
    }

    let uses_records = prompt_set == Some(PromptSet::Records);
    let mut prompts = Vec::new();
    if let Some(set) = prompt_set.as_ref().filter(|_| !uses_records) {
        match res.prompts(set) {
            Ok(p) if p.is_empty() => errors.push(FieldError::new("prompt_set", format!("{set_name} has no prompts"))),
            Ok(p) => prompts = p,
            Err(e) => errors.push(FieldError::new("prompt_set", e.to_string())),
        }
    }
    let mut records = Vec::new();
    let mut source_name = "inline".to_string();
    if uses_records {
        match (&req.records, req.inline_records) {
            (Some(path), _) => {
                records = load_records(path, "records", &mut errors);
                source_name = path.clone();
            }
            (None, Some(inline)) => records = inline,
            (None, None) => errors.push(FieldError::new("records", "required for the records prompt set")),
        }
    } else if req.records.is_some() || req.inline_records.is_some() {
        errors.push(FieldError::new("records", "only used with the records prompt set"));
    }

    let (adapter_config, source) = match adapter {
        "simulate" => {
            if uses_records {
                errors.push(FieldError::new("prompt_set", "the simulator needs a prompt set, not records"));
            }
            let profile = match req.profile.unwrap_or_else(|| ProfileRef::Name("base".into())) {
                ProfileRef::Name(name) => BiasProfile::resolve(&name),
                ProfileRef::Inline(p) => p.validate().map(|_| p),
            };
            let profile = match profile {
                Ok(p) => BiasProfile { seed, ..p },
                Err(e) => {
                    errors.push(FieldError::new("profile", e.to_string()));
                    BiasProfile::parse("").expect("empty profile is valid")
                }
            };
            let samples = req.samples.unwrap_or(prompts.len());
            (
                AdapterConfig::Simulate {
                    profile: profile.clone(),
                },
                Source::Simulate {
                    profile,
                    prompts,
                    samples,
                },
            )
        }
        "import" => {
            if !uses_records {
                errors.push(FieldError::new("prompt_set", "the import adapter reads prompts from its records"));
            }
            if req.samples.is_some() {
                errors.push(FieldError::new("samples", "not used by the import adapter"));
            }
            (
                AdapterConfig::Import {
                    source: source_name.clone(),
                },
                Source::Records(records),
            )
        }
        _ => {
            let endpoint = match req.endpoint {
                Some(e) => e.with_env_overrides(),
                None => InferenceEndpoint::new("").with_env_overrides(),
            };
            if let Err(e) = endpoint.validate() {
                errors.push(FieldError::new("endpoint", e.to_string()));
            }
            let requests = if uses_records {
                if req.samples.is_some() {
                    errors.push(FieldError::new("samples", "not used when re-captioning records"));
                }
                records
                    .into_iter()
                    .map(|r| CaptionRequest {
                        record_id: r.record_id,
                        prompt: r.prompt,
                        image: r.image_ref.map(ImageInput::Ref),
                    })
                    .collect()
            } else if prompts.is_empty() {
                Vec::new()
            } else {
                cycle_prompts(&prompts, req.samples.unwrap_or(prompts.len()))
            };
            (
                AdapterConfig::Endpoint {
                    endpoint: endpoint.clone(),
                    records: uses_records.then(|| source_name.clone()),
                },
                Source::Endpoint { endpoint, requests },
            )
        }
    };
    if !errors.is_empty() {
        return Err(StoreError::Validation(errors));
    }
    let samples = match &source {
        Source::Simulate { samples, .. } => *samples,
        Source::Records(r) => r.len(),
        Source::Endpoint { requests, .. } => requests.len(),
    };
    let config = RunConfig {
        prompt_set: prompt_set.expect("validated"),
        adapter: adapter_config,
        k,
        seed,
        samples,
        lexicon: res.lexicons.hashes(),
    };
    let manifest = store.create_run(config, req.run_id)?;
    Ok(RunJob { manifest, source })
}

/// Collects adapter output into the run and finalizes it.
pub async fn execute_run(store: &RunStore, job: RunJob, lex: &Lexicons) -> Result<MetricReport, StoreError> {
    let lease = store.lease(job.run_id())?;
    let result = async {
        match job.source {
            Source::Simulate {
                profile,
                prompts,
                samples,
            } => {
                let records = simulate(&profile, &prompts, samples, &lex.stoplist);
                for chunk in records.chunks(APPEND_BATCH) {
                    lease.append_records(chunk)?;
                }
            }
            Source::Records(records) => {
                for chunk in records.chunks(APPEND_BATCH) {
                    lease.append_records(chunk)?;
                }
            }
            Source::Endpoint { endpoint, requests } => {
                let client = EndpointClient::new(endpoint).map_err(|e| StoreError::AdapterFailed(e.to_string()))?;
                let mut ok: Vec<CaptionRecord> = Vec::new();
                let mut failed: Vec<FailedRecord> = Vec::new();
                let mut first_error: Option<String> = None;
                let mut write_error: Option<StoreError> = None;
                let mut flush = |ok: &mut Vec<CaptionRecord>, failed: &mut Vec<FailedRecord>| {
                    if write_error.is_some() {
                        return;
                    }
                    let res = (|| {
                        if !ok.is_empty() {
                            lease.append_records(ok)?;
                        }
                        if !failed.is_empty() {
                            lease.append_failures(failed)?;
                        }
                        Ok::<_, StoreError>(())
                    })();
                    ok.clear();
                    failed.clear();
                    if let Err(e) = res {
                        write_error = Some(e);
                    }
                };
                fetch_all(&client, requests, |result| {
                    match result {
                        Ok(r) => ok.push(r.clone()),
                        Err(f) => {
                            first_error.get_or_insert_with(|| f.error.clone());
                            failed.push(f.clone());
                        }
                    }
                    if ok.len() + failed.len() >= ENDPOINT_BATCH {
                        flush(&mut ok, &mut failed);
                    }
                })
                .await;
                flush(&mut ok, &mut failed);
                if let Some(e) = write_error {
                    return Err(e);
                }
                let m = lease.manifest()?;
                if m.n_done == 0 && m.n_failed > 0 {
                    let message = format!(
                        "all {} requests failed; first error: {}",
                        m.n_failed,
                        first_error.unwrap_or_default()
                    );
                    return Err(StoreError::AdapterFailed(message));
                }
            }
        }
        lease.finalize(lex)
    }
    .await;
    if let Err(e) = &result {
        let code = match e {
            StoreError::AdapterFailed(_) => Some("adapter_failed"),
            StoreError::EmptyRun | StoreError::Sealed(_) => None,
            _ => Some("internal"),
        };
        if let Some(code) = code {
            let _ = lease.fail(code, &e.to_string());
        }
    }
    result
}
