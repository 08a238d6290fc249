//! Directory-backed store of evaluation runs and comparison groups.
//!
//! ```text
//! <root>/runs/<run_id>/manifest.json   configuration snapshot, state, counters
//! <root>/runs/<run_id>/records.jsonl   successful records, append-only
//! <root>/runs/<run_id>/failures.jsonl  records the adapter could not obtain
//! <root>/runs/<run_id>/counts.tsv      output-object count table
//! <root>/runs/<run_id>/report.json     metric report
//! <root>/runs/<run_id>/lease           present while a writer holds the run
//! <root>/comparisons/<group_id>.json
//! ```
//!
//! Writers must hold a [`RunLease`]; readers never block.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::adapters::{export_records, parse_records, BiasProfile, CaptionRecord, FailedRecord, InferenceEndpoint};
use crate::evaluation::{evaluate, LexiconHashes, Lexicons};
use crate::metrics::{normalize_group, rank_by_distance, MetricReport, MetricsError, NormalizedReport};
use crate::object_filter::CountTable;
use crate::promptgen::PromptSet;

const MANIFEST: &str = "manifest.json";
const RECORDS: &str = "records.jsonl";
const FAILURES: &str = "failures.jsonl";
const COUNTS: &str = "counts.tsv";
const REPORT: &str = "report.json";
const LEASE: &str = "lease";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunState {
    Pending,
    Running,
    Complete,
    Failed,
}

impl RunState {
    pub fn as_str(self) -> &'static str {
        match self {
            RunState::Pending => "pending",
            RunState::Running => "running",
            RunState::Complete => "complete",
            RunState::Failed => "failed",
        }
    }
}

/// Where a run's records come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdapterConfig {
    Simulate { profile: BiasProfile },
    /// `source` is the record file path, or `inline` for records supplied
    /// with the request.
    Import { source: String },
    Endpoint {
        endpoint: InferenceEndpoint,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        records: Option<String>,
    },
    /// Raw metrics computed elsewhere and imported as a finished report.
    External,
}

impl AdapterConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            AdapterConfig::Simulate { .. } => "simulate",
            AdapterConfig::Import { .. } => "import",
            AdapterConfig::Endpoint { .. } => "endpoint",
            AdapterConfig::External => "external",
        }
    }
}

/// Snapshot of everything that determines a run's report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub prompt_set: PromptSet,
    pub adapter: AdapterConfig,
    pub k: usize,
    pub seed: u64,
    pub samples: usize,
    pub lexicon: LexiconHashes,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunFailure {
    pub code: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub created_at: DateTime<Utc>,
    pub config: RunConfig,
    pub state: RunState,
    pub n_total: usize,
    pub n_done: usize,
    pub n_failed: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<RunFailure>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonGroup {
    pub group_id: String,
    pub created_at: DateTime<Utc>,
    pub run_ids: Vec<String>,
    /// Aligned with `run_ids`.
    pub normalized: Vec<NormalizedReport>,
    /// Run ids from most to least biased.
    pub ranking: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        FieldError {
            field: field.into(),
            message: message.into(),
        }
    }
}

fn join_fields(errors: &[FieldError]) -> String {
    errors
        .iter()
        .map(|e| format!("{}: {}", e.field, e.message))
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("invalid configuration: {}", join_fields(.0))]
    Validation(Vec<FieldError>),
    #[error("run {0} not found")]
    RunNotFound(String),
    #[error("comparison {0} not found")]
    ComparisonNotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("run {run_id} is {} and has no report", .state.as_str())]
    NotComplete { run_id: String, state: RunState },
    #[error("run sealed: {0} is already finalized")]
    Sealed(String),
    #[error("empty run")]
    EmptyRun,
    #[error("adapter failed: {0}")]
    AdapterFailed(String),
    #[error("incomparable runs: {0}")]
    Incomparable(String),
    #[error("group too small: need at least 2 runs, got {0}")]
    GroupTooSmall(usize),
    #[error("run {run_id} was evaluated with different lexicons")]
    LexiconMismatch { run_id: String },
    #[error("{path}: {message}")]
    Corrupt { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn corrupt(path: &Path, message: impl ToString) -> StoreError {
    StoreError::Corrupt {
        path: path.display().to_string(),
        message: message.to_string(),
    }
}

/// Writes `bytes` to a sibling temp file and renames it into place.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(bytes).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, StoreError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes).map_err(|e| corrupt(path, e))
}

fn to_json_pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable");
    bytes.push(b'\n');
    bytes
}

/// Run and group ids become directory and file names.
pub fn validate_id(id: &str) -> Result<(), String> {
    if id.is_empty() || id.len() > 128 {
        return Err("must be 1 to 128 characters".into());
    }
    if id.starts_with('.') {
        return Err("must not start with '.'".into());
    }
    if !id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.')) {
        return Err("may only contain ASCII letters, digits, '-', '_' and '.'".into());
    }
    Ok(())
}

fn new_id() -> String {
    uuid::Uuid::new_v4().simple().to_string()
}

#[derive(Clone, Debug)]
pub struct RunStore {
    root: PathBuf,
}

impl RunStore {
    /// Opens (creating if needed) a store rooted at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        for sub in ["runs", "comparisons"] {
            let dir = root.join(sub);
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        }
        Ok(RunStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn run_dir(&self, run_id: &str) -> PathBuf {
        self.root.join("runs").join(run_id)
    }

    fn comparison_path(&self, group_id: &str) -> PathBuf {
        self.root.join("comparisons").join(format!("{group_id}.json"))
    }

    fn existing_run_dir(&self, run_id: &str) -> Result<PathBuf, StoreError> {
        let dir = self.run_dir(run_id);
        if validate_id(run_id).is_err() || !dir.join(MANIFEST).is_file() {
            return Err(StoreError::RunNotFound(run_id.to_string()));
        }
        Ok(dir)
    }

    /// Persists a pending run. `run_id` is generated when absent.
    pub fn create_run(&self, config: RunConfig, run_id: Option<String>) -> Result<RunManifest, StoreError> {
        let mut errors = Vec::new();
        if config.k < 2 {
            errors.push(FieldError::new("k", "must be at least 2"));
        }
        if let Some(id) = &run_id {
            if let Err(message) = validate_id(id) {
                errors.push(FieldError::new("run_id", message));
            }
        }
        if !errors.is_empty() {
            return Err(StoreError::Validation(errors));
        }
        let run_id = run_id.unwrap_or_else(new_id);
        let dir = self.run_dir(&run_id);
        match fs::create_dir(&dir) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                return Err(StoreError::Conflict(format!("run {run_id} already exists")));
            }
            Err(e) => return Err(io_err(&dir)(e)),
        }
        let manifest = RunManifest {
            run_id: run_id.clone(),
            created_at: Utc::now(),
            n_total: config.samples,
            config,
            state: RunState::Pending,
            n_done: 0,
            n_failed: 0,
            failure: None,
        };
        for name in [RECORDS, FAILURES] {
            let path = dir.join(name);
            File::create(&path).map_err(io_err(&path))?;
        }
        write_atomic(&dir.join(MANIFEST), &to_json_pretty(&manifest))?;
        tracing::info!(run_id = %run_id, "created run");
        Ok(manifest)
    }

    pub fn manifest(&self, run_id: &str) -> Result<RunManifest, StoreError> {
        let dir = self.existing_run_dir(run_id)?;
        read_json(&dir.join(MANIFEST))
    }

    /// All runs, oldest first.
    pub fn list(&self) -> Result<Vec<RunManifest>, StoreError> {
        let runs = self.root.join("runs");
        let mut out = Vec::new();
        for entry in fs::read_dir(&runs).map_err(io_err(&runs))? {
            let entry = entry.map_err(io_err(&runs))?;
            let manifest = entry.path().join(MANIFEST);
            if manifest.is_file() {
                out.push(read_json::<RunManifest>(&manifest)?);
            }
        }
        out.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.run_id.cmp(&b.run_id)));
        Ok(out)
    }

    /// Takes the single-writer lease on a run.
    pub fn lease(&self, run_id: &str) -> Result<RunLease, StoreError> {
        let dir = self.existing_run_dir(run_id)?;
        let path = dir.join(LEASE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(RunLease {
                    store: self.clone(),
                    run_id: run_id.to_string(),
                    dir,
                    lease_path: path,
                })
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                Err(StoreError::Conflict(format!("run {run_id} is held by another writer")))
            }
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    pub fn records(&self, run_id: &str) -> Result<Vec<CaptionRecord>, StoreError> {
        let path = self.existing_run_dir(run_id)?.join(RECORDS);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        parse_records(&text).map_err(|e| corrupt(&path, e))
    }

    pub fn failures(&self, run_id: &str) -> Result<Vec<FailedRecord>, StoreError> {
        let path = self.existing_run_dir(run_id)?.join(FAILURES);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| corrupt(&path, e)))
            .collect()
    }

    fn require_complete(&self, run_id: &str) -> Result<PathBuf, StoreError> {
        let manifest = self.manifest(run_id)?;
        if manifest.state != RunState::Complete {
            return Err(StoreError::NotComplete {
                run_id: run_id.to_string(),
                state: manifest.state,
            });
        }
        self.existing_run_dir(run_id)
    }

    /// The stored report file, byte for byte.
    pub fn report_bytes(&self, run_id: &str) -> Result<Vec<u8>, StoreError> {
        let path = self.require_complete(run_id)?.join(REPORT);
        fs::read(&path).map_err(io_err(&path))
    }

    pub fn report(&self, run_id: &str) -> Result<MetricReport, StoreError> {
        let path = self.require_complete(run_id)?.join(REPORT);
        read_json(&path)
    }

    pub fn counts(&self, run_id: &str) -> Result<CountTable, StoreError> {
        let path = self.require_complete(run_id)?.join(COUNTS);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        CountTable::parse_tsv(&text).map_err(|e| corrupt(&path, e))
    }

    /// Recomputes the report from the stored records without touching the
    /// run, returning the bytes `report.json` would hold.
    pub fn recompute_report(&self, run_id: &str, lex: &Lexicons) -> Result<Vec<u8>, StoreError> {
        let manifest = self.manifest(run_id)?;
        check_lexicons(&manifest, lex)?;
        let records = self.records(run_id)?;
        let ev = evaluate(run_id, &records, manifest.n_failed, manifest.config.k, lex).map_err(metrics_err)?;
        Ok(ev.report.to_json().into_bytes())
    }

    /// Stores a report computed elsewhere as a complete run with no records.
    pub fn import_report(&self, report: &MetricReport, lexicon: LexiconHashes) -> Result<RunManifest, StoreError> {
        let mut errors = Vec::new();
        for (field, v) in [("hj_raw", report.hj_raw), ("mg_raw", report.mg_raw)] {
            if !(0.0..=1.0).contains(&v) {
                errors.push(FieldError::new(field, "must be in [0, 1]"));
            }
        }
        if !(report.bd_raw >= 0.0 && report.bd_raw.is_finite()) {
            errors.push(FieldError::new("bd_raw", "must be a non-negative number"));
        }
        if !errors.is_empty() {
            return Err(StoreError::Validation(errors));
        }
        let config = RunConfig {
            prompt_set: PromptSet::Records,
            adapter: AdapterConfig::External,
            k: report.k,
            seed: 0,
            samples: report.n_records + report.n_failed,
            lexicon,
        };
        let manifest = self.create_run(config, Some(report.run_id.clone()))?;
        let lease = self.lease(&manifest.run_id)?;
        write_atomic(&lease.dir.join(COUNTS), b"")?;
        write_atomic(&lease.dir.join(REPORT), report.to_json().as_bytes())?;
        lease.update(|m| {
            m.n_done = report.n_records;
            m.n_failed = report.n_failed;
            m.state = RunState::Complete;
        })
    }

    /// Normalizes and ranks complete runs sharing the same top-k, and stores
    /// the group.
    pub fn compare(&self, run_ids: &[String], group_id: Option<String>) -> Result<ComparisonGroup, StoreError> {
        if run_ids.len() < 2 {
            return Err(StoreError::GroupTooSmall(run_ids.len()));
        }
        for (i, id) in run_ids.iter().enumerate() {
            if run_ids[..i].contains(id) {
                return Err(StoreError::Validation(vec![FieldError::new(
                    "run_ids",
                    format!("{id} listed twice"),
                )]));
            }
        }
        if let Some(id) = &group_id {
            validate_id(id).map_err(|m| StoreError::Validation(vec![FieldError::new("group_id", m)]))?;
        }
        let reports = run_ids
            .iter()
            .map(|id| self.report(id))
            .collect::<Result<Vec<_>, _>>()?;
        let k = reports[0].k;
        if let Some(other) = reports.iter().find(|r| r.k != k) {
            return Err(StoreError::Incomparable(format!(
                "{} uses k={} but {} uses k={}",
                reports[0].run_id, k, other.run_id, other.k
            )));
        }
        let normalized = normalize_group(&reports).map_err(metrics_err)?;
        let ranking = rank_by_distance(&normalized);
        let group = ComparisonGroup {
            group_id: group_id.unwrap_or_else(new_id),
            created_at: Utc::now(),
            run_ids: run_ids.to_vec(),
            normalized,
            ranking,
        };
        let path = self.comparison_path(&group.group_id);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => {}
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                return Err(StoreError::Conflict(format!("comparison {} already exists", group.group_id)));
            }
            Err(e) => return Err(io_err(&path)(e)),
        }
        write_atomic(&path, &to_json_pretty(&group))?;
        Ok(group)
    }

    pub fn comparison(&self, group_id: &str) -> Result<ComparisonGroup, StoreError> {
        let path = self.comparison_path(group_id);
        if validate_id(group_id).is_err() || !path.is_file() {
            return Err(StoreError::ComparisonNotFound(group_id.to_string()));
        }
        read_json(&path)
    }
}

fn check_lexicons(manifest: &RunManifest, lex: &Lexicons) -> Result<(), StoreError> {
    if manifest.config.lexicon != lex.hashes() {
        return Err(StoreError::LexiconMismatch {
            run_id: manifest.run_id.clone(),
        });
    }
    Ok(())
}

fn metrics_err(e: MetricsError) -> StoreError {
    match e {
        MetricsError::EmptyRun => StoreError::EmptyRun,
        MetricsError::GroupTooSmall(n) => StoreError::GroupTooSmall(n),
        other => StoreError::Validation(vec![FieldError::new("k", other.to_string())]),
    }
}

/// Exclusive write access to one run. Dropping the lease releases it.
#[derive(Debug)]
pub struct RunLease {
    store: RunStore,
    run_id: String,
    dir: PathBuf,
    lease_path: PathBuf,
}

impl Drop for RunLease {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lease_path);
    }
}

impl RunLease {
    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn manifest(&self) -> Result<RunManifest, StoreError> {
        read_json(&self.dir.join(MANIFEST))
    }

    fn update(&self, f: impl FnOnce(&mut RunManifest)) -> Result<RunManifest, StoreError> {
        let mut manifest = self.manifest()?;
        f(&mut manifest);
        write_atomic(&self.dir.join(MANIFEST), &to_json_pretty(&manifest))?;
        Ok(manifest)
    }

    fn writable(&self) -> Result<RunManifest, StoreError> {
        let manifest = self.manifest()?;
        match manifest.state {
            RunState::Pending | RunState::Running => Ok(manifest),
            RunState::Complete | RunState::Failed => Err(StoreError::Sealed(self.run_id.clone())),
        }
    }

    fn append(&self, name: &str, text: &str) -> Result<(), StoreError> {
        let path = self.dir.join(name);
        let mut f = OpenOptions::new().append(true).open(&path).map_err(io_err(&path))?;
        f.write_all(text.as_bytes()).map_err(io_err(&path))?;
        f.sync_data().map_err(io_err(&path))
    }

    fn check_capacity(&self, manifest: &RunManifest, extra: usize) -> Result<(), StoreError> {
        if manifest.n_done + manifest.n_failed + extra > manifest.n_total {
            return Err(StoreError::Validation(vec![FieldError::new(
                "records",
                format!("run {} expects {} records in total", self.run_id, manifest.n_total),
            )]));
        }
        Ok(())
    }

    /// Appends successful records and moves the run to `running`.
    pub fn append_records(&self, records: &[CaptionRecord]) -> Result<RunManifest, StoreError> {
        let manifest = self.writable()?;
        self.check_capacity(&manifest, records.len())?;
        self.append(RECORDS, &export_records(records))?;
        self.update(|m| {
            m.n_done += records.len();
            m.state = RunState::Running;
        })
    }

    pub fn append_failures(&self, failures: &[FailedRecord]) -> Result<RunManifest, StoreError> {
        let manifest = self.writable()?;
        self.check_capacity(&manifest, failures.len())?;
        let mut text = String::new();
        for f in failures {
            text.push_str(&serde_json::to_string(f).expect("failure serializes"));
            text.push('\n');
        }
        self.append(FAILURES, &text)?;
        self.update(|m| {
            m.n_failed += failures.len();
            m.state = RunState::Running;
        })
    }

    /// Marks the run failed. Complete runs cannot fail afterwards.
    pub fn fail(&self, code: &str, message: &str) -> Result<RunManifest, StoreError> {
        self.writable()?;
        tracing::warn!(run_id = %self.run_id, code, message, "run failed");
        self.update(|m| {
            m.state = RunState::Failed;
            m.failure = Some(RunFailure {
                code: code.to_string(),
                message: message.to_string(),
            });
        })
    }

    /// Computes and stores the report and count table, sealing the run.
    /// Finalizing a complete run returns the stored report. Records still
    /// missing at this point are dropped from `n_total`.
    pub fn finalize(&self, lex: &Lexicons) -> Result<MetricReport, StoreError> {
        let manifest = self.manifest()?;
        match manifest.state {
            RunState::Complete => return self.store.report(&self.run_id),
            RunState::Failed => {
                return Err(match manifest.failure {
                    Some(f) if f.code == "empty_run" => StoreError::EmptyRun,
                    _ => StoreError::Sealed(self.run_id.clone()),
                })
            }
            RunState::Pending | RunState::Running => {}
        }
        check_lexicons(&manifest, lex)?;
        let records = self.store.records(&self.run_id)?;
        if records.is_empty() {
            self.fail("empty_run", "empty run")?;
            return Err(StoreError::EmptyRun);
        }
        let ev = evaluate(&self.run_id, &records, manifest.n_failed, manifest.config.k, lex).map_err(metrics_err)?;
        write_atomic(&self.dir.join(COUNTS), ev.counts.to_tsv().as_bytes())?;
        write_atomic(&self.dir.join(REPORT), ev.report.to_json().as_bytes())?;
        self.update(|m| {
            m.n_total = m.n_done + m.n_failed;
            m.state = RunState::Complete;
        })?;
        tracing::info!(run_id = %self.run_id, n = ev.report.n_records, "finalized run");
        Ok(ev.report)
    }
}
