use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use biaslens_core::lexicon::{import_wordnet, import_wordnet_sources, WordNetSource};
use biaslens_core::metrics::object_deltas;
use biaslens_core::promptgen::{extract_task_prompts, generate_general_with, GenerateOptions};
use biaslens_core::{
    execute_run, prepare_run, InferenceEndpoint, MetricReport, ProfileRef, PromptSet, PromptTables, Resources,
    RunRequest, RunStore, SynonymLexicon,
};
use clap::{Args, Parser, Subcommand};

use crate::api::{router, AppState, DEFAULT_WORKERS};
use crate::error::{ApiError, ErrorCode};

#[derive(Debug, Parser)]
#[command(name = "biaslens", version, about = "Quantify bias in text-to-image model outputs and captioned datasets")]
pub struct Cli {
    /// Run store directory.
    #[arg(long, global = true, env = "BIASLENS_STORE", default_value = "biaslens-store")]
    pub store: PathBuf,

    /// Synonym lexicon (TSV) replacing the shipped one.
    #[arg(long, global = true)]
    pub synonyms: Option<PathBuf>,

    /// Caption corpus (one caption per line) for task prompt sets.
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,

    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate a model (simulated, imported records, or a live endpoint).
    Run(RunArgs),
    /// Print a run's report.
    Report { run_id: String },
    /// Top objects added by a run, optionally against a baseline run.
    Objects {
        run_id: String,
        /// Run whose counts are subtracted to give per-object deltas.
        #[arg(long)]
        baseline: Option<String>,
        /// Number of objects to list; defaults to the run's k.
        #[arg(long)]
        top: Option<usize>,
    },
    /// Normalize and rank two or more complete runs.
    Compare {
        #[arg(required = true, num_args = 1..)]
        run_ids: Vec<String>,
        /// Id for the stored comparison group; generated when absent.
        #[arg(long)]
        group_id: Option<String>,
        /// Print the stored comparison group as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Evaluate a captioned dataset; each record's prompt is the dataset caption.
    AuditDataset {
        /// JSONL records (`prompt`, `caption`, `match`, optional `id` and `score`).
        #[arg(long)]
        records: PathBuf,
        /// Number of most frequent objects in the distribution bias.
        #[arg(long, default_value_t = biaslens_core::DEFAULT_TOP_K)]
        k: usize,
        /// Id for the stored run; generated when absent.
        #[arg(long)]
        run_id: Option<String>,
    },
    /// Print the prompts of a prompt set, one per line.
    GenPrompts {
        /// Directory holding objects.tsv and occupations.txt.
        #[arg(long)]
        tables: Option<PathBuf>,
        /// `general`, or `task:<trigger>` to pull captions from the corpus.
        #[arg(long, default_value = "general")]
        set: String,
        /// Number of task prompts to extract.
        #[arg(long, default_value_t = biaslens_core::promptgen::TASK_PROMPTS_PER_TRIGGER)]
        count: usize,
        /// Use "an" before vowel-initial words.
        #[arg(long)]
        article_correction: bool,
        /// Print full prompt specs as JSON lines.
        #[arg(long)]
        json: bool,
    },
    /// Convert WordNet database files into a synonym lexicon.
    ImportWordnet {
        /// WordNet `dict` directory.
        #[arg(long, conflicts_with_all = ["index", "data"])]
        dict: Option<PathBuf>,
        /// Also import verbs from the dict directory.
        #[arg(long, requires = "dict")]
        verbs: bool,
        /// A single `index.<pos>` file, used with --data.
        #[arg(long, requires = "data")]
        index: Option<PathBuf>,
        /// The `data.<pos>` file matching --index.
        #[arg(long, requires = "index")]
        data: Option<PathBuf>,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Store externally computed reports (a JSON report or array of reports).
    ImportReport { file: PathBuf },
    /// List stored runs.
    Runs,
    /// Serve the HTTP API (and the web console, if given).
    Serve {
        /// Address to bind.
        #[arg(long, env = "BIASLENS_LISTEN", default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
        /// Directory of built web console files, served for unmatched paths.
        #[arg(long)]
        webui_dir: Option<PathBuf>,
        /// Runs evaluated at the same time.
        #[arg(long, default_value_t = DEFAULT_WORKERS)]
        workers: usize,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// `general`, `task`, `task:<trigger>`, or `records`.
    #[arg(long)]
    pub prompt_set: Option<String>,
    /// Where captions come from.
    #[arg(long, default_value = "simulate", value_parser = ["simulate", "import", "endpoint"])]
    pub adapter: String,
    /// Simulator preset (zero, base, trigger, extreme) or TOML profile path.
    #[arg(long)]
    pub profile: Option<String>,
    /// Record file for the import adapter, or records to re-caption.
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// Number of most frequent objects in the distribution bias [default: 100].
    #[arg(long)]
    pub k: Option<usize>,
    /// Simulator seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of records to produce; prompts are cycled.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Id for the stored run; generated when absent.
    #[arg(long)]
    pub run_id: Option<String>,
    /// Inference endpoint base URL (also BIASLENS_ENDPOINT).
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Path appended to the endpoint URL.
    #[arg(long, default_value = "/caption")]
    pub endpoint_path: String,
    /// Per-request timeout.
    #[arg(long, default_value_t = 30_000)]
    pub timeout_ms: u64,
    /// Retries for timeouts, network errors, 408, 429 and 5xx.
    #[arg(long, default_value_t = 2)]
    pub max_retries: u32,
    /// Requests in flight at once.
    #[arg(long, default_value_t = 4)]
    pub concurrency: usize,
    /// Header carrying BIASLENS_TOKEN; `Authorization` gets a `Bearer` prefix.
    #[arg(long, default_value = "Authorization")]
    pub auth_header: String,
}

impl RunArgs {
    fn into_request(self) -> RunRequest {
        let endpoint = (self.adapter == "endpoint").then(|| InferenceEndpoint {
            path: self.endpoint_path,
            timeout_ms: self.timeout_ms,
            max_retries: self.max_retries,
            concurrency: self.concurrency,
            auth_header: self.auth_header,
            ..InferenceEndpoint::new(self.endpoint.unwrap_or_default())
        });
        let records_given = self.records.is_some();
        RunRequest {
            run_id: self.run_id,
            prompt_set: self
                .prompt_set
                .or_else(|| (records_given && self.adapter == "endpoint").then(|| "records".into())),
            adapter: Some(self.adapter),
            profile: self.profile.map(ProfileRef::Name),
            records: self.records.map(|p| p.display().to_string()),
            inline_records: None,
            endpoint,
            k: self.k,
            seed: self.seed,
            samples: self.samples,
        }
    }
}

fn internal(e: impl std::fmt::Display) -> ApiError {
    ApiError::new(ErrorCode::Internal, e.to_string())
}

fn io_error(path: &Path, e: std::io::Error) -> ApiError {
    ApiError::validation(format!("{}: {e}", path.display()))
}

fn resources(cli: &Cli) -> Result<Resources, ApiError> {
    let mut res = Resources::builtin();
    if let Some(path) = &cli.synonyms {
        res.lexicons.synonyms = SynonymLexicon::load(path).map_err(|e| ApiError::validation(e.to_string()))?;
    }
    if let Some(path) = &cli.corpus {
        let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        res.corpus = text.lines().filter(|l| !l.trim().is_empty()).map(String::from).collect();
    }
    Ok(res)
}

fn open_store(cli: &Cli) -> Result<RunStore, ApiError> {
    Ok(RunStore::open(&cli.store)?)
}

fn runtime() -> Result<tokio::runtime::Runtime, ApiError> {
    tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(internal)
}

fn write_out(out: &mut dyn Write, bytes: &[u8]) -> Result<(), ApiError> {
    out.write_all(bytes).map_err(internal)
}

/// Executes a parsed command line, writing results to `out`.
pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), ApiError> {
    match &cli.command {
        Command::Run(_) | Command::AuditDataset { .. } => {
            let store = open_store(&cli)?;
            let res = resources(&cli)?;
            let req = match cli.command {
                Command::Run(args) => args.into_request(),
                Command::AuditDataset { records, k, run_id } => RunRequest {
                    run_id,
                    prompt_set: Some("dataset".into()),
                    adapter: Some("import".into()),
                    records: Some(records.display().to_string()),
                    k: Some(k),
                    ..Default::default()
                },
                _ => unreachable!(),
            };
            let job = prepare_run(&store, req, &res)?;
            let run_id = job.run_id().to_string();
            tracing::info!(run_id = %run_id, n_total = job.manifest().n_total, "starting run");
            runtime()?.block_on(execute_run(&store, job, &res.lexicons))?;
            write_out(out, &store.report_bytes(&run_id)?)
        }
        Command::Report { run_id } => {
            let store = open_store(&cli)?;
            write_out(out, &store.report_bytes(run_id)?)
        }
        Command::Objects { run_id, baseline, top } => {
            let store = open_store(&cli)?;
            let report = store.report(run_id)?;
            let top = top.unwrap_or(report.k);
            let table = store.counts(run_id)?;
            let base = baseline.as_deref().map(|b| store.counts(b)).transpose()?;
            let mut text = String::from("rank\tobject\tcount\tdelta\n");
            for (i, d) in object_deltas(&table, base.as_ref(), top).iter().enumerate() {
                let delta = d.delta.map(|v| format!("{v:+}")).unwrap_or_else(|| "-".into());
                text.push_str(&format!("{}\t{}\t{}\t{}\n", i + 1, d.token, d.count, delta));
            }
            write_out(out, text.as_bytes())
        }
        Command::Compare { run_ids, group_id, json } => {
            let store = open_store(&cli)?;
            let group = store.compare(run_ids, group_id.clone())?;
            if *json {
                let mut bytes = serde_json::to_vec_pretty(&group).map_err(internal)?;
                bytes.push(b'\n');
                return write_out(out, &bytes);
            }
            let mut text = format!("group\t{}\n", group.group_id);
            text.push_str("rank\trun_id\tbd_norm\thj_norm\tmg_norm\tdistance\n");
            for (i, id) in group.ranking.iter().enumerate() {
                let n = group.normalized.iter().find(|n| &n.run_id == id).expect("ranked run is in group");
                text.push_str(&format!(
                    "{}\t{}\t{:.3}\t{:.3}\t{:.3}\t{:.3}\n",
                    i + 1,
                    id,
                    n.bd_norm,
                    n.hj_norm,
                    n.mg_norm,
                    n.distance
                ));
            }
            write_out(out, text.as_bytes())
        }
        Command::GenPrompts {
            tables,
            set,
            count,
            article_correction,
            json,
        } => {
            let res = resources(&cli)?;
            let prompts = match PromptSet::parse(set) {
                Some(PromptSet::General) => {
                    let tables = match tables {
                        Some(dir) => PromptTables::load_dir(dir).map_err(|e| ApiError::validation(e.to_string()))?,
                        None => res.tables.clone(),
                    };
                    generate_general_with(
                        &tables,
                        GenerateOptions {
                            article_correction: *article_correction,
                        },
                    )
                }
                Some(PromptSet::Task(Some(trigger))) => {
                    let found = extract_task_prompts(res.corpus.iter().map(String::as_str), &trigger, *count)
                        .map_err(|e| ApiError::validation(e.to_string()))?;
                    if let Some(s) = &found.shortage {
                        eprintln!("warning: only {} of {} captions contain {:?}", s.found, s.requested, s.trigger.as_str());
                    }
                    found.prompts
                }
                _ => return Err(ApiError::validation(format!("gen-prompts supports general and task:<trigger>, not {set:?}"))),
            };
            let mut text = String::new();
            for p in prompts {
                if *json {
                    text.push_str(&serde_json::to_string(&p).map_err(internal)?);
                } else {
                    text.push_str(&p.text);
                }
                text.push('\n');
            }
            write_out(out, text.as_bytes())
        }
        Command::ImportWordnet {
            dict,
            verbs,
            index,
            data,
            out: out_path,
        } => {
            let lex = match (dict, index, data) {
                (Some(dir), _, _) => {
                    let mut sources = vec![WordNetSource::in_dict(dir, "noun")];
                    if *verbs {
                        sources.push(WordNetSource::in_dict(dir, "verb"));
                    }
                    import_wordnet_sources(&sources)
                }
                (None, Some(index), Some(data)) => import_wordnet(index, data),
                _ => return Err(ApiError::validation("give --dict or both --index and --data")),
            }
            .map_err(|e| ApiError::validation(e.to_string()))?;
            let tsv = lex.to_tsv();
            match out_path {
                Some(path) => std::fs::write(path, tsv).map_err(|e| io_error(path, e))?,
                None => write_out(out, tsv.as_bytes())?,
            }
            eprintln!("imported {} headwords", lex.len());
            Ok(())
        }
        Command::ImportReport { file } => {
            let store = open_store(&cli)?;
            let res = resources(&cli)?;
            let text = std::fs::read_to_string(file).map_err(|e| io_error(file, e))?;
            let value: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| ApiError::validation(format!("{}: {e}", file.display())))?;
            let reports: Vec<MetricReport> = match value {
                serde_json::Value::Array(_) => serde_json::from_value(value),
                other => serde_json::from_value(other).map(|r| vec![r]),
            }
            .map_err(|e| ApiError::validation(format!("{}: {e}", file.display())))?;
            let mut text = String::new();
            for r in &reports {
                let m = store.import_report(r, res.lexicons.hashes())?;
                text.push_str(&format!("{}\n", m.run_id));
            }
            write_out(out, text.as_bytes())
        }
        Command::Runs => {
            let store = open_store(&cli)?;
            let mut text = String::from("run_id\tstate\tdone\tfailed\ttotal\tadapter\tprompt_set\tcreated_at\n");
            for m in store.list()? {
                text.push_str(&format!(
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                    m.run_id,
                    m.state.as_str(),
                    m.n_done,
                    m.n_failed,
                    m.n_total,
                    m.config.adapter.kind(),
                    m.config.prompt_set.name(),
                    m.created_at.to_rfc3339()
                ));
            }
            write_out(out, text.as_bytes())
        }
        Command::Serve {
            listen,
            webui_dir,
            workers,
        } => {
            let store = open_store(&cli)?;
            let res = resources(&cli)?;
            let app = router(AppState::new(store, res, *workers), webui_dir.clone());
            let listen = *listen;
            runtime()?.block_on(async move {
                let listener = tokio::net::TcpListener::bind(listen).await.map_err(internal)?;
                tracing::info!(addr = %listen, "listening");
                eprintln!("listening on http://{listen}");
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await
                    .map_err(internal)
            })
        }
    }
}
