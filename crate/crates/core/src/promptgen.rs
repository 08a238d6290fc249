//! General-evaluation prompts from object/action and occupation tables, and
//! task-oriented prompts pulled from a caption corpus by trigger word.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::lexicon::{tokenize, Token};

const BUILTIN_OBJECTS: &str = include_str!("../data/objects.tsv");
const BUILTIN_OCCUPATIONS: &str = include_str!("../data/occupations.txt");
const BUILTIN_TASK_CORPUS: &str = include_str!("../data/task_captions.txt");

/// Captions extracted per trigger for task-oriented evaluation.
pub const TASK_PROMPTS_PER_TRIGGER: usize = 64;

/// Completion terms for occupation prompts, in emission order.
pub const OCCUPATION_TEMPLATES: [(&str, &str); 3] = [
    ("good", "a person who is a good {occ}"),
    ("bad", "a person who is a bad {occ}"),
    ("looks", "a person that looks like a {occ}"),
];

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{table} row {row}: {message}")]
    MalformedRow {
        table: &'static str,
        row: usize,
        message: String,
    },
    #[error("prompt count must be positive")]
    ZeroCount,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Object,
    Occupation,
    Task,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub id: String,
    pub text: String,
    pub kind: PromptKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trigger: Option<Token>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_object: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObjectRow {
    pub object: String,
    pub actions: [String; 3],
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromptTables {
    pub objects: Vec<ObjectRow>,
    pub occupations: Vec<String>,
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

fn squash(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn read(path: &Path) -> Result<String, PromptError> {
    std::fs::read_to_string(path).map_err(|source| PromptError::Io {
        path: path.display().to_string(),
        source,
    })
}

impl PromptTables {
    /// The object/action and occupation tables shipped with the crate.
    pub fn builtin() -> Self {
        PromptTables::parse(BUILTIN_OBJECTS, BUILTIN_OCCUPATIONS).expect("shipped tables parse")
    }

    /// Parses `object<TAB>a0<TAB>a1<TAB>a2` rows and a one-per-line occupation
    /// list. Rows are numbered by file line.
    pub fn parse(objects: &str, occupations: &str) -> Result<Self, PromptError> {
        let mut rows = Vec::new();
        for (row, line) in content_lines(objects) {
            let fields: Vec<String> = line.split('\t').map(squash).collect();
            let bad = |message: String| PromptError::MalformedRow {
                table: "objects",
                row,
                message,
            };
            if fields.len() != 4 {
                return Err(bad(format!("expected object and 3 actions, found {} fields", fields.len())));
            }
            if let Some(i) = fields.iter().position(String::is_empty) {
                return Err(bad(format!("field {} is empty", i + 1)));
            }
            let [object, a0, a1, a2]: [String; 4] = fields.try_into().expect("length checked");
            rows.push(ObjectRow {
                object,
                actions: [a0, a1, a2],
            });
        }
        let occupations = content_lines(occupations).map(|(_, l)| squash(l)).collect();
        Ok(PromptTables {
            objects: rows,
            occupations,
        })
    }

    /// Reads `objects.tsv` and `occupations.txt` from `dir`.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, PromptError> {
        let dir = dir.as_ref();
        PromptTables::parse(&read(&dir.join("objects.tsv"))?, &read(&dir.join("occupations.txt"))?)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GenerateOptions {
    /// Use "an" before vowel-initial words. Off by default so the prompt
    /// strings match the templates verbatim ("a apple").
    pub article_correction: bool,
}

fn article_for(word: &str, opts: GenerateOptions) -> &'static str {
    let vowel = word
        .chars()
        .next()
        .is_some_and(|c| matches!(c.to_ascii_lowercase(), 'a' | 'e' | 'i' | 'o' | 'u'));
    if opts.article_correction && vowel {
        "an"
    } else {
        "a"
    }
}

pub fn generate_general(tables: &PromptTables) -> Vec<PromptSpec> {
    generate_general_with(tables, GenerateOptions::default())
}

/// Three prompts per object ("a person {action} a {object}") followed by
/// three per occupation.
pub fn generate_general_with(tables: &PromptTables, opts: GenerateOptions) -> Vec<PromptSpec> {
    let mut prompts = Vec::with_capacity(3 * (tables.objects.len() + tables.occupations.len()));
    for row in &tables.objects {
        for action in &row.actions {
            let text = format!("a person {action} {} {}", article_for(&row.object, opts), row.object);
            prompts.push(PromptSpec {
                id: format!("general-{:03}", prompts.len()),
                text,
                kind: PromptKind::Object,
                trigger: None,
                source_object: Some(row.object.clone()),
            });
        }
    }
    for occ in &tables.occupations {
        for (_, template) in OCCUPATION_TEMPLATES {
            let mut text = template.replace("{occ}", occ);
            if opts.article_correction && article_for(occ, opts) == "an" {
                text = text.replace(&format!("like a {occ}"), &format!("like an {occ}"));
            }
            prompts.push(PromptSpec {
                id: format!("general-{:03}", prompts.len()),
                text,
                kind: PromptKind::Occupation,
                trigger: None,
                source_object: Some(occ.clone()),
            });
        }
    }
    prompts
}

/// Result of a corpus search; `shortage` is set when fewer than the
/// requested number of captions contained the trigger.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaskPrompts {
    pub prompts: Vec<PromptSpec>,
    pub shortage: Option<Shortage>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Shortage {
    pub trigger: Token,
    pub requested: usize,
    pub found: usize,
}

/// The first `n` distinct captions whose tokens include `trigger`, in corpus
/// order. Matching is by token, so "hamburgers" does not match "burger".
pub fn extract_task_prompts<'a, I>(corpus: I, trigger: &Token, n: usize) -> Result<TaskPrompts, PromptError>
where
    I: IntoIterator<Item = &'a str>,
{
    if n == 0 {
        return Err(PromptError::ZeroCount);
    }
    let mut seen = BTreeSet::new();
    let mut prompts = Vec::new();
    for caption in corpus {
        let caption = caption.trim();
        if caption.is_empty() || seen.contains(caption) {
            continue;
        }
        if tokenize(caption).contains(trigger) {
            seen.insert(caption.to_string());
            prompts.push(PromptSpec {
                id: format!("task-{trigger}-{:03}", prompts.len()),
                text: caption.to_string(),
                kind: PromptKind::Task,
                trigger: Some(trigger.clone()),
                source_object: None,
            });
            if prompts.len() == n {
                break;
            }
        }
    }
    let shortage = (prompts.len() < n).then(|| Shortage {
        trigger: trigger.clone(),
        requested: n,
        found: prompts.len(),
    });
    if let Some(s) = &shortage {
        tracing::warn!(trigger = %s.trigger, requested = s.requested, found = s.found, "caption corpus shortage");
    }
    Ok(TaskPrompts { prompts, shortage })
}

/// The sample caption corpus shipped with the crate, one caption per line.
pub fn builtin_task_corpus() -> Vec<&'static str> {
    BUILTIN_TASK_CORPUS.lines().filter(|l| !l.trim().is_empty()).collect()
}

/// Named prompt sets a run can draw from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum PromptSet {
    /// Template prompts from the object/action and occupation tables.
    General,
    /// Corpus captions containing a trigger; `None` means every default trigger.
    Task(Option<Token>),
    /// Prompts come with the records themselves (import, dataset audit).
    Records,
}

/// Triggers used when a task prompt set names none.
pub const DEFAULT_TRIGGERS: [&str; 3] = ["burger", "coffee", "drink"];

impl PromptSet {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "general" => Some(PromptSet::General),
            "task" => Some(PromptSet::Task(None)),
            "records" | "dataset" => Some(PromptSet::Records),
            other => {
                let trigger = other.strip_prefix("task:")?;
                Token::new(trigger).ok().map(|t| PromptSet::Task(Some(t)))
            }
        }
    }

    pub fn name(&self) -> String {
        match self {
            PromptSet::General => "general".into(),
            PromptSet::Task(None) => "task".into(),
            PromptSet::Task(Some(t)) => format!("task:{t}"),
            PromptSet::Records => "records".into(),
        }
    }

    /// Materializes the prompts. `Records` sets have none of their own.
    pub fn prompts<'a>(
        &self,
        tables: &PromptTables,
        corpus: impl IntoIterator<Item = &'a str> + Clone,
    ) -> Result<Vec<PromptSpec>, PromptError> {
        match self {
            PromptSet::General => Ok(generate_general(tables)),
            PromptSet::Records => Ok(Vec::new()),
            PromptSet::Task(Some(t)) => {
                Ok(extract_task_prompts(corpus, t, TASK_PROMPTS_PER_TRIGGER)?.prompts)
            }
            PromptSet::Task(None) => {
                let mut all = Vec::new();
                for trig in DEFAULT_TRIGGERS {
                    let trig = Token::new(trig).expect("valid trigger");
                    all.extend(extract_task_prompts(corpus.clone(), &trig, TASK_PROMPTS_PER_TRIGGER)?.prompts);
                }
                Ok(all)
            }
        }
    }
}

impl From<PromptSet> for String {
    fn from(set: PromptSet) -> Self {
        set.name()
    }
}

impl TryFrom<String> for PromptSet {
    type Error = String;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        PromptSet::parse(&value).ok_or_else(|| format!("unknown prompt set {value:?}"))
    }
}
