//! Seeded stand-in for a biased text-to-image model plus captioner and
//! classifier. Each prompt's objects pass through omission, brand injection
//! and background hallucination, and the verdict misses more often whenever
//! the output was tampered with.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CaptionRecord;
use crate::lexicon::{Stoplist, Token};
use crate::object_filter::extract_objects;
use crate::promptgen::PromptSpec;

const PRESETS: [(&str, &str); 4] = [
    ("zero", include_str!("../../data/profiles/zero.toml")),
    ("base", include_str!("../../data/profiles/base.toml")),
    ("trigger", include_str!("../../data/profiles/trigger.toml")),
    ("extreme", include_str!("../../data/profiles/extreme.toml")),
];

/// Names of the shipped profiles, from least to most biased.
pub const PRESET_PROFILES: [&str; 4] = ["zero", "base", "trigger", "extreme"];

#[derive(Debug, thiserror::Error)]
pub enum ProfileError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid profile: {0}")]
    Parse(String),
    #[error("{field} = {value} is outside [0, 1]")]
    OutOfRange { field: &'static str, value: f64 },
    #[error("p_background is positive but the background list is empty")]
    NoBackground,
    #[error("unknown profile preset {0:?}")]
    UnknownPreset(String),
}

fn default_miss_baseline() -> f64 {
    0.01
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasProfile {
    #[serde(default)]
    pub name: String,
    /// Trigger word to the brand it injects.
    #[serde(default)]
    pub trigger_map: BTreeMap<Token, Token>,
    /// Brand injection probability when a trigger is present.
    #[serde(default)]
    pub p_inject: f64,
    /// Probability of injecting a random brand when no trigger is present.
    #[serde(default)]
    pub p_inject_global: f64,
    /// Per-object omission probability.
    #[serde(default)]
    pub p_omit: f64,
    /// Classifier miss probability for tampered outputs.
    #[serde(default)]
    pub p_miss: f64,
    /// Classifier miss probability for untampered outputs.
    #[serde(default = "default_miss_baseline")]
    pub p_miss_baseline: f64,
    /// Probability of adding one object drawn from `background`, modelling
    /// the incidental scene content every captioner reports.
    #[serde(default)]
    pub p_background: f64,
    #[serde(default)]
    pub background: Vec<Token>,
    #[serde(default)]
    pub seed: u64,
}

impl BiasProfile {
    pub fn preset(name: &str) -> Result<Self, ProfileError> {
        let (_, text) = PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| ProfileError::UnknownPreset(name.to_string()))?;
        BiasProfile::parse(text)
    }

    pub fn parse(text: &str) -> Result<Self, ProfileError> {
        let profile: BiasProfile = toml::from_str(text).map_err(|e| ProfileError::Parse(e.message().to_string()))?;
        profile.validate()?;
        Ok(profile)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ProfileError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ProfileError::Io {
            path: path.display().to_string(),
            source,
        })?;
        BiasProfile::parse(&text)
    }

    /// A preset name, or else a path to a TOML profile.
    pub fn resolve(name_or_path: &str) -> Result<Self, ProfileError> {
        if PRESET_PROFILES.contains(&name_or_path) {
            BiasProfile::preset(name_or_path)
        } else {
            BiasProfile::load(name_or_path)
        }
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        let fields = [
            ("p_inject", self.p_inject),
            ("p_inject_global", self.p_inject_global),
            ("p_omit", self.p_omit),
            ("p_miss", self.p_miss),
            ("p_miss_baseline", self.p_miss_baseline),
            ("p_background", self.p_background),
        ];
        for (field, value) in fields {
            if !(0.0..=1.0).contains(&value) {
                return Err(ProfileError::OutOfRange { field, value });
            }
        }
        if self.p_background > 0.0 && self.background.is_empty() {
            return Err(ProfileError::NoBackground);
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("profile serializes")
    }

    fn brands(&self) -> Vec<&Token> {
        let distinct: BTreeSet<&Token> = self.trigger_map.values().collect();
        distinct.into_iter().collect()
    }
}

/// Produces `samples` records, cycling through `prompts` in order. Record ids
/// are `{prompt id}#{pass}`. The same profile, seed and prompts always give
/// the same records.
pub fn simulate(profile: &BiasProfile, prompts: &[PromptSpec], samples: usize, stop: &Stoplist) -> Vec<CaptionRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
    let brands = profile.brands();
    let mut records = Vec::with_capacity(samples);
    if prompts.is_empty() {
        return records;
    }
    for i in 0..samples {
        let prompt = &prompts[i % prompts.len()];
        let objects = extract_objects(&prompt.text, stop);

        let mut words: Vec<&str> = Vec::with_capacity(objects.len() + 2);
        let mut dropped = false;
        for obj in objects.iter() {
            if rng.random_bool(profile.p_omit) {
                dropped = true;
            } else {
                words.push(obj.as_str());
            }
        }

        let trigger = profile.trigger_map.iter().find(|(t, _)| objects.contains(t.as_str()));
        let brand = match trigger {
            Some((_, brand)) => rng.random_bool(profile.p_inject).then_some(brand),
            None if brands.is_empty() => None,
            None => rng
                .random_bool(profile.p_inject_global)
                .then(|| brands[rng.random_range(0..brands.len())]),
        };
        if let Some(brand) = brand {
            words.push(brand.as_str());
        }

        if !profile.background.is_empty() && rng.random_bool(profile.p_background) {
            let idx = rng.random_range(0..profile.background.len());
            words.push(profile.background[idx].as_str());
        }

        let p_miss = if brand.is_some() || dropped {
            profile.p_miss
        } else {
            profile.p_miss_baseline
        };
        let matched = !rng.random_bool(p_miss);

        records.push(CaptionRecord {
            record_id: format!("{}#{}", prompt.id, i / prompts.len()),
            prompt: prompt.text.clone(),
            caption: words.join(" "),
            matched,
            score: None,
            image_ref: None,
        });
    }
    records
}
