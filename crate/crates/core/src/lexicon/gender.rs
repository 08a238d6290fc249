use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_file, LexiconError, Token};

const BUILTIN_MARKERS: &str = include_str!("../../data/gender_markers.toml");

/// Tokens that mark a caption as describing a male or a female subject.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "MarkerFile")]
pub struct GenderMarkers {
    male: BTreeSet<Token>,
    female: BTreeSet<Token>,
}

#[derive(Deserialize)]
struct MarkerFile {
    male: Vec<String>,
    female: Vec<String>,
}

impl TryFrom<MarkerFile> for GenderMarkers {
    type Error = LexiconError;

    fn try_from(file: MarkerFile) -> Result<Self, Self::Error> {
        let convert = |words: Vec<String>| -> Result<BTreeSet<Token>, LexiconError> {
            words
                .into_iter()
                .map(|w| Token::normalize(&w).ok_or(LexiconError::InvalidToken(w)))
                .collect()
        };
        GenderMarkers::new(convert(file.male)?, convert(file.female)?)
    }
}

impl Default for GenderMarkers {
    fn default() -> Self {
        GenderMarkers::parse(BUILTIN_MARKERS).expect("shipped gender markers parse")
    }
}

impl GenderMarkers {
    pub fn new(male: BTreeSet<Token>, female: BTreeSet<Token>) -> Result<Self, LexiconError> {
        if let Some(shared) = male.intersection(&female).next() {
            return Err(LexiconError::Markers(format!(
                "{shared} listed as both male and female"
            )));
        }
        Ok(GenderMarkers { male, female })
    }

    /// TOML with `male = [...]` and `female = [...]` arrays.
    pub fn parse(text: &str) -> Result<Self, LexiconError> {
        toml::from_str(text).map_err(|e| LexiconError::Markers(e.message().to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LexiconError> {
        GenderMarkers::parse(&read_file(path.as_ref())?)
    }

    pub fn male(&self) -> &BTreeSet<Token> {
        &self.male
    }

    pub fn female(&self) -> &BTreeSet<Token> {
        &self.female
    }

    pub fn is_male(&self, token: &str) -> bool {
        self.male.contains(token)
    }

    pub fn is_female(&self, token: &str) -> bool {
        self.female.contains(token)
    }

    pub fn to_toml(&self) -> String {
        let quote = |set: &BTreeSet<Token>| {
            set.iter()
                .map(|t| format!("{:?}", t.as_str()))
                .collect::<Vec<_>>()
                .join(", ")
        };
        format!("male = [{}]\nfemale = [{}]\n", quote(&self.male), quote(&self.female))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_disjoint() {
        let m = GenderMarkers::default();
        assert!(m.is_male("man") && m.is_male("boys") && m.is_male("male"));
        assert!(m.is_female("woman") && m.is_female("girls") && m.is_female("female"));
        assert!(m.male().is_disjoint(m.female()));
        assert_eq!(GenderMarkers::parse(&m.to_toml()).unwrap(), m);
    }

    #[test]
    fn overlapping_markers_rejected() {
        let err = GenderMarkers::parse("male = [\"person\"]\nfemale = [\"Person\"]\n").unwrap_err();
        assert!(matches!(err, LexiconError::Markers(_)));
    }
}
