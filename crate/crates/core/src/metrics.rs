//! Distribution bias, Jaccard hallucination, generative miss rate, and the
//! group normalization used to compare runs.
//!
//! Raw metrics describe one run. Normalized metrics only make sense inside a
//! comparison group: each column is min-max scaled across the group, with
//! distribution bias inverted so that for all three a higher value means more
//! bias. Runs are then ranked by the Euclidean norm of the normalized triple.

use serde::{Deserialize, Serialize};

use crate::lexicon::{GenderMarkers, Token};
use crate::object_filter::{CountTable, ObjectSet};

/// Number of objects kept for distribution bias when nothing else is asked for.
pub const DEFAULT_TOP_K: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("no objects observed")]
    NoObjects,
    #[error("empty run")]
    EmptyRun,
    #[error("group too small: need at least 2 reports, got {0}")]
    GroupTooSmall(usize),
    #[error("top-k must be positive")]
    ZeroK,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectCount {
    pub token: Token,
    pub count: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenderDistribution {
    pub male: f64,
    pub female: f64,
    pub unspecified: f64,
}

impl Default for GenderDistribution {
    fn default() -> Self {
        GenderDistribution {
            male: 0.0,
            female: 0.0,
            unspecified: 1.0,
        }
    }
}

/// Raw metrics for one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub run_id: String,
    /// Successful records the metrics were computed over.
    pub n_records: usize,
    /// Records that could not be obtained; excluded from every metric.
    #[serde(default)]
    pub n_failed: usize,
    /// Top-k used for distribution bias. Reports are only comparable at equal k.
    #[serde(default = "default_k")]
    pub k: usize,
    /// Distinct objects in the count table.
    #[serde(default)]
    pub n_objects: usize,
    pub bd_raw: f64,
    pub hj_raw: f64,
    pub mg_raw: f64,
    #[serde(default)]
    pub top_k: Vec<ObjectCount>,
    #[serde(default)]
    pub gender: GenderDistribution,
}

fn default_k() -> usize {
    DEFAULT_TOP_K
}

impl MetricReport {
    /// A report carrying only the three raw metrics, for results computed
    /// elsewhere.
    pub fn from_raw(run_id: impl Into<String>, bd_raw: f64, hj_raw: f64, mg_raw: f64) -> Self {
        MetricReport {
            run_id: run_id.into(),
            n_records: 0,
            n_failed: 0,
            k: DEFAULT_TOP_K,
            n_objects: 0,
            bd_raw,
            hj_raw,
            mg_raw,
            top_k: Vec::new(),
            gender: GenderDistribution::default(),
        }
    }

    /// Pretty JSON followed by a newline; this is the stored byte format.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizedReport {
    pub run_id: String,
    pub bd_norm: f64,
    pub hj_norm: f64,
    pub mg_norm: f64,
    pub distance: f64,
}

impl NormalizedReport {
    pub fn new(run_id: impl Into<String>, bd_norm: f64, hj_norm: f64, mg_norm: f64) -> Self {
        let distance = (bd_norm * bd_norm + hj_norm * hj_norm + mg_norm * mg_norm).sqrt();
        NormalizedReport {
            run_id: run_id.into(),
            bd_norm,
            hj_norm,
            mg_norm,
            distance,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectDelta {
    pub token: Token,
    pub count: u64,
    /// `count` minus the baseline count; absent when no baseline was given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<i64>,
}

/// Top-k entries sorted by count ascending (ties by token), as counts.
fn ascending_top(table: &CountTable, k: usize) -> Result<Vec<(Token, u64)>, MetricsError> {
    if k == 0 {
        return Err(MetricsError::ZeroK);
    }
    if table.is_empty() {
        return Err(MetricsError::NoObjects);
    }
    let mut top = table.top(k);
    top.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    Ok(top)
}

/// Min-max normalizes the `k` most frequent objects, sorted ascending. When
/// every selected count is equal, every value is 1.0.
pub fn normalize_counts(table: &CountTable, k: usize) -> Result<Vec<(Token, f64)>, MetricsError> {
    let top = ascending_top(table, k)?;
    let min = top.first().map(|e| e.1).unwrap_or(0);
    let max = top.last().map(|e| e.1).unwrap_or(0);
    Ok(top
        .into_iter()
        .map(|(tok, n)| {
            let value = if max == min {
                1.0
            } else {
                (n - min) as f64 / (max - min) as f64
            };
            (tok, value)
        })
        .collect())
}

/// Trapezoidal area under the normalized ascending frequency curve of the
/// top `k` objects, summed over the M-1 consecutive pairs.
///
/// Evaluated in integer arithmetic as
/// `sum(n_i + n_{i+1} - 2 min) / (2 (max - min))`, so the result is the
/// correctly rounded value of the exact area while counts stay below 2^53.
pub fn distribution_bias(table: &CountTable, k: usize) -> Result<f64, MetricsError> {
    let top = ascending_top(table, k)?;
    let m = top.len();
    if m < 2 {
        return Ok(0.0);
    }
    let min = top[0].1;
    let max = top[m - 1].1;
    if max == min {
        return Ok((m - 1) as f64);
    }
    let numerator: u128 = top
        .windows(2)
        .map(|w| u128::from(w[0].1 - min) + u128::from(w[1].1 - min))
        .sum();
    let denominator = 2 * u128::from(max - min);
    Ok(numerator as f64 / denominator as f64)
}

/// Mean of `1 - |X ∩ Y| / |X ∪ Y|` over records. A record with both sets
/// empty contributes 0.
pub fn jaccard_hallucination<'a, I>(records: I) -> Result<f64, MetricsError>
where
    I: IntoIterator<Item = (&'a ObjectSet, &'a ObjectSet)>,
{
    let mut n = 0usize;
    let mut sum = 0.0;
    for (inputs, outputs) in records {
        n += 1;
        let union = inputs.union_len(outputs);
        if union > 0 {
            sum += 1.0 - inputs.intersection_len(outputs) as f64 / union as f64;
        }
    }
    if n == 0 {
        return Err(MetricsError::EmptyRun);
    }
    Ok(sum / n as f64)
}

/// Fraction of records the classifier judged as not matching their prompt.
/// Each item is the classifier verdict, `true` for a match.
pub fn generative_miss_rate<I>(verdicts: I) -> Result<f64, MetricsError>
where
    I: IntoIterator<Item = bool>,
{
    let (n, misses) = verdicts
        .into_iter()
        .fold((0usize, 0usize), |(n, m), matched| (n + 1, m + usize::from(!matched)));
    if n == 0 {
        return Err(MetricsError::EmptyRun);
    }
    Ok(misses as f64 / n as f64)
}

fn min_max(values: &[f64]) -> Vec<f64> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - min) / (max - min)).collect()
}

/// Normalizes a comparison group. Distribution bias uses inverse min-max
/// (highest raw area becomes 0); the other two use direct min-max. A column
/// with no spread normalizes to all zeros.
pub fn normalize_group(reports: &[MetricReport]) -> Result<Vec<NormalizedReport>, MetricsError> {
    if reports.len() < 2 {
        return Err(MetricsError::GroupTooSmall(reports.len()));
    }
    let column = |f: fn(&MetricReport) -> f64| min_max(&reports.iter().map(f).collect::<Vec<_>>());
    let bd = column(|r| r.bd_raw);
    let hj = column(|r| r.hj_raw);
    let mg = column(|r| r.mg_raw);
    let bd_spread = bd.iter().any(|v| *v != 0.0);
    Ok(reports
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let bd_norm = if bd_spread { 1.0 - bd[i] } else { 0.0 };
            NormalizedReport::new(r.run_id.clone(), bd_norm, hj[i], mg[i])
        })
        .collect())
}

/// Run ids from most to least biased (largest distance first), ties by id.
pub fn rank_by_distance(normalized: &[NormalizedReport]) -> Vec<String> {
    let mut order: Vec<&NormalizedReport> = normalized.iter().collect();
    order.sort_by(|a, b| {
        b.distance
            .total_cmp(&a.distance)
            .then_with(|| a.run_id.cmp(&b.run_id))
    });
    order.into_iter().map(|r| r.run_id.clone()).collect()
}

/// A record is male when it has a male marker and no female marker, female
/// symmetrically, and unspecified otherwise.
pub fn gender_distribution<'a, I>(records: I, markers: &GenderMarkers) -> Result<GenderDistribution, MetricsError>
where
    I: IntoIterator<Item = &'a ObjectSet>,
{
    let (mut n, mut male, mut female) = (0usize, 0usize, 0usize);
    for set in records {
        n += 1;
        let has_male = set.iter().any(|t| markers.is_male(t.as_str()));
        let has_female = set.iter().any(|t| markers.is_female(t.as_str()));
        match (has_male, has_female) {
            (true, false) => male += 1,
            (false, true) => female += 1,
            _ => {}
        }
    }
    if n == 0 {
        return Err(MetricsError::EmptyRun);
    }
    let total = n as f64;
    Ok(GenderDistribution {
        male: male as f64 / total,
        female: female as f64 / total,
        unspecified: (n - male - female) as f64 / total,
    })
}

/// The `k` most frequent objects of `table`, each with its change relative
/// to `baseline` (a missing baseline entry counts as 0).
pub fn object_deltas(table: &CountTable, baseline: Option<&CountTable>, k: usize) -> Vec<ObjectDelta> {
    table
        .top(k)
        .into_iter()
        .map(|(token, count)| {
            let delta = baseline.map(|b| count as i64 - b.get(token.as_str()) as i64);
            ObjectDelta { token, count, delta }
        })
        .collect()
}
