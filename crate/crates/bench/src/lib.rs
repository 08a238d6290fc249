//! Fixtures shared by the benchmarks.

use biaslens_core::adapters::simulate;
use biaslens_core::{BiasProfile, CaptionRecord, CountTable, PromptSet, Resources, Token};

/// A table of `n` objects with a long-tailed count distribution.
pub fn zipf_table(n: usize) -> CountTable {
    (0..n)
        .map(|i| (Token::new(format!("obj{i}")).expect("valid token"), (10_000 / (i + 1)) as u64 + 1))
        .collect()
}

/// `n` simulated records over the task prompt set under a preset profile.
pub fn simulated_records(profile: &str, n: usize) -> (Resources, Vec<CaptionRecord>) {
    let res = Resources::builtin();
    let prompts = res
        .prompts(&PromptSet::Task(None))
        .expect("shipped corpus yields task prompts");
    let profile = BiasProfile::preset(profile).expect("preset exists");
    let records = simulate(&profile, &prompts, n, &res.lexicons.stoplist);
    (res, records)
}
