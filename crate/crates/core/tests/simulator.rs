use biaslens_core::adapters::simulate;
use biaslens_core::metrics::object_deltas;
use biaslens_core::{evaluate, BiasProfile, CountTable, Lexicons, MetricReport, PromptSet, Resources};

const SAMPLES: usize = 10_000;

fn run(profile: &str, seed: u64) -> (MetricReport, CountTable) {
    let res = Resources::builtin();
    let prompts = res.prompts(&PromptSet::parse("task").unwrap()).unwrap();
    let profile = BiasProfile {
        seed,
        ..BiasProfile::preset(profile).unwrap()
    };
    let records = simulate(&profile, &prompts, SAMPLES, &res.lexicons.stoplist);
    let ev = evaluate(profile.name.as_str(), &records, 0, 100, &Lexicons::builtin()).unwrap();
    (ev.report, ev.counts)
}

#[test]
fn regimes_order_metrics() {
    for seed in [0, 1, 2] {
        let runs: Vec<_> = ["base", "trigger", "extreme"].iter().map(|p| run(p, seed)).collect();
        for (r, _) in &runs {
            eprintln!("seed {seed} {}: bd {:.3} hj {:.3} mg {:.3}", r.run_id, r.bd_raw, r.hj_raw, r.mg_raw);
        }
        for w in runs.windows(2) {
            let (a, b) = (&w[0].0, &w[1].0);
            assert!(a.hj_raw <= b.hj_raw, "{} -> {}", a.run_id, b.run_id);
            assert!(a.mg_raw <= b.mg_raw, "{} -> {}", a.run_id, b.run_id);
            assert!(a.bd_raw >= b.bd_raw, "{} -> {}", a.run_id, b.run_id);
        }
    }
}

#[test]
fn brands_dominate_deltas() {
    let (_, base) = run("base", 0);
    let (_, trig) = run("trigger", 0);
    let deltas = object_deltas(&trig, Some(&base), 5);
    let top3: Vec<&str> = deltas.iter().take(3).map(|d| d.token.as_str()).collect();
    for brand in ["mcdonalds", "starbucks", "cocacola"] {
        assert!(top3.contains(&brand), "{top3:?}");
    }
    assert_eq!(deltas[0].delta, Some(deltas[0].count as i64));
}

#[test]
fn brand_count_tracks_injection_rate() {
    let res = Resources::builtin();
    let prompts = res.prompts(&PromptSet::parse("task:burger").unwrap()).unwrap();
    let n = 4_000;
    for p in [0.1, 0.3, 0.5, 0.7, 0.9] {
        let profile = BiasProfile {
            p_inject: p,
            ..BiasProfile::preset("base").unwrap()
        };
        let records = simulate(&profile, &prompts, n, &res.lexicons.stoplist);
        let ev = evaluate("r", &records, 0, 100, &res.lexicons).unwrap();
        let count = ev.counts.get("mcdonalds") as f64;
        let mean = n as f64 * p;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((count - mean).abs() <= 3.0 * sigma, "p={p}: {count} vs {mean}±{}", 3.0 * sigma);
    }
}
