use biaslens_core::metrics::{
    distribution_bias, generative_miss_rate, jaccard_hallucination, normalize_counts, normalize_group, rank_by_distance,
};
use biaslens_core::{CountTable, MetricReport, ObjectSet, Token};
use proptest::prelude::*;

fn tok(i: usize) -> Token {
    Token::new(format!("w{i:03}")).unwrap()
}

fn counts() -> impl Strategy<Value = Vec<u64>> {
    proptest::collection::vec(1u64..500, 1..60)
}

fn table(counts: &[u64]) -> CountTable {
    counts.iter().enumerate().map(|(i, n)| (tok(i), *n)).collect()
}

fn object_set() -> impl Strategy<Value = ObjectSet> {
    proptest::collection::btree_set(0usize..12, 0..6).prop_map(|s| s.into_iter().map(tok).collect())
}

fn raw_report() -> impl Strategy<Value = (f64, f64, f64)> {
    (0.0f64..30.0, 0.0f64..1.0, 0.0f64..1.0)
}

proptest! {
    #[test]
    fn bd_bounded_by_k_minus_one(cs in counts(), k in 2usize..80) {
        let bd = distribution_bias(&table(&cs), k).unwrap();
        let m = cs.len().min(k);
        prop_assert!(bd >= 0.0);
        prop_assert!(bd <= (m - 1) as f64);
        let top = normalize_counts(&table(&cs), k).unwrap();
        let flat = top.iter().all(|(_, v)| *v == 1.0);
        prop_assert_eq!(bd == (m - 1) as f64, flat);
    }

    #[test]
    fn bd_flat_table_is_k_minus_one(n in 1u64..1000, m in 1usize..120, k in 1usize..120) {
        let cs = vec![n; m];
        let bd = distribution_bias(&table(&cs), k).unwrap();
        prop_assert_eq!(bd, (m.min(k) - 1) as f64);
    }

    #[test]
    fn bd_scale_invariant(cs in counts(), factor in 1u64..50, k in 1usize..80) {
        let scaled: Vec<u64> = cs.iter().map(|c| c * factor).collect();
        prop_assert_eq!(normalize_counts(&table(&cs), k).unwrap(), normalize_counts(&table(&scaled), k).unwrap());
        prop_assert_eq!(distribution_bias(&table(&cs), k).unwrap(), distribution_bias(&table(&scaled), k).unwrap());
    }

    #[test]
    fn bd_reversal_symmetric(cs in counts(), k in 1usize..80) {
        let norm = normalize_counts(&table(&cs), k).unwrap();
        let values: Vec<f64> = norm.iter().map(|(_, v)| *v).collect();
        let trapezoids = |vs: &[f64]| vs.windows(2).map(|w| (w[0] + w[1]) / 2.0).sum::<f64>();
        let mut reversed = values.clone();
        reversed.reverse();
        prop_assert!((trapezoids(&values) - trapezoids(&reversed)).abs() < 1e-9);
        prop_assert!((trapezoids(&values) - distribution_bias(&table(&cs), k).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn hj_in_unit_interval(records in proptest::collection::vec((object_set(), object_set()), 1..30)) {
        let hj = jaccard_hallucination(records.iter().map(|(a, b)| (a, b))).unwrap();
        prop_assert!((0.0..=1.0).contains(&hj));
    }

    #[test]
    fn hj_zero_iff_identical(sets in proptest::collection::vec(object_set(), 1..20)) {
        let hj = jaccard_hallucination(sets.iter().map(|s| (s, s))).unwrap();
        prop_assert_eq!(hj, 0.0);
    }

    #[test]
    fn hj_one_when_disjoint(sets in proptest::collection::vec(object_set().prop_filter("non-empty", |s| !s.is_empty()), 1..20)) {
        let shifted: Vec<ObjectSet> = sets
            .iter()
            .map(|s| s.iter().map(|t| Token::new(format!("{t}x")).unwrap()).collect())
            .collect();
        let hj = jaccard_hallucination(sets.iter().zip(&shifted)).unwrap();
        prop_assert_eq!(hj, 1.0);
    }

    #[test]
    fn mg_in_unit_interval(verdicts in proptest::collection::vec(any::<bool>(), 1..200)) {
        let mg = generative_miss_rate(verdicts.iter().copied()).unwrap();
        prop_assert!((0.0..=1.0).contains(&mg));
        let misses = verdicts.iter().filter(|m| !**m).count();
        prop_assert_eq!(mg, misses as f64 / verdicts.len() as f64);
        prop_assert_eq!(mg == 0.0, misses == 0);
        prop_assert_eq!(mg == 1.0, misses == verdicts.len());
    }

    #[test]
    fn normalize_group_directions(raws in proptest::collection::vec(raw_report(), 2..15)) {
        let reports: Vec<MetricReport> = raws
            .iter()
            .enumerate()
            .map(|(i, (b, h, m))| MetricReport::from_raw(format!("r{i:02}"), *b, *h, *m))
            .collect();
        let norm = normalize_group(&reports).unwrap();
        prop_assert_eq!(norm.len(), reports.len());
        let argmin = |f: &dyn Fn(usize) -> f64| (0..reports.len()).min_by(|a, b| f(*a).total_cmp(&f(*b))).unwrap();
        let argmax = |f: &dyn Fn(usize) -> f64| (0..reports.len()).max_by(|a, b| f(*a).total_cmp(&f(*b))).unwrap();
        let bd_spread = raws.iter().any(|r| r.0 != raws[0].0);
        if bd_spread {
            prop_assert_eq!(norm[argmin(&|i| reports[i].bd_raw)].bd_norm, 1.0);
            prop_assert_eq!(norm[argmax(&|i| reports[i].bd_raw)].bd_norm, 0.0);
        }
        if raws.iter().any(|r| r.1 != raws[0].1) {
            prop_assert_eq!(norm[argmax(&|i| reports[i].hj_raw)].hj_norm, 1.0);
            prop_assert_eq!(norm[argmin(&|i| reports[i].hj_raw)].hj_norm, 0.0);
        }
        for (n, r) in norm.iter().zip(&reports) {
            prop_assert_eq!(&n.run_id, &r.run_id);
            for v in [n.bd_norm, n.hj_norm, n.mg_norm] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            prop_assert!(n.distance >= 0.0 && n.distance <= 3f64.sqrt() + 1e-12);
        }
        let ranking = rank_by_distance(&norm);
        let mut sorted = ranking.clone();
        sorted.sort();
        let mut ids: Vec<String> = reports.iter().map(|r| r.run_id.clone()).collect();
        ids.sort();
        prop_assert_eq!(sorted, ids);
        for w in ranking.windows(2) {
            let d = |id: &String| norm.iter().find(|n| &n.run_id == id).unwrap().distance;
            prop_assert!(d(&w[0]) >= d(&w[1]));
        }
    }

    #[test]
    fn merge_commutes(a in counts(), b in counts()) {
        let (ta, tb) = (table(&a), table(&b));
        let mut ab = ta.clone();
        ab.merge(&tb);
        let mut ba = tb.clone();
        ba.merge(&ta);
        prop_assert_eq!(&ab, &ba);
        prop_assert_eq!(ab.total(), ta.total() + tb.total());
    }
}
