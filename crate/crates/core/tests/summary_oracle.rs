use molscope_core::docstore::{
    Bins, Document, FetchQuery, FieldKind, Filter, Format, Limit, Store, SummaryOpts, Value,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde_json::json;

const CLASSES: [&str; 4] = ["acid", "base", "neutral", "salt"];

fn seeded_docs(n: usize, seed: u64) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mass = LogNormal::new(5.5, 0.4).unwrap();
    let logp = Normal::new(2.0, 1.5).unwrap();
    (0..n)
        .map(|i| {
            let mut d = Document::new(format!("m{i:04}"), ["CCO", "c1ccccc1", "CC(=O)O", "N"][i % 4]);
            if rng.random_bool(0.95) {
                d = d.with("mass", Value::Number(mass.sample(&mut rng)));
            }
            match rng.random_range(0..10) {
                0 => d = d.with("logp", Value::Null),
                1 => d = d.with("logp", Value::Text("n/a".into())),
                _ => d = d.with("logp", Value::Number(logp.sample(&mut rng))),
            }
            if rng.random_bool(0.9) {
                d = d.with("class", Value::Text(CLASSES[rng.random_range(0..4)].into()));
            }
            d.with("active", Value::Bool(rng.random_bool(0.3)))
        })
        .collect()
}

fn store_with(docs: Vec<Document>) -> Store {
    let store = Store::in_memory();
    store.insert("mols", docs).unwrap();
    store
}

/// Type-7 sample quantile written from its 1-based definition.
fn type7(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() as f64 - 1.0) * p + 1.0;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len());
    sorted[lo - 1] + (h - lo as f64) * (sorted[hi - 1] - sorted[lo - 1])
}

struct Oracle {
    n: usize,
    mean: f64,
    std: f64,
    quartiles: [f64; 3],
    fd_bins: usize,
    bandwidth: f64,
}

fn two_pass(values: &[f64]) -> Oracle {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let quartiles = [type7(&sorted, 0.25), type7(&sorted, 0.5), type7(&sorted, 0.75)];
    let iqr = quartiles[2] - quartiles[0];
    let range = sorted[n - 1] - sorted[0];
    let width = 2.0 * iqr / (n as f64).cbrt();
    let fd_bins = if iqr > 0.0 { ((range / width).ceil() as usize).clamp(10, 100) } else { 20 };
    let spread = var.sqrt().min(iqr / 1.34);
    let bandwidth = if spread > 0.0 { 0.9 * spread / (n as f64).powf(0.2) } else { (0.1 * range).max(1e-9) };
    Oracle { n, mean, std: var.sqrt(), quartiles, fd_bins, bandwidth }
}

fn numbers(docs: &[Document], field: &str) -> Vec<f64> {
    docs.iter().filter_map(|d| d.get(field).and_then(|v| v.as_f64())).collect()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + b.abs())
}

#[test]
fn numeric_summary_matches_two_pass_oracle() {
    let docs = seeded_docs(1000, 42);
    let store = store_with(docs.clone());
    let fields = vec!["mass".to_string(), "logp".to_string()];
    let got = store.summarize("mols", &fields, &Filter::all(), &SummaryOpts::default()).unwrap();
    for (field, s) in fields.iter().zip(&got) {
        let values = numbers(&docs, field);
        let o = two_pass(&values);
        assert_eq!(s.kind, FieldKind::Numeric);
        assert_eq!((s.count, s.missing), (o.n, 1000 - o.n));
        assert!(close(s.mean.unwrap(), o.mean, 1e-12));
        assert!(close(s.std.unwrap(), o.std, 1e-10));
        assert!(close(s.q1.unwrap(), o.quartiles[0], 1e-12));
        assert!(close(s.median.unwrap(), o.quartiles[1], 1e-12));
        assert!(close(s.q3.unwrap(), o.quartiles[2], 1e-12));
        assert_eq!(s.histogram.len(), o.fd_bins, "{field}");
        assert!(close(s.bandwidth.unwrap(), o.bandwidth, 1e-10));

        // bin counts by direct interval membership, last bin closed
        let bins = &s.histogram;
        for (i, b) in bins.iter().enumerate() {
            let last = i + 1 == bins.len();
            let want = values.iter().filter(|&&x| x >= b.left && (x < b.right || (last && x <= b.right))).count();
            assert_eq!(b.count, want, "{field} bin {i}");
        }
        assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), o.n);

        // the binned estimate stays close to the exact Gaussian KDE
        let h = o.bandwidth;
        let exact = |g: f64| {
            values.iter().map(|x| (-0.5 * ((g - x) / h).powi(2)).exp()).sum::<f64>()
                / (o.n as f64 * h * (2.0 * std::f64::consts::PI).sqrt())
        };
        let peak = s.kde.iter().map(|p| p[1]).fold(0.0, f64::max);
        for p in &s.kde {
            assert!((p[1] - exact(p[0])).abs() < 0.02 * peak, "{field} at {}", p[0]);
        }
        let step = s.kde[1][0] - s.kde[0][0];
        let area: f64 = s.kde.iter().map(|p| p[1]).sum::<f64>() * step;
        assert!((area - 1.0).abs() < 0.01, "{field} area {area}");
        assert!(close(s.kde[0][0], values.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * h, 1e-12));

        let bp = s.boxplot.unwrap();
        let iqr = o.quartiles[2] - o.quartiles[0];
        let (lo, hi) = (o.quartiles[0] - 1.5 * iqr, o.quartiles[2] + 1.5 * iqr);
        let inside: Vec<f64> = values.iter().copied().filter(|&x| x >= lo && x <= hi).collect();
        assert_eq!(bp.whisker_lo, inside.iter().copied().fold(f64::INFINITY, f64::min));
        assert_eq!(bp.whisker_hi, inside.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        assert_eq!(bp.outliers, o.n - inside.len());
    }
}

#[test]
fn categorical_and_grouped_summaries() {
    let docs = seeded_docs(500, 7);
    let store = store_with(docs.clone());
    let cat = &store.summarize("mols", &["class".into()], &Filter::all(), &SummaryOpts::default()).unwrap()[0];
    assert_eq!(cat.kind, FieldKind::Categorical);
    for c in &cat.categories {
        let want = docs.iter().filter(|d| d.get("class").and_then(|v| v.as_str().map(String::from)) == Some(c.value.clone())).count();
        assert_eq!(c.count, want);
    }
    assert!(cat.categories.windows(2).all(|w| w[0].count >= w[1].count));

    let opts = SummaryOpts { bins: Bins::Fixed(12), group_by: Some("class".into()) };
    let s = &store.summarize("mols", &["mass".into()], &Filter::all(), &opts).unwrap()[0];
    assert_eq!(s.histogram.len(), 12);
    for g in &s.groups {
        let vals: Vec<f64> = docs
            .iter()
            .filter(|d| d.get("class").and_then(|v| v.as_str().map(String::from)).as_deref() == Some(g.category.as_str()))
            .filter_map(|d| d.get("mass").and_then(|v| v.as_f64()))
            .collect();
        let o = two_pass(&vals);
        assert_eq!(g.count, vals.len());
        assert!(close(g.boxplot.median, o.quartiles[1], 1e-12));
    }
    assert!(store.summarize("mols", &["class".into()], &Filter::all(), &opts).is_err());
}

/// Evaluates a JSON filter directly against a JSON document.
fn brute_match(filter: &serde_json::Value, doc: &serde_json::Value) -> bool {
    let obj = filter.as_object().unwrap();
    obj.iter().all(|(key, arg)| match key.as_str() {
        "$and" => arg.as_array().unwrap().iter().all(|f| brute_match(f, doc)),
        "$or" => arg.as_array().unwrap().iter().any(|f| brute_match(f, doc)),
        "$not" => !brute_match(arg, doc),
        field => {
            let found = doc.get(field).cloned().unwrap_or(serde_json::Value::Null);
            let ops = arg.as_object().unwrap();
            ops.iter().all(|(op, want)| {
                let ord = match (&found, want) {
                    (serde_json::Value::Number(a), serde_json::Value::Number(b)) => a.as_f64().unwrap().partial_cmp(&b.as_f64().unwrap()),
                    (serde_json::Value::String(a), serde_json::Value::String(b)) => Some(a.cmp(b)),
                    _ => None,
                };
                let eq = |w: &serde_json::Value| match (&found, w) {
                    (serde_json::Value::Number(a), serde_json::Value::Number(b)) => a.as_f64() == b.as_f64(),
                    _ => &found == w,
                };
                use std::cmp::Ordering::*;
                match op.as_str() {
                    "$eq" => eq(want),
                    "$ne" => !eq(want),
                    "$lt" => ord == Some(Less),
                    "$lte" => matches!(ord, Some(Less | Equal)),
                    "$gt" => ord == Some(Greater),
                    "$gte" => matches!(ord, Some(Greater | Equal)),
                    "$in" => want.as_array().unwrap().iter().any(eq),
                    "$exists" => !found.is_null() == want.as_bool().unwrap(),
                    "$contains" => found.as_str().is_some_and(|s| s.contains(want.as_str().unwrap())),
                    _ => unreachable!(),
                }
            })
        }
    })
}

fn leaf() -> impl Strategy<Value = serde_json::Value> {
    let field = prop::sample::select(vec!["mass", "logp", "class", "active", "absent", "id"]);
    let scalar = prop_oneof![
        (100.0f64..600.0).prop_map(|x| json!(x.round())),
        (-2.0f64..6.0).prop_map(|x| json!(x)),
        prop::sample::select(CLASSES.to_vec()).prop_map(|s| json!(s)),
        Just(json!("n/a")),
        Just(json!(true)),
        Just(json!(null)),
    ];
    let op = prop_oneof![
        scalar.clone().prop_map(|v| ("$eq", v)),
        scalar.clone().prop_map(|v| ("$ne", v)),
        scalar.clone().prop_map(|v| ("$lt", v)),
        scalar.clone().prop_map(|v| ("$lte", v)),
        scalar.clone().prop_map(|v| ("$gt", v)),
        scalar.clone().prop_map(|v| ("$gte", v)),
        prop::collection::vec(scalar, 1..4).prop_map(|v| ("$in", json!(v))),
        any::<bool>().prop_map(|b| ("$exists", json!(b))),
        prop::sample::select(vec!["a", "ba", "neu", "m00"]).prop_map(|s| ("$contains", json!(s))),
    ];
    (field, op).prop_map(|(f, (o, v))| json!({ f: { o: v } }))
}

fn filter_tree() -> impl Strategy<Value = serde_json::Value> {
    leaf().prop_recursive(3, 16, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 1..4).prop_map(|v| json!({ "$and": v })),
            prop::collection::vec(inner.clone(), 1..4).prop_map(|v| json!({ "$or": v })),
            inner.prop_map(|f| json!({ "$not": f })),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn filters_agree_with_brute_force(filter in filter_tree()) {
        let docs = seeded_docs(120, 3);
        let parsed = Filter::from_json(&filter).unwrap();
        for d in &docs {
            prop_assert_eq!(parsed.matches(d), brute_match(&filter, &d.to_json()), "{} on {}", filter, d.to_json());
        }
        let round = Filter::from_json(&parsed.to_json()).unwrap();
        for d in &docs {
            prop_assert_eq!(round.matches(d), parsed.matches(d));
        }
    }

    #[test]
    fn filtered_summary_equals_summary_of_fetch(filter in filter_tree()) {
        let docs = seeded_docs(200, 11);
        let store = store_with(docs);
        let parsed = Filter::from_json(&filter).unwrap();
        let fields = vec!["mass".to_string(), "class".to_string()];
        let direct = store.summarize("mols", &fields, &parsed, &SummaryOpts::default()).unwrap();
        let fetched = store.fetch("mols", &FetchQuery { filter: parsed, ..Default::default() }).unwrap();
        let via_fetch = molscope_core::docstore::summarize_docs(&fetched, &fields, &SummaryOpts::default()).unwrap();
        prop_assert_eq!(direct, via_fetch);
    }

    #[test]
    fn samples_are_seeded_subsets(n in 0usize..150, seed in any::<u64>()) {
        let store = store_with(seeded_docs(100, 5));
        let q = FetchQuery { limit: Limit::Sample { n, seed }, ..Default::default() };
        let a = store.fetch("mols", &q).unwrap();
        prop_assert_eq!(a.len(), n.min(100));
        prop_assert_eq!(&a, &store.fetch("mols", &q).unwrap());
        prop_assert!(a.windows(2).all(|w| w[0].id < w[1].id));
    }
}

#[test]
fn jsonl_ingest_and_snapshot_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let docs = seeded_docs(300, 9);
    let jsonl: String = docs.iter().map(|d| serde_json::to_string(d).unwrap() + "\n").collect();
    {
        let store = Store::open(dir.path()).unwrap();
        let report = store.ingest("mols", jsonl.as_bytes(), Format::Jsonl).unwrap();
        assert_eq!(report.inserted, 300);
        assert!(report.rejects.is_empty());
        store.snapshot("mols").unwrap();
    }
    let reopened = Store::open(dir.path()).unwrap();
    let back = reopened.fetch("mols", &FetchQuery::default()).unwrap();
    assert_eq!(back, docs);
    assert!(dir.path().join("mols.jsonl").exists());
    assert!(!dir.path().join(".mols.jsonl.tmp").exists());
}

#[test]
fn csv_ingest_types_cells() {
    let csv = "id,smiles,mass,class,note\na,CCO,46.07,acid,\nb,123,18.0,base,x\nc,N,n/a,,\n";
    let store = Store::in_memory();
    let report = store.ingest("mols", csv.as_bytes(), Format::Csv).unwrap();
    assert_eq!(report.inserted, 3);
    let docs = store.fetch("mols", &FetchQuery::default()).unwrap();
    assert_eq!(docs[0].get("mass"), Some(Value::Number(46.07)));
    assert_eq!(docs[0].get("note"), None);
    assert_eq!(docs[1].get("smiles"), Some(Value::Text("123".into())));
    assert_eq!(docs[2].get("mass"), Some(Value::Text("n/a".into())));
    assert_eq!(docs[2].get("class"), None);
}
