use hyposcore::dataset::{
    dedup, filter_by_length, load_corpus, parse_corpus_str, sample, write_corpus, DatasetError, HypothesisSet,
    NormalizationPolicy, Normalizer, SimplifiedTable, SAMPLE_JSONL,
};
use proptest::prelude::*;

fn corpus(n: usize) -> Vec<HypothesisSet> {
    (0..n)
        .map(|i| HypothesisSet::new(format!("u{i:03}"), "c", vec![format!("甲{i}")], format!("乙{i}")))
        .collect()
}

#[test]
fn bundled_sample_parses() {
    let records = parse_corpus_str(SAMPLE_JSONL).unwrap();
    assert_eq!(records.len(), 12);
    assert!(records.iter().all(|r| r.hypotheses.len() == 5));
}

#[test]
fn file_roundtrip_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.jsonl");
    std::fs::write(&path, SAMPLE_JSONL).unwrap();
    let records = load_corpus(&path).unwrap();
    let mut out = Vec::new();
    write_corpus(&mut out, &records).unwrap();
    assert_eq!(String::from_utf8(out).unwrap(), SAMPLE_JSONL);
}

#[test]
fn oversized_sample_is_rejected() {
    let err = sample(&corpus(3), 4, 1).unwrap_err();
    assert!(matches!(
        err,
        DatasetError::SampleTooLarge {
            requested: 4,
            available: 3
        }
    ));
}

#[test]
fn distinct_seeds_give_distinct_samples() {
    let c = corpus(50);
    let runs: Vec<Vec<String>> = (0..8)
        .map(|seed| sample(&c, 10, seed).unwrap().into_iter().map(|h| h.id).collect())
        .collect();
    for i in 0..runs.len() {
        for j in i + 1..runs.len() {
            assert_ne!(runs[i], runs[j], "seeds {i} and {j}");
        }
    }
}

#[test]
fn length_filter_is_strict() {
    let records = vec![
        HypothesisSet::new("a", "c", vec!["一二".into()], "一二三"),
        HypothesisSet::new("b", "c", vec!["一二".into()], "一二"),
    ];
    let f = filter_by_length(records, 3);
    assert_eq!(f.kept.len(), 1);
    assert_eq!(f.kept[0].id, "b");
    assert_eq!(f.dropped, 1);
}

fn messy_text() -> impl Strategy<Value = String> {
    "[学習語們這個ＡＢＣ１２３，。！？、 \u{3000}\ta-z.,!?一二三]{0,30}"
}

proptest! {
    #[test]
    fn normalization_is_idempotent(x in messy_text()) {
        let norm = Normalizer::default();
        let once = norm.normalize(&x);
        prop_assert_eq!(norm.normalize(&once), once);
    }

    #[test]
    fn partial_policies_are_idempotent(
        x in messy_text(),
        flags in prop::array::uniform4(any::<bool>()),
    ) {
        let mut policy = NormalizationPolicy::none();
        policy.to_simplified = flags[0];
        policy.width_fold = flags[1];
        policy.strip_whitespace = flags[2];
        policy.strip_punctuation = flags[3];
        let norm = Normalizer::new(policy, SimplifiedTable::bundled().clone());
        let once = norm.normalize(&x);
        prop_assert_eq!(norm.normalize(&once), once);
    }

    #[test]
    fn dedup_properties(x in prop::collection::vec("[abc]{0,2}", 0..12)) {
        let once = dedup(x.clone());
        prop_assert!(once.len() <= x.len());
        prop_assert_eq!(dedup(once.clone()), once.clone());
        // first occurrences, in order
        let mut expected: Vec<String> = Vec::new();
        for s in &x {
            if !expected.contains(s) {
                expected.push(s.clone());
            }
        }
        prop_assert_eq!(once, expected);
    }

    #[test]
    fn sample_is_deterministic(n in 0usize..30, k in 0usize..30, seed in any::<u64>()) {
        let c = corpus(n);
        let k = k.min(n);
        let a = sample(&c, k, seed).unwrap();
        prop_assert_eq!(a.len(), k);
        prop_assert_eq!(&a, &sample(&c, k, seed).unwrap());
        let mut ids: Vec<&str> = a.iter().map(|h| h.id.as_str()).collect();
        ids.dedup();
        prop_assert_eq!(ids.len(), k);
    }

    #[test]
    fn write_then_load_roundtrips(
        rows in prop::collection::vec(
            ("[a-z0-9]{1,6}", "[a-z/]{1,8}", prop::collection::btree_set("[一-龥\"\\\\a-z ]{1,6}", 1..4), "[一-龥\"]{0,8}"),
            0..6,
        )
    ) {
        let mut seen = std::collections::HashSet::new();
        let records: Vec<HypothesisSet> = rows
            .into_iter()
            .filter(|(id, ..)| seen.insert(id.clone()))
            .map(|(id, corpus, hyps, r)| HypothesisSet::new(id, corpus, hyps.into_iter().collect(), r))
            .collect();
        let mut first = Vec::new();
        write_corpus(&mut first, &records).unwrap();
        let text = String::from_utf8(first).unwrap();
        let loaded = parse_corpus_str(&text).unwrap();
        prop_assert_eq!(&loaded, &records);
        let mut second = Vec::new();
        write_corpus(&mut second, &loaded).unwrap();
        prop_assert_eq!(String::from_utf8(second).unwrap(), text);
    }
}
