use hyposcore::dataset::{HypothesisSet, Normalizer};
use hyposcore::pinyin::Lexicon;
use hyposcore::promptgen::{
    count_marked_lines, parse_response, table3_specs, table4_specs, FailureReason, Markers, Method, PromptBuilder,
    PromptSpec,
};
use proptest::prelude::*;

fn all_specs() -> Vec<PromptSpec> {
    table3_specs()
        .into_iter()
        .filter_map(|m| match m {
            Method::Prompt(s) => Some(s),
            Method::Baseline => None,
        })
        .chain(table4_specs())
        .collect()
}

fn hypothesis_set() -> impl Strategy<Value = HypothesisSet> {
    (
        prop::collection::btree_set("[一-龥a-z0-9，]{1,12}", 5..=7),
        "[一-龥]{1,12}",
    )
        .prop_map(|(hyps, r)| HypothesisSet::new("u", "c", hyps.into_iter().collect(), r))
}

#[test]
fn thirteen_prompt_specs() {
    assert_eq!(all_specs().len(), 13);
}

proptest! {
    #[test]
    fn line_counts_match_the_spec(h in hypothesis_set()) {
        let builder = PromptBuilder::new(Lexicon::bundled());
        for spec in all_specs() {
            let prompt = builder.build(&h, &spec).unwrap();
            let m = Markers::for_style(spec.style);
            prop_assert_eq!(count_marked_lines(&prompt, m.text), spec.text.count, "{}", spec.name);
            prop_assert_eq!(count_marked_lines(&prompt, m.pinyin), spec.pinyin_transcribed.count, "{}", spec.name);
            prop_assert_eq!(count_marked_lines(&prompt, m.ground_truth), spec.pinyin_ground_truth.count, "{}", spec.name);
        }
    }

    #[test]
    fn repeated_lines_are_identical(h in hypothesis_set()) {
        let builder = PromptBuilder::new(Lexicon::bundled());
        for spec in all_specs() {
            let prompt = builder.build(&h, &spec).unwrap();
            let m = Markers::for_style(spec.style);
            for (count, marker) in [
                (spec.text, m.text),
                (spec.pinyin_transcribed, m.pinyin),
                (spec.pinyin_ground_truth, m.ground_truth),
            ] {
                if count.repeat_first {
                    let lines: Vec<&str> = prompt.lines().filter(|l| l.starts_with(marker)).collect();
                    prop_assert!(lines.iter().all(|l| *l == lines[0]), "{}", spec.name);
                }
            }
            if spec.text.repeat_first {
                let expected = format!("{}{}", m.text, h.hypotheses[0]);
                prop_assert!(prompt.lines().any(|l| l == expected));
            }
        }
    }

    #[test]
    fn prompts_are_deterministic(h in hypothesis_set()) {
        let lex = Lexicon::bundled();
        for spec in all_specs() {
            let a = PromptBuilder::new(lex).build(&h, &spec).unwrap();
            let b = PromptBuilder::new(lex).build(&h, &spec).unwrap();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn finetune_prompts_ignore_the_reference(h in hypothesis_set(), other in "[一-龥]{1,12}") {
        let builder = PromptBuilder::new(Lexicon::bundled());
        let mut swapped = h.clone();
        swapped.transcription = other;
        for spec in table4_specs() {
            let prompt = builder.build(&h, &spec).unwrap();
            prop_assert_eq!(&prompt, &builder.build(&swapped, &spec).unwrap());
            prop_assert_eq!(count_marked_lines(&prompt, Markers::for_style(spec.style).ground_truth), 0);
        }
    }

    #[test]
    fn parse_response_is_total(raw in prop::collection::vec(any::<u8>(), 0..200), max_chars in 1usize..50) {
        let raw = String::from_utf8_lossy(&raw);
        let h = HypothesisSet::new("u", "c", vec!["一线".into()], "一线");
        let r = parse_response(&raw, &h, max_chars, &Normalizer::default());
        prop_assert_eq!(r.fallback_used, r.failure_reason != FailureReason::None);
        if r.fallback_used {
            prop_assert_eq!(r.correction, "一线");
        } else {
            prop_assert!(!r.correction.is_empty());
            prop_assert!(r.correction.chars().count() < max_chars);
        }
    }

    #[test]
    fn wrapped_json_is_found(prefix in "[^{}]{0,20}", answer in "[一-龥]{1,10}", suffix in "[^{}]{0,20}") {
        let h = HypothesisSet::new("u", "c", vec!["一线".into()], "一线");
        let raw = format!("{prefix}```json\n{{\"correction\": \"{answer}\"}}\n```{suffix}");
        let norm = Normalizer::default();
        let r = parse_response(&raw, &h, 100, &norm);
        prop_assert_eq!(r.failure_reason, FailureReason::None);
        prop_assert_eq!(r.correction, norm.normalize(&answer));
    }
}
