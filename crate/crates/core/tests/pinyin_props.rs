use hyposcore::pinyin::{
    format_syllable, parse_syllable, transliterate, Final, Initial, Lexicon, Mode, PinyinToken, Syllable, ToneMode,
};
use proptest::prelude::*;
use std::collections::HashSet;
use std::sync::OnceLock;

fn inventory() -> &'static HashSet<Syllable> {
    static SET: OnceLock<HashSet<Syllable>> = OnceLock::new();
    SET.get_or_init(|| Syllable::enumerate().collect())
}

fn fresh_lexicon() -> &'static Lexicon {
    static LEX: OnceLock<Lexicon> = OnceLock::new();
    LEX.get_or_init(|| Lexicon::from_tsv(include_str!("../data/lexicon_chars.tsv")).unwrap())
}

#[test]
fn enumeration_covers_the_inventory() {
    let all: Vec<Syllable> = Syllable::enumerate().collect();
    assert_eq!(Initial::ALL.len(), 23);
    assert_eq!(Final::ALL.len(), 34);
    assert_eq!(all.len(), (23 + 1) * 34 * 5);
}

#[test]
fn format_then_parse_is_identity() {
    for s in Syllable::enumerate() {
        let text = format_syllable(&s);
        assert_eq!(parse_syllable(&text, ToneMode::Strict).unwrap(), s, "{text}");
        assert_eq!(parse_syllable(&text, ToneMode::Lenient).unwrap(), s, "{text}");
    }
}

#[test]
fn longest_prefix_initial() {
    let s = parse_syllable("zhuo1", ToneMode::Strict).unwrap();
    assert_eq!(s.initial, Some(Initial::Zh));
    let s = parse_syllable("zuo1", ToneMode::Strict).unwrap();
    assert_eq!(s.initial, Some(Initial::Z));
}

fn lowercase_syllable_text() -> impl Strategy<Value = String> {
    "[a-zü]{0,7}[0-9]?"
}

proptest! {
    #[test]
    fn parse_then_format_is_identity(text in lowercase_syllable_text()) {
        if let Ok(s) = parse_syllable(&text, ToneMode::Strict) {
            prop_assert_eq!(format_syllable(&s), text);
        }
    }

    #[test]
    fn fuzzed_parses_stay_in_inventory(text in "\\PC{0,8}") {
        for mode in [ToneMode::Strict, ToneMode::Lenient] {
            if let Ok(s) = parse_syllable(&text, mode) {
                prop_assert!(inventory().contains(&s));
                prop_assert!((1..=5).contains(&s.tone.get()));
            }
        }
    }

    #[test]
    fn one_token_per_character(text in "[\\u{4e00}-\\u{4e80}a-z0-9 ，。]{0,24}") {
        let lex = Lexicon::bundled();
        for mode in [Mode::Contextual, Mode::PerChar] {
            prop_assert_eq!(transliterate(&text, lex, mode).len(), text.chars().count());
        }
    }

    #[test]
    fn per_char_mode_is_context_free(a in "[\\u{4e00}-\\u{9fa5}x]{0,10}", b in "[\\u{4e00}-\\u{9fa5}x]{0,10}") {
        let lex = Lexicon::bundled();
        let whole = transliterate(&format!("{a}{b}"), lex, Mode::PerChar);
        let mut parts = transliterate(&a, lex, Mode::PerChar);
        parts.extend(transliterate(&b, lex, Mode::PerChar));
        prop_assert_eq!(whole, parts);
    }

    #[test]
    fn transliteration_is_deterministic(text in "[\\u{4e00}-\\u{9fa5}]{0,16}") {
        let lex = Lexicon::bundled();
        let fresh = fresh_lexicon();
        for mode in [Mode::Contextual, Mode::PerChar] {
            prop_assert_eq!(transliterate(&text, lex, mode), transliterate(&text, lex, mode));
        }
        prop_assert_eq!(transliterate(&text, lex, Mode::PerChar), transliterate(&text, fresh, Mode::PerChar));
    }

    #[test]
    fn non_han_passes_through(text in "[a-zA-Z0-9 ,.!?]{0,20}") {
        let tokens = transliterate(&text, Lexicon::bundled(), Mode::Contextual);
        let literals: String = tokens
            .iter()
            .map(|t| match t {
                PinyinToken::Literal(c) => *c,
                PinyinToken::Syllable(_) => '?',
            })
            .collect();
        prop_assert_eq!(literals, text);
    }
}
