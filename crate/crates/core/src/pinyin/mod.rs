//! Grapheme-to-Pinyin transliteration.
//!
//! Han characters become tone-numbered [`Syllable`]s looked up in a
//! [`Lexicon`]; every other character passes through as a literal token, so
//! the output always has one token per input character.

mod lexicon;
mod syllable;

use std::fmt;

use thiserror::Error;

pub use lexicon::{load_lexicon, normalize_reading, Lexicon, LexiconBuilder};
pub use syllable::{format_syllable, parse_syllable, Final, Initial, Syllable, Tone, ToneMode};

#[derive(Debug, Error)]
pub enum PinyinError {
    #[error("empty syllable")]
    EmptySyllable,
    #[error("{syllable:?}: remainder {remainder:?} is not a final")]
    RemainderNotAFinal { syllable: String, remainder: String },
    #[error("{0:?}: no final after the initial")]
    EmptyFinal(String),
    #[error("{syllable:?}: tone digit {digit} is outside 1-5")]
    BadToneDigit { syllable: String, digit: char },
    #[error("{0:?}: missing tone digit")]
    MissingTone(String),
    #[error("{syllable:?}: unexpected character {found:?}")]
    InvalidCharacter { syllable: String, found: char },
    #[error("{origin}:{line}: {message}")]
    Parse {
        origin: String,
        line: usize,
        message: String,
    },
    #[error("lexicon entry {entry:?}: {message}")]
    InvariantViolation { entry: String, message: String },
    #[error("no reading for character {0:?}")]
    UnknownCharacter(char),
    #[error("cannot read {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Heteronym handling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    /// Greedy longest phrase match, falling back to default readings.
    #[default]
    Contextual,
    /// Each character independently takes its default reading.
    PerChar,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "contextual" => Ok(Mode::Contextual),
            "per_char" | "per-char" => Ok(Mode::PerChar),
            other => Err(format!("unknown mode {other:?} (expected contextual or per-char)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PinyinToken {
    Syllable(Syllable),
    Literal(char),
}

impl PinyinToken {
    pub fn as_syllable(&self) -> Option<&Syllable> {
        match self {
            PinyinToken::Syllable(s) => Some(s),
            PinyinToken::Literal(_) => None,
        }
    }

    /// Token equality used by Pinyin error rates.
    pub fn matches(&self, other: &PinyinToken, tone_sensitive: bool) -> bool {
        match (self, other) {
            (PinyinToken::Syllable(a), PinyinToken::Syllable(b)) => {
                if tone_sensitive {
                    a == b
                } else {
                    a.same_segments(b)
                }
            }
            (PinyinToken::Literal(a), PinyinToken::Literal(b)) => a == b,
            _ => false,
        }
    }
}

impl fmt::Display for PinyinToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PinyinToken::Syllable(s) => s.fmt(f),
            PinyinToken::Literal(c) => write!(f, "{c}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Transliteration {
    pub tokens: Vec<PinyinToken>,
    /// Han characters without a lexicon entry, emitted as literals.
    pub unknown: usize,
}

pub fn is_han(c: char) -> bool {
    matches!(c as u32,
        0x3400..=0x4DBF
        | 0x4E00..=0x9FFF
        | 0xF900..=0xFAFF
        | 0x20000..=0x2FA1F
        | 0x30000..=0x323AF)
}

impl Lexicon {
    pub fn transliterate(&self, text: &str, mode: Mode) -> Transliteration {
        let chars: Vec<char> = text.chars().collect();
        let mut out = Transliteration {
            tokens: Vec::with_capacity(chars.len()),
            unknown: 0,
        };
        let mut i = 0;
        while i < chars.len() {
            if mode == Mode::Contextual {
                if let Some(phrase) = self.longest_phrase_at(&chars[i..]) {
                    out.tokens.extend(phrase.iter().copied().map(PinyinToken::Syllable));
                    i += phrase.len();
                    continue;
                }
            }
            let c = chars[i];
            match self.default_reading(c) {
                Some(s) if is_han(c) => out.tokens.push(PinyinToken::Syllable(s)),
                None if is_han(c) => {
                    out.unknown += 1;
                    out.tokens.push(PinyinToken::Literal(c));
                }
                _ => out.tokens.push(PinyinToken::Literal(c)),
            }
            i += 1;
        }
        out
    }

    /// Like [`Lexicon::transliterate`] but an unknown Han character is an error.
    pub fn transliterate_strict(&self, text: &str, mode: Mode) -> Result<Vec<PinyinToken>, PinyinError> {
        if let Some(c) = text.chars().find(|&c| is_han(c) && self.default_reading(c).is_none()) {
            return Err(PinyinError::UnknownCharacter(c));
        }
        Ok(self.transliterate(text, mode).tokens)
    }

    fn longest_phrase_at(&self, rest: &[char]) -> Option<&[Syllable]> {
        if !is_han(rest[0]) {
            return None;
        }
        let longest = self.max_phrase_chars().min(rest.len());
        let mut key = String::new();
        (2..=longest).rev().find_map(|n| {
            key.clear();
            key.extend(&rest[..n]);
            self.phrase(&key)
        })
    }
}

pub fn transliterate(text: &str, lex: &Lexicon, mode: Mode) -> Vec<PinyinToken> {
    lex.transliterate(text, mode).tokens
}

/// Space-separated rendering used in prompts (`jin1 tian1 tian1 qi4`).
/// Whitespace tokens are dropped; other literals print verbatim.
pub fn render_tokens(tokens: &[PinyinToken]) -> String {
    let mut out = String::new();
    for token in tokens {
        if matches!(token, PinyinToken::Literal(c) if c.is_whitespace()) {
            continue;
        }
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&token.to_string());
    }
    out
}
