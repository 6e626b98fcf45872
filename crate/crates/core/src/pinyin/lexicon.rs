use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use super::{parse_syllable, PinyinError, Syllable, ToneMode};

const BUNDLED_CHARS: &str = include_str!("../../data/lexicon_chars.tsv");
const BUNDLED_PHRASES: &str = include_str!("../../data/lexicon_phrases.tsv");

/// Character and phrase readings. Immutable once built.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    chars: HashMap<char, Vec<Syllable>>,
    phrases: HashMap<String, Vec<Syllable>>,
    max_phrase_chars: usize,
    warnings: Vec<String>,
}

impl Lexicon {
    /// The lexicon shipped with the crate: single-character readings plus
    /// phrases whose reading differs from the per-character defaults.
    pub fn bundled() -> &'static Lexicon {
        static BUNDLED: OnceLock<Lexicon> = OnceLock::new();
        BUNDLED.get_or_init(|| {
            let mut builder = LexiconBuilder::default();
            builder
                .add_tsv(BUNDLED_CHARS, "bundled:lexicon_chars.tsv")
                .expect("bundled character lexicon is valid");
            builder
                .add_tsv(BUNDLED_PHRASES, "bundled:lexicon_phrases.tsv")
                .expect("bundled phrase lexicon is valid");
            builder.build().expect("bundled lexicon is consistent")
        })
    }

    pub fn from_tsv(text: &str) -> Result<Lexicon, PinyinError> {
        let mut builder = LexiconBuilder::default();
        builder.add_tsv(text, "<memory>")?;
        builder.build()
    }

    /// Default (first) reading of a character.
    pub fn default_reading(&self, c: char) -> Option<Syllable> {
        self.chars.get(&c).and_then(|r| r.first().copied())
    }

    pub fn readings(&self, c: char) -> Option<&[Syllable]> {
        self.chars.get(&c).map(Vec::as_slice)
    }

    pub fn phrase(&self, phrase: &str) -> Option<&[Syllable]> {
        self.phrases.get(phrase).map(Vec::as_slice)
    }

    pub fn char_count(&self) -> usize {
        self.chars.len()
    }

    pub fn phrase_count(&self) -> usize {
        self.phrases.len()
    }

    pub(crate) fn max_phrase_chars(&self) -> usize {
        self.max_phrase_chars
    }

    /// Load-time warnings, e.g. duplicate rows.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }
}

/// Load a lexicon TSV file (`<char-or-phrase>\t<syllable,syllable,...>`).
pub fn load_lexicon(path: impl AsRef<Path>) -> Result<Lexicon, PinyinError> {
    let mut builder = LexiconBuilder::default();
    builder.add_file(path)?;
    builder.build()
}

/// Accumulates rows from one or more TSV sources; later rows override
/// earlier ones. Cross-row invariants are checked in [`LexiconBuilder::build`].
#[derive(Debug, Default)]
pub struct LexiconBuilder {
    chars: HashMap<char, Vec<Syllable>>,
    phrases: HashMap<String, Vec<Syllable>>,
    warnings: Vec<String>,
}

impl LexiconBuilder {
    pub fn add_file(&mut self, path: impl AsRef<Path>) -> Result<&mut Self, PinyinError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| PinyinError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.add_tsv(&text, &path.display().to_string())
    }

    pub fn add_bundled(&mut self) -> &mut Self {
        let bundled = Lexicon::bundled();
        self.chars.extend(bundled.chars.iter().map(|(k, v)| (*k, v.clone())));
        self.phrases
            .extend(bundled.phrases.iter().map(|(k, v)| (k.clone(), v.clone())));
        self
    }

    pub fn add_tsv(&mut self, text: &str, source: &str) -> Result<&mut Self, PinyinError> {
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let parse_err = |message: String| PinyinError::Parse {
                origin: source.to_string(),
                line: line_no,
                message,
            };
            let (key, readings) = line
                .split_once('\t')
                .ok_or_else(|| parse_err("expected <entry>\\t<readings>".to_string()))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(parse_err("empty entry".to_string()));
            }
            let syllables = readings
                .split(',')
                .map(|r| {
                    let normalized = normalize_reading(r);
                    parse_syllable(&normalized, ToneMode::Lenient)
                        .map_err(|e| parse_err(format!("bad reading {:?}: {e}", r.trim())))
                })
                .collect::<Result<Vec<_>, _>>()?;

            let mut key_chars = key.chars();
            match (key_chars.next(), key_chars.next()) {
                (Some(c), None) => {
                    let mut deduped: Vec<Syllable> = Vec::with_capacity(syllables.len());
                    for s in syllables {
                        if !deduped.contains(&s) {
                            deduped.push(s);
                        }
                    }
                    if self.chars.insert(c, deduped).is_some() {
                        self.warnings.push(format!(
                            "{source}:{line_no}: duplicate entry {key:?} overrides earlier row"
                        ));
                    }
                }
                _ => {
                    let n = key.chars().count();
                    if syllables.len() != n {
                        return Err(PinyinError::InvariantViolation {
                            entry: key.to_string(),
                            message: format!("{n} characters but {} readings", syllables.len()),
                        });
                    }
                    if self.phrases.insert(key.to_string(), syllables).is_some() {
                        self.warnings.push(format!(
                            "{source}:{line_no}: duplicate entry {key:?} overrides earlier row"
                        ));
                    }
                }
            }
        }
        Ok(self)
    }

    pub fn build(self) -> Result<Lexicon, PinyinError> {
        let mut missing: Vec<(&String, char)> = self
            .phrases
            .keys()
            .filter_map(|p| p.chars().find(|c| !self.chars.contains_key(c)).map(|c| (p, c)))
            .collect();
        missing.sort();
        if let Some((phrase, c)) = missing.first() {
            return Err(PinyinError::InvariantViolation {
                entry: phrase.to_string(),
                message: format!("character {c:?} has no single-character reading"),
            });
        }
        let max_phrase_chars = self.phrases.keys().map(|p| p.chars().count()).max().unwrap_or(0);
        Ok(Lexicon {
            chars: self.chars,
            phrases: self.phrases,
            max_phrase_chars,
            warnings: self.warnings,
        })
    }
}

/// Lowercase, `v`/`u:` to `ü`, and a bare `n` to `en`. A missing tone digit
/// is left for the lenient parser to read as neutral.
pub fn normalize_reading(raw: &str) -> String {
    let lower = raw.trim().to_lowercase().replace("u:", "ü").replace('v', "ü");
    let (body, digit) = match lower.char_indices().last() {
        Some((i, c)) if c.is_ascii_digit() => (&lower[..i], &lower[i..]),
        _ => (lower.as_str(), ""),
    };
    if body == "n" {
        format!("en{digit}")
    } else {
        lower
    }
}
