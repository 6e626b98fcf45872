//! Hypotheses-transcription corpora: JSONL I/O, text normalization,
//! deduplication, sampling and summary statistics.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use std::sync::OnceLock;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pinyin::Lexicon;
use crate::scoring::{self, Aggregate, PinyinScoring};

const BUNDLED_T2S: &str = include_str!("../data/t2s.tsv");

/// A small corpus shipped with the crate. It holds both worked cases from
/// the case table plus ten further utterances.
pub const SAMPLE_JSONL: &str = include_str!("../data/sample.jsonl");
/// Utterances whose 1-best differs from the reference only by homophones.
pub const HOMOPHONE_SAMPLE_JSONL: &str = include_str!("../data/homophone_sample.jsonl");

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("line {line}: duplicate id {id:?} (first seen on line {first_line})")]
    DuplicateId { id: String, line: usize, first_line: usize },
    #[error("cannot sample {requested} records from {available}")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("{source_name}:{line}: {message}")]
    Table {
        source_name: String,
        line: usize,
        message: String,
    },
    #[error("cannot read {path}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

/// One utterance: ranked hypotheses (1-best first) and the reference.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypothesisSet {
    pub id: String,
    pub corpus: String,
    #[serde(rename = "hyps")]
    pub hypotheses: Vec<String>,
    #[serde(rename = "ref")]
    pub transcription: String,
}

impl HypothesisSet {
    pub fn new(
        id: impl Into<String>,
        corpus: impl Into<String>,
        hypotheses: Vec<String>,
        transcription: impl Into<String>,
    ) -> Self {
        HypothesisSet {
            id: id.into(),
            corpus: corpus.into(),
            hypotheses,
            transcription: transcription.into(),
        }
    }

    pub fn one_best(&self) -> &str {
        self.hypotheses.first().map_or("", String::as_str)
    }

    /// Normalized copy with hypotheses re-deduplicated, since normalization
    /// can merge previously distinct strings.
    pub fn normalized(&self, norm: &Normalizer) -> HypothesisSet {
        HypothesisSet {
            id: self.id.clone(),
            corpus: self.corpus.clone(),
            hypotheses: dedup(self.hypotheses.iter().map(|h| norm.normalize(h)).collect()),
            transcription: norm.normalize(&self.transcription),
        }
    }

    /// Canonical single-line JSON.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("plain strings always serialize")
    }
}

/// Read and validate a JSONL corpus file.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<HypothesisSet>, DatasetError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_corpus(BufReader::new(file)).map_err(|e| match e {
        DatasetError::Io { source, .. } => DatasetError::Io {
            path: path.display().to_string(),
            source,
        },
        other => other,
    })
}

/// Streaming JSONL reader. Blank lines are skipped; line numbers in errors are 1-based.
pub fn read_corpus(reader: impl BufRead) -> Result<Vec<HypothesisSet>, DatasetError> {
    let mut records = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| DatasetError::Io {
            path: "<reader>".to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record = parse_record(&line, line_no)?;
        if let Some(&first_line) = seen.get(&record.id) {
            return Err(DatasetError::DuplicateId {
                id: record.id,
                line: line_no,
                first_line,
            });
        }
        seen.insert(record.id.clone(), line_no);
        records.push(record);
    }
    Ok(records)
}

pub fn parse_corpus_str(text: &str) -> Result<Vec<HypothesisSet>, DatasetError> {
    read_corpus(text.as_bytes())
}

fn parse_record(line: &str, line_no: usize) -> Result<HypothesisSet, DatasetError> {
    let schema = |message: String| DatasetError::Schema { line: line_no, message };
    let record: HypothesisSet = serde_json::from_str(line).map_err(|e| schema(e.to_string()))?;
    if record.id.is_empty() {
        return Err(schema("field `id` is empty".to_string()));
    }
    if record.hypotheses.is_empty() {
        return Err(schema("field `hyps` is empty".to_string()));
    }
    let mut distinct = HashSet::new();
    if let Some(dup) = record.hypotheses.iter().find(|h| !distinct.insert(h.as_str())) {
        return Err(schema(format!("field `hyps` repeats {dup:?}")));
    }
    Ok(record)
}

pub fn write_corpus(mut out: impl Write, records: &[HypothesisSet]) -> io::Result<()> {
    for r in records {
        writeln!(out, "{}", r.to_json_line())?;
    }
    Ok(())
}

/// Keep the first occurrence of each string, preserving order.
pub fn dedup(hyps: Vec<String>) -> Vec<String> {
    let mut seen = HashSet::new();
    hyps.into_iter().filter(|h| seen.insert(h.clone())).collect()
}

/// Uniform sample without replacement, sorted by id.
pub fn sample(corpus: &[HypothesisSet], n: usize, seed: u64) -> Result<Vec<HypothesisSet>, DatasetError> {
    if n > corpus.len() {
        return Err(DatasetError::SampleTooLarge {
            requested: n,
            available: corpus.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<HypothesisSet> = index::sample(&mut rng, corpus.len(), n)
        .into_iter()
        .map(|i| corpus[i].clone())
        .collect();
    picked.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(picked)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LengthFiltered {
    pub kept: Vec<HypothesisSet>,
    pub dropped: usize,
}

/// Keep records whose reference and every hypothesis are strictly shorter
/// than `max_chars` characters.
pub fn filter_by_length(records: Vec<HypothesisSet>, max_chars: usize) -> LengthFiltered {
    let total = records.len();
    let short = |s: &str| s.chars().count() < max_chars;
    let kept: Vec<HypothesisSet> = records
        .into_iter()
        .filter(|r| short(&r.transcription) && r.hypotheses.iter().all(|h| short(h)))
        .collect();
    LengthFiltered {
        dropped: total - kept.len(),
        kept,
    }
}

/// One-to-one traditional to simplified character table.
#[derive(Debug, Clone, Default)]
pub struct SimplifiedTable {
    map: HashMap<char, char>,
}

impl SimplifiedTable {
    pub fn bundled() -> &'static SimplifiedTable {
        static TABLE: OnceLock<SimplifiedTable> = OnceLock::new();
        TABLE.get_or_init(|| SimplifiedTable::from_tsv(BUNDLED_T2S, "bundled:t2s.tsv").expect("bundled table is valid"))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<SimplifiedTable, DatasetError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        SimplifiedTable::from_tsv(&text, &path.display().to_string())
    }

    /// Parse `<trad>\t<simp>` rows. Chains (a→b, b→c) are resolved to their
    /// end so conversion is idempotent; entries on a cycle are dropped.
    pub fn from_tsv(text: &str, source_name: &str) -> Result<SimplifiedTable, DatasetError> {
        let mut raw = HashMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: &str| DatasetError::Table {
                source_name: source_name.to_string(),
                line: idx + 1,
                message: message.to_string(),
            };
            let (t, s) = line.split_once('\t').ok_or_else(|| err("expected <trad>\\t<simp>"))?;
            let single = |s: &str| {
                let mut it = s.chars();
                match (it.next(), it.next()) {
                    (Some(c), None) => Some(c),
                    _ => None,
                }
            };
            let (t, s) = single(t.trim())
                .zip(single(s.trim()))
                .ok_or_else(|| err("each side must be exactly one character"))?;
            if t != s {
                raw.insert(t, s);
            }
        }
        let mut map = HashMap::with_capacity(raw.len());
        for (&from, &to) in &raw {
            let mut end = to;
            let mut steps = 0;
            while let Some(&next) = raw.get(&end) {
                end = next;
                steps += 1;
                if steps > raw.len() {
                    break;
                }
            }
            if !raw.contains_key(&end) && end != from {
                map.insert(from, end);
            }
        }
        Ok(SimplifiedTable { map })
    }

    pub fn convert(&self, c: char) -> char {
        self.map.get(&c).copied().unwrap_or(c)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// ASCII and CJK punctuation stripped by default. Full-width forms of the
/// ASCII marks are included so stripping works with width folding off.
pub fn default_punctuation() -> String {
    let ascii = ('!'..='~').filter(|c| c.is_ascii_punctuation());
    let full_width = ascii
        .clone()
        .map(|c| char::from_u32(c as u32 + 0xFEE0).expect("valid full-width form"));
    ascii
        .chain(full_width)
        .chain("。，、；：？！“”‘’（）《》〈〉【】「」『』〔〕〖〗…—–～·・﹏•｡｢｣､".chars())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizationPolicy {
    pub to_simplified: bool,
    pub strip_whitespace: bool,
    pub strip_punctuation: bool,
    pub punctuation: String,
    pub width_fold: bool,
}

impl Default for NormalizationPolicy {
    fn default() -> Self {
        NormalizationPolicy {
            to_simplified: true,
            strip_whitespace: true,
            strip_punctuation: true,
            punctuation: default_punctuation(),
            width_fold: true,
        }
    }
}

impl NormalizationPolicy {
    /// Leave text untouched.
    pub fn none() -> Self {
        NormalizationPolicy {
            to_simplified: false,
            strip_whitespace: false,
            strip_punctuation: false,
            punctuation: String::new(),
            width_fold: false,
        }
    }
}

fn fold_width(c: char) -> char {
    match c as u32 {
        0xFF01..=0xFF5E => char::from_u32(c as u32 - 0xFEE0).unwrap_or(c),
        0x3000 => ' ',
        _ => c,
    }
}

/// Apply `policy` character by character: simplified conversion, width
/// folding, then whitespace and punctuation stripping.
pub fn normalize(text: &str, policy: &NormalizationPolicy, table: &SimplifiedTable) -> String {
    text.chars()
        .map(|c| if policy.to_simplified { table.convert(c) } else { c })
        .map(|c| if policy.width_fold { fold_width(c) } else { c })
        .filter(|c| !(policy.strip_whitespace && c.is_whitespace()))
        .filter(|c| !(policy.strip_punctuation && policy.punctuation.contains(*c)))
        .collect()
}

/// A policy bound to its conversion table.
#[derive(Debug, Clone)]
pub struct Normalizer {
    policy: NormalizationPolicy,
    table: SimplifiedTable,
}

impl Normalizer {
    pub fn new(policy: NormalizationPolicy, table: SimplifiedTable) -> Self {
        Normalizer { policy, table }
    }

    pub fn bundled(policy: NormalizationPolicy) -> Self {
        Normalizer::new(policy, SimplifiedTable::bundled().clone())
    }

    pub fn identity() -> Self {
        Normalizer::new(NormalizationPolicy::none(), SimplifiedTable::default())
    }

    pub fn policy(&self) -> &NormalizationPolicy {
        &self.policy
    }

    pub fn normalize(&self, text: &str) -> String {
        normalize(text, &self.policy, &self.table)
    }
}

impl Default for Normalizer {
    fn default() -> Self {
        Normalizer::bundled(NormalizationPolicy::default())
    }
}

/// Per-corpus summary of a corpus file.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    pub corpus: String,
    pub pairs: usize,
    pub mean_hypotheses: f64,
    pub one_best_cer: Aggregate,
    pub one_best_pinyin_er: Aggregate,
    pub nbest: Aggregate,
    pub compositional: Aggregate,
    /// Records skipped for an empty reference.
    pub empty_references: usize,
}

/// Pair counts, mean list length, 1-best CER/PinyinER and both oracles per corpus tag.
pub fn stats(
    corpus: &[HypothesisSet],
    lex: &Lexicon,
    norm: &Normalizer,
    pinyin: PinyinScoringOptions,
) -> Vec<CorpusStats> {
    let mut groups: BTreeMap<&str, (CorpusStats, usize)> = BTreeMap::new();
    let scoring = PinyinScoring {
        lexicon: lex,
        mode: pinyin.mode,
        tone_sensitive: pinyin.tone_sensitive,
    };
    for h in corpus {
        let (entry, hyp_total) = groups.entry(h.corpus.as_str()).or_insert_with(|| {
            (
                CorpusStats {
                    corpus: h.corpus.clone(),
                    pairs: 0,
                    mean_hypotheses: 0.0,
                    one_best_cer: Aggregate::default(),
                    one_best_pinyin_er: Aggregate::default(),
                    nbest: Aggregate::default(),
                    compositional: Aggregate::default(),
                    empty_references: 0,
                },
                0,
            )
        });
        entry.pairs += 1;
        *hyp_total += h.hypotheses.len();
        match scoring::score_utterance(h, h.one_best(), norm, Some(scoring), true) {
            Ok(score) => {
                entry.one_best_cer.push(&score.cer);
                if let Some(p) = &score.pinyin {
                    entry.one_best_pinyin_er.push(p);
                }
                if let Some(o) = &score.oracle {
                    entry.nbest.push(&o.nbest);
                    entry.compositional.push(&o.compositional);
                }
            }
            Err(_) => entry.empty_references += 1,
        }
    }
    groups
        .into_values()
        .map(|(mut s, hyp_total)| {
            s.mean_hypotheses = hyp_total as f64 / s.pairs as f64;
            s
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PinyinScoringOptions {
    pub mode: crate::pinyin::Mode,
    pub tone_sensitive: bool,
}

impl Default for PinyinScoringOptions {
    fn default() -> Self {
        PinyinScoringOptions {
            mode: crate::pinyin::Mode::Contextual,
            tone_sensitive: true,
        }
    }
}
