//! Edit-distance metrics and oracle error rates.
//!
//! Rates are kept as exact `(errors, total)` integer pairs and only turned
//! into percentages when reported.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::dataset::{HypothesisSet, Normalizer};
use crate::pinyin::{Lexicon, Mode};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScoreError {
    #[error("reference is empty after normalization")]
    EmptyReference,
    #[error("hypothesis list is empty")]
    EmptyHypothesisList,
    #[error("baseline error rate is zero")]
    ZeroBaseline,
}

/// An exact error rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Rate {
    pub errors: u64,
    pub total: u64,
}

impl Rate {
    pub fn new(errors: u64, total: u64) -> Self {
        Rate { errors, total }
    }

    pub fn fraction(&self) -> Option<f64> {
        (self.total > 0).then(|| self.errors as f64 / self.total as f64)
    }

    pub fn percent(&self) -> Option<f64> {
        self.fraction().map(|f| f * 100.0)
    }

    /// Percentage in hundredths, rounded half up in integer arithmetic.
    pub fn hundredths(&self) -> Option<u64> {
        (self.total > 0).then(|| (20_000 * self.errors + self.total) / (2 * self.total))
    }
}

impl fmt::Display for Rate {
    /// Two-decimal percentage, or `-` when the total is zero.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.hundredths() {
            Some(h) => write!(f, "{}.{:02}", h / 100, h % 100),
            None => f.write_str("-"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct EditStats {
    pub substitutions: u64,
    pub insertions: u64,
    pub deletions: u64,
    pub ref_len: u64,
}

impl EditStats {
    pub fn distance(&self) -> u64 {
        self.substitutions + self.insertions + self.deletions
    }

    pub fn rate(&self) -> Rate {
        Rate::new(self.distance(), self.ref_len)
    }
}

impl std::ops::AddAssign for EditStats {
    fn add_assign(&mut self, rhs: Self) {
        self.substitutions += rhs.substitutions;
        self.insertions += rhs.insertions;
        self.deletions += rhs.deletions;
        self.ref_len += rhs.ref_len;
    }
}

/// Levenshtein alignment of `hyp` against `reference`.
///
/// Insertions are extra hypothesis tokens, deletions are reference tokens the
/// hypothesis misses. The backtrace prefers the diagonal, then deletion, then
/// insertion, so the operation counts are reproducible.
pub fn edit_distance<T: PartialEq>(hyp: &[T], reference: &[T]) -> EditStats {
    edit_distance_by(hyp, reference, |a, b| a == b)
}

pub fn edit_distance_by<T>(hyp: &[T], reference: &[T], eq: impl Fn(&T, &T) -> bool) -> EditStats {
    let (n, m) = (hyp.len(), reference.len());
    let width = m + 1;
    let mut d = vec![0u32; (n + 1) * width];
    for j in 0..=m {
        d[j] = j as u32;
    }
    for i in 1..=n {
        d[i * width] = i as u32;
        for j in 1..=m {
            let sub = d[(i - 1) * width + j - 1] + u32::from(!eq(&hyp[i - 1], &reference[j - 1]));
            let del = d[i * width + j - 1] + 1;
            let ins = d[(i - 1) * width + j] + 1;
            d[i * width + j] = sub.min(del).min(ins);
        }
    }

    let mut stats = EditStats {
        ref_len: m as u64,
        ..EditStats::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * width + j];
        if i > 0 && j > 0 {
            let same = eq(&hyp[i - 1], &reference[j - 1]);
            if here == d[(i - 1) * width + j - 1] + u32::from(!same) {
                if !same {
                    stats.substitutions += 1;
                }
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if j > 0 && here == d[i * width + j - 1] + 1 {
            stats.deletions += 1;
            j -= 1;
        } else {
            stats.insertions += 1;
            i -= 1;
        }
    }
    stats
}

/// Character error statistics over normalized text.
pub fn cer(hyp: &str, reference: &str, norm: &Normalizer) -> Result<EditStats, ScoreError> {
    let reference: Vec<char> = norm.normalize(reference).chars().collect();
    if reference.is_empty() {
        return Err(ScoreError::EmptyReference);
    }
    let hyp: Vec<char> = norm.normalize(hyp).chars().collect();
    Ok(edit_distance(&hyp, &reference))
}

/// Pinyin token error statistics. Syllables compare with or without tone;
/// literal tokens compare by character.
pub fn pinyin_er(
    hyp: &str,
    reference: &str,
    lex: &Lexicon,
    mode: Mode,
    tone_sensitive: bool,
    norm: &Normalizer,
) -> Result<EditStats, ScoreError> {
    let reference = norm.normalize(reference);
    if reference.is_empty() {
        return Err(ScoreError::EmptyReference);
    }
    let reference = lex.transliterate(&reference, mode).tokens;
    let hyp = lex.transliterate(&norm.normalize(hyp), mode).tokens;
    Ok(edit_distance_by(&hyp, &reference, |a, b| a.matches(b, tone_sensitive)))
}

/// Relative error reduction in percent: `100 * (baseline - method) / baseline`.
/// Positive means the method improved on the baseline; tables print the negation.
pub fn cerr(baseline: f64, method: f64) -> Result<f64, ScoreError> {
    if baseline <= 0.0 {
        return Err(ScoreError::ZeroBaseline);
    }
    Ok(100.0 * (baseline - method) / baseline)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct OracleResult {
    pub nbest_index: usize,
    pub nbest: EditStats,
    pub compositional: EditStats,
}

fn normalized_reference(h: &HypothesisSet, norm: &Normalizer) -> Result<Vec<char>, ScoreError> {
    if h.hypotheses.is_empty() {
        return Err(ScoreError::EmptyHypothesisList);
    }
    let reference: Vec<char> = norm.normalize(&h.transcription).chars().collect();
    if reference.is_empty() {
        return Err(ScoreError::EmptyReference);
    }
    Ok(reference)
}

/// Best single candidate. Ties go to the earliest (highest-ranked) hypothesis.
pub fn oracle_nbest(h: &HypothesisSet, norm: &Normalizer) -> Result<(usize, EditStats), ScoreError> {
    let reference = normalized_reference(h, norm)?;
    let mut best: Option<(usize, EditStats)> = None;
    for (idx, hyp) in h.hypotheses.iter().enumerate() {
        let hyp: Vec<char> = norm.normalize(hyp).chars().collect();
        let stats = edit_distance(&hyp, &reference);
        if best.is_none_or(|(_, b)| stats.distance() < b.distance()) {
            best = Some((idx, stats));
        }
    }
    Ok(best.expect("non-empty hypothesis list"))
}

/// Lowest error reachable by composing an output from characters found
/// anywhere in the list.
///
/// Reference characters present in the pool can all be matched, and each
/// absent one costs exactly one edit, so the minimum is the count of
/// reference characters missing from the pool. Order does not constrain the
/// composition.
pub fn oracle_compositional(h: &HypothesisSet, norm: &Normalizer) -> Result<EditStats, ScoreError> {
    let reference = normalized_reference(h, norm)?;
    let pool: std::collections::HashSet<char> = h
        .hypotheses
        .iter()
        .flat_map(|hyp| norm.normalize(hyp).chars().collect::<Vec<_>>())
        .collect();
    let missing = reference.iter().filter(|c| !pool.contains(c)).count() as u64;
    let mut stats = EditStats {
        ref_len: reference.len() as u64,
        ..EditStats::default()
    };
    // with an empty pool the missing characters can only be dropped
    if pool.is_empty() {
        stats.deletions = missing;
    } else {
        stats.substitutions = missing;
    }
    Ok(stats)
}

pub fn oracles(h: &HypothesisSet, norm: &Normalizer) -> Result<OracleResult, ScoreError> {
    let (nbest_index, nbest) = oracle_nbest(h, norm)?;
    let compositional = oracle_compositional(h, norm)?;
    Ok(OracleResult {
        nbest_index,
        nbest,
        compositional,
    })
}

/// Pinyin settings for scoring.
#[derive(Debug, Clone, Copy)]
pub struct PinyinScoring<'a> {
    pub lexicon: &'a Lexicon,
    pub mode: Mode,
    pub tone_sensitive: bool,
}

/// Scores for one utterance. `cer` and `pinyin` refer to whichever output
/// was scored (the 1-best or a correction).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UtteranceScore {
    pub id: String,
    pub corpus: String,
    pub cer: EditStats,
    pub pinyin: Option<EditStats>,
    pub oracle: Option<OracleResult>,
}

/// Score `output` against the reference of `h`, plus oracles when requested.
pub fn score_utterance(
    h: &HypothesisSet,
    output: &str,
    norm: &Normalizer,
    pinyin: Option<PinyinScoring<'_>>,
    with_oracles: bool,
) -> Result<UtteranceScore, ScoreError> {
    let cer = cer(output, &h.transcription, norm)?;
    let pinyin = pinyin
        .map(|p| pinyin_er(output, &h.transcription, p.lexicon, p.mode, p.tone_sensitive, norm))
        .transpose()?;
    let oracle = with_oracles.then(|| oracles(h, norm)).transpose()?;
    Ok(UtteranceScore {
        id: h.id.clone(),
        corpus: h.corpus.clone(),
        cer,
        pinyin,
        oracle,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    /// Total edits over total reference length.
    #[default]
    Micro,
    /// Mean of per-utterance rates.
    Macro,
}

/// Running sums for one metric.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Aggregate {
    pub errors: u64,
    pub total: u64,
    pub count: usize,
    rate_sum: f64,
}

impl Aggregate {
    pub fn push(&mut self, stats: &EditStats) {
        self.errors += stats.distance();
        self.total += stats.ref_len;
        self.count += 1;
        self.rate_sum += stats.rate().fraction().unwrap_or(0.0);
    }

    pub fn micro(&self) -> Rate {
        Rate::new(self.errors, self.total)
    }

    pub fn percent(&self, averaging: Averaging) -> Option<f64> {
        match averaging {
            Averaging::Micro => self.micro().percent(),
            Averaging::Macro => (self.count > 0).then(|| 100.0 * self.rate_sum / self.count as f64),
        }
    }

    /// Two-decimal rendering; micro rates round exactly.
    pub fn format(&self, averaging: Averaging) -> String {
        match averaging {
            Averaging::Micro => self.micro().to_string(),
            Averaging::Macro => self
                .percent(averaging)
                .map_or_else(|| "-".to_string(), |p| format!("{p:.2}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorpusSummary {
    pub corpus: String,
    pub utterances: usize,
    pub cer: Aggregate,
    pub pinyin: Option<Aggregate>,
    pub nbest: Option<Aggregate>,
    pub compositional: Option<Aggregate>,
}

impl CorpusSummary {
    fn push(&mut self, u: &UtteranceScore) {
        self.utterances += 1;
        self.cer.push(&u.cer);
        if let Some(p) = &u.pinyin {
            self.pinyin.get_or_insert_with(Aggregate::default).push(p);
        }
        if let Some(o) = &u.oracle {
            self.nbest.get_or_insert_with(Aggregate::default).push(&o.nbest);
            self.compositional
                .get_or_insert_with(Aggregate::default)
                .push(&o.compositional);
        }
    }
}

/// Per-corpus and overall summaries, optionally compared against baseline
/// CERs (in percent, keyed by corpus tag).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreReport {
    pub averaging: Averaging,
    pub groups: Vec<CorpusSummary>,
    pub overall: CorpusSummary,
    pub baseline: BTreeMap<String, f64>,
}

/// Tag used for the all-corpora row.
pub const OVERALL: &str = "ALL";

impl ScoreReport {
    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn with_baseline(mut self, baseline: BTreeMap<String, f64>) -> Self {
        self.baseline = baseline;
        self
    }

    /// CER in percent for each group and the overall row.
    pub fn cer_by_corpus(&self) -> BTreeMap<String, f64> {
        self.rows()
            .filter_map(|g| g.cer.percent(self.averaging).map(|p| (g.corpus.clone(), p)))
            .collect()
    }

    /// Groups followed by the overall row.
    pub fn rows(&self) -> impl Iterator<Item = &CorpusSummary> {
        self.groups
            .iter()
            .chain(std::iter::once(&self.overall).filter(|o| o.utterances > 0))
    }

    /// Error reduction of `summary` against the baseline for its corpus.
    pub fn cerr_for(&self, summary: &CorpusSummary) -> Option<f64> {
        let base = *self.baseline.get(&summary.corpus)?;
        let method = summary.cer.percent(self.averaging)?;
        cerr(base, method).ok()
    }
}

/// Fold per-utterance scores into per-corpus summaries (sorted by tag).
pub fn corpus_aggregate(per_utt: &[UtteranceScore], averaging: Averaging) -> ScoreReport {
    let mut groups: BTreeMap<&str, CorpusSummary> = BTreeMap::new();
    let mut overall = CorpusSummary {
        corpus: OVERALL.to_string(),
        ..CorpusSummary::default()
    };
    for u in per_utt {
        groups
            .entry(u.corpus.as_str())
            .or_insert_with(|| CorpusSummary {
                corpus: u.corpus.clone(),
                ..CorpusSummary::default()
            })
            .push(u);
        overall.push(u);
    }
    ScoreReport {
        averaging,
        groups: groups.into_values().collect(),
        overall,
        baseline: BTreeMap::new(),
    }
}
