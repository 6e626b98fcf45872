//! End-to-end correction runs: build prompts, query a model, parse replies
//! with fallback, score, and write an auditable run directory.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::{self, filter_by_length, DatasetError, HypothesisSet, Normalizer, PinyinScoringOptions};
use crate::llm::{complete_batch, EndpointConfig, Transport};
use crate::promptgen::{parse_response, CorrectionRecord, FailureReason, Method, PromptBuilder, TEMPLATE_VERSION};
use crate::report;
use crate::scoring::{
    corpus_aggregate, score_utterance, Averaging, EditStats, PinyinScoring, ScoreReport, UtteranceScore,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{0} needs a transport (endpoint or mock fixtures)")]
    MissingTransport(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("no records left to evaluate")]
    Empty,
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub method: Method,
    pub sample: Option<usize>,
    pub seed: u64,
    /// Length guard for references, hypotheses and model outputs (strict `<`).
    pub max_chars: usize,
    /// Abort when more than this fraction of prompts fail in transport.
    pub abort_ratio: f64,
    /// Baseline CERs in percent by corpus; the in-run 1-best CER when absent.
    pub baseline: Option<BTreeMap<String, f64>>,
    pub pinyin: PinyinScoringOptions,
    pub averaging: Averaging,
}

impl EvalConfig {
    pub fn new(method: Method) -> Self {
        EvalConfig {
            method,
            sample: None,
            seed: 0,
            max_chars: 100,
            abort_ratio: 0.5,
            baseline: None,
            pinyin: PinyinScoringOptions::default(),
            averaging: Averaging::Micro,
        }
    }
}

/// Audit record for one utterance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UtteranceResult {
    pub id: String,
    pub corpus: String,
    pub reference: String,
    pub prompt: Option<String>,
    pub raw_response: Option<String>,
    pub transport_error: Option<String>,
    pub correction: String,
    pub fallback_used: bool,
    pub failure_reason: FailureReason,
    pub cer: String,
    pub edits: EditStats,
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub method: String,
    pub analysis_only: bool,
    pub utterances: Vec<UtteranceResult>,
    pub scores: Vec<UtteranceScore>,
    pub report: ScoreReport,
    pub baseline_report: ScoreReport,
    pub input_records: usize,
    pub length_dropped: usize,
    pub empty_references: usize,
    pub short_lists: usize,
    pub transport_failures: usize,
    pub abort_ratio: f64,
}

impl EvalOutcome {
    pub fn prompted(&self) -> usize {
        self.utterances.iter().filter(|u| u.prompt.is_some()).count()
    }

    pub fn aborted(&self) -> bool {
        let prompted = self.prompted();
        prompted > 0 && self.transport_failures as f64 / prompted as f64 > self.abort_ratio
    }

    pub fn failures(&self, reason: FailureReason) -> usize {
        self.utterances.iter().filter(|u| u.failure_reason == reason).count()
    }

    /// Human-readable notes on dropped records and failures.
    pub fn notes(&self) -> Vec<String> {
        let mut notes = vec![format!(
            "method {}: {} input records, {} evaluated",
            self.method,
            self.input_records,
            self.utterances.len()
        )];
        if self.analysis_only {
            notes.push("analysis-only: prompts include ground-truth Pinyin".to_string());
        }
        for (count, what) in [
            (self.length_dropped, "dropped by the length filter"),
            (self.empty_references, "skipped for an empty reference"),
            (self.short_lists, "skipped for too few hypotheses"),
        ] {
            if count > 0 {
                notes.push(format!("{count} records {what}"));
            }
        }
        for reason in [
            FailureReason::Parse,
            FailureReason::Overlength,
            FailureReason::Transport,
        ] {
            let n = self.failures(reason);
            if n > 0 {
                notes.push(format!("{n} replies fell back to the 1-best ({reason:?})").to_lowercase());
            }
        }
        notes
    }
}

pub fn evaluate(
    records: Vec<HypothesisSet>,
    cfg: &EvalConfig,
    builder: &PromptBuilder<'_>,
    norm: &Normalizer,
    transport: Option<&dyn Transport>,
    endpoint: &EndpointConfig,
) -> Result<EvalOutcome, EvalError> {
    let input_records = records.len();
    let filtered = filter_by_length(records, cfg.max_chars);
    let (records, empty): (Vec<_>, Vec<_>) = filtered
        .kept
        .into_iter()
        .partition(|h| !norm.normalize(&h.transcription).is_empty());
    let spec = match &cfg.method {
        Method::Baseline => None,
        Method::Prompt(spec) => Some(spec),
    };
    let needed = spec.map_or(1, |s| s.required_hypotheses());
    let (records, short): (Vec<_>, Vec<_>) = records.into_iter().partition(|h| h.hypotheses.len() >= needed);
    let records = match cfg.sample {
        Some(n) => dataset::sample(&records, n, cfg.seed)?,
        None => records,
    };
    if records.is_empty() {
        return Err(EvalError::Empty);
    }

    let (prompts, corrections, transport_errors): (Vec<Option<String>>, Vec<CorrectionRecord>, Vec<Option<String>>) =
        match spec {
            None => {
                let corrections = records
                    .iter()
                    .map(|h| CorrectionRecord {
                        id: h.id.clone(),
                        raw_response: None,
                        correction: norm.normalize(h.one_best()),
                        fallback_used: false,
                        failure_reason: FailureReason::None,
                    })
                    .collect();
                (vec![None; records.len()], corrections, vec![None; records.len()])
            }
            Some(spec) => {
                let transport = transport.ok_or_else(|| EvalError::MissingTransport(spec.name.clone()))?;
                let prompts: Vec<String> = records
                    .iter()
                    .map(|h| builder.build(h, spec).expect("records were filtered for list length"))
                    .collect();
                let replies = complete_batch(transport, &prompts, endpoint);
                let mut corrections = Vec::with_capacity(records.len());
                let mut errors = Vec::with_capacity(records.len());
                for (h, reply) in records.iter().zip(replies) {
                    match reply {
                        Ok(raw) => {
                            corrections.push(parse_response(&raw, h, cfg.max_chars, norm));
                            errors.push(None);
                        }
                        Err(e) => {
                            corrections.push(CorrectionRecord::fallback(h, None, FailureReason::Transport, norm));
                            errors.push(Some(e.to_string()));
                        }
                    }
                }
                (prompts.into_iter().map(Some).collect(), corrections, errors)
            }
        };

    let pinyin = PinyinScoring {
        lexicon: builder.lexicon,
        mode: cfg.pinyin.mode,
        tone_sensitive: cfg.pinyin.tone_sensitive,
    };
    let mut scores = Vec::with_capacity(records.len());
    let mut baseline_scores = Vec::with_capacity(records.len());
    let mut utterances = Vec::with_capacity(records.len());
    for (((h, prompt), c), transport_error) in records.iter().zip(prompts).zip(corrections).zip(transport_errors) {
        let score = score_utterance(h, &c.correction, norm, Some(pinyin), true).expect("empty references were removed");
        baseline_scores
            .push(score_utterance(h, h.one_best(), norm, Some(pinyin), true).expect("empty references were removed"));
        utterances.push(UtteranceResult {
            id: h.id.clone(),
            corpus: h.corpus.clone(),
            reference: h.transcription.clone(),
            prompt,
            raw_response: c.raw_response,
            transport_error,
            correction: c.correction,
            fallback_used: c.fallback_used,
            failure_reason: c.failure_reason,
            cer: score.cer.rate().to_string(),
            edits: score.cer,
        });
        scores.push(score);
    }

    let baseline_report = corpus_aggregate(&baseline_scores, cfg.averaging);
    let baseline = cfg.baseline.clone().unwrap_or_else(|| baseline_report.cer_by_corpus());
    let report = corpus_aggregate(&scores, cfg.averaging).with_baseline(baseline);
    let transport_failures = utterances
        .iter()
        .filter(|u| u.failure_reason == FailureReason::Transport)
        .count();
    Ok(EvalOutcome {
        method: cfg.method.name().to_string(),
        analysis_only: spec.is_some_and(|s| s.analysis_only()),
        utterances,
        scores,
        report,
        baseline_report,
        input_records,
        length_dropped: filtered.dropped,
        empty_references: empty.len(),
        short_lists: short.len(),
        transport_failures,
        abort_ratio: cfg.abort_ratio,
    })
}

/// Reproducibility record written next to every run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command_line: Vec<String>,
    pub config: serde_json::Value,
    pub seed: u64,
    pub template_version: String,
    /// Input path → SHA-256 of its contents.
    pub inputs: BTreeMap<String, String>,
    /// Seconds since the Unix epoch; `SOURCE_DATE_EPOCH` wins when set.
    pub timestamp: u64,
}

impl RunManifest {
    pub fn new(command_line: Vec<String>, config: serde_json::Value, seed: u64) -> Self {
        RunManifest {
            tool: "hyposcore".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command_line,
            config,
            seed,
            template_version: TEMPLATE_VERSION.to_string(),
            inputs: BTreeMap::new(),
            timestamp: run_timestamp(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> io::Result<()> {
        let bytes = fs::read(path)?;
        self.inputs
            .insert(path.display().to_string(), hex::encode(Sha256::digest(&bytes)));
        Ok(())
    }
}

pub fn run_timestamp() -> u64 {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or_else(|| {
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map_or(0, |d| d.as_secs())
        })
}

pub const SCORES_FILE: &str = "scores.tsv";
pub const BASELINE_FILE: &str = "baseline.tsv";
pub const UTTERANCES_FILE: &str = "utterances.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Write `scores.tsv`, `baseline.tsv`, `utterances.jsonl` and `manifest.json` into `dir`.
pub fn write_run(dir: &Path, outcome: &EvalOutcome, manifest: &RunManifest) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(SCORES_FILE), report::summary_tsv(&outcome.report))?;
    fs::write(dir.join(BASELINE_FILE), report::summary_tsv(&outcome.baseline_report))?;
    let mut audit = io::BufWriter::new(fs::File::create(dir.join(UTTERANCES_FILE))?);
    for u in &outcome.utterances {
        serde_json::to_writer(&mut audit, u)?;
        audit.write_all(b"\n")?;
    }
    audit.flush()?;
    let mut manifest_json = serde_json::to_string_pretty(manifest)?;
    manifest_json.push('\n');
    fs::write(dir.join(MANIFEST_FILE), manifest_json)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::MockTransport;
    use crate::pinyin::Lexicon;
    use crate::promptgen::find_method;

    fn records() -> Vec<HypothesisSet> {
        dataset::parse_corpus_str(dataset::SAMPLE_JSONL).unwrap()
    }

    fn endpoint() -> EndpointConfig {
        EndpointConfig {
            max_retries: 0,
            initial_backoff: std::time::Duration::ZERO,
            ..EndpointConfig::default()
        }
    }

    #[test]
    fn baseline_needs_no_transport() {
        let builder = PromptBuilder::new(Lexicon::bundled());
        let out = evaluate(
            records(),
            &EvalConfig::new(Method::Baseline),
            &builder,
            &Normalizer::default(),
            None,
            &endpoint(),
        )
        .unwrap();
        assert_eq!(out.utterances.len(), 12);
        for s in out.report.rows() {
            assert_eq!(out.report.cerr_for(s), Some(0.0));
        }
    }

    #[test]
    fn prompt_without_transport_fails() {
        let builder = PromptBuilder::new(Lexicon::bundled());
        let cfg = EvalConfig::new(find_method("Prompt1").unwrap());
        assert!(matches!(
            evaluate(records(), &cfg, &builder, &Normalizer::default(), None, &endpoint()),
            Err(EvalError::MissingTransport(_))
        ));
    }

    #[test]
    fn transport_failures_abort() {
        let builder = PromptBuilder::new(Lexicon::bundled());
        let cfg = EvalConfig::new(find_method("Prompt5").unwrap());
        let mock = MockTransport::new().fail_first(usize::MAX);
        let out = evaluate(
            records(),
            &cfg,
            &builder,
            &Normalizer::default(),
            Some(&mock),
            &endpoint(),
        )
        .unwrap();
        assert_eq!(out.transport_failures, 12);
        assert!(out.aborted());
        assert!(out
            .utterances
            .iter()
            .all(|u| u.fallback_used && u.transport_error.is_some()));
    }

    #[test]
    fn length_filter_and_sampling() {
        let builder = PromptBuilder::new(Lexicon::bundled());
        let mut cfg = EvalConfig::new(Method::Baseline);
        cfg.max_chars = 10;
        let out = evaluate(records(), &cfg, &builder, &Normalizer::default(), None, &endpoint()).unwrap();
        assert!(out.length_dropped > 0);
        assert_eq!(out.utterances.len() + out.length_dropped, 12);

        let mut cfg = EvalConfig::new(Method::Baseline);
        cfg.sample = Some(4);
        cfg.seed = 9;
        let a = evaluate(records(), &cfg, &builder, &Normalizer::default(), None, &endpoint()).unwrap();
        assert_eq!(a.utterances.len(), 4);
        cfg.sample = Some(13);
        assert!(matches!(
            evaluate(records(), &cfg, &builder, &Normalizer::default(), None, &endpoint()),
            Err(EvalError::Dataset(DatasetError::SampleTooLarge { .. }))
        ));
    }

    #[test]
    fn writes_run_directory() {
        let builder = PromptBuilder::new(Lexicon::bundled());
        let out = evaluate(
            records(),
            &EvalConfig::new(Method::Baseline),
            &builder,
            &Normalizer::default(),
            None,
            &endpoint(),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest = RunManifest::new(vec!["x".into()], serde_json::json!({}), 0);
        write_run(dir.path(), &out, &manifest).unwrap();
        for f in [SCORES_FILE, BASELINE_FILE, UTTERANCES_FILE, MANIFEST_FILE] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let audit = fs::read_to_string(dir.path().join(UTTERANCES_FILE)).unwrap();
        assert_eq!(audit.lines().count(), 12);
    }
}
