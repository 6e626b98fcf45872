//! Python bindings for the `hyposcore` crate.

use hyposcore::dataset::{self, DatasetError, HypothesisSet as CoreSet, Normalizer};
use hyposcore::pinyin::{self, parse_syllable as core_parse, render_tokens, Lexicon, Mode, ToneMode};
use hyposcore::promptgen::{self, Method, PromptBuilder, PromptSpec};
use hyposcore::report;
use hyposcore::scoring::{self, Averaging, PinyinScoring};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn mode(name: &str) -> PyResult<Mode> {
    name.parse().map_err(PyValueError::new_err)
}

fn normalizer() -> &'static Normalizer {
    static NORM: std::sync::OnceLock<Normalizer> = std::sync::OnceLock::new();
    NORM.get_or_init(Normalizer::default)
}

/// Substitution, insertion and deletion counts against a reference.
#[pyclass(frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
struct EditStats {
    substitutions: u64,
    insertions: u64,
    deletions: u64,
    ref_len: u64,
}

impl From<scoring::EditStats> for EditStats {
    fn from(s: scoring::EditStats) -> Self {
        EditStats {
            substitutions: s.substitutions,
            insertions: s.insertions,
            deletions: s.deletions,
            ref_len: s.ref_len,
        }
    }
}

impl EditStats {
    fn core(&self) -> scoring::EditStats {
        scoring::EditStats {
            substitutions: self.substitutions,
            insertions: self.insertions,
            deletions: self.deletions,
            ref_len: self.ref_len,
        }
    }
}

#[pymethods]
impl EditStats {
    #[getter]
    fn distance(&self) -> u64 {
        self.core().distance()
    }

    /// Error rate in percent, `None` for an empty reference.
    #[getter]
    fn percent(&self) -> Option<f64> {
        self.core().rate().percent()
    }

    /// Two-decimal rendering as printed in reports.
    fn __str__(&self) -> String {
        self.core().rate().to_string()
    }

    fn __repr__(&self) -> String {
        format!(
            "EditStats(substitutions={}, insertions={}, deletions={}, ref_len={})",
            self.substitutions, self.insertions, self.deletions, self.ref_len
        )
    }
}

/// One utterance: ranked hypotheses plus the reference transcription.
#[pyclass(get_all, set_all)]
struct HypothesisSet {
    id: String,
    corpus: String,
    hypotheses: Vec<String>,
    transcription: String,
}

impl HypothesisSet {
    fn core(&self) -> CoreSet {
        CoreSet::new(
            self.id.clone(),
            self.corpus.clone(),
            self.hypotheses.clone(),
            self.transcription.clone(),
        )
    }

    fn wrap(h: CoreSet) -> Self {
        HypothesisSet {
            id: h.id,
            corpus: h.corpus,
            hypotheses: h.hypotheses,
            transcription: h.transcription,
        }
    }
}

#[pymethods]
impl HypothesisSet {
    #[new]
    fn new(id: String, corpus: String, hypotheses: Vec<String>, transcription: String) -> Self {
        HypothesisSet {
            id,
            corpus,
            hypotheses,
            transcription,
        }
    }

    fn one_best(&self) -> PyResult<String> {
        self.hypotheses
            .first()
            .cloned()
            .ok_or_else(|| PyValueError::new_err("no hypotheses"))
    }

    /// Canonical JSON line, as written by the corpus writer.
    fn to_json(&self) -> String {
        self.core().to_json_line()
    }

    fn __repr__(&self) -> String {
        format!(
            "HypothesisSet(id={:?}, corpus={:?}, {} hypotheses)",
            self.id,
            self.corpus,
            self.hypotheses.len()
        )
    }
}

/// Pinyin tokens of `text`; non-Han characters come back unchanged.
#[pyfunction]
#[pyo3(signature = (text, mode = "contextual"))]
fn transliterate(text: &str, mode: &str) -> PyResult<Vec<String>> {
    let m = self::mode(mode)?;
    Ok(pinyin::transliterate(text, Lexicon::bundled(), m)
        .iter()
        .map(ToString::to_string)
        .collect())
}

/// Space-separated Pinyin line, as shown in prompts.
#[pyfunction]
#[pyo3(signature = (text, mode = "contextual"))]
fn pinyin_line(text: &str, mode: &str) -> PyResult<String> {
    let m = self::mode(mode)?;
    Ok(render_tokens(&pinyin::transliterate(text, Lexicon::bundled(), m)))
}

/// `(initial or None, final, tone)` of a tone-numbered syllable.
#[pyfunction]
#[pyo3(signature = (text, strict = false))]
fn parse_syllable(text: &str, strict: bool) -> PyResult<(Option<String>, String, u8)> {
    let tone_mode = if strict { ToneMode::Strict } else { ToneMode::Lenient };
    let s = core_parse(text, tone_mode).map_err(value_err)?;
    Ok((
        s.initial.map(|i| i.as_str().to_string()),
        s.final_.as_str().to_string(),
        s.tone.get(),
    ))
}

/// Apply the default text normalization.
#[pyfunction]
fn normalize(text: &str) -> String {
    normalizer().normalize(text)
}

#[pyfunction]
fn cer(hyp: &str, reference: &str) -> PyResult<EditStats> {
    scoring::cer(hyp, reference, normalizer())
        .map(Into::into)
        .map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (hyp, reference, mode = "contextual", tone_sensitive = true))]
fn pinyin_er(hyp: &str, reference: &str, mode: &str, tone_sensitive: bool) -> PyResult<EditStats> {
    scoring::pinyin_er(
        hyp,
        reference,
        Lexicon::bundled(),
        self::mode(mode)?,
        tone_sensitive,
        normalizer(),
    )
    .map(Into::into)
    .map_err(value_err)
}

/// Relative CER reduction in percent; positive means improvement.
#[pyfunction]
fn cerr(baseline: f64, method: f64) -> PyResult<f64> {
    scoring::cerr(baseline, method).map_err(value_err)
}

/// N-best and compositional oracles as a dict.
#[pyfunction]
fn oracles<'py>(py: Python<'py>, record: PyRef<'_, HypothesisSet>) -> PyResult<Bound<'py, PyDict>> {
    let o = scoring::oracles(&record.core(), normalizer()).map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("nbest_index", o.nbest_index)?;
    d.set_item("nbest", EditStats::from(o.nbest))?;
    d.set_item("compositional", EditStats::from(o.compositional))?;
    Ok(d)
}

#[pyfunction]
fn load_corpus(path: &str) -> PyResult<Vec<HypothesisSet>> {
    match dataset::load_corpus(path) {
        Ok(records) => Ok(records.into_iter().map(HypothesisSet::wrap).collect()),
        Err(e @ DatasetError::Io { .. }) => Err(PyIOError::new_err(e.to_string())),
        Err(e) => Err(value_err(e)),
    }
}

/// The bundled demonstration corpus.
#[pyfunction]
fn sample_corpus() -> PyResult<Vec<HypothesisSet>> {
    let records = dataset::parse_corpus_str(dataset::SAMPLE_JSONL).map_err(value_err)?;
    Ok(records.into_iter().map(HypothesisSet::wrap).collect())
}

/// Per-corpus summary TSV of 1-best CER, PinyinER and oracles.
#[pyfunction]
#[pyo3(signature = (records, macro_average = false))]
fn summary_tsv(records: Vec<PyRef<'_, HypothesisSet>>, macro_average: bool) -> PyResult<String> {
    let pinyin = PinyinScoring {
        lexicon: Lexicon::bundled(),
        mode: Mode::Contextual,
        tone_sensitive: true,
    };
    let scores = records
        .iter()
        .map(|r| {
            let h = r.core();
            scoring::score_utterance(&h, h.one_best(), normalizer(), Some(pinyin), true)
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(value_err)?;
    let averaging = if macro_average {
        Averaging::Macro
    } else {
        Averaging::Micro
    };
    Ok(report::summary_tsv(&scoring::corpus_aggregate(&scores, averaging)))
}

#[pyfunction]
fn spec_names() -> Vec<String> {
    promptgen::spec_names()
}

fn prompt_spec(name: &str) -> PyResult<PromptSpec> {
    match promptgen::find_method(name).map_err(value_err)? {
        Method::Prompt(spec) => Ok(spec),
        Method::Baseline => Err(PyValueError::new_err("Baseline has no prompt")),
    }
}

/// Prompt text for `record` under a named configuration.
#[pyfunction]
fn build_prompt(record: PyRef<'_, HypothesisSet>, spec: &str) -> PyResult<String> {
    let spec = prompt_spec(spec)?;
    PromptBuilder::new(Lexicon::bundled())
        .build(&record.core(), &spec)
        .map_err(value_err)
}

/// `(prompt, response)` training pair for a Finetune configuration.
#[pyfunction]
fn build_finetune_pair(record: PyRef<'_, HypothesisSet>, spec: &str) -> PyResult<(String, String)> {
    let spec = prompt_spec(spec)?;
    promptgen::build_finetune_pair(&record.core(), &spec, Lexicon::bundled(), normalizer()).map_err(value_err)
}

/// Read a model reply; unusable replies fall back to the 1-best.
#[pyfunction]
#[pyo3(signature = (raw, record, max_chars = 100))]
fn parse_response<'py>(
    py: Python<'py>,
    raw: &str,
    record: PyRef<'_, HypothesisSet>,
    max_chars: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let r = promptgen::parse_response(raw, &record.core(), max_chars, normalizer());
    let d = PyDict::new(py);
    d.set_item("id", r.id)?;
    d.set_item("correction", r.correction)?;
    d.set_item("fallback_used", r.fallback_used)?;
    d.set_item("failure_reason", reason_name(r.failure_reason))?;
    Ok(d)
}

fn reason_name(reason: promptgen::FailureReason) -> &'static str {
    match reason {
        promptgen::FailureReason::None => "none",
        promptgen::FailureReason::Parse => "parse",
        promptgen::FailureReason::Overlength => "overlength",
        promptgen::FailureReason::Transport => "transport",
    }
}

#[pymodule]
fn hyposcore_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<EditStats>()?;
    m.add_class::<HypothesisSet>()?;
    m.add_function(wrap_pyfunction!(transliterate, m)?)?;
    m.add_function(wrap_pyfunction!(pinyin_line, m)?)?;
    m.add_function(wrap_pyfunction!(parse_syllable, m)?)?;
    m.add_function(wrap_pyfunction!(normalize, m)?)?;
    m.add_function(wrap_pyfunction!(cer, m)?)?;
    m.add_function(wrap_pyfunction!(pinyin_er, m)?)?;
    m.add_function(wrap_pyfunction!(cerr, m)?)?;
    m.add_function(wrap_pyfunction!(oracles, m)?)?;
    m.add_function(wrap_pyfunction!(load_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(sample_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(summary_tsv, m)?)?;
    m.add_function(wrap_pyfunction!(spec_names, m)?)?;
    m.add_function(wrap_pyfunction!(build_prompt, m)?)?;
    m.add_function(wrap_pyfunction!(build_finetune_pair, m)?)?;
    m.add_function(wrap_pyfunction!(parse_response, m)?)?;
    Ok(())
}
