//! Pinyin-regularized prompts for direct prompting and fine-tuning, and
//! parsing of model replies.
//!
//! Templates are plain text with three slot lines, `{HYPS}`, `{PINYIN}` and
//! `{GT_PINYIN}`, each replaced by the corresponding block of marked lines.
//! A template line starting with `{?SLOT}` is kept (without the marker) only
//! when that slot's block is non-empty.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{HypothesisSet, Normalizer};
use crate::pinyin::{render_tokens, Lexicon, Mode};

pub const TEMPLATE_VERSION: &str = "v1";
pub const DIRECT_TEMPLATE: &str = include_str!("../templates/direct_en.v1.txt");
pub const FINETUNE_TEMPLATE: &str = include_str!("../templates/finetune_zh.v1.txt");

/// Line prefixes used in direct prompts.
pub const DIRECT_MARKERS: Markers = Markers {
    text: "Text: ",
    pinyin: "Pinyin: ",
    ground_truth: "Ground-truth Pinyin: ",
};

/// Line prefixes used in fine-tuning prompts.
pub const FINETUNE_MARKERS: Markers = Markers {
    text: "文本：",
    pinyin: "拼音：",
    ground_truth: "参考拼音：",
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Markers {
    pub text: &'static str,
    pub pinyin: &'static str,
    pub ground_truth: &'static str,
}

impl Markers {
    pub fn for_style(style: PromptStyle) -> Markers {
        match style {
            PromptStyle::Direct => DIRECT_MARKERS,
            PromptStyle::Finetune => FINETUNE_MARKERS,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("{id}: spec needs {needed} hypotheses, record has {available}")]
    NotEnoughHypotheses {
        id: String,
        needed: usize,
        available: usize,
    },
    #[error("{0}: ground-truth Pinyin requested but the reference is empty")]
    MissingReference(String),
    #[error("invalid prompt spec: {0}")]
    InvalidSpec(String),
    #[error("spec {spec} is {actual:?}, expected {expected:?}")]
    WrongStyle {
        spec: String,
        expected: PromptStyle,
        actual: PromptStyle,
    },
    #[error("unknown spec {name:?}; valid names: {}", valid.join(", "))]
    UnknownSpec { name: String, valid: Vec<String> },
    #[error("template {path}: {message}")]
    Template { path: String, message: String },
}

/// How many lines of one kind a prompt carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct LineCount {
    pub count: usize,
    /// Repeat the first candidate `count` times instead of taking the top `count`.
    pub repeat_first: bool,
}

impl LineCount {
    pub const NONE: LineCount = LineCount {
        count: 0,
        repeat_first: false,
    };

    pub const fn top(count: usize) -> LineCount {
        LineCount {
            count,
            repeat_first: false,
        }
    }

    pub fn repeated(count: usize) -> Result<LineCount, PromptError> {
        if count < 2 {
            return Err(PromptError::InvalidSpec(format!(
                "repeat count must be at least 2, got {count}"
            )));
        }
        Ok(LineCount {
            count,
            repeat_first: true,
        })
    }

    /// Distinct hypotheses consumed.
    fn distinct_needed(&self) -> usize {
        match (self.count, self.repeat_first) {
            (0, _) => 0,
            (_, true) => 1,
            (n, false) => n,
        }
    }

    /// Indices of the hypotheses to render, in order.
    fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.count).map(move |i| if self.repeat_first { 0 } else { i })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptStyle {
    Direct,
    Finetune,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PromptSpec {
    pub name: String,
    pub text: LineCount,
    pub pinyin_transcribed: LineCount,
    pub pinyin_ground_truth: LineCount,
    pub style: PromptStyle,
}

impl PromptSpec {
    pub fn new(
        name: impl Into<String>,
        style: PromptStyle,
        text: LineCount,
        pinyin_transcribed: LineCount,
        pinyin_ground_truth: LineCount,
    ) -> Result<PromptSpec, PromptError> {
        if text.count == 0 {
            return Err(PromptError::InvalidSpec("at least one text line is required".into()));
        }
        if style == PromptStyle::Finetune && pinyin_ground_truth.count > 0 {
            return Err(PromptError::InvalidSpec(
                "fine-tuning prompts cannot carry ground-truth Pinyin".into(),
            ));
        }
        if pinyin_ground_truth.count > 1 && !pinyin_ground_truth.repeat_first {
            return Err(PromptError::InvalidSpec(
                "there is one reference, so more than one ground-truth line must repeat it".into(),
            ));
        }
        Ok(PromptSpec {
            name: name.into(),
            text,
            pinyin_transcribed,
            pinyin_ground_truth,
            style,
        })
    }

    /// Ground-truth Pinyin is unavailable in practice; such prompts are for analysis only.
    pub fn analysis_only(&self) -> bool {
        self.pinyin_ground_truth.count > 0
    }

    pub fn required_hypotheses(&self) -> usize {
        self.text
            .distinct_needed()
            .max(self.pinyin_transcribed.distinct_needed())
    }
}

/// A row of the method tables: either the uncorrected 1-best or a prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Method {
    Baseline,
    Prompt(PromptSpec),
}

impl Method {
    pub fn name(&self) -> &str {
        match self {
            Method::Baseline => "Baseline",
            Method::Prompt(spec) => &spec.name,
        }
    }
}

fn spec(name: &str, style: PromptStyle, text: LineCount, transcribed: LineCount, gt: LineCount) -> PromptSpec {
    PromptSpec::new(name, style, text, transcribed, gt).expect("built-in specs are valid")
}

fn rep(n: usize) -> LineCount {
    LineCount::repeated(n).expect("built-in repeat counts are valid")
}

/// The direct-prompting configurations: Baseline and Prompt1..Prompt9.
pub fn table3_specs() -> Vec<Method> {
    use LineCount as L;
    let d = PromptStyle::Direct;
    let none = L::NONE;
    vec![
        Method::Baseline,
        Method::Prompt(spec("Prompt1", d, L::top(5), none, none)),
        Method::Prompt(spec("Prompt2", d, L::top(5), L::top(5), none)),
        Method::Prompt(spec("Prompt3", d, L::top(5), none, L::top(1))),
        Method::Prompt(spec("Prompt4", d, L::top(5), none, rep(5))),
        Method::Prompt(spec("Prompt5", d, L::top(1), none, none)),
        Method::Prompt(spec("Prompt6", d, L::top(1), L::top(1), none)),
        Method::Prompt(spec("Prompt7", d, L::top(1), none, L::top(1))),
        Method::Prompt(spec("Prompt8", d, rep(2), none, none)),
        Method::Prompt(spec("Prompt9", d, L::top(1), rep(2), none)),
    ]
}

/// The fine-tuning configurations Finetune1..Finetune4.
pub fn table4_specs() -> Vec<PromptSpec> {
    use LineCount as L;
    let f = PromptStyle::Finetune;
    vec![
        spec("Finetune1", f, L::top(5), L::NONE, L::NONE),
        spec("Finetune2", f, L::top(5), L::top(5), L::NONE),
        spec("Finetune3", f, L::top(1), L::NONE, L::NONE),
        spec("Finetune4", f, L::top(1), L::top(1), L::NONE),
    ]
}

pub fn spec_names() -> Vec<String> {
    table3_specs()
        .iter()
        .map(|m| m.name().to_string())
        .chain(table4_specs().into_iter().map(|s| s.name))
        .collect()
}

/// Look up any named configuration from either table.
pub fn find_method(name: &str) -> Result<Method, PromptError> {
    table3_specs()
        .into_iter()
        .chain(table4_specs().into_iter().map(Method::Prompt))
        .find(|m| m.name() == name)
        .ok_or_else(|| PromptError::UnknownSpec {
            name: name.to_string(),
            valid: spec_names(),
        })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates {
    pub direct: String,
    pub finetune: String,
}

impl Default for Templates {
    fn default() -> Self {
        Templates {
            direct: DIRECT_TEMPLATE.to_string(),
            finetune: FINETUNE_TEMPLATE.to_string(),
        }
    }
}

impl Templates {
    /// Replace either template with the contents of a file.
    pub fn with_overrides(direct: Option<&Path>, finetune: Option<&Path>) -> Result<Templates, PromptError> {
        let read = |p: &Path| {
            let text = fs::read_to_string(p).map_err(|e| PromptError::Template {
                path: p.display().to_string(),
                message: e.to_string(),
            })?;
            if !text.contains("{HYPS}") {
                return Err(PromptError::Template {
                    path: p.display().to_string(),
                    message: "missing {HYPS} slot".to_string(),
                });
            }
            Ok(text)
        };
        let mut t = Templates::default();
        if let Some(p) = direct {
            t.direct = read(p)?;
        }
        if let Some(p) = finetune {
            t.finetune = read(p)?;
        }
        Ok(t)
    }
}

const SLOTS: [&str; 3] = ["HYPS", "PINYIN", "GT_PINYIN"];

fn fill_template(template: &str, blocks: [&[String]; 3]) -> String {
    let mut out: Vec<&str> = Vec::new();
    'lines: for line in template.lines() {
        for (slot, block) in SLOTS.iter().zip(blocks) {
            if line.trim() == format!("{{{slot}}}") {
                out.extend(block.iter().map(String::as_str));
                continue 'lines;
            }
            if let Some(rest) = line.strip_prefix(&format!("{{?{slot}}}")) {
                if !block.is_empty() {
                    out.push(rest);
                }
                continue 'lines;
            }
        }
        out.push(line);
    }
    let mut text = out.join("\n");
    text.push('\n');
    text
}

/// Builds prompts from hypothesis sets with a fixed lexicon and templates.
#[derive(Debug, Clone)]
pub struct PromptBuilder<'a> {
    pub lexicon: &'a Lexicon,
    pub mode: Mode,
    pub templates: Templates,
}

impl<'a> PromptBuilder<'a> {
    pub fn new(lexicon: &'a Lexicon) -> Self {
        PromptBuilder {
            lexicon,
            mode: Mode::Contextual,
            templates: Templates::default(),
        }
    }

    fn pinyin_line(&self, text: &str) -> String {
        render_tokens(&self.lexicon.transliterate(text, self.mode).tokens)
    }

    fn blocks(&self, h: &HypothesisSet, spec: &PromptSpec) -> Result<[Vec<String>; 3], PromptError> {
        let needed = spec.required_hypotheses();
        if h.hypotheses.len() < needed {
            return Err(PromptError::NotEnoughHypotheses {
                id: h.id.clone(),
                needed,
                available: h.hypotheses.len(),
            });
        }
        if spec.pinyin_ground_truth.count > 0 && h.transcription.trim().is_empty() {
            return Err(PromptError::MissingReference(h.id.clone()));
        }
        let markers = Markers::for_style(spec.style);
        let text = spec
            .text
            .indices()
            .map(|i| format!("{}{}", markers.text, h.hypotheses[i]))
            .collect();
        let pinyin = spec
            .pinyin_transcribed
            .indices()
            .map(|i| format!("{}{}", markers.pinyin, self.pinyin_line(&h.hypotheses[i])))
            .collect();
        let gt_line = format!("{}{}", markers.ground_truth, self.pinyin_line(&h.transcription));
        let gt = spec.pinyin_ground_truth.indices().map(|_| gt_line.clone()).collect();
        Ok([text, pinyin, gt])
    }

    /// English prompt for direct use with a chat model.
    pub fn build_direct(&self, h: &HypothesisSet, spec: &PromptSpec) -> Result<String, PromptError> {
        expect_style(spec, PromptStyle::Direct)?;
        let [text, pinyin, gt] = self.blocks(h, spec)?;
        Ok(fill_template(&self.templates.direct, [&text, &pinyin, &gt]))
    }

    /// Chinese prompt plus the normalized reference as the training response.
    pub fn build_finetune(
        &self,
        h: &HypothesisSet,
        spec: &PromptSpec,
        norm: &Normalizer,
    ) -> Result<(String, String), PromptError> {
        expect_style(spec, PromptStyle::Finetune)?;
        let response = norm.normalize(&h.transcription);
        if response.is_empty() {
            return Err(PromptError::MissingReference(h.id.clone()));
        }
        let [text, pinyin, _] = self.blocks(h, spec)?;
        Ok((fill_template(&self.templates.finetune, [&text, &pinyin, &[]]), response))
    }

    pub fn build(&self, h: &HypothesisSet, spec: &PromptSpec) -> Result<String, PromptError> {
        match spec.style {
            PromptStyle::Direct => self.build_direct(h, spec),
            PromptStyle::Finetune => {
                let [text, pinyin, _] = self.blocks(h, spec)?;
                Ok(fill_template(&self.templates.finetune, [&text, &pinyin, &[]]))
            }
        }
    }
}

fn expect_style(spec: &PromptSpec, expected: PromptStyle) -> Result<(), PromptError> {
    if spec.style != expected {
        return Err(PromptError::WrongStyle {
            spec: spec.name.clone(),
            expected,
            actual: spec.style,
        });
    }
    Ok(())
}

pub fn build_direct_prompt(h: &HypothesisSet, spec: &PromptSpec, lex: &Lexicon) -> Result<String, PromptError> {
    PromptBuilder::new(lex).build_direct(h, spec)
}

pub fn build_finetune_pair(
    h: &HypothesisSet,
    spec: &PromptSpec,
    lex: &Lexicon,
    norm: &Normalizer,
) -> Result<(String, String), PromptError> {
    PromptBuilder::new(lex).build_finetune(h, spec, norm)
}

/// Number of lines in `prompt` starting with `marker`.
pub fn count_marked_lines(prompt: &str, marker: &str) -> usize {
    prompt.lines().filter(|l| l.starts_with(marker)).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FailureReason {
    None,
    Parse,
    Overlength,
    Transport,
}

/// Outcome of one correction attempt. `correction` is what gets scored:
/// the model's answer, or the 1-best hypothesis when `fallback_used`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CorrectionRecord {
    pub id: String,
    pub raw_response: Option<String>,
    pub correction: String,
    pub fallback_used: bool,
    pub failure_reason: FailureReason,
}

impl CorrectionRecord {
    pub fn fallback(h: &HypothesisSet, raw_response: Option<String>, reason: FailureReason, norm: &Normalizer) -> Self {
        CorrectionRecord {
            id: h.id.clone(),
            raw_response,
            correction: norm.normalize(h.one_best()),
            fallback_used: true,
            failure_reason: reason,
        }
    }
}

/// The first JSON object in `raw` that carries a string `correction` field.
fn extract_correction(raw: &str) -> Option<String> {
    raw.match_indices('{').find_map(|(start, _)| {
        let mut values = serde_json::Deserializer::from_str(&raw[start..]).into_iter::<serde_json::Value>();
        match values.next() {
            Some(Ok(serde_json::Value::Object(obj))) => obj.get("correction")?.as_str().map(str::to_string),
            _ => None,
        }
    })
}

/// Read a model reply. Never fails: unusable replies fall back to the
/// 1-best hypothesis with the reason recorded.
pub fn parse_response(raw: &str, h: &HypothesisSet, max_chars: usize, norm: &Normalizer) -> CorrectionRecord {
    let Some(correction) = extract_correction(raw)
        .map(|c| norm.normalize(&c))
        .filter(|c| !c.is_empty())
    else {
        return CorrectionRecord::fallback(h, Some(raw.to_string()), FailureReason::Parse, norm);
    };
    if correction.chars().count() >= max_chars {
        return CorrectionRecord::fallback(h, Some(raw.to_string()), FailureReason::Overlength, norm);
    }
    CorrectionRecord {
        id: h.id.clone(),
        raw_response: Some(raw.to_string()),
        correction,
        fallback_used: false,
        failure_reason: FailureReason::None,
    }
}
