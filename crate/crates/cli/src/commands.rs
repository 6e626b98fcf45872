use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::Serialize;
use serde_json::json;

use hyposcore::dataset::{
    self, filter_by_length, load_corpus, HypothesisSet, NormalizationPolicy, Normalizer, PinyinScoringOptions,
    SimplifiedTable,
};
use hyposcore::evaluate::{self, EvalConfig, RunManifest, SCORES_FILE};
use hyposcore::llm::{EndpointConfig, HttpTransport, MockTransport, Transport};
use hyposcore::pinyin::{render_tokens, Lexicon, LexiconBuilder};
use hyposcore::promptgen::{find_method, FailureReason, Method, PromptBuilder, PromptSpec, PromptStyle, Templates};
use hyposcore::report;
use hyposcore::scoring::{self, corpus_aggregate, Averaging, PinyinScoring, ScoreError, UtteranceScore};

use crate::{Aborted, Format, LexiconArgs, NormalizeArgs, TemplateArgs};

fn warn(msg: impl std::fmt::Display) {
    eprintln!("warning: {msg}");
}

fn load_lexicon(args: &LexiconArgs) -> Result<Lexicon> {
    let mut builder = LexiconBuilder::default();
    if !args.no_bundled_lexicon {
        builder.add_bundled();
    }
    for path in &args.lexicons {
        builder.add_file(path)?;
    }
    let lex = builder.build()?;
    for w in lex.warnings() {
        warn(w);
    }
    Ok(lex)
}

fn normalizer(args: &NormalizeArgs) -> Result<Normalizer> {
    let policy = NormalizationPolicy {
        to_simplified: !args.no_simplify,
        width_fold: !args.no_width_fold,
        strip_whitespace: !args.keep_whitespace,
        strip_punctuation: !args.keep_punctuation,
        ..NormalizationPolicy::default()
    };
    let table = match &args.t2s {
        Some(path) => SimplifiedTable::load(path)?,
        None => SimplifiedTable::bundled().clone(),
    };
    Ok(Normalizer::new(policy, table))
}

fn templates(args: &TemplateArgs) -> Result<Templates> {
    Ok(Templates::with_overrides(
        args.direct_template.as_deref(),
        args.finetune_template.as_deref(),
    )?)
}

fn load(path: &Path) -> Result<Vec<HypothesisSet>> {
    load_corpus(path).with_context(|| format!("loading {}", path.display()))
}

fn prompt_spec(name: &str) -> Result<PromptSpec> {
    match find_method(name)? {
        Method::Prompt(spec) => Ok(spec),
        Method::Baseline => bail!("Baseline has no prompt; pick one of Prompt1..Prompt9 or Finetune1..Finetune4"),
    }
}

/// Stdout, or a file whose parent directories are created.
fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            Box::new(BufWriter::new(
                fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
            ))
        }
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn json_line(out: &mut dyn Write, value: &impl Serialize) -> Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

#[derive(Args, Debug)]
pub struct TransliterateArgs {
    /// Text to transliterate; read from --file or standard input when absent.
    pub text: Option<String>,
    #[arg(long, conflicts_with = "text", value_name = "FILE")]
    pub file: Option<PathBuf>,
    /// Fail on Han characters missing from the lexicon.
    #[arg(long)]
    pub strict: bool,
    #[command(flatten)]
    pub lexicon: LexiconArgs,
}

pub fn transliterate(args: TransliterateArgs) -> Result<()> {
    let lex = load_lexicon(&args.lexicon)?;
    let text = match (&args.text, &args.file) {
        (Some(t), _) => t.clone(),
        (None, Some(path)) => fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?,
        (None, None) => {
            let mut buf = String::new();
            io::stdin().read_to_string(&mut buf)?;
            buf
        }
    };
    let mode = args.lexicon.mode.into();
    let mut out = output(None)?;
    let mut unknown = 0;
    for line in text.lines() {
        let tokens = if args.strict {
            lex.transliterate_strict(line, mode)?
        } else {
            let t = lex.transliterate(line, mode);
            unknown += t.unknown;
            t.tokens
        };
        writeln!(out, "{}", render_tokens(&tokens))?;
    }
    out.flush()?;
    if unknown > 0 {
        warn(format!(
            "{unknown} Han characters have no lexicon entry and were passed through"
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    Cer,
    Pinyin,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    pub dataset: PathBuf,
    #[arg(long, value_enum, default_value = "cer")]
    pub metric: Metric,
    /// Compare syllables without tones.
    #[arg(long)]
    pub tone_insensitive: bool,
    /// One line per utterance instead of the corpus summary.
    #[arg(long)]
    pub per_utt: bool,
    /// Average per-utterance rates instead of pooling edits.
    #[arg(long = "macro")]
    pub macro_average: bool,
    #[arg(long, value_enum, default_value = "table")]
    pub format: Format,
    #[command(flatten)]
    pub lexicon: LexiconArgs,
    #[command(flatten)]
    pub normalize: NormalizeArgs,
}

/// Score every record's 1-best, skipping empty references with a warning.
fn score_one_best(
    records: &[HypothesisSet],
    norm: &Normalizer,
    pinyin: Option<PinyinScoring<'_>>,
    with_oracles: bool,
) -> Result<Vec<UtteranceScore>> {
    let mut scores = Vec::with_capacity(records.len());
    for h in records {
        match scoring::score_utterance(h, h.one_best(), norm, pinyin, with_oracles) {
            Ok(s) => scores.push(s),
            Err(ScoreError::EmptyReference) => warn(format!("{}: empty reference after normalization, skipped", h.id)),
            Err(e) => return Err(anyhow!("{}: {e}", h.id)),
        }
    }
    Ok(scores)
}

fn averaging(macro_average: bool) -> Averaging {
    if macro_average {
        Averaging::Macro
    } else {
        Averaging::Micro
    }
}

fn print_summary(report: &scoring::ScoreReport, format: Format) -> Result<()> {
    let text = match format {
        Format::Table => report::summary_table(report),
        Format::Tsv => report::summary_tsv(report),
    };
    print!("{text}");
    Ok(())
}

pub fn score(args: ScoreArgs) -> Result<()> {
    let records = load(&args.dataset)?;
    let norm = normalizer(&args.normalize)?;
    let lex = load_lexicon(&args.lexicon)?;
    let pinyin = (args.metric == Metric::Pinyin).then_some(PinyinScoring {
        lexicon: &lex,
        mode: args.lexicon.mode.into(),
        tone_sensitive: !args.tone_insensitive,
    });
    let scores = score_one_best(&records, &norm, pinyin, false)?;
    if args.per_utt {
        let text = match args.metric {
            Metric::Cer => report::per_utterance_tsv(&scores, |u| Some(u.cer)),
            Metric::Pinyin => report::per_utterance_tsv(&scores, |u| u.pinyin),
        };
        print!("{text}");
        return Ok(());
    }
    print_summary(&corpus_aggregate(&scores, averaging(args.macro_average)), args.format)
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    pub dataset: PathBuf,
    #[arg(long = "macro")]
    pub macro_average: bool,
    #[arg(long, value_enum, default_value = "table")]
    pub format: Format,
    #[command(flatten)]
    pub normalize: NormalizeArgs,
}

pub fn oracle(args: OracleArgs) -> Result<()> {
    let records = load(&args.dataset)?;
    let norm = normalizer(&args.normalize)?;
    let scores = score_one_best(&records, &norm, None, true)?;
    print_summary(&corpus_aggregate(&scores, averaging(args.macro_average)), args.format)?;
    let violations = scores
        .iter()
        .filter_map(|s| s.oracle)
        .filter(|o| o.compositional.distance() > o.nbest.distance())
        .count();
    let footer = if violations == 0 {
        format!("check: o_cp <= o_nb holds for all {} utterances", scores.len())
    } else {
        format!(
            "check: o_cp <= o_nb VIOLATED for {violations} of {} utterances",
            scores.len()
        )
    };
    match args.format {
        Format::Table => println!("{footer}"),
        Format::Tsv => eprintln!("{footer}"),
    }
    if violations > 0 {
        bail!("oracle ordering violated");
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct PromptArgs {
    pub dataset: PathBuf,
    /// Prompt1..Prompt9 or Finetune1..Finetune4.
    #[arg(long)]
    pub spec: String,
    /// Directory for `<spec>.jsonl`; standard output when absent.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub lexicon: LexiconArgs,
    #[command(flatten)]
    pub normalize: NormalizeArgs,
    #[command(flatten)]
    pub templates: TemplateArgs,
}

#[derive(Serialize)]
struct DirectPrompt<'a> {
    id: &'a str,
    prompt: &'a str,
}

#[derive(Serialize)]
struct TrainingPair<'a> {
    prompt: &'a str,
    response: &'a str,
}

pub fn prompt(args: PromptArgs) -> Result<()> {
    let spec = prompt_spec(&args.spec)?;
    let records = load(&args.dataset)?;
    let lex = load_lexicon(&args.lexicon)?;
    let norm = normalizer(&args.normalize)?;
    let builder = PromptBuilder {
        lexicon: &lex,
        mode: args.lexicon.mode.into(),
        templates: templates(&args.templates)?,
    };
    if spec.analysis_only() {
        warn(format!(
            "{} shows ground-truth Pinyin; use it for analysis only",
            spec.name
        ));
    }
    let path = args.out.as_ref().map(|dir| dir.join(format!("{}.jsonl", spec.name)));
    let mut out = output(path.as_deref())?;
    let mut written = 0;
    for h in &records {
        let built = match spec.style {
            PromptStyle::Direct => builder.build_direct(h, &spec).map(|p| (p, None)),
            PromptStyle::Finetune => builder.build_finetune(h, &spec, &norm).map(|(p, r)| (p, Some(r))),
        };
        match built {
            Ok((prompt, None)) => json_line(
                &mut out,
                &DirectPrompt {
                    id: &h.id,
                    prompt: &prompt,
                },
            )?,
            Ok((prompt, Some(response))) => json_line(
                &mut out,
                &TrainingPair {
                    prompt: &prompt,
                    response: &response,
                },
            )?,
            Err(e) => {
                warn(format!("{e}; skipped"));
                continue;
            }
        }
        written += 1;
    }
    out.flush()?;
    if let Some(p) = path {
        eprintln!("wrote {written} prompts to {}", p.display());
    }
    Ok(())
}

#[derive(Args, Debug, Serialize)]
pub struct EndpointArgs {
    /// OpenAI-compatible API root; `/chat/completions` is appended.
    #[arg(long, default_value = "https://api.openai.com/v1")]
    pub base_url: String,
    #[arg(long, default_value = "gpt-3.5-turbo")]
    pub model: String,
    #[arg(long, default_value_t = 0.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = 60)]
    pub timeout_secs: u64,
    #[arg(long, default_value_t = 3)]
    pub max_retries: u32,
    /// First retry delay; doubles on each further retry.
    #[arg(long, default_value_t = 500)]
    pub backoff_ms: u64,
    #[arg(long, default_value_t = 4)]
    pub max_parallel: usize,
}

impl EndpointArgs {
    fn config(&self) -> Result<EndpointConfig> {
        let cfg = EndpointConfig {
            base_url: self.base_url.clone(),
            model_name: self.model.clone(),
            temperature: self.temperature,
            timeout: Duration::from_secs(self.timeout_secs),
            max_retries: self.max_retries,
            initial_backoff: Duration::from_millis(self.backoff_ms),
            max_parallel: self.max_parallel,
            ..EndpointConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug, Serialize)]
pub struct EvaluateArgs {
    pub dataset: PathBuf,
    /// Baseline, Prompt1..Prompt9 or Finetune1..Finetune4.
    #[arg(long)]
    pub spec: String,
    /// Answer prompts from a fixture file instead of calling an endpoint.
    #[arg(long, value_name = "FILE")]
    pub mock: Option<PathBuf>,
    /// Evaluate a seeded random subset of this many records.
    #[arg(long)]
    pub sample: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Drop records whose reference or hypotheses reach this many characters;
    /// replies this long fall back to the 1-best.
    #[arg(long, default_value_t = 100)]
    pub max_chars: usize,
    /// Earlier run directory (or its scores.tsv) providing baseline CERs.
    #[arg(long, value_name = "PATH")]
    pub baseline_run: Option<PathBuf>,
    /// Run directory to write.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Exit with status 3 when more than this fraction of requests fail.
    #[arg(long, default_value_t = 0.5)]
    pub abort_ratio: f64,
    #[arg(long = "macro")]
    pub macro_average: bool,
    #[arg(long)]
    pub tone_insensitive: bool,
    #[arg(long, value_enum, default_value = "table")]
    #[serde(skip)]
    pub format: Format,
    #[command(flatten)]
    pub endpoint: EndpointArgs,
    #[command(flatten)]
    pub lexicon: LexiconArgs,
    #[command(flatten)]
    pub normalize: NormalizeArgs,
    #[command(flatten)]
    pub templates: TemplateArgs,
}

fn baseline_scores(path: &Path) -> Result<BTreeMap<String, f64>> {
    let file = if path.is_dir() {
        path.join(SCORES_FILE)
    } else {
        path.to_path_buf()
    };
    let text = fs::read_to_string(&file).with_context(|| format!("cannot read baseline {}", file.display()))?;
    report::parse_summary_cer(&text).map_err(|e| anyhow!("baseline {}: {e}", file.display()))
}

pub fn evaluate(args: EvaluateArgs, command_line: Vec<String>, config_file: Option<PathBuf>) -> Result<()> {
    let method = find_method(&args.spec)?;
    if !(0.0..=1.0).contains(&args.abort_ratio) {
        bail!("--abort-ratio must be within 0..1");
    }
    let records = load(&args.dataset)?;
    let lex = load_lexicon(&args.lexicon)?;
    let norm = normalizer(&args.normalize)?;
    let endpoint = args.endpoint.config()?;
    let builder = PromptBuilder {
        lexicon: &lex,
        mode: args.lexicon.mode.into(),
        templates: templates(&args.templates)?,
    };
    let transport: Option<Box<dyn Transport>> = match (&method, &args.mock) {
        (Method::Baseline, _) => None,
        (_, Some(path)) => Some(Box::new(
            MockTransport::load(path).with_context(|| format!("loading fixtures {}", path.display()))?,
        )),
        (_, None) => Some(Box::new(HttpTransport::from_env(&endpoint)?)),
    };
    let baseline_path = args
        .baseline_run
        .as_ref()
        .map(|p| if p.is_dir() { p.join(SCORES_FILE) } else { p.clone() });

    let mut cfg = EvalConfig::new(method);
    cfg.sample = args.sample;
    cfg.seed = args.seed;
    cfg.max_chars = args.max_chars;
    cfg.abort_ratio = args.abort_ratio;
    cfg.baseline = baseline_path.as_deref().map(baseline_scores).transpose()?;
    cfg.pinyin = PinyinScoringOptions {
        mode: args.lexicon.mode.into(),
        tone_sensitive: !args.tone_insensitive,
    };
    cfg.averaging = averaging(args.macro_average);

    let outcome = evaluate::evaluate(records, &cfg, &builder, &norm, transport.as_deref(), &endpoint)?;

    let mut manifest = RunManifest::new(command_line, serde_json::to_value(&args)?, args.seed);
    let inputs = [
        Some(&args.dataset),
        args.mock.as_ref(),
        baseline_path.as_ref(),
        args.normalize.t2s.as_ref(),
    ]
    .into_iter()
    .flatten()
    .chain(&args.lexicon.lexicons)
    .chain(args.templates.direct_template.iter())
    .chain(args.templates.finetune_template.iter())
    .chain(config_file.iter());
    for path in inputs {
        manifest
            .add_input(path)
            .with_context(|| format!("hashing {}", path.display()))?;
    }
    evaluate::write_run(&args.out, &outcome, &manifest).with_context(|| format!("writing {}", args.out.display()))?;

    print_summary(&outcome.report, args.format)?;
    for note in outcome.notes() {
        eprintln!("{note}");
    }
    eprintln!("run written to {}", args.out.display());
    if outcome.aborted() {
        return Err(Aborted(format!(
            "{} of {} requests failed in transport (abort ratio {})",
            outcome.failures(FailureReason::Transport),
            outcome.prompted(),
            outcome.abort_ratio
        ))
        .into());
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct PrepareFinetuneArgs {
    #[arg(required = true)]
    pub datasets: Vec<PathBuf>,
    /// Records to draw from a corpus, as CORPUS=N (repeatable). Without
    /// quotas every eligible record is used.
    #[arg(long = "quota", value_name = "CORPUS=N", value_parser = parse_quota)]
    pub quotas: Vec<(String, usize)>,
    /// Finetune1..Finetune4.
    #[arg(long)]
    pub spec: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub max_chars: usize,
    /// Output JSONL; standard output when absent.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub lexicon: LexiconArgs,
    #[command(flatten)]
    pub normalize: NormalizeArgs,
    #[command(flatten)]
    pub templates: TemplateArgs,
}

fn parse_quota(s: &str) -> Result<(String, usize), String> {
    let (corpus, n) = s.rsplit_once('=').ok_or("expected CORPUS=N")?;
    let n = n.trim().parse().map_err(|_| format!("bad count {n:?}"))?;
    Ok((corpus.trim().to_string(), n))
}

pub fn prepare_finetune(args: PrepareFinetuneArgs) -> Result<()> {
    let spec = prompt_spec(&args.spec)?;
    if spec.style != PromptStyle::Finetune {
        bail!("{} is not a fine-tuning configuration", spec.name);
    }
    let mut records = Vec::new();
    let mut ids = HashSet::new();
    for path in &args.datasets {
        for h in load(path)? {
            if !ids.insert(h.id.clone()) {
                bail!("{}: id {:?} already seen in an earlier dataset", path.display(), h.id);
            }
            records.push(h);
        }
    }
    let lex = load_lexicon(&args.lexicon)?;
    let norm = normalizer(&args.normalize)?;
    let builder = PromptBuilder {
        lexicon: &lex,
        mode: args.lexicon.mode.into(),
        templates: templates(&args.templates)?,
    };

    let filtered = filter_by_length(records, args.max_chars);
    if filtered.dropped > 0 {
        warn(format!("{} records dropped by the length filter", filtered.dropped));
    }
    let needed = spec.required_hypotheses();
    let mut groups: BTreeMap<String, Vec<HypothesisSet>> = BTreeMap::new();
    let mut skipped = 0;
    for h in filtered.kept {
        if h.hypotheses.len() < needed || norm.normalize(&h.transcription).is_empty() {
            skipped += 1;
            continue;
        }
        groups.entry(h.corpus.clone()).or_default().push(h);
    }
    if skipped > 0 {
        warn(format!(
            "{skipped} records skipped for an empty reference or too few hypotheses"
        ));
    }

    let selected: Vec<(String, Vec<HypothesisSet>)> = if args.quotas.is_empty() {
        groups.into_iter().collect()
    } else {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for (corpus, n) in &args.quotas {
            if !seen.insert(corpus) {
                bail!("corpus {corpus:?} has more than one quota");
            }
            let pool = groups.get(corpus).map(Vec::as_slice).unwrap_or_default();
            let picked = dataset::sample(pool, *n, args.seed).with_context(|| format!("quota for {corpus}"))?;
            out.push((corpus.clone(), picked));
        }
        out
    };

    let mut out = output(args.out.as_deref())?;
    for (corpus, records) in &selected {
        for h in records {
            let (prompt, response) = builder.build_finetune(h, &spec, &norm)?;
            json_line(
                &mut out,
                &TrainingPair {
                    prompt: &prompt,
                    response: &response,
                },
            )?;
        }
        eprintln!("{corpus}: {} pairs", records.len());
    }
    out.flush()?;
    Ok(())
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    pub dataset: PathBuf,
    #[arg(long)]
    pub tone_insensitive: bool,
    #[arg(long, value_enum, default_value = "table")]
    pub format: Format,
    #[command(flatten)]
    pub lexicon: LexiconArgs,
    #[command(flatten)]
    pub normalize: NormalizeArgs,
}

pub fn stats(args: StatsArgs) -> Result<()> {
    let records = load(&args.dataset)?;
    let lex = load_lexicon(&args.lexicon)?;
    let norm = normalizer(&args.normalize)?;
    let opts = PinyinScoringOptions {
        mode: args.lexicon.mode.into(),
        tone_sensitive: !args.tone_insensitive,
    };
    let stats = dataset::stats(&records, &lex, &norm, opts);
    for s in stats.iter().filter(|s| s.empty_references > 0) {
        warn(format!(
            "{}: {} records with an empty reference left out of the rates",
            s.corpus, s.empty_references
        ));
    }
    let text = match args.format {
        Format::Table => report::stats_table(&stats),
        Format::Tsv => report::stats_tsv(&stats),
    };
    print!("{text}");
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Reply {
    /// `{"correction": <reference>}`: a perfect corrector.
    Reference,
    /// `{"correction": <1-best>}`: a corrector that changes nothing.
    OneBest,
    /// Text with no JSON in it.
    Garbage,
}

#[derive(Args, Debug)]
pub struct MockFixturesArgs {
    pub dataset: PathBuf,
    #[arg(long)]
    pub spec: String,
    #[arg(long, value_enum)]
    pub reply: Reply,
    /// Output JSONL; standard output when absent.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub lexicon: LexiconArgs,
    #[command(flatten)]
    pub templates: TemplateArgs,
}

pub const GARBAGE_REPLY: &str = "Sorry, I could not make out what was said.";

pub fn mock_fixtures(args: MockFixturesArgs) -> Result<()> {
    let spec = prompt_spec(&args.spec)?;
    let records = load(&args.dataset)?;
    let lex = load_lexicon(&args.lexicon)?;
    let builder = PromptBuilder {
        lexicon: &lex,
        mode: args.lexicon.mode.into(),
        templates: templates(&args.templates)?,
    };
    let mut out = output(args.out.as_deref())?;
    for h in &records {
        let prompt = match builder.build(h, &spec) {
            Ok(p) => p,
            Err(e) => {
                warn(format!("{e}; skipped"));
                continue;
            }
        };
        let reply = match args.reply {
            Reply::Reference => json!({"correction": h.transcription}).to_string(),
            Reply::OneBest => json!({"correction": h.one_best()}).to_string(),
            Reply::Garbage => GARBAGE_REPLY.to_string(),
        };
        json_line(
            &mut out,
            &hyposcore::llm::FixtureLine {
                prompt_sha256: hyposcore::llm::prompt_sha256(&prompt),
                reply,
            },
        )?;
    }
    out.flush()?;
    Ok(())
}
