mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Pinyin transliteration, CER/PinyinER scoring, oracles and LLM-based
/// correction runs over N-best ASR hypotheses.
#[derive(Parser, Debug)]
#[command(name = "hyposcore", version)]
pub struct Cli {
    /// TOML file whose keys mirror the long flags; a [subcommand] table scopes keys to one command.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print tone-numbered Pinyin, one line per input line.
    #[command(args_override_self = true)]
    Transliterate(commands::TransliterateArgs),
    /// CER or PinyinER of the 1-best hypotheses.
    #[command(args_override_self = true)]
    Score(commands::ScoreArgs),
    /// N-best and compositional oracle CERs.
    #[command(args_override_self = true)]
    Oracle(commands::OracleArgs),
    /// Build correction prompts for a named configuration.
    #[command(args_override_self = true)]
    Prompt(commands::PromptArgs),
    /// Run a correction method end to end and write a run directory.
    #[command(args_override_self = true)]
    Evaluate(commands::EvaluateArgs),
    /// Sample per-corpus quotas into fine-tuning pairs.
    #[command(args_override_self = true)]
    PrepareFinetune(commands::PrepareFinetuneArgs),
    /// Per-corpus dataset statistics.
    #[command(args_override_self = true)]
    Stats(commands::StatsArgs),
    /// Write mock-transport fixtures answering a spec's prompts.
    #[command(args_override_self = true)]
    MockFixtures(commands::MockFixturesArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    Contextual,
    PerChar,
}

impl From<ModeArg> for hyposcore::Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Contextual => hyposcore::Mode::Contextual,
            ModeArg::PerChar => hyposcore::Mode::PerChar,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum Format {
    #[default]
    Table,
    Tsv,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct LexiconArgs {
    /// Extra lexicon TSV, layered over the bundled one (repeatable; later files win).
    #[arg(long = "lexicon", value_name = "FILE")]
    pub lexicons: Vec<PathBuf>,
    /// Use only the --lexicon files.
    #[arg(long)]
    pub no_bundled_lexicon: bool,
    /// Heteronym handling.
    #[arg(long, value_enum, default_value = "contextual")]
    pub mode: ModeArg,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct NormalizeArgs {
    /// Keep traditional characters.
    #[arg(long)]
    pub no_simplify: bool,
    /// Keep full-width forms.
    #[arg(long)]
    pub no_width_fold: bool,
    #[arg(long)]
    pub keep_whitespace: bool,
    #[arg(long)]
    pub keep_punctuation: bool,
    /// Traditional-to-simplified table replacing the bundled one.
    #[arg(long, value_name = "FILE")]
    pub t2s: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct TemplateArgs {
    /// Replacement template for direct prompts.
    #[arg(long, value_name = "FILE")]
    pub direct_template: Option<PathBuf>,
    /// Replacement template for fine-tuning prompts.
    #[arg(long, value_name = "FILE")]
    pub finetune_template: Option<PathBuf>,
}

/// Evaluation aborted because too many requests failed in transport.
#[derive(Debug)]
pub struct Aborted(pub String);

impl std::fmt::Display for Aborted {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Aborted {}

fn main() -> ExitCode {
    let raw: Vec<OsString> = std::env::args_os().collect();
    let args = match config::with_config(raw.clone()) {
        Ok(args) => args,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(args);
    let command_line: Vec<String> = raw.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let result = match cli.command {
        Command::Transliterate(a) => commands::transliterate(a),
        Command::Score(a) => commands::score(a),
        Command::Oracle(a) => commands::oracle(a),
        Command::Prompt(a) => commands::prompt(a),
        Command::Evaluate(a) => commands::evaluate(a, command_line, cli.config),
        Command::PrepareFinetune(a) => commands::prepare_finetune(a),
        Command::Stats(a) => commands::stats(a),
        Command::MockFixtures(a) => commands::mock_fixtures(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<Aborted>() => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
