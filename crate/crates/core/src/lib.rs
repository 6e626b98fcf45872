//! Scoring, oracles and Pinyin-regularized prompting for Chinese ASR
//! error correction with large language models.
//!
//! * [`pinyin`]: syllable parsing and grapheme-to-Pinyin transliteration
//! * [`scoring`]: CER, PinyinER, CERR and the n-best / compositional oracles
//! * [`dataset`]: JSONL corpora, normalization, sampling and statistics
//! * [`promptgen`]: direct and fine-tuning prompts, reply parsing
//! * [`llm`]: chat-completion transport with retries and a mock
//! * [`evaluate`]: end-to-end correction runs
//! * [`report`]: TSV and table output

pub mod dataset;
pub mod evaluate;
pub mod llm;
pub mod pinyin;
pub mod promptgen;
pub mod report;
pub mod scoring;

pub use dataset::{HypothesisSet, NormalizationPolicy, Normalizer};
pub use pinyin::{Lexicon, Mode, PinyinToken, Syllable};
pub use scoring::{EditStats, Rate};
