//! TSV and aligned-table rendering of score reports.

use std::collections::BTreeMap;

use crate::dataset::CorpusStats;
use crate::scoring::{Aggregate, Averaging, CorpusSummary, EditStats, ScoreReport, UtteranceScore};

pub const SUMMARY_COLUMNS: [&str; 7] = ["corpus", "N", "CER%", "PinyinER%", "o_nb%", "o_cp%", "-CERR%"];

pub const CERR_LEGEND: &str =
    "-CERR% is the negated relative CER reduction against the baseline; negative values are improvements.";

/// Negated CERR with two decimals, never printing `-0.00`.
pub fn format_neg_cerr(cerr: f64) -> String {
    let text = format!("{:.2}", -cerr);
    if text == "-0.00" {
        "0.00".to_string()
    } else {
        text
    }
}

fn opt(agg: &Option<Aggregate>, averaging: Averaging) -> String {
    agg.as_ref().map_or_else(|| "-".to_string(), |a| a.format(averaging))
}

fn summary_row(report: &ScoreReport, s: &CorpusSummary) -> Vec<String> {
    let avg = report.averaging;
    vec![
        s.corpus.clone(),
        s.utterances.to_string(),
        s.cer.format(avg),
        opt(&s.pinyin, avg),
        opt(&s.nbest, avg),
        opt(&s.compositional, avg),
        report.cerr_for(s).map_or_else(|| "-".to_string(), format_neg_cerr),
    ]
}

fn tsv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join("\t");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join("\t"));
        out.push('\n');
    }
    out
}

/// Space-aligned columns; the first column is left-aligned, the rest right-aligned.
pub fn aligned(header: &[&str], rows: &[Vec<String>]) -> String {
    let width = |s: &str| s.chars().count();
    let mut widths: Vec<usize> = header.iter().map(|h| width(h)).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(width(cell));
        }
    }
    let render = |cells: Vec<&str>| {
        let mut line = String::new();
        for (i, (cell, w)) in cells.iter().zip(&widths).enumerate() {
            let pad = " ".repeat(w - width(cell));
            if i == 0 {
                line.push_str(cell);
                line.push_str(&pad);
            } else {
                line.push_str("  ");
                line.push_str(&pad);
                line.push_str(cell);
            }
        }
        line.trim_end().to_string()
    };
    let mut out = render(header.to_vec());
    out.push('\n');
    for row in rows {
        out.push_str(&render(row.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}

fn summary_rows(report: &ScoreReport) -> Vec<Vec<String>> {
    report.rows().map(|s| summary_row(report, s)).collect()
}

pub fn summary_tsv(report: &ScoreReport) -> String {
    tsv(&SUMMARY_COLUMNS, &summary_rows(report))
}

pub fn summary_table(report: &ScoreReport) -> String {
    let mut out = aligned(&SUMMARY_COLUMNS, &summary_rows(report));
    if !report.baseline.is_empty() {
        out.push_str(CERR_LEGEND);
        out.push('\n');
    }
    out
}

/// Per-utterance lines: id, corpus, rate, edit counts.
pub fn per_utterance_tsv(scores: &[UtteranceScore], pick: impl Fn(&UtteranceScore) -> Option<EditStats>) -> String {
    let rows: Vec<Vec<String>> = scores
        .iter()
        .filter_map(|u| {
            let s = pick(u)?;
            Some(vec![
                u.id.clone(),
                u.corpus.clone(),
                s.rate().to_string(),
                s.substitutions.to_string(),
                s.insertions.to_string(),
                s.deletions.to_string(),
                s.ref_len.to_string(),
            ])
        })
        .collect();
    tsv(&["id", "corpus", "rate%", "sub", "ins", "del", "ref_len"], &rows)
}

pub const STATS_COLUMNS: [&str; 7] = ["corpus", "pairs", "hyps/utt", "CER%", "PinyinER%", "o_nb%", "o_cp%"];

fn stats_rows(stats: &[CorpusStats]) -> Vec<Vec<String>> {
    stats
        .iter()
        .map(|s| {
            vec![
                s.corpus.clone(),
                s.pairs.to_string(),
                format!("{:.2}", s.mean_hypotheses),
                s.one_best_cer.micro().to_string(),
                s.one_best_pinyin_er.micro().to_string(),
                s.nbest.micro().to_string(),
                s.compositional.micro().to_string(),
            ]
        })
        .collect()
}

pub fn stats_tsv(stats: &[CorpusStats]) -> String {
    tsv(&STATS_COLUMNS, &stats_rows(stats))
}

pub fn stats_table(stats: &[CorpusStats]) -> String {
    aligned(&STATS_COLUMNS, &stats_rows(stats))
}

/// Read the `CER%` column of a summary TSV, keyed by corpus.
pub fn parse_summary_cer(text: &str) -> Result<BTreeMap<String, f64>, String> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().ok_or("empty summary")?.split('\t').collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or(format!("summary has no {name} column"))
    };
    let (corpus_col, cer_col) = (col("corpus")?, col("CER%")?);
    let mut out = BTreeMap::new();
    for (i, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split('\t').collect();
        let (Some(corpus), Some(cer)) = (cells.get(corpus_col), cells.get(cer_col)) else {
            return Err(format!("row {} is short", i + 2));
        };
        if *cer == "-" {
            continue;
        }
        let value: f64 = cer.parse().map_err(|_| format!("row {}: bad CER {cer:?}", i + 2))?;
        out.insert(corpus.to_string(), value);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{HypothesisSet, Normalizer};
    use crate::scoring::{corpus_aggregate, score_utterance};

    #[test]
    fn neg_cerr_formatting() {
        assert_eq!(format_neg_cerr(49.828), "-49.83");
        assert_eq!(format_neg_cerr(-14.199), "14.20");
        assert_eq!(format_neg_cerr(0.0), "0.00");
        assert_eq!(format_neg_cerr(-0.001), "0.00");
        assert_eq!(format_neg_cerr(100.0), "-100.00");
    }

    #[test]
    fn summary_roundtrip() {
        let h = HypothesisSet::new("a", "x/test", vec!["一线楼市成交量基增".into()], "一线楼市成交量激增");
        let u = score_utterance(&h, h.one_best(), &Normalizer::default(), None, true).unwrap();
        let report = corpus_aggregate(&[u], Averaging::Micro);
        let text = summary_tsv(&report);
        assert_eq!(
            text,
            "corpus\tN\tCER%\tPinyinER%\to_nb%\to_cp%\t-CERR%\nx/test\t1\t11.11\t-\t11.11\t11.11\t-\nALL\t1\t11.11\t-\t11.11\t11.11\t-\n"
        );
        let cer = parse_summary_cer(&text).unwrap();
        assert_eq!(cer["x/test"], 11.11);
        assert!(summary_table(&report).starts_with("corpus"));
    }

    #[test]
    fn aligned_columns() {
        let t = aligned(&["a", "bb"], &[vec!["xyz".into(), "1".into()]]);
        assert_eq!(t, "a    bb\nxyz   1\n");
    }
}
