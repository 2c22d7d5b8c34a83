//! Control-flow features from `(line, prev_line)` pairs and keyword flags
//! from source text.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use regex::Regex;

use crate::trace::OutcomeAggregate;

/// Fill value for outcome sides on which a line never executed.
pub const FLOW_SENTINEL: f64 = -1.0;

pub const KEYWORDS: [&str; 12] = [
    "if", "elif", "else", "for", "while", "break", "continue", "return", "try", "except", "raise",
    "assert",
];

/// Flow statistics for one outcome side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowStats {
    pub diff_min: f64,
    pub diff_max: f64,
    pub diff_mean: f64,
    pub diff_median: f64,
    pub num_paths_in: f64,
    pub num_paths_out: f64,
}

impl FlowStats {
    pub const MISSING: FlowStats = FlowStats {
        diff_min: FLOW_SENTINEL,
        diff_max: FLOW_SENTINEL,
        diff_mean: FLOW_SENTINEL,
        diff_median: FLOW_SENTINEL,
        num_paths_in: FLOW_SENTINEL,
        num_paths_out: FLOW_SENTINEL,
    };
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowRow {
    pub line: u32,
    pub pass: FlowStats,
    pub fail: FlowStats,
}

/// Summary statistics of `line - pred` over a predecessor multiset given as counts.
pub fn diff_stats(line: u32, preds: &BTreeMap<u32, u64>) -> Option<(f64, f64, f64, f64)> {
    let total: u64 = preds.values().sum();
    if total == 0 {
        return None;
    }
    // Differences sorted ascending: larger predecessors give smaller diffs.
    let diffs: Vec<(f64, u64)> = preds
        .iter()
        .rev()
        .filter(|(_, &n)| n > 0)
        .map(|(&p, &n)| (f64::from(line) - f64::from(p), n))
        .collect();

    let min = diffs.first()?.0;
    let max = diffs.last()?.0;
    let mean = diffs.iter().map(|&(d, n)| d * n as f64).sum::<f64>() / total as f64;

    let nth = |k: u64| -> f64 {
        let mut seen = 0;
        for &(d, n) in &diffs {
            seen += n;
            if k < seen {
                return d;
            }
        }
        max
    };
    let median = if total % 2 == 1 {
        nth(total / 2)
    } else {
        (nth(total / 2 - 1) + nth(total / 2)) / 2.0
    };
    Some((min, max, mean, median))
}

fn side_stats(agg: &OutcomeAggregate) -> BTreeMap<u32, FlowStats> {
    let mut successors: BTreeMap<u32, BTreeSet<u32>> = BTreeMap::new();
    for (&line, preds) in &agg.per_line_preds {
        for &p in preds.keys() {
            successors.entry(p).or_default().insert(line);
        }
    }

    agg.per_line_preds
        .iter()
        .filter_map(|(&line, preds)| {
            let (diff_min, diff_max, diff_mean, diff_median) = diff_stats(line, preds)?;
            Some((
                line,
                FlowStats {
                    diff_min,
                    diff_max,
                    diff_mean,
                    diff_median,
                    num_paths_in: preds.len() as f64,
                    num_paths_out: successors.get(&line).map_or(0, BTreeSet::len) as f64,
                },
            ))
        })
        .collect()
}

/// One row per line executed under either outcome, in ascending line order.
pub fn flow_rows(pass: &OutcomeAggregate, fail: &OutcomeAggregate) -> Vec<FlowRow> {
    let pass_stats = side_stats(pass);
    let fail_stats = side_stats(fail);
    let lines: BTreeSet<u32> = pass_stats.keys().chain(fail_stats.keys()).copied().collect();
    lines
        .into_iter()
        .map(|line| FlowRow {
            line,
            pass: pass_stats.get(&line).copied().unwrap_or(FlowStats::MISSING),
            fail: fail_stats.get(&line).copied().unwrap_or(FlowStats::MISSING),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexRow {
    pub line: u32,
    /// Indexed like [`KEYWORDS`].
    pub keywords: [bool; KEYWORDS.len()],
}

fn keyword_patterns() -> &'static [Regex] {
    static PATTERNS: OnceLock<Vec<Regex>> = OnceLock::new();
    PATTERNS.get_or_init(|| {
        KEYWORDS
            .iter()
            .map(|kw| Regex::new(&format!(r"\b{kw}\b")).expect("keyword pattern"))
            .collect()
    })
}

pub fn lex_row(line: u32, text: &str) -> LexRow {
    let mut keywords = [false; KEYWORDS.len()];
    for (flag, re) in keywords.iter_mut().zip(keyword_patterns()) {
        *flag = re.is_match(text);
    }
    LexRow { line, keywords }
}

/// One row per source line, numbered from 1.
pub fn lex_rows(source_lines: &[String]) -> Vec<LexRow> {
    source_lines
        .iter()
        .enumerate()
        .map(|(i, text)| lex_row(i as u32 + 1, text))
        .collect()
}
