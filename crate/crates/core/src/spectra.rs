//! Hit and count spectra per line, plus the Ochiai, DStar² and Tarantula scores.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::trace::OutcomeAggregate;

/// Additive guard for every denominator in the risk formulae.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Epsilon(f64);

impl Epsilon {
    pub const DEFAULT: f64 = 1e-9;

    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value > 0.0 {
            Ok(Self(value))
        } else {
            Err(Error::Config(format!("epsilon must be positive, got {value}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for Epsilon {
    fn default() -> Self {
        Self(Self::DEFAULT)
    }
}

/// The four SBFL counters for a line, together with the outcome totals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counters {
    pub e_p: u32,
    pub e_f: u32,
    pub total_pass: u32,
    pub total_fail: u32,
}

impl Counters {
    pub fn n_p(&self) -> u32 {
        self.total_pass - self.e_p
    }

    pub fn n_f(&self) -> u32 {
        self.total_fail - self.e_f
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormulaScores {
    pub ochiai: f64,
    pub dstar2: f64,
    pub tarantula: f64,
}

pub fn formula_scores(c: Counters, eps: Epsilon) -> FormulaScores {
    let eps = eps.value();
    let e_p = f64::from(c.e_p);
    let e_f = f64::from(c.e_f);
    let n_pass = f64::from(c.total_pass);
    let n_fail = f64::from(c.total_fail);

    let ochiai = e_f / ((n_fail * (e_f + e_p)).sqrt() + eps);
    let dstar2 = e_f * e_f / (e_p + (n_fail - e_f) + eps);
    let h = e_p / (n_pass + eps);
    let tarantula = 1.0 - h / (h + e_f / (n_fail + eps) + eps);

    FormulaScores {
        ochiai,
        dstar2,
        tarantula,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectraRow {
    pub line: u32,
    pub counters: Counters,
    pub count_pass: u64,
    pub count_fail: u64,
    pub exec_pass_norm: f64,
    pub exec_fail_norm: f64,
    pub pass_rate: f64,
    pub fail_rate: f64,
    pub scores: FormulaScores,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// One row per line executed under either outcome, in ascending line order.
pub fn spectra_rows(pass: &OutcomeAggregate, fail: &OutcomeAggregate, eps: Epsilon) -> Vec<SpectraRow> {
    let lines: BTreeSet<u32> = pass
        .per_line_counts
        .keys()
        .chain(fail.per_line_counts.keys())
        .copied()
        .collect();

    lines
        .into_iter()
        .map(|line| {
            let counters = Counters {
                e_p: pass.per_line_tests.get(&line).copied().unwrap_or(0),
                e_f: fail.per_line_tests.get(&line).copied().unwrap_or(0),
                total_pass: pass.num_tests,
                total_fail: fail.num_tests,
            };
            let count_pass = pass.per_line_counts.get(&line).copied().unwrap_or(0);
            let count_fail = fail.per_line_counts.get(&line).copied().unwrap_or(0);
            SpectraRow {
                line,
                counters,
                count_pass,
                count_fail,
                exec_pass_norm: ratio(count_pass as f64, pass.total_steps as f64),
                exec_fail_norm: ratio(count_fail as f64, fail.total_steps as f64),
                pass_rate: ratio(f64::from(counters.e_p), f64::from(counters.total_pass)),
                fail_rate: ratio(f64::from(counters.e_f), f64::from(counters.total_fail)),
                scores: formula_scores(counters, eps),
            }
        })
        .collect()
}
