//! Glue from bug records to context vectors, and from vectors or spectra
//! to per-method rankings and metrics.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::matrix::{FeatureMatrix, MatrixRow};
use crate::error::{Error, Result};
use crate::evalrank::{evaluate, random_score, MetricsReport, Method, RankedBug};
use crate::flowlex::{flow_rows, lex_rows};
use crate::gbdt::{Dataset, Model};
use crate::spectra::{spectra_rows, Epsilon, FormulaScores, SpectraRow};
use crate::trace::{aggregate, BugRecord};
use crate::window::{assemble_rows, contextualize, ContextVector, FeatureSchema, GroupMask, DEFAULT_PAD, DEFAULT_WINDOW};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub window: usize,
    pub epsilon: f64,
    pub pad_value: f64,
    pub groups: GroupMask,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            epsilon: Epsilon::DEFAULT,
            pad_value: DEFAULT_PAD,
            groups: GroupMask::all(),
        }
    }
}

impl FeatureConfig {
    pub fn schema(&self) -> Result<FeatureSchema> {
        FeatureSchema::new(&self.groups, self.window, self.pad_value)
    }

    pub fn eps(&self) -> Result<Epsilon> {
        Epsilon::new(self.epsilon)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BugFeatures {
    pub bug_id: String,
    pub buggy_lines: BTreeSet<u32>,
    pub spectra: Vec<SpectraRow>,
    pub vectors: Vec<ContextVector>,
}

pub fn featurize_bug(bug: &BugRecord, schema: &FeatureSchema, eps: Epsilon) -> Result<BugFeatures> {
    bug.validate().map_err(|e| e.in_bug(&bug.bug_id))?;
    let (pass, fail) = aggregate(bug);
    let spectra = spectra_rows(&pass, &fail, eps);
    let flow = flow_rows(&pass, &fail);
    let lex = lex_rows(&bug.source_lines);
    let base = assemble_rows(&spectra, &flow, &lex, schema).map_err(|e| e.in_bug(&bug.bug_id))?;
    let vectors = contextualize(&bug.bug_id, &base, &bug.buggy_lines, schema);
    Ok(BugFeatures {
        bug_id: bug.bug_id.clone(),
        buggy_lines: bug.buggy_lines.clone(),
        spectra,
        vectors,
    })
}

/// Featurizes bugs in parallel; output order follows input order.
pub fn featurize_all(bugs: &[BugRecord], config: &FeatureConfig) -> Result<Vec<BugFeatures>> {
    let schema = config.schema()?;
    let eps = config.eps()?;
    bugs.par_iter()
        .map(|b| featurize_bug(b, &schema, eps))
        .collect()
}

/// Rows sorted by bug id, then line.
pub fn to_matrix(features: &[BugFeatures], schema: &FeatureSchema) -> FeatureMatrix {
    let mut rows: Vec<MatrixRow> = features
        .iter()
        .flat_map(|f| f.vectors.iter())
        .map(|v| MatrixRow {
            bug_id: v.bug_id.clone(),
            line: v.line,
            label: v.label,
            values: v.values.clone(),
        })
        .collect();
    rows.sort_by(|a, b| a.bug_id.cmp(&b.bug_id).then(a.line.cmp(&b.line)));
    FeatureMatrix {
        feature_names: schema.feature_names(),
        rows,
    }
}

pub fn dataset_from_features<'a>(
    features: impl IntoIterator<Item = &'a BugFeatures>,
    schema: &FeatureSchema,
) -> Result<Dataset> {
    let mut data = Dataset::new(schema.feature_names());
    for f in features {
        for v in &f.vectors {
            data.push(&v.values, v.label)?;
        }
    }
    Ok(data)
}

pub fn dataset_from_matrix(
    matrix: &FeatureMatrix,
    include: impl Fn(&str) -> bool,
) -> Result<Dataset> {
    let mut data = Dataset::new(matrix.feature_names.clone());
    for row in matrix.rows.iter().filter(|r| include(&r.bug_id)) {
        data.push(&row.values, row.label)?;
    }
    Ok(data)
}

/// Everything needed to score one bug under any method.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalBug {
    pub bug_id: String,
    pub buggy_lines: BTreeSet<u32>,
    /// Executed lines, ascending, parallel to `vectors`.
    pub lines: Vec<u32>,
    pub vectors: Vec<Vec<f64>>,
    pub formula: Option<BTreeMap<u32, FormulaScores>>,
}

impl From<&BugFeatures> for EvalBug {
    fn from(f: &BugFeatures) -> Self {
        Self {
            bug_id: f.bug_id.clone(),
            buggy_lines: f.buggy_lines.clone(),
            lines: f.vectors.iter().map(|v| v.line).collect(),
            vectors: f.vectors.iter().map(|v| v.values.clone()).collect(),
            formula: Some(f.spectra.iter().map(|r| (r.line, r.scores)).collect()),
        }
    }
}

/// Groups matrix rows per bug. Formula scores come from the focal-line
/// `ochiai0` / `dstar20` / `tarantula0` columns when present. Ground truth
/// is the set of positively labeled rows.
pub fn eval_bugs_from_matrix(matrix: &FeatureMatrix, include: impl Fn(&str) -> bool) -> Vec<EvalBug> {
    let col = |name: &str| matrix.feature_names.iter().position(|n| n == name);
    let formula_cols = match (col("ochiai0"), col("dstar20"), col("tarantula0")) {
        (Some(o), Some(d), Some(t)) => Some((o, d, t)),
        _ => None,
    };
    let mut by_bug: BTreeMap<&str, Vec<&MatrixRow>> = BTreeMap::new();
    for row in matrix.rows.iter().filter(|r| include(&r.bug_id)) {
        by_bug.entry(&row.bug_id).or_default().push(row);
    }
    by_bug
        .into_iter()
        .map(|(bug_id, mut rows)| {
            rows.sort_by_key(|r| r.line);
            EvalBug {
                bug_id: bug_id.to_string(),
                buggy_lines: rows.iter().filter(|r| r.label == 1).map(|r| r.line).collect(),
                lines: rows.iter().map(|r| r.line).collect(),
                vectors: rows.iter().map(|r| r.values.clone()).collect(),
                formula: formula_cols.map(|(o, d, t)| {
                    rows.iter()
                        .map(|r| {
                            (
                                r.line,
                                FormulaScores {
                                    ochiai: r.values[o],
                                    dstar2: r.values[d],
                                    tarantula: r.values[t],
                                },
                            )
                        })
                        .collect()
                }),
            }
        })
        .collect()
}

pub fn method_scores(bug: &EvalBug, method: Method, model: Option<&Model>, seed: u64) -> Result<BTreeMap<u32, f64>> {
    match method {
        Method::Model => {
            let model = model.ok_or_else(|| Error::Config("method `ours` needs a model".into()))?;
            bug.lines
                .iter()
                .zip(&bug.vectors)
                .map(|(&l, v)| Ok((l, model.predict_proba(v).map_err(|e| e.in_bug(&bug.bug_id))?)))
                .collect()
        }
        Method::Random => Ok(bug
            .lines
            .iter()
            .map(|&l| (l, random_score(seed, &bug.bug_id, l)))
            .collect()),
        Method::Ochiai | Method::DStar2 | Method::Tarantula => {
            let formula = bug.formula.as_ref().ok_or_else(|| {
                Error::Config(format!(
                    "method {method} needs formula features (include the formula group)"
                ))
            })?;
            Ok(formula
                .iter()
                .map(|(&l, s)| {
                    let v = match method {
                        Method::Ochiai => s.ochiai,
                        Method::DStar2 => s.dstar2,
                        _ => s.tarantula,
                    };
                    (l, v)
                })
                .collect())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodResult {
    pub report: MetricsReport,
    pub bugs: Vec<RankedBug>,
}

/// Ranks and evaluates each method on the same bug set. Bugs without any
/// ground-truth line are skipped and listed in the second return value.
pub fn evaluate_methods(
    bugs: &[EvalBug],
    methods: &[Method],
    model: Option<&Model>,
    seed: u64,
) -> Result<(Vec<MethodResult>, Vec<String>)> {
    let (usable, skipped): (Vec<&EvalBug>, Vec<&EvalBug>) =
        bugs.iter().partition(|b| !b.buggy_lines.is_empty() && !b.lines.is_empty());
    let skipped = skipped.into_iter().map(|b| b.bug_id.clone()).collect();
    let results = methods
        .iter()
        .map(|&method| {
            let ranked: Vec<RankedBug> = usable
                .par_iter()
                .map(|b| {
                    let scores = method_scores(b, method, model, seed)?;
                    RankedBug::new(b.bug_id.clone(), &scores, b.buggy_lines.clone())
                })
                .collect::<Result<_>>()?;
            let report = evaluate(method.as_str(), &ranked)?;
            Ok(MethodResult { report, bugs: ranked })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((results, skipped))
}

/// Per-bug ranks as CSV: `method,bug_id,first_rank,avg_rank,unranked`.
pub fn write_bug_ranks<W: std::io::Write>(out: W, results: &[MethodResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::parse("rank output", e);
    w.write_record(["method", "bug_id", "first_rank", "avg_rank", "unranked"]).map_err(csv_err)?;
    for r in results {
        for b in &r.bugs {
            w.write_record([
                r.report.method.as_str(),
                b.bug_id.as_str(),
                &b.first_rank.to_string(),
                &b.avg_rank.to_string(),
                if b.unranked { "1" } else { "0" },
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| Error::io("rank output", e))
}

/// Fixed-width text table, one row per report.
pub fn format_reports(reports: &[&MetricsReport]) -> String {
    let mut s = format!("{:<10} {:>5} {:>8} {:>8}", "method", "bugs", "MFR", "MAR");
    for k in crate::evalrank::TOP_N {
        s += &format!(" {:>7}", format!("Top-{k}"));
    }
    s.push('\n');
    for r in reports {
        s += &format!("{:<10} {:>5} {:>8.3} {:>8.3}", r.method, r.bug_count, r.mfr, r.mar);
        for k in crate::evalrank::TOP_N {
            s += &format!(" {:>6.1}%", r.top.get(&k).copied().unwrap_or(0.0) * 100.0);
        }
        s.push('\n');
    }
    s
}
