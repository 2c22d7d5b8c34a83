//! Tie-broken line ranking, MFR / MAR / Top-N metrics and baseline scorers.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::spectra::SpectraRow;

pub const TOP_N: [usize; 3] = [1, 3, 5];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankedLine {
    pub line: u32,
    pub score: f64,
    pub rank: usize,
}

/// Sorts by descending score; equal scores keep ascending line order.
pub fn rank_lines(scores: &BTreeMap<u32, f64>) -> Result<Vec<RankedLine>> {
    if scores.is_empty() {
        return Err(Error::Data("cannot rank an empty score map".into()));
    }
    if let Some((line, s)) = scores.iter().find(|(_, s)| !s.is_finite()) {
        return Err(Error::Data(format!("non-finite score {s} for line {line}")));
    }
    let mut entries: Vec<(u32, f64)> = scores.iter().map(|(&l, &s)| (l, s)).collect();
    // stable sort over line-ordered input keeps the tie rule; scores are finite
    entries.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite scores"));
    Ok(entries
        .into_iter()
        .enumerate()
        .map(|(i, (line, score))| RankedLine {
            line,
            score,
            rank: i + 1,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedBug {
    pub bug_id: String,
    pub ranked: Vec<RankedLine>,
    pub buggy_lines: BTreeSet<u32>,
    pub first_rank: f64,
    pub avg_rank: f64,
    /// True when no ground-truth buggy line was among the ranked lines.
    pub unranked: bool,
}

impl RankedBug {
    pub fn new(bug_id: impl Into<String>, scores: &BTreeMap<u32, f64>, buggy_lines: BTreeSet<u32>) -> Result<Self> {
        let bug_id = bug_id.into();
        if buggy_lines.is_empty() {
            return Err(Error::Data(format!("bug {bug_id} has no buggy lines")));
        }
        let ranked = rank_lines(scores).map_err(|e| e.in_bug(&bug_id))?;
        let buggy_ranks: Vec<usize> = ranked
            .iter()
            .filter(|r| buggy_lines.contains(&r.line))
            .map(|r| r.rank)
            .collect();
        let (first_rank, avg_rank, unranked) = if buggy_ranks.is_empty() {
            let penalty = (ranked.len() + 1) as f64;
            (penalty, penalty, true)
        } else {
            let first = *buggy_ranks.iter().min().expect("non-empty") as f64;
            let avg = buggy_ranks.iter().sum::<usize>() as f64 / buggy_ranks.len() as f64;
            (first, avg, false)
        };
        Ok(Self {
            bug_id,
            ranked,
            buggy_lines,
            first_rank,
            avg_rank,
            unranked,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub method: String,
    pub bug_count: usize,
    #[serde(rename = "MFR")]
    pub mfr: f64,
    #[serde(rename = "MAR")]
    pub mar: f64,
    pub top: BTreeMap<usize, f64>,
    pub unranked_buggy_bugs: Vec<String>,
}

pub fn evaluate(method: &str, bugs: &[RankedBug]) -> Result<MetricsReport> {
    if bugs.is_empty() {
        return Err(Error::Data("no bugs to evaluate".into()));
    }
    let n = bugs.len() as f64;
    let mfr = bugs.iter().map(|b| b.first_rank).sum::<f64>() / n;
    let mar = bugs.iter().map(|b| b.avg_rank).sum::<f64>() / n;
    let top = TOP_N
        .iter()
        .map(|&k| {
            let hits = bugs
                .iter()
                .filter(|b| !b.unranked && b.first_rank <= k as f64)
                .count();
            (k, hits as f64 / n)
        })
        .collect();
    Ok(MetricsReport {
        method: method.to_string(),
        bug_count: bugs.len(),
        mfr,
        mar,
        top,
        unranked_buggy_bugs: bugs
            .iter()
            .filter(|b| b.unranked)
            .map(|b| b.bug_id.clone())
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    Model,
    Ochiai,
    DStar2,
    Tarantula,
    Random,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Model,
        Method::Ochiai,
        Method::DStar2,
        Method::Tarantula,
        Method::Random,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Model => "ours",
            Method::Ochiai => "ochiai",
            Method::DStar2 => "dstar2",
            Method::Tarantula => "tarantula",
            Method::Random => "random",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ours" | "model" | "gbm" => Ok(Method::Model),
            "ochiai" => Ok(Method::Ochiai),
            "dstar2" | "dstar" => Ok(Method::DStar2),
            "tarantula" => Ok(Method::Tarantula),
            "random" => Ok(Method::Random),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

/// Uniform `[0, 1)` score determined by `(seed, bug_id, line)` alone.
pub fn random_score(seed: u64, bug_id: &str, line: u32) -> f64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(bug_id.as_bytes());
    h.update([0u8]);
    h.update(line.to_le_bytes());
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key).gen::<f64>()
}

/// Formula or random scores for every spectra row. `Method::Model` has no
/// baseline and yields an error.
pub fn baseline_scores(bug_id: &str, rows: &[SpectraRow], method: Method, seed: u64) -> Result<BTreeMap<u32, f64>> {
    let pick: fn(&SpectraRow) -> f64 = match method {
        Method::Ochiai => |r| r.scores.ochiai,
        Method::DStar2 => |r| r.scores.dstar2,
        Method::Tarantula => |r| r.scores.tarantula,
        Method::Random => {
            return Ok(rows
                .iter()
                .map(|r| (r.line, random_score(seed, bug_id, r.line)))
                .collect())
        }
        Method::Model => {
            return Err(Error::Config("the model is not a baseline scorer".into()));
        }
    };
    Ok(rows.iter().map(|r| (r.line, pick(r))).collect())
}
