//! Named feature schema and sliding-window context vectors.
//!
//! Base features are laid out per line in a fixed catalog order. A window
//! of odd size `w` centered on a focal line concatenates the base vectors
//! of lines `l - w/2 ..= l + w/2`; slots without a vector are filled with
//! the pad value. Spectral features additionally get `_min`/`_max` over
//! the non-padding members of the window.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowlex::{FlowRow, FlowStats, LexRow, KEYWORDS};
use crate::spectra::SpectraRow;

pub const DEFAULT_WINDOW: usize = 3;
pub const DEFAULT_PAD: f64 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureGroup {
    Spectral,
    Formula,
    Flow,
    Lexical,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 4] = [
        FeatureGroup::Spectral,
        FeatureGroup::Formula,
        FeatureGroup::Flow,
        FeatureGroup::Lexical,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureGroup::Spectral => "spectral",
            FeatureGroup::Formula => "formula",
            FeatureGroup::Flow => "flow",
            FeatureGroup::Lexical => "lexical",
        }
    }
}

impl fmt::Display for FeatureGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "spectral" => Ok(FeatureGroup::Spectral),
            "formula" | "formulae" => Ok(FeatureGroup::Formula),
            "flow" | "path" | "paths" => Ok(FeatureGroup::Flow),
            "lexical" => Ok(FeatureGroup::Lexical),
            other => Err(Error::Config(format!("unknown feature group {other:?}"))),
        }
    }
}

/// Non-empty set of feature groups to include.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroupMask(BTreeSet<FeatureGroup>);

impl GroupMask {
    pub fn new(groups: impl IntoIterator<Item = FeatureGroup>) -> Result<Self> {
        let set: BTreeSet<_> = groups.into_iter().collect();
        if set.is_empty() {
            return Err(Error::Config("group mask must include at least one group".into()));
        }
        Ok(Self(set))
    }

    pub fn all() -> Self {
        Self(FeatureGroup::ALL.into_iter().collect())
    }

    /// All groups except `omit`; errors if that leaves nothing.
    pub fn without(omit: &[FeatureGroup]) -> Result<Self> {
        Self::new(FeatureGroup::ALL.into_iter().filter(|g| !omit.contains(g)))
    }

    pub fn contains(&self, group: FeatureGroup) -> bool {
        self.0.contains(&group)
    }

    pub fn groups(&self) -> impl Iterator<Item = FeatureGroup> + '_ {
        self.0.iter().copied()
    }
}

impl Default for GroupMask {
    fn default() -> Self {
        Self::all()
    }
}

impl FromStr for GroupMask {
    type Err = Error;

    /// Comma-separated group names, or `all`.
    fn from_str(s: &str) -> Result<Self> {
        if s.trim() == "all" {
            return Ok(Self::all());
        }
        let groups = s
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(str::parse)
            .collect::<Result<Vec<_>>>()?;
        Self::new(groups)
    }
}

impl fmt::Display for GroupMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.0.iter().map(|g| g.as_str()).collect();
        f.write_str(&names.join(","))
    }
}

/// Base feature names in catalog order, with their group.
pub fn base_catalog() -> Vec<(String, FeatureGroup)> {
    let mut out: Vec<(String, FeatureGroup)> = [
        "e_p",
        "e_f",
        "n_p",
        "n_f",
        "total_pass",
        "total_fail",
        "count_pass",
        "count_fail",
        "exec_pass_norm",
        "exec_fail_norm",
        "pass_rate",
        "fail_rate",
    ]
    .into_iter()
    .map(|n| (n.to_string(), FeatureGroup::Spectral))
    .collect();
    for n in ["ochiai", "dstar2", "tarantula"] {
        out.push((n.to_string(), FeatureGroup::Formula));
    }
    for side in ["pass", "fail"] {
        for stat in [
            "diff_min",
            "diff_max",
            "diff_mean",
            "diff_median",
            "num_paths_in",
            "num_paths_out",
        ] {
            out.push((format!("{stat}_{side}"), FeatureGroup::Flow));
        }
    }
    for kw in KEYWORDS {
        out.push((format!("kw_{kw}"), FeatureGroup::Lexical));
    }
    out
}

fn spectral_values(row: &SpectraRow) -> [f64; 12] {
    let c = row.counters;
    [
        f64::from(c.e_p),
        f64::from(c.e_f),
        f64::from(c.n_p()),
        f64::from(c.n_f()),
        f64::from(c.total_pass),
        f64::from(c.total_fail),
        row.count_pass as f64,
        row.count_fail as f64,
        row.exec_pass_norm,
        row.exec_fail_norm,
        row.pass_rate,
        row.fail_rate,
    ]
}

fn flow_values(stats: &FlowStats) -> [f64; 6] {
    [
        stats.diff_min,
        stats.diff_max,
        stats.diff_mean,
        stats.diff_median,
        stats.num_paths_in,
        stats.num_paths_out,
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    /// `(base_name, group)` in layout order.
    pub base: Vec<(String, FeatureGroup)>,
    pub window: usize,
    pub pad_value: f64,
}

impl FeatureSchema {
    pub fn new(mask: &GroupMask, window: usize, pad_value: f64) -> Result<Self> {
        if window == 0 || window % 2 == 0 {
            return Err(Error::Config(format!(
                "window size must be odd and positive, got {window}"
            )));
        }
        if !pad_value.is_finite() {
            return Err(Error::Config("pad value must be finite".into()));
        }
        let base = base_catalog()
            .into_iter()
            .filter(|(_, g)| mask.contains(*g))
            .collect();
        Ok(Self {
            base,
            window,
            pad_value,
        })
    }

    pub fn half_width(&self) -> i64 {
        (self.window / 2) as i64
    }

    pub fn offsets(&self) -> impl Iterator<Item = i64> {
        let h = self.half_width();
        -h..=h
    }

    pub fn base_len(&self) -> usize {
        self.base.len()
    }

    pub fn spectral_indices(&self) -> Vec<usize> {
        self.base
            .iter()
            .enumerate()
            .filter(|(_, (_, g))| *g == FeatureGroup::Spectral)
            .map(|(i, _)| i)
            .collect()
    }

    /// `w·n + 2·m`.
    pub fn context_len(&self) -> usize {
        self.window * self.base_len() + 2 * self.spectral_indices().len()
    }

    pub fn mask(&self) -> Result<GroupMask> {
        GroupMask::new(self.base.iter().map(|(_, g)| *g))
    }

    /// Column names in `ContextVector::values` order.
    pub fn feature_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.context_len());
        for off in self.offsets() {
            for (name, _) in &self.base {
                names.push(format!("{name}{off}"));
            }
        }
        for idx in self.spectral_indices() {
            let name = &self.base[idx].0;
            names.push(format!("{name}_min"));
            names.push(format!("{name}_max"));
        }
        names
    }

    /// Recovers the schema from a list of column names. The names must be
    /// exactly what [`FeatureSchema::feature_names`] would produce.
    pub fn from_feature_names(names: &[String], pad_value: f64) -> Result<Self> {
        let catalog = base_catalog();
        let mut bases = BTreeSet::new();
        let mut max_offset = 0i64;
        for name in names {
            match parse_feature_name(name, &catalog)? {
                (base, Level::Offset(off)) => {
                    bases.insert(base);
                    max_offset = max_offset.max(off.abs());
                }
                (base, _) => {
                    bases.insert(base);
                }
            }
        }
        let base: Vec<(String, FeatureGroup)> = catalog
            .into_iter()
            .filter(|(n, _)| bases.contains(n))
            .collect();
        let window = 2 * max_offset as usize + 1;
        let schema = Self {
            base,
            window,
            pad_value,
        };
        if schema.base.is_empty() || schema.feature_names() != names {
            return Err(Error::Schema(
                "feature names do not form a complete window schema".into(),
            ));
        }
        Ok(schema)
    }

    /// Short, stable digest of the column layout.
    pub fn fingerprint(&self) -> String {
        fingerprint_names(&self.feature_names())
    }
}

pub fn fingerprint_names(names: &[String]) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    for name in names {
        hasher.update(name.as_bytes());
        hasher.update(b"\n");
    }
    hex::encode(&hasher.finalize()[..8])
}

/// Position of a feature within the window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Level {
    Offset(i64),
    Min,
    Max,
}

impl Level {
    pub fn label(self) -> String {
        match self {
            Level::Offset(o) => o.to_string(),
            Level::Min => "min".into(),
            Level::Max => "max".into(),
        }
    }

    pub fn describe(self) -> String {
        match self {
            Level::Offset(0) => "Focal Line".into(),
            Level::Offset(-1) => "Preceding Line".into(),
            Level::Offset(1) => "Succeeding Line".into(),
            Level::Offset(o) if o < 0 => format!("Preceding Line {}", -o),
            Level::Offset(o) => format!("Succeeding Line {o}"),
            Level::Min => "Min".into(),
            Level::Max => "Max".into(),
        }
    }
}

/// Splits a column name into its base feature and window level.
pub fn parse_feature_name(name: &str, catalog: &[(String, FeatureGroup)]) -> Result<(String, Level)> {
    for (base, group) in catalog {
        let Some(rest) = name.strip_prefix(base.as_str()) else {
            continue;
        };
        if *group == FeatureGroup::Spectral {
            if rest == "_min" {
                return Ok((base.clone(), Level::Min));
            }
            if rest == "_max" {
                return Ok((base.clone(), Level::Max));
            }
        }
        let digits = rest.strip_prefix('-').unwrap_or(rest);
        if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) && (rest == "0" || !digits.starts_with('0')) {
            if let Ok(off) = rest.parse::<i64>() {
                return Ok((base.clone(), Level::Offset(off)));
            }
        }
    }
    Err(Error::Schema(format!("unrecognized feature name {name:?}")))
}

/// Fills per-line base vectors in schema order for every line with a spectra row.
pub fn assemble_rows(
    spectra: &[SpectraRow],
    flow: &[FlowRow],
    lex: &[LexRow],
    schema: &FeatureSchema,
) -> Result<BTreeMap<u32, Vec<f64>>> {
    let catalog = base_catalog();
    let positions: Vec<usize> = schema
        .base
        .iter()
        .map(|(name, group)| {
            catalog
                .iter()
                .position(|(n, g)| n == name && g == group)
                .ok_or_else(|| Error::Config(format!("schema feature {name:?} is not in the catalog")))
        })
        .collect::<Result<_>>()?;

    let flow_by_line: BTreeMap<u32, &FlowRow> = flow.iter().map(|r| (r.line, r)).collect();
    let lex_by_line: BTreeMap<u32, &LexRow> = lex.iter().map(|r| (r.line, r)).collect();
    let pad = schema.pad_value;

    let mut out = BTreeMap::new();
    for row in spectra {
        let mut full = Vec::with_capacity(catalog.len());
        full.extend(spectral_values(row));
        let s = row.scores;
        full.extend([s.ochiai, s.dstar2, s.tarantula]);
        match flow_by_line.get(&row.line) {
            Some(f) => {
                full.extend(flow_values(&f.pass));
                full.extend(flow_values(&f.fail));
            }
            None => full.extend([pad; 12]),
        }
        match lex_by_line.get(&row.line) {
            Some(l) => full.extend(l.keywords.iter().map(|&b| if b { 1.0 } else { 0.0 })),
            None => full.extend([pad; KEYWORDS.len()]),
        }
        debug_assert_eq!(full.len(), catalog.len());
        out.insert(row.line, positions.iter().map(|&i| full[i]).collect());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextVector {
    pub bug_id: String,
    pub line: u32,
    pub values: Vec<f64>,
    pub label: u8,
}

/// Builds one context vector per line in `base_vectors`, ascending by line.
pub fn contextualize(
    bug_id: &str,
    base_vectors: &BTreeMap<u32, Vec<f64>>,
    buggy_lines: &BTreeSet<u32>,
    schema: &FeatureSchema,
) -> Vec<ContextVector> {
    let n = schema.base_len();
    let spectral = schema.spectral_indices();
    let pad = schema.pad_value;

    base_vectors
        .keys()
        .map(|&focal| {
            let mut values = Vec::with_capacity(schema.context_len());
            let mut mins = vec![f64::INFINITY; spectral.len()];
            let mut maxs = vec![f64::NEG_INFINITY; spectral.len()];
            for off in schema.offsets() {
                let neighbor = i64::from(focal) + off;
                let vector = u32::try_from(neighbor).ok().and_then(|l| base_vectors.get(&l));
                match vector {
                    Some(v) => {
                        debug_assert_eq!(v.len(), n);
                        values.extend_from_slice(v);
                        for (k, &idx) in spectral.iter().enumerate() {
                            mins[k] = mins[k].min(v[idx]);
                            maxs[k] = maxs[k].max(v[idx]);
                        }
                    }
                    None => values.extend(std::iter::repeat(pad).take(n)),
                }
            }
            for k in 0..spectral.len() {
                // the focal line is always present, so these are finite
                values.push(if mins[k].is_finite() { mins[k] } else { pad });
                values.push(if maxs[k].is_finite() { maxs[k] } else { pad });
            }
            ContextVector {
                bug_id: bug_id.to_string(),
                line: focal,
                values,
                label: u8::from(buggy_lines.contains(&focal)),
            }
        })
        .collect()
}
