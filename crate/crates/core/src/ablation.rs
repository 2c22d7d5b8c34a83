//! Ablation runs over window size, feature groups and training-set size.
//!
//! Every setting is trained and evaluated `repeats` times; repeat `r` uses
//! split seed `split.seed + r` and training seed `hyperparams.seed + r`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::Serialize;

use crate::corpus::split::{split, subsample, SplitSpec};
use crate::error::{Error, Result};
use crate::evalrank::{MetricsReport, Method, TOP_N};
use crate::gbdt::{train, Hyperparams};
use crate::pipeline::{dataset_from_features, evaluate_methods, featurize_all, EvalBug, FeatureConfig};
use crate::trace::BugRecord;
use crate::window::{FeatureGroup, GroupMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationAxis {
    Window,
    Groups,
    TrainFraction,
}

impl AblationAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            AblationAxis::Window => "window",
            AblationAxis::Groups => "groups",
            AblationAxis::TrainFraction => "train_fraction",
        }
    }
}

impl fmt::Display for AblationAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AblationAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "window" => Ok(AblationAxis::Window),
            "groups" => Ok(AblationAxis::Groups),
            "train_fraction" | "train-fraction" => Ok(AblationAxis::TrainFraction),
            other => Err(Error::Config(format!("unknown ablation axis {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationSpec {
    pub axis: AblationAxis,
    pub features: FeatureConfig,
    pub hyperparams: Hyperparams,
    pub split: SplitSpec,
    pub repeats: usize,
    pub windows: Vec<usize>,
    pub fractions: Vec<f64>,
}

impl AblationSpec {
    pub fn new(axis: AblationAxis) -> Self {
        Self {
            axis,
            features: FeatureConfig::default(),
            hyperparams: Hyperparams::default(),
            split: SplitSpec::default(),
            repeats: 3,
            windows: vec![1, 3, 5, 7],
            fractions: (1..=10).map(|i| i as f64 / 10.0).collect(),
        }
    }
}

/// Mean with a normal-approximation 95% interval half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub ci95: f64,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let ci95 = if xs.len() < 2 {
            0.0
        } else {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            1.96 * var.sqrt() / n.sqrt()
        };
        Self { mean, ci95 }
    }
}

impl fmt::Display for Estimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3} ± {:.3}", self.mean, self.ci95)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub setting: String,
    #[serde(rename = "MFR")]
    pub mfr: Estimate,
    #[serde(rename = "MAR")]
    pub mar: Estimate,
    pub top: BTreeMap<usize, Estimate>,
    pub runs: Vec<MetricsReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationTable {
    pub axis: AblationAxis,
    pub repeats: usize,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn row(&self, setting: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.setting == setting)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<24} {:>17} {:>17}", self.axis.as_str(), "MFR", "MAR");
        for k in TOP_N {
            let _ = write!(out, " {:>8}", format!("Top-{k}"));
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "{:<24} {:>17} {:>17}", row.setting, row.mfr.to_string(), row.mar.to_string());
            for k in TOP_N {
                let _ = write!(out, " {:>7.1}%", row.top[&k].mean * 100.0);
            }
            out.push('\n');
        }
        out
    }
}

struct Setting {
    label: String,
    features: FeatureConfig,
    fraction: f64,
}

/// Table rows in the order they are reported.
fn settings(spec: &AblationSpec) -> Result<Vec<Setting>> {
    let base = &spec.features;
    let with_groups = |label: &str, groups: GroupMask| Setting {
        label: label.to_string(),
        features: FeatureConfig { groups, ..base.clone() },
        fraction: 1.0,
    };
    let out = match spec.axis {
        AblationAxis::Window => spec
            .windows
            .iter()
            .map(|&w| Setting {
                label: format!("w={w}"),
                features: FeatureConfig { window: w, ..base.clone() },
                fraction: 1.0,
            })
            .collect(),
        AblationAxis::Groups => {
            let mut rows = Vec::new();
            for g in FeatureGroup::ALL {
                rows.push(with_groups(&format!("no {g}"), GroupMask::without(&[g])?));
            }
            rows.push(with_groups(
                "no spectral+formula",
                GroupMask::without(&[FeatureGroup::Spectral, FeatureGroup::Formula])?,
            ));
            rows.push(with_groups("all", GroupMask::all()));
            rows
        }
        AblationAxis::TrainFraction => spec
            .fractions
            .iter()
            .map(|&f| {
                if f > 0.0 && f <= 1.0 {
                    Ok(Setting {
                        label: format!("{f:.2}"),
                        features: base.clone(),
                        fraction: f,
                    })
                } else {
                    Err(Error::Config(format!("training fraction must be in (0, 1], got {f}")))
                }
            })
            .collect::<Result<_>>()?,
    };
    Ok(out)
}

pub fn run_ablation(bugs: &[BugRecord], spec: &AblationSpec) -> Result<AblationTable> {
    if spec.repeats == 0 {
        return Err(Error::Config("repeats must be at least 1".into()));
    }
    spec.hyperparams.validate()?;
    let ids: Vec<String> = bugs.iter().map(|b| b.bug_id.clone()).collect();
    let mut rows = Vec::new();
    for setting in settings(spec)? {
        let schema = setting.features.schema()?;
        let features = featurize_all(bugs, &setting.features)?;
        let mut runs = Vec::with_capacity(spec.repeats);
        for r in 0..spec.repeats as u64 {
            let split_spec = SplitSpec { seed: spec.split.seed + r, ..spec.split };
            let (train_ids, val_ids) = split(&ids, &split_spec)?;
            let train_ids: BTreeSet<String> = if setting.fraction < 1.0 {
                subsample(&train_ids, setting.fraction, split_spec.seed)
            } else {
                train_ids
            }
            .into_iter()
            .collect();
            let val_ids: BTreeSet<String> = val_ids.into_iter().collect();

            let data = dataset_from_features(features.iter().filter(|f| train_ids.contains(&f.bug_id)), &schema)?;
            let hp = Hyperparams { seed: spec.hyperparams.seed + r, ..spec.hyperparams.clone() };
            let (model, _) = train(&data, &hp).map_err(|e| Error::Training(format!("{}: {e}", setting.label)))?;
            let eval: Vec<EvalBug> = features
                .iter()
                .filter(|f| val_ids.contains(&f.bug_id))
                .map(EvalBug::from)
                .collect();
            let (mut results, _) = evaluate_methods(&eval, &[Method::Model], Some(&model), split_spec.seed)?;
            runs.push(results.remove(0).report);
        }
        let collect = |f: &dyn Fn(&MetricsReport) -> f64| Estimate::from_samples(&runs.iter().map(f).collect::<Vec<_>>());
        rows.push(AblationRow {
            setting: setting.label,
            mfr: collect(&|m| m.mfr),
            mar: collect(&|m| m.mar),
            top: TOP_N.iter().map(|&k| (k, collect(&|m| m.top[&k]))).collect(),
            runs,
        });
    }
    Ok(AblationTable {
        axis: spec.axis,
        repeats: spec.repeats,
        rows,
    })
}
