//! Gain-based feature importance, per feature and per window level.

use std::collections::BTreeMap;

use serde::Serialize;

use super::booster::Model;
use crate::error::Result;
use crate::window::{parse_feature_name, FeatureSchema, Level};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureImportance {
    pub feature: String,
    pub gain: f64,
    pub relative: f64,
}

/// All features sorted by descending gain (ties keep column order).
pub fn feature_importance(model: &Model) -> Vec<FeatureImportance> {
    let max = model.feature_gain.iter().copied().fold(0.0, f64::max);
    let mut out: Vec<FeatureImportance> = model
        .feature_names
        .iter()
        .zip(&model.feature_gain)
        .map(|(name, &gain)| FeatureImportance {
            feature: name.clone(),
            gain,
            relative: if max > 0.0 { gain / max } else { 0.0 },
        })
        .collect();
    out.sort_by(|a, b| b.gain.total_cmp(&a.gain));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelImportance {
    #[serde(skip)]
    pub level: Level,
    /// `-1`, `0`, `1`, ..., `min`, `max`.
    pub label: String,
    pub description: String,
    pub avg_gain: f64,
    pub relative: f64,
}

/// Averages gains over the features of each window level, sorted by
/// descending average.
pub fn window_level_importance(
    importances: &[FeatureImportance],
    schema: &FeatureSchema,
) -> Result<Vec<LevelImportance>> {
    let mut sums: BTreeMap<Level, (f64, usize)> = BTreeMap::new();
    for off in schema.offsets() {
        sums.insert(Level::Offset(off), (0.0, 0));
    }
    if !schema.spectral_indices().is_empty() {
        sums.insert(Level::Min, (0.0, 0));
        sums.insert(Level::Max, (0.0, 0));
    }
    for imp in importances {
        let (_, level) = parse_feature_name(&imp.feature, &schema.base)?;
        let Some(entry) = sums.get_mut(&level) else {
            return Err(crate::error::Error::Schema(format!(
                "feature {} lies outside the window",
                imp.feature
            )));
        };
        entry.0 += imp.gain;
        entry.1 += 1;
    }
    let averages: Vec<(Level, f64)> = sums
        .into_iter()
        .map(|(level, (sum, n))| (level, if n > 0 { sum / n as f64 } else { 0.0 }))
        .collect();
    let max = averages.iter().map(|&(_, a)| a).fold(0.0, f64::max);
    let mut out: Vec<LevelImportance> = averages
        .into_iter()
        .map(|(level, avg)| LevelImportance {
            level,
            label: level.label(),
            description: level.describe(),
            avg_gain: avg,
            relative: if max > 0.0 { avg / max } else { 0.0 },
        })
        .collect();
    out.sort_by(|a, b| b.avg_gain.total_cmp(&a.avg_gain));
    Ok(out)
}
