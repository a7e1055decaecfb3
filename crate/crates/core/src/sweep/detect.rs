use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::HeatmapResult;
use crate::decode::Strategy;

/// Thresholds of the ramp-up and saturation rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RampSatThresholds {
    /// Minimum memorized fraction at a ramp-up point.
    pub tau_r: f64,
    /// Minimum growth over the previous duplicity at a ramp-up point.
    pub growth_factor: f64,
    /// Memorized fraction that counts as saturated.
    pub tau_s: f64,
    /// Largest later gain that still counts as a plateau.
    pub epsilon: f64,
}

impl Default for RampSatThresholds {
    fn default() -> Self {
        Self {
            tau_r: 0.10,
            growth_factor: 2.0,
            tau_s: 0.90,
            epsilon: 0.02,
        }
    }
}

/// First duplicity `d` (after the first point) whose fraction is at least
/// `tau_r` and at least `growth_factor` times the previous point's.
pub fn detect_rampup(series: &[(u32, f64)], tau_r: f64, growth_factor: f64) -> Option<u32> {
    series
        .windows(2)
        .find(|w| w[1].1 >= tau_r && w[1].1 >= growth_factor * w[0].1)
        .map(|w| w[1].0)
}

/// First duplicity whose fraction is at least `tau_s`, or after which no
/// later point gains `epsilon` or more. The last point alone never counts as
/// a plateau.
pub fn detect_saturation(series: &[(u32, f64)], tau_s: f64, epsilon: f64) -> Option<u32> {
    series.iter().enumerate().find_map(|(i, &(d, f))| {
        let later = &series[i + 1..];
        let plateau = !later.is_empty() && later.iter().all(|&(_, g)| g - f < epsilon);
        (f >= tau_s || plateau).then_some(d)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RampSatEntry {
    pub setting: Strategy,
    pub ramp_up: Option<u32>,
    pub saturation: Option<u32>,
    /// `(duplicity, fraction)` pairs the rules were applied to.
    pub series: Vec<(u32, f64)>,
}

/// Applies both rules to every column of a per-duplicity heatmap (bin width
/// 1). Saturation is searched from the ramp-up point on when there is one,
/// so a reported saturation never precedes the ramp-up.
pub fn ramp_sat_report(per_duplicity: &HeatmapResult, t: &RampSatThresholds) -> Vec<RampSatEntry> {
    per_duplicity
        .cols
        .iter()
        .map(|&setting| {
            let series: Vec<(u32, f64)> = per_duplicity
                .column_series(setting)
                .into_iter()
                .map(|(bin, f)| (bin.lo, f))
                .collect();
            let ramp_up = detect_rampup(&series, t.tau_r, t.growth_factor);
            let from = ramp_up.map_or(0, |r| series.iter().position(|&(d, _)| d == r).unwrap());
            let saturation = detect_saturation(&series[from..], t.tau_s, t.epsilon);
            RampSatEntry {
                setting,
                ramp_up,
                saturation,
                series,
            }
        })
        .collect()
}
