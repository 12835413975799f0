//! Do cue values change before braking starts, or with it?
//!
//! Cue values at fixed lags before onset are compared to the onset values
//! with a paired t-test (two-sided) and Cohen's D on the paired differences
//! (`onset - lagged`, sample standard deviation). A cue that shows a
//! significant medium-to-large change (`|D| > 0.5`) at an early lag precedes
//! deceleration; otherwise it co-occurs with it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::{DecelerationEvent, LaggedFeatures};
use crate::kinematics::{Cue, KinematicFeatures};
use crate::stats;

pub const DEFAULT_LAGS_S: [f64; 3] = [-5.0, -3.0, -1.0];
pub const ALPHA: f64 = 0.05;
/// |D| above this is a medium-to-large effect.
pub const MEDIUM_EFFECT: f64 = 0.5;
/// |D| below this is negligible.
pub const SMALL_EFFECT: f64 = 0.2;
/// Lags at or before this count as early for the precedence verdict.
const EARLY_LAG_S: f64 = -3.0;

#[derive(Debug, Error, PartialEq)]
pub enum TemporalError {
    #[error("paired test needs at least 2 pairs, got {0}")]
    TooFewPairs(usize),
    #[error("paired samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
}

/// Cue values at each lag (negative seconds) relative to `onset_index`
/// inside the same segment. Lag 0 is the onset itself.
pub fn extract_lagged(
    features: &[KinematicFeatures],
    onset_index: usize,
    lags_s: &[f64],
    frame_interval: f64,
) -> Vec<LaggedFeatures> {
    lags_s
        .iter()
        .map(|&lag_s| {
            let back = (-lag_s / frame_interval).round() as i64;
            let idx = onset_index as i64 - back;
            let features = (idx >= 0 && (idx as usize) < features.len())
                .then(|| features[idx as usize]);
            LaggedFeatures { lag_s, features }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedTest {
    pub n: usize,
    pub mean_diff: f64,
    pub sd_diff: f64,
    /// `None` when every difference is identical (zero spread).
    pub t: Option<f64>,
    pub df: f64,
    pub p: f64,
    pub degenerate: bool,
}

/// Paired t-test on `onset - lagged`.
pub fn paired_t_test(lagged: &[f64], onset: &[f64]) -> Result<PairedTest, TemporalError> {
    if lagged.len() != onset.len() {
        return Err(TemporalError::LengthMismatch(lagged.len(), onset.len()));
    }
    let diffs: Vec<f64> = onset.iter().zip(lagged).map(|(o, l)| o - l).collect();
    paired_t_test_diffs(&diffs)
}

pub fn paired_t_test_diffs(diffs: &[f64]) -> Result<PairedTest, TemporalError> {
    let n = diffs.len();
    if n < 2 {
        return Err(TemporalError::TooFewPairs(n));
    }
    let mean_diff = stats::mean(diffs);
    let sd_diff = stats::sample_sd(diffs);
    let df = (n - 1) as f64;
    if sd_diff == 0.0 {
        return Ok(PairedTest {
            n,
            mean_diff,
            sd_diff,
            t: None,
            df,
            p: if mean_diff != 0.0 { 0.0 } else { 1.0 },
            degenerate: true,
        });
    }
    let d = mean_diff / sd_diff;
    let t = d * (n as f64).sqrt();
    Ok(PairedTest {
        n,
        mean_diff,
        sd_diff,
        t: Some(t),
        df,
        p: stats::student_t_two_sided_p(t, df),
        degenerate: false,
    })
}

/// Cohen's D for paired differences: mean / sample sd. `None` when the
/// differences have zero spread.
pub fn cohens_d_paired(diffs: &[f64]) -> Result<Option<f64>, TemporalError> {
    if diffs.len() < 2 {
        return Err(TemporalError::TooFewPairs(diffs.len()));
    }
    let sd = stats::sample_sd(diffs);
    Ok((sd != 0.0).then(|| stats::mean(diffs) / sd))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Magnitude {
    Negligible,
    Small,
    MediumToLarge,
}

pub fn classify_magnitude(d: f64) -> Magnitude {
    let d = d.abs();
    if d > MEDIUM_EFFECT {
        Magnitude::MediumToLarge
    } else if d >= SMALL_EFFECT {
        Magnitude::Small
    } else {
        Magnitude::Negligible
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagCell {
    pub feature: Cue,
    pub lag_s: f64,
    pub n_pairs: usize,
    pub available: bool,
    pub mean_at_lag: Option<f64>,
    pub mean_at_onset: Option<f64>,
    pub t_statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub cohens_d: Option<f64>,
    pub significant: bool,
    pub magnitude: Option<Magnitude>,
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Precedence {
    Precedes,
    CoOccurs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVerdict {
    pub feature: Cue,
    pub classification: Precedence,
}

/// Leader-braking flag activation rate at a lag (reported descriptively).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagRate {
    pub lag_s: f64,
    pub n: usize,
    pub activation_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagTable {
    pub events: usize,
    pub cells: Vec<LagCell>,
    pub verdicts: Vec<FeatureVerdict>,
    pub leader_braking: Vec<FlagRate>,
}

impl LagTable {
    pub fn cell(&self, feature: Cue, lag_s: f64) -> Option<&LagCell> {
        self.cells
            .iter()
            .find(|c| c.feature == feature && (c.lag_s - lag_s).abs() < 1e-9)
    }

    pub fn verdict(&self, feature: Cue) -> Option<Precedence> {
        self.verdicts
            .iter()
            .find(|v| v.feature == feature)
            .map(|v| v.classification)
    }
}

fn lag_cell(events: &[DecelerationEvent], feature: Cue, lag_s: f64) -> LagCell {
    let mut lagged = Vec::new();
    let mut onset = Vec::new();
    for e in events {
        if let Some(l) = e.lagged_at(lag_s) {
            let (lv, ov) = (feature.value(l), feature.value(&e.onset_features));
            if lv.is_finite() && ov.is_finite() {
                lagged.push(lv);
                onset.push(ov);
            }
        }
    }
    let n_pairs = lagged.len();
    let mut cell = LagCell {
        feature,
        lag_s,
        n_pairs,
        available: false,
        mean_at_lag: (n_pairs > 0).then(|| stats::mean(&lagged)),
        mean_at_onset: (n_pairs > 0).then(|| stats::mean(&onset)),
        t_statistic: None,
        p_value: None,
        cohens_d: None,
        significant: false,
        magnitude: None,
        degenerate: false,
    };
    if n_pairs < 2 {
        return cell;
    }
    let diffs: Vec<f64> = onset.iter().zip(&lagged).map(|(o, l)| o - l).collect();
    let test = paired_t_test_diffs(&diffs).expect("n_pairs >= 2");
    let d = cohens_d_paired(&diffs).expect("n_pairs >= 2");
    cell.available = true;
    cell.t_statistic = test.t;
    cell.p_value = Some(test.p);
    cell.cohens_d = d;
    cell.degenerate = test.degenerate;
    cell.significant = !test.degenerate && test.p < ALPHA;
    cell.magnitude = d.map(classify_magnitude);
    cell
}

/// Full cue-by-lag table for events that already carry lagged features.
pub fn precedence_report(events: &[DecelerationEvent], lags_s: &[f64]) -> LagTable {
    let mut cells = Vec::new();
    for &feature in &Cue::CONTINUOUS {
        for &lag in lags_s {
            cells.push(lag_cell(events, feature, lag));
        }
    }
    let verdicts = Cue::CONTINUOUS
        .iter()
        .map(|&feature| {
            let precedes = cells.iter().any(|c| {
                c.feature == feature
                    && c.lag_s <= EARLY_LAG_S + 1e-9
                    && c.significant
                    && c.magnitude == Some(Magnitude::MediumToLarge)
            });
            FeatureVerdict {
                feature,
                classification: if precedes {
                    Precedence::Precedes
                } else {
                    Precedence::CoOccurs
                },
            }
        })
        .collect();
    let mut flag_lags: Vec<f64> = lags_s.to_vec();
    flag_lags.push(0.0);
    let leader_braking = flag_lags
        .iter()
        .map(|&lag_s| {
            let flags: Vec<f64> = events
                .iter()
                .filter_map(|e| e.lagged_at(lag_s))
                .map(|f| f64::from(f.leader_braking_flag))
                .collect();
            FlagRate {
                lag_s,
                n: flags.len(),
                activation_rate: (!flags.is_empty()).then(|| stats::mean(&flags)),
            }
        })
        .collect();
    LagTable {
        events: events.len(),
        cells,
        verdicts,
        leader_braking,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnsetStat {
    pub feature: Cue,
    #[serde(with = "crate::report::nonfinite")]
    pub mean: f64,
    #[serde(with = "crate::report::nonfinite")]
    pub median: f64,
}

/// Mean and median of each cue at onset (undefined values skipped).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnsetProfile {
    pub events: usize,
    pub stats: Vec<OnsetStat>,
}

pub fn onset_profile(events: &[DecelerationEvent]) -> OnsetProfile {
    let stats = Cue::ALL
        .iter()
        .map(|&feature| {
            let v: Vec<f64> = events
                .iter()
                .map(|e| feature.value(&e.onset_features))
                .filter(|x| x.is_finite())
                .collect();
            OnsetStat {
                feature,
                mean: stats::mean(&v),
                median: stats::median(&v),
            }
        })
        .collect();
    OnsetProfile {
        events: events.len(),
        stats,
    }
}
