//! Sustained deceleration episodes.
//!
//! An event is a maximal run of consecutive frames whose follower
//! acceleration is at or below a negative threshold, lasting at least a
//! minimum duration. Runs never cross a segment boundary (and so never a
//! leader change).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{SiteTag, TrajectorySegment, FRAME_INTERVAL_S};
use crate::kinematics::{KinematicFeatures, LEADER_BRAKING_THRESHOLD};
use crate::stats;

pub const CANONICAL_THRESHOLDS: [f64; 2] = [-0.5, -0.3];
pub const CANONICAL_DURATIONS: [f64; 4] = [1.0, 2.0, 3.0, 4.0];
/// Samples below this size are flagged as insufficient for analysis.
pub const MIN_RELIABLE_EVENTS: usize = 50;

const CONTEXT_WINDOW_S: f64 = 1.0;
const LEADER_INDUCED_TTC_S: f64 = 6.0;
const CLOSE_FOLLOWING_SPACING: f64 = 20.0;
const FREE_FLOW_SPACING: f64 = 50.0;

#[derive(Debug, Error, PartialEq)]
pub enum EventError {
    #[error("acceleration threshold must be negative, got {0}")]
    NonNegativeThreshold(f64),
    #[error("minimum duration must be positive, got {0}")]
    NonPositiveDuration(f64),
    #[error("no severity boundaries known for threshold {0}; supply them explicitly")]
    UnknownSeverityBounds(f64),
    #[error("segment has {observations} observations but {features} feature rows")]
    FeatureLengthMismatch { observations: usize, features: usize },
}

/// Severity classes by maximum deceleration: mild when `max >= mild_floor`,
/// hard when `max < hard_below`, moderate in between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeverityBounds {
    pub mild_floor: f64,
    pub hard_below: f64,
}

impl SeverityBounds {
    /// Threshold-specific boundaries for the two canonical thresholds.
    pub fn canonical(threshold: f64) -> Option<Self> {
        if (threshold - -0.5).abs() < 1e-9 {
            Some(SeverityBounds {
                mild_floor: -1.5,
                hard_below: -3.0,
            })
        } else if (threshold - -0.3).abs() < 1e-9 {
            Some(SeverityBounds {
                mild_floor: -1.0,
                hard_below: -2.0,
            })
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventConfig {
    pub accel_threshold: f64,
    pub min_duration: f64,
    pub frame_interval: f64,
    /// Frames above threshold tolerated inside a run; 0 means strict runs.
    #[serde(default)]
    pub dip_tolerance: usize,
    #[serde(default)]
    pub severity_bounds: Option<SeverityBounds>,
}

impl EventConfig {
    pub fn new(accel_threshold: f64, min_duration: f64) -> Result<Self, EventError> {
        let config = EventConfig {
            accel_threshold,
            min_duration,
            frame_interval: FRAME_INTERVAL_S,
            dip_tolerance: 0,
            severity_bounds: None,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), EventError> {
        if !(self.accel_threshold < 0.0) {
            return Err(EventError::NonNegativeThreshold(self.accel_threshold));
        }
        if !(self.min_duration > 0.0) {
            return Err(EventError::NonPositiveDuration(self.min_duration));
        }
        self.bounds().map(|_| ())
    }

    /// Minimum run length in frames.
    pub fn min_frames(&self) -> usize {
        ((self.min_duration / self.frame_interval) - 1e-9).ceil().max(1.0) as usize
    }

    pub fn bounds(&self) -> Result<SeverityBounds, EventError> {
        self.severity_bounds
            .or_else(|| SeverityBounds::canonical(self.accel_threshold))
            .ok_or(EventError::UnknownSeverityBounds(self.accel_threshold))
    }

    fn frames_for(&self, seconds: f64) -> usize {
        (seconds / self.frame_interval).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Mild,
    Moderate,
    Hard,
}

impl Severity {
    pub const ALL: [Severity; 3] = [Severity::Mild, Severity::Moderate, Severity::Hard];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Context {
    LeaderInduced,
    CloseFollowing,
    FreeFlow,
    Other,
}

impl Context {
    pub const ALL: [Context; 4] = [
        Context::LeaderInduced,
        Context::CloseFollowing,
        Context::FreeFlow,
        Context::Other,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentRef {
    pub segment_index: usize,
    pub site_tag: SiteTag,
    pub vehicle_id: i64,
    pub leader_id: i64,
}

/// Cue values at a fixed offset before onset; `None` when the segment does
/// not reach back that far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaggedFeatures {
    pub lag_s: f64,
    pub features: Option<KinematicFeatures>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecelerationEvent {
    pub segment: SegmentRef,
    pub onset_frame: i64,
    /// Position of the onset inside the segment.
    pub onset_index: usize,
    pub length_frames: usize,
    pub duration_s: f64,
    pub mean_decel: f64,
    pub max_decel: f64,
    pub severity: Severity,
    pub context: Context,
    pub onset_features: KinematicFeatures,
    pub onset_spacing: f64,
    pub ego_speed_onset: f64,
    pub leader_speed_onset: f64,
    #[serde(default)]
    pub lagged: Vec<LaggedFeatures>,
}

impl DecelerationEvent {
    pub fn lagged_at(&self, lag_s: f64) -> Option<&KinematicFeatures> {
        if lag_s == 0.0 {
            return Some(&self.onset_features);
        }
        self.lagged
            .iter()
            .find(|l| (l.lag_s - lag_s).abs() < 1e-9)
            .and_then(|l| l.features.as_ref())
    }
}

/// A segment together with its per-observation cue values.
#[derive(Debug, Clone, Copy)]
pub struct FeatureSegment<'a> {
    pub index: usize,
    pub segment: &'a TrajectorySegment,
    pub features: &'a [KinematicFeatures],
}

impl<'a> FeatureSegment<'a> {
    pub fn new(
        index: usize,
        segment: &'a TrajectorySegment,
        features: &'a [KinematicFeatures],
    ) -> Result<Self, EventError> {
        if segment.observations.len() != features.len() {
            return Err(EventError::FeatureLengthMismatch {
                observations: segment.observations.len(),
                features: features.len(),
            });
        }
        Ok(FeatureSegment {
            index,
            segment,
            features,
        })
    }

    fn reference(&self) -> SegmentRef {
        SegmentRef {
            segment_index: self.index,
            site_tag: self.segment.site_tag.clone(),
            vehicle_id: self.segment.vehicle_id,
            leader_id: self.segment.leader_id,
        }
    }
}

/// Frame runs `[start, end]` (inclusive) qualifying under `config`.
pub fn qualifying_runs(accelerations: &[f64], config: &EventConfig) -> Vec<(usize, usize)> {
    let hit = |a: f64| a <= config.accel_threshold;
    let mut runs = Vec::new();
    let mut i = 0;
    while i < accelerations.len() {
        if !hit(accelerations[i]) {
            i += 1;
            continue;
        }
        let start = i;
        let mut end = i;
        let mut j = i + 1;
        while j < accelerations.len() {
            if hit(accelerations[j]) {
                end = j;
                j += 1;
            } else if j - end <= config.dip_tolerance {
                j += 1;
            } else {
                break;
            }
        }
        runs.push((start, end));
        i = end + 1;
    }
    runs
}

pub fn classify_severity(max_decel: f64, config: &EventConfig) -> Result<Severity, EventError> {
    let b = config.bounds()?;
    Ok(if max_decel >= b.mild_floor {
        Severity::Mild
    } else if max_decel >= b.hard_below {
        Severity::Moderate
    } else {
        Severity::Hard
    })
}

/// Context at onset, checked in priority order: leader-induced, close
/// following, free flow, other. Only non-imputed TTC can satisfy the
/// leader-induced TTC clause.
pub fn label_context(
    seg: &FeatureSegment<'_>,
    onset_index: usize,
    config: &EventConfig,
) -> Context {
    let window = config.frames_for(CONTEXT_WINDOW_S);
    let from = onset_index.saturating_sub(window);
    let leader_braking = seg.segment.observations[from..=onset_index]
        .iter()
        .any(|o| o.leader_acceleration < LEADER_BRAKING_THRESHOLD);
    let onset = &seg.features[onset_index];
    let urgent = !onset.imputed_ttc && onset.ttc.is_some_and(|t| t < LEADER_INDUCED_TTC_S);
    let spacing = seg.segment.observations[onset_index].spacing;
    if leader_braking && urgent {
        Context::LeaderInduced
    } else if spacing < CLOSE_FOLLOWING_SPACING {
        Context::CloseFollowing
    } else if spacing > FREE_FLOW_SPACING && !leader_braking {
        Context::FreeFlow
    } else {
        Context::Other
    }
}

pub fn detect_events(
    seg: &FeatureSegment<'_>,
    config: &EventConfig,
) -> Result<Vec<DecelerationEvent>, EventError> {
    let obs = &seg.segment.observations;
    let accel: Vec<f64> = obs.iter().map(|o| o.follower.acceleration).collect();
    let min_frames = config.min_frames();
    let mut events = Vec::new();
    for (start, end) in qualifying_runs(&accel, config) {
        let len = end - start + 1;
        if len < min_frames {
            continue;
        }
        let run = &accel[start..=end];
        let max_decel = run.iter().copied().fold(f64::INFINITY, f64::min);
        let onset = &obs[start];
        events.push(DecelerationEvent {
            segment: seg.reference(),
            onset_frame: onset.timestamp_index,
            onset_index: start,
            length_frames: len,
            duration_s: len as f64 * config.frame_interval,
            mean_decel: stats::mean(run),
            max_decel,
            severity: classify_severity(max_decel, config)?,
            context: label_context(seg, start, config),
            onset_features: seg.features[start],
            onset_spacing: onset.spacing,
            ego_speed_onset: onset.follower.velocity,
            leader_speed_onset: onset.leader_velocity,
            lagged: Vec::new(),
        });
    }
    Ok(events)
}

// ---------------------------------------------------------------------------
// census

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeverityShare {
    pub severity: Severity,
    pub count: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensusCell {
    pub threshold: f64,
    pub min_duration: f64,
    pub events: usize,
    pub percent_valid_observations: f64,
    pub severity: Vec<SeverityShare>,
    pub insufficient: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventCensus {
    pub valid_observations: u64,
    pub min_reliable_events: usize,
    pub cells: Vec<CensusCell>,
}

impl EventCensus {
    pub fn cell(&self, threshold: f64, min_duration: f64) -> Option<&CensusCell> {
        self.cells.iter().find(|c| {
            (c.threshold - threshold).abs() < 1e-9 && (c.min_duration - min_duration).abs() < 1e-9
        })
    }
}

/// Event count, share of valid observations and severity mix per grid cell.
pub fn event_census(
    grid: &[(EventConfig, &[DecelerationEvent])],
    valid_observations: u64,
) -> EventCensus {
    let cells = grid
        .iter()
        .map(|(config, events)| {
            let n = events.len();
            let severity = Severity::ALL
                .iter()
                .map(|&s| {
                    let count = events.iter().filter(|e| e.severity == s).count();
                    SeverityShare {
                        severity: s,
                        count,
                        percent: if n == 0 { 0.0 } else { 100.0 * count as f64 / n as f64 },
                    }
                })
                .collect();
            CensusCell {
                threshold: config.accel_threshold,
                min_duration: config.min_duration,
                events: n,
                percent_valid_observations: if valid_observations == 0 {
                    0.0
                } else {
                    100.0 * n as f64 / valid_observations as f64
                },
                severity,
                insufficient: n < MIN_RELIABLE_EVENTS,
            }
        })
        .collect();
    EventCensus {
        valid_observations,
        min_reliable_events: MIN_RELIABLE_EVENTS,
        cells,
    }
}
