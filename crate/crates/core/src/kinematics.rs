//! Per-observation kinematic cues and dataset-level summaries.
//!
//! For a follower at speed `v_ego` behind a leader at `v_leader`, `s` meters
//! ahead:
//!
//! | cue                   | value                                 |
//! |-----------------------|---------------------------------------|
//! | relative velocity     | `v_ego - v_leader` (positive = closing) |
//! | time-to-collision     | `s / v_rel`, only while closing       |
//! | gap closing rate      | equal to `v_rel`                      |
//! | required deceleration | `(v_ego^2 - v_leader^2) / (2 s)`      |
//! | leader braking flag   | 1 when leader acceleration < -0.5 m/s^2 |
//! | looming (TTC inverse) | `v_rel / s`, only while closing       |
//!
//! TTC and looming are undefined when `v_rel <= 0`; [`Imputer`] fills them
//! with the median of the defined values over the whole valid population.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::DyadObservation;
use crate::stats;

pub const LEADER_BRAKING_THRESHOLD: f64 = -0.5;

#[derive(Debug, Error, PartialEq)]
pub enum KinematicsError {
    #[error("spacing must be positive, got {0}")]
    NonPositiveSpacing(f64),
    #[error("no defined {0} values to impute from")]
    NothingToImpute(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinematicFeatures {
    pub v_rel: f64,
    pub ttc: Option<f64>,
    pub gap_closing_rate: f64,
    pub a_req: f64,
    pub leader_braking_flag: u8,
    pub ttc_inv: Option<f64>,
    #[serde(default)]
    pub imputed_ttc: bool,
    #[serde(default)]
    pub imputed_ttc_inv: bool,
}

/// The six cues, in their canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cue {
    VRel,
    Ttc,
    GapClosingRate,
    AReq,
    LeaderBrakingFlag,
    TtcInv,
}

impl Cue {
    pub const ALL: [Cue; 6] = [
        Cue::VRel,
        Cue::Ttc,
        Cue::GapClosingRate,
        Cue::AReq,
        Cue::LeaderBrakingFlag,
        Cue::TtcInv,
    ];

    /// Cues treated as continuous variables (the flag is binary).
    pub const CONTINUOUS: [Cue; 5] = [Cue::VRel, Cue::Ttc, Cue::GapClosingRate, Cue::AReq, Cue::TtcInv];

    pub fn name(self) -> &'static str {
        match self {
            Cue::VRel => "v_rel",
            Cue::Ttc => "ttc",
            Cue::GapClosingRate => "gap_closing_rate",
            Cue::AReq => "a_req",
            Cue::LeaderBrakingFlag => "leader_braking_flag",
            Cue::TtcInv => "ttc_inv",
        }
    }

    /// Value of this cue; undefined TTC/looming read as NaN.
    pub fn value(self, f: &KinematicFeatures) -> f64 {
        match self {
            Cue::VRel => f.v_rel,
            Cue::Ttc => f.ttc.unwrap_or(f64::NAN),
            Cue::GapClosingRate => f.gap_closing_rate,
            Cue::AReq => f.a_req,
            Cue::LeaderBrakingFlag => f64::from(f.leader_braking_flag),
            Cue::TtcInv => f.ttc_inv.unwrap_or(f64::NAN),
        }
    }
}

/// Cue values from raw speeds, leader acceleration and spacing.
pub fn features_from_state(
    v_ego: f64,
    v_leader: f64,
    leader_acceleration: f64,
    spacing: f64,
) -> Result<KinematicFeatures, KinematicsError> {
    if !(spacing > 0.0) {
        return Err(KinematicsError::NonPositiveSpacing(spacing));
    }
    let v_rel = v_ego - v_leader;
    let (ttc, ttc_inv) = if v_rel > 0.0 {
        (Some(spacing / v_rel), Some(v_rel / spacing))
    } else {
        (None, None)
    };
    Ok(KinematicFeatures {
        v_rel,
        ttc,
        gap_closing_rate: v_rel,
        a_req: (v_ego * v_ego - v_leader * v_leader) / (2.0 * spacing),
        leader_braking_flag: u8::from(leader_acceleration < LEADER_BRAKING_THRESHOLD),
        ttc_inv,
        imputed_ttc: false,
        imputed_ttc_inv: false,
    })
}

pub fn compute_features(dyad: &DyadObservation) -> Result<KinematicFeatures, KinematicsError> {
    features_from_state(
        dyad.follower.velocity,
        dyad.leader_velocity,
        dyad.leader_acceleration,
        dyad.spacing,
    )
}

/// Population medians used to fill undefined TTC and looming.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Imputer {
    pub ttc_median: Option<f64>,
    pub ttc_inv_median: Option<f64>,
}

impl Imputer {
    /// Medians of the defined values across `features`.
    pub fn fit<'a>(features: impl IntoIterator<Item = &'a KinematicFeatures>) -> Self {
        let mut ttc = Vec::new();
        let mut ttc_inv = Vec::new();
        for f in features {
            ttc.extend(f.ttc);
            ttc_inv.extend(f.ttc_inv);
        }
        Imputer {
            ttc_median: (!ttc.is_empty()).then(|| stats::median(&ttc)),
            ttc_inv_median: (!ttc_inv.is_empty()).then(|| stats::median(&ttc_inv)),
        }
    }

    pub fn apply(&self, f: &mut KinematicFeatures) -> Result<(), KinematicsError> {
        if f.ttc.is_none() {
            f.ttc = Some(self.ttc_median.ok_or(KinematicsError::NothingToImpute("ttc"))?);
            f.imputed_ttc = true;
        }
        if f.ttc_inv.is_none() {
            f.ttc_inv = Some(
                self.ttc_inv_median
                    .ok_or(KinematicsError::NothingToImpute("ttc_inv"))?,
            );
            f.imputed_ttc_inv = true;
        }
        Ok(())
    }
}

/// Replaces undefined TTC/looming with the population median of the defined
/// values. Defined values are left untouched.
pub fn impute_undefined(
    mut features: Vec<KinematicFeatures>,
) -> Result<Vec<KinematicFeatures>, KinematicsError> {
    let imputer = Imputer::fit(&features);
    for f in &mut features {
        imputer.apply(f)?;
    }
    Ok(features)
}

// ---------------------------------------------------------------------------
// summaries

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "rule", content = "bins")]
pub enum BinRule {
    #[default]
    FreedmanDiaconis,
    Fixed(usize),
}

const MAX_BINS: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

pub fn histogram(values: &[f64], rule: BinRule) -> Histogram {
    if values.is_empty() {
        return Histogram {
            edges: vec![],
            counts: vec![],
        };
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lo = sorted[0];
    let hi = sorted[sorted.len() - 1];
    if hi == lo {
        return Histogram {
            edges: vec![lo - 0.5, lo + 0.5],
            counts: vec![values.len() as u64],
        };
    }
    let n = sorted.len() as f64;
    let bins = match rule {
        BinRule::Fixed(b) => b.max(1),
        BinRule::FreedmanDiaconis => {
            let iqr = stats::quantile_sorted(&sorted, 0.75) - stats::quantile_sorted(&sorted, 0.25);
            let width = 2.0 * iqr / n.cbrt();
            if width > 0.0 {
                ((hi - lo) / width).ceil() as usize
            } else {
                // Sturges fallback for zero-IQR data
                (n.log2().ceil() as usize) + 1
            }
        }
    }
    .clamp(1, MAX_BINS);
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
    let mut counts = vec![0u64; bins];
    for &v in values {
        let idx = (((v - lo) / width).floor() as usize).min(bins - 1);
        counts[idx] += 1;
    }
    Histogram { edges, counts }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
    pub histogram: Histogram,
}

impl ColumnSummary {
    pub fn of(name: &str, values: &[f64], rule: BinRule) -> Self {
        ColumnSummary {
            name: name.to_string(),
            mean: stats::mean(values),
            sd: stats::population_sd(values),
            median: stats::median(values),
            histogram: histogram(values, rule),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSummary {
    pub observations: u64,
    /// Six cue panels, then spacing and the two speeds.
    pub columns: Vec<ColumnSummary>,
    /// Median of defined TTC values (closing conditions only).
    pub ttc_defined_median: Option<f64>,
    pub ttc_imputation_rate: f64,
    pub ttc_inv_imputation_rate: f64,
}

impl FeatureSummary {
    pub fn column(&self, name: &str) -> Option<&ColumnSummary> {
        self.columns.iter().find(|c| c.name == name)
    }
}

/// Summary statistics (population sd) and histogram data over all valid
/// observations.
pub fn dataset_summary<'a>(
    rows: impl IntoIterator<Item = (&'a DyadObservation, &'a KinematicFeatures)>,
    rule: BinRule,
) -> FeatureSummary {
    let mut cue_cols: Vec<Vec<f64>> = vec![Vec::new(); Cue::ALL.len()];
    let mut spacing = Vec::new();
    let mut ego = Vec::new();
    let mut leader = Vec::new();
    let mut ttc_defined = Vec::new();
    let (mut imp_ttc, mut imp_inv) = (0u64, 0u64);
    for (dyad, f) in rows {
        for (col, cue) in cue_cols.iter_mut().zip(Cue::ALL) {
            col.push(cue.value(f));
        }
        if let Some(t) = f.ttc.filter(|_| !f.imputed_ttc) {
            ttc_defined.push(t);
        }
        imp_ttc += u64::from(f.imputed_ttc);
        imp_inv += u64::from(f.imputed_ttc_inv);
        spacing.push(dyad.spacing);
        ego.push(dyad.follower.velocity);
        leader.push(dyad.leader_velocity);
    }
    let n = spacing.len();
    let mut columns: Vec<ColumnSummary> = Cue::ALL
        .iter()
        .zip(&cue_cols)
        .map(|(cue, vals)| {
            let rule = if *cue == Cue::LeaderBrakingFlag {
                BinRule::Fixed(2)
            } else {
                rule
            };
            ColumnSummary::of(cue.name(), vals, rule)
        })
        .collect();
    columns.push(ColumnSummary::of("spacing", &spacing, rule));
    columns.push(ColumnSummary::of("ego_speed", &ego, rule));
    columns.push(ColumnSummary::of("leader_speed", &leader, rule));
    let rate = |k: u64| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    FeatureSummary {
        observations: n as u64,
        columns,
        ttc_defined_median: (!ttc_defined.is_empty()).then(|| stats::median(&ttc_defined)),
        ttc_imputation_rate: rate(imp_ttc),
        ttc_inv_imputation_rate: rate(imp_inv),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_evaluated_closing_case() {
        let f = features_from_state(20.0, 10.0, 0.0, 30.0).unwrap();
        assert_eq!(f.v_rel, 10.0);
        assert_eq!(f.gap_closing_rate, 10.0);
        assert_eq!(f.ttc, Some(3.0));
        assert_eq!(f.a_req, 5.0);
        assert!((f.ttc_inv.unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn equal_speeds_leave_ttc_undefined() {
        let f = features_from_state(15.0, 15.0, 0.0, 25.0).unwrap();
        assert_eq!(f.v_rel, 0.0);
        assert_eq!(f.ttc, None);
        assert_eq!(f.ttc_inv, None);
        assert_eq!(f.a_req, 0.0);
    }

    #[test]
    fn leader_braking_flag_threshold() {
        let braking = features_from_state(10.0, 10.0, -0.6, 20.0).unwrap();
        let gentle = features_from_state(10.0, 10.0, -0.4, 20.0).unwrap();
        let exact = features_from_state(10.0, 10.0, -0.5, 20.0).unwrap();
        assert_eq!(braking.leader_braking_flag, 1);
        assert_eq!(gentle.leader_braking_flag, 0);
        assert_eq!(exact.leader_braking_flag, 0);
    }

    #[test]
    fn non_positive_spacing_is_rejected() {
        assert_eq!(
            features_from_state(10.0, 9.0, 0.0, 0.0),
            Err(KinematicsError::NonPositiveSpacing(0.0))
        );
    }

    fn with_ttc(t: Option<f64>) -> KinematicFeatures {
        KinematicFeatures {
            v_rel: 1.0,
            ttc: t,
            gap_closing_rate: 1.0,
            a_req: 0.0,
            leader_braking_flag: 0,
            ttc_inv: t.map(|x| 1.0 / x),
            imputed_ttc: false,
            imputed_ttc_inv: false,
        }
    }

    #[test]
    fn imputes_median_of_three() {
        let out = impute_undefined(vec![
            with_ttc(Some(2.0)),
            with_ttc(None),
            with_ttc(Some(6.0)),
            with_ttc(Some(10.0)),
        ])
        .unwrap();
        assert_eq!(out[1].ttc, Some(6.0));
        assert!(out[1].imputed_ttc && out[1].imputed_ttc_inv);
        assert_eq!(out[0].ttc, Some(2.0));
        assert!(!out[0].imputed_ttc);
    }

    #[test]
    fn even_count_looming_median() {
        let mut rows: Vec<_> = [0.1, 0.2, 0.3, 0.4]
            .iter()
            .map(|&x| {
                let mut f = with_ttc(Some(1.0));
                f.ttc_inv = Some(x);
                f
            })
            .collect();
        rows.push(with_ttc(None));
        let out = impute_undefined(rows).unwrap();
        assert!((out[4].ttc_inv.unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn no_nulls_is_identity() {
        let rows = vec![with_ttc(Some(3.0)), with_ttc(Some(4.0))];
        assert_eq!(impute_undefined(rows.clone()).unwrap(), rows);
    }

    #[test]
    fn all_undefined_is_fatal() {
        let err = impute_undefined(vec![with_ttc(None)]).unwrap_err();
        assert_eq!(err, KinematicsError::NothingToImpute("ttc"));
    }

    #[test]
    fn histogram_counts_cover_everything() {
        let vals: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 * 0.37).collect();
        let h = histogram(&vals, BinRule::FreedmanDiaconis);
        assert_eq!(h.counts.iter().sum::<u64>(), 1000);
        assert_eq!(h.edges.len(), h.counts.len() + 1);
        let c = histogram(&[5.0; 10], BinRule::FreedmanDiaconis);
        assert_eq!(c.counts, vec![10]);
    }

    #[test]
    fn summary_uses_population_sd() {
        let s = ColumnSummary::of("x", &[1.0, 2.0, 3.0], BinRule::Fixed(3));
        assert_eq!(s.mean, 2.0);
        assert!((s.sd - 0.816_496_580_927_726).abs() < 1e-12);
        assert_eq!(ColumnSummary::of("c", &[7.0; 4], BinRule::Fixed(2)).sd, 0.0);
    }
}
