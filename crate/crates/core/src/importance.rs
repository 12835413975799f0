//! Which cues separate the behavioral modes?
//!
//! One-way ANOVA per cue across cluster assignments gives `eta^2 =
//! SS_between / SS_total`, the share of a cue's variance explained by mode
//! membership. Cues are ranked by it. Cluster profiles, PCA projections and
//! radar-chart centroids are produced alongside for reporting.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::FeatureMatrix;
use crate::events::{Context, DecelerationEvent};
use crate::stats;

#[derive(Debug, Error, PartialEq)]
pub enum ImportanceError {
    #[error("need at least 2 groups, got {0}")]
    TooFewGroups(usize),
    #[error("group {0} has no members")]
    EmptyGroup(usize),
    #[error("need more observations ({n}) than groups ({k})")]
    TooFewObservations { n: usize, k: usize },
    #[error("{what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("PCA needs more rows ({rows}) than components ({components})")]
    TooFewRowsForPca { rows: usize, components: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anova {
    pub n: usize,
    pub k: usize,
    pub ss_between: f64,
    pub ss_within: f64,
    pub ss_total: f64,
    /// `+inf` when within-group variance is zero; NaN when degenerate.
    #[serde(with = "crate::report::nonfinite")]
    pub f: f64,
    pub p: f64,
    /// `None` for a constant feature (zero total variance).
    pub eta_squared: Option<f64>,
    pub degenerate: bool,
}

pub fn anova_eta_squared(values: &[f64], assignments: &[usize]) -> Result<Anova, ImportanceError> {
    if values.len() != assignments.len() {
        return Err(ImportanceError::LengthMismatch {
            what: "assignments",
            got: assignments.len(),
            expected: values.len(),
        });
    }
    let n = values.len();
    let k = assignments.iter().max().map_or(0, |&a| a + 1);
    if k < 2 {
        return Err(ImportanceError::TooFewGroups(k));
    }
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (&x, &a) in values.iter().zip(assignments) {
        sums[a] += x;
        counts[a] += 1;
    }
    if let Some(g) = counts.iter().position(|&c| c == 0) {
        return Err(ImportanceError::EmptyGroup(g));
    }
    if n <= k {
        return Err(ImportanceError::TooFewObservations { n, k });
    }
    let grand = stats::mean(values);
    let means: Vec<f64> = sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect();
    let ss_between: f64 = means
        .iter()
        .zip(&counts)
        .map(|(m, &c)| c as f64 * (m - grand) * (m - grand))
        .sum();
    let ss_total: f64 = values.iter().map(|x| (x - grand) * (x - grand)).sum();
    let ss_within: f64 = values
        .iter()
        .zip(assignments)
        .map(|(x, &a)| (x - means[a]) * (x - means[a]))
        .sum();
    if ss_total == 0.0 {
        return Ok(Anova {
            n,
            k,
            ss_between,
            ss_within,
            ss_total,
            f: f64::NAN,
            p: 1.0,
            eta_squared: None,
            degenerate: true,
        });
    }
    let (d1, d2) = ((k - 1) as f64, (n - k) as f64);
    let f = if ss_within == 0.0 {
        f64::INFINITY
    } else {
        (ss_between / d1) / (ss_within / d2)
    };
    Ok(Anova {
        n,
        k,
        ss_between,
        ss_within,
        ss_total,
        f,
        p: stats::f_upper_p(f, d1, d2),
        eta_squared: Some((ss_between / ss_total).clamp(0.0, 1.0)),
        degenerate: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectClass {
    Negligible,
    Small,
    Medium,
    Large,
}

pub fn classify_effect(eta_squared: f64) -> EffectClass {
    if eta_squared < 0.01 {
        EffectClass::Negligible
    } else if eta_squared < 0.06 {
        EffectClass::Small
    } else if eta_squared < 0.14 {
        EffectClass::Medium
    } else {
        EffectClass::Large
    }
}

pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        "ns"
    }
}

/// Variables ranked by eta^2, in tie-break order.
pub const RANKED_FEATURES: [&str; 6] = ["v_rel", "ttc", "gap_closing_rate", "a_req", "ttc_inv", "spacing"];

fn ranked_value(name: &str, e: &DecelerationEvent) -> f64 {
    let f = &e.onset_features;
    match name {
        "v_rel" => f.v_rel,
        "ttc" => f.ttc.unwrap_or(f64::NAN),
        "gap_closing_rate" => f.gap_closing_rate,
        "a_req" => f.a_req,
        "ttc_inv" => f.ttc_inv.unwrap_or(f64::NAN),
        "spacing" => e.onset_spacing,
        _ => unreachable!("unknown ranked feature {name}"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueImportanceRow {
    pub feature: String,
    #[serde(with = "crate::report::nonfinite")]
    pub f: f64,
    pub p: f64,
    pub eta_squared: Option<f64>,
    pub effect_class: EffectClass,
    pub significance: String,
    pub rank: usize,
    /// Ranked first under some thresholds but not all.
    #[serde(default)]
    pub reversal: bool,
    pub degenerate: bool,
}

/// ANOVA for each ranked variable, sorted by descending eta^2 (ties keep
/// [`RANKED_FEATURES`] order; degenerate features sort as eta^2 = 0).
pub fn rank_cues(
    events: &[DecelerationEvent],
    assignments: &[usize],
) -> Result<Vec<CueImportanceRow>, ImportanceError> {
    let mut rows = Vec::with_capacity(RANKED_FEATURES.len());
    for name in RANKED_FEATURES {
        let values: Vec<f64> = events.iter().map(|e| ranked_value(name, e)).collect();
        let a = anova_eta_squared(&values, assignments)?;
        let eta = a.eta_squared.unwrap_or(0.0);
        rows.push(CueImportanceRow {
            feature: name.to_string(),
            f: a.f,
            p: a.p,
            eta_squared: a.eta_squared,
            effect_class: classify_effect(eta),
            significance: significance_stars(a.p).to_string(),
            rank: 0,
            reversal: false,
            degenerate: a.degenerate,
        });
    }
    rows.sort_by(|x, y| {
        y.eta_squared
            .unwrap_or(0.0)
            .total_cmp(&x.eta_squared.unwrap_or(0.0))
    });
    for (i, r) in rows.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    Ok(rows)
}

/// Marks every feature that ranks first in at least one table but not in
/// all of them. Needs at least two tables to mark anything.
pub fn mark_reversals(tables: &mut [&mut Vec<CueImportanceRow>]) {
    if tables.len() < 2 {
        return;
    }
    let leaders: Vec<String> = tables
        .iter()
        .filter_map(|t| t.iter().find(|r| r.rank == 1).map(|r| r.feature.clone()))
        .collect();
    for t in tables.iter_mut() {
        for r in t.iter_mut() {
            let firsts = leaders.iter().filter(|f| **f == r.feature).count();
            r.reversal = firsts > 0 && firsts < leaders.len();
        }
    }
}

// ---------------------------------------------------------------------------
// profiles

/// Names given to clusters by the mean-TTC rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelRule {
    pub preventive: String,
    pub reactive: String,
    pub uncertain: String,
    pub unlabeled: String,
}

impl Default for LabelRule {
    fn default() -> Self {
        LabelRule {
            preventive: "preventive gradual".into(),
            reactive: "reactive hard braking".into(),
            uncertain: "uncertain".into(),
            unlabeled: "unlabeled".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMean {
    pub feature: String,
    /// `None` for TTC in a cluster whose gap is opening on average.
    pub mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextShare {
    pub context: Context,
    pub count: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterProfile {
    pub cluster: usize,
    pub size: usize,
    pub share_percent: f64,
    pub label: String,
    pub means: Vec<FeatureMean>,
    pub leader_braking_percent: f64,
    pub contexts: Vec<ContextShare>,
}

impl ClusterProfile {
    pub fn mean(&self, feature: &str) -> Option<f64> {
        self.means
            .iter()
            .find(|m| m.feature == feature)
            .and_then(|m| m.mean)
    }
}

const PROFILE_FEATURES: [&str; 10] = [
    "v_rel",
    "ttc",
    "gap_closing_rate",
    "a_req",
    "ttc_inv",
    "spacing",
    "mean_decel",
    "max_decel",
    "ego_speed_onset",
    "leader_speed_onset",
];

fn profile_value(name: &str, e: &DecelerationEvent) -> f64 {
    match name {
        "mean_decel" => e.mean_decel,
        "max_decel" => e.max_decel,
        "ego_speed_onset" => e.ego_speed_onset,
        "leader_speed_onset" => e.leader_speed_onset,
        other => ranked_value(other, e),
    }
}

/// Labels by the TTC rule: opening-gap clusters are uncertain; among the
/// rest the longest mean TTC is preventive and the shortest reactive. Any
/// tie leaves clusters unlabeled.
fn assign_labels(v_rel: &[f64], ttc: &[f64], rule: &LabelRule) -> Vec<String> {
    let mut labels = vec![rule.unlabeled.clone(); v_rel.len()];
    let closing: Vec<usize> = (0..v_rel.len()).filter(|&c| v_rel[c] > 0.0).collect();
    for c in (0..v_rel.len()).filter(|&c| v_rel[c] <= 0.0) {
        labels[c] = rule.uncertain.clone();
    }
    if closing.len() < 2 {
        return labels;
    }
    let by = |cmp: fn(f64, f64) -> bool| {
        let mut best = closing[0];
        let mut tied = false;
        for &c in &closing[1..] {
            if cmp(ttc[c], ttc[best]) {
                best = c;
                tied = false;
            } else if ttc[c] == ttc[best] {
                tied = true;
            }
        }
        (!tied).then_some(best)
    };
    if let (Some(hi), Some(lo)) = (by(|a, b| a > b), by(|a, b| a < b)) {
        labels[hi] = rule.preventive.clone();
        labels[lo] = rule.reactive.clone();
    }
    labels
}

pub fn cluster_profile(
    events: &[DecelerationEvent],
    assignments: &[usize],
    rule: &LabelRule,
) -> Result<Vec<ClusterProfile>, ImportanceError> {
    if events.len() != assignments.len() {
        return Err(ImportanceError::LengthMismatch {
            what: "assignments",
            got: assignments.len(),
            expected: events.len(),
        });
    }
    let k = assignments.iter().max().map_or(0, |&a| a + 1);
    let mut members = vec![Vec::new(); k];
    for (i, &a) in assignments.iter().enumerate() {
        members[a].push(&events[i]);
    }
    if let Some(g) = members.iter().position(Vec::is_empty) {
        return Err(ImportanceError::EmptyGroup(g));
    }
    let mean_of = |m: &[&DecelerationEvent], name: &str| {
        let v: Vec<f64> = m.iter().map(|e| profile_value(name, e)).collect();
        stats::mean(&v)
    };
    let v_rel: Vec<f64> = members.iter().map(|m| mean_of(m, "v_rel")).collect();
    let ttc: Vec<f64> = members.iter().map(|m| mean_of(m, "ttc")).collect();
    let labels = assign_labels(&v_rel, &ttc, rule);
    let n = events.len() as f64;
    Ok(members
        .iter()
        .enumerate()
        .map(|(c, m)| {
            let means = PROFILE_FEATURES
                .iter()
                .map(|&name| FeatureMean {
                    feature: name.to_string(),
                    mean: if name == "ttc" && v_rel[c] <= 0.0 {
                        None
                    } else {
                        Some(mean_of(m, name))
                    },
                })
                .collect();
            let size = m.len();
            let braking = m
                .iter()
                .filter(|e| e.onset_features.leader_braking_flag == 1)
                .count();
            let contexts = Context::ALL
                .iter()
                .map(|&ctx| {
                    let count = m.iter().filter(|e| e.context == ctx).count();
                    ContextShare {
                        context: ctx,
                        count,
                        percent: 100.0 * count as f64 / size as f64,
                    }
                })
                .collect();
            ClusterProfile {
                cluster: c,
                size,
                share_percent: 100.0 * size as f64 / n,
                label: labels[c].clone(),
                means,
                leader_braking_percent: 100.0 * braking as f64 / size as f64,
                contexts,
            }
        })
        .collect())
}

// ---------------------------------------------------------------------------
// PCA and radar data

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    pub columns: Vec<String>,
    /// Unit-length loadings, one vector per component.
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
    /// Per-row scores on each component.
    pub coords: Vec<Vec<f64>>,
}

/// Principal components of the (already standardized) matrix via the
/// covariance eigendecomposition. Each component's largest-magnitude loading
/// is made positive. Components with no variance are dropped.
pub fn pca_project(m: &FeatureMatrix, n_components: usize) -> Result<Pca, ImportanceError> {
    let (n, d) = (m.n_rows, m.n_cols());
    if n <= n_components || n < 2 {
        return Err(ImportanceError::TooFewRowsForPca {
            rows: n,
            components: n_components,
        });
    }
    let x = DMatrix::from_row_slice(n, d, &m.data);
    let means = x.row_mean();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= &means;
    }
    let cov = (centered.transpose() * &centered) / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    let floor = total * 1e-12;
    let mut components = Vec::new();
    let mut eigenvalues = Vec::new();
    for &j in order.iter().take(n_components.min(d)) {
        let lambda = eig.eigenvalues[j];
        if lambda <= floor {
            continue;
        }
        let mut v: Vec<f64> = eig.eigenvectors.column(j).iter().copied().collect();
        let lead = v
            .iter()
            .copied()
            .fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if lead < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components.push(v);
        eigenvalues.push(lambda);
    }
    if components.len() < n_components {
        log::warn!(
            "matrix is rank-deficient; returning {} of {} components",
            components.len(),
            n_components
        );
    }
    let coords = centered
        .row_iter()
        .map(|r| {
            components
                .iter()
                .map(|v| r.iter().zip(v).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect();
    Ok(Pca {
        columns: m.names.clone(),
        explained_variance_ratio: eigenvalues
            .iter()
            .map(|l| if total > 0.0 { l / total } else { 0.0 })
            .collect(),
        components,
        eigenvalues,
        coords,
    })
}

pub const RADAR_AXES: [&str; 6] = ["v_rel", "ttc", "a_req", "ttc_inv", "spacing", "max_decel"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarCluster {
    pub cluster: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarData {
    pub axes: Vec<String>,
    pub clusters: Vec<RadarCluster>,
}

/// Per-cluster means of each radar axis after standardizing the axis over
/// all events (population sd; a constant axis reads 0).
pub fn radar_data(events: &[DecelerationEvent], assignments: &[usize]) -> RadarData {
    let k = assignments.iter().max().map_or(0, |&a| a + 1);
    let mut clusters: Vec<RadarCluster> = (0..k)
        .map(|cluster| RadarCluster {
            cluster,
            values: Vec::with_capacity(RADAR_AXES.len()),
        })
        .collect();
    for axis in RADAR_AXES {
        let v: Vec<f64> = events.iter().map(|e| profile_value(axis, e)).collect();
        let (m, s) = (stats::mean(&v), stats::population_sd(&v));
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for (x, &a) in v.iter().zip(assignments) {
            sums[a] += if s > 0.0 { (x - m) / s } else { 0.0 };
            counts[a] += 1;
        }
        for (c, rc) in clusters.iter_mut().enumerate() {
            rc.values.push(if counts[c] > 0 {
                sums[c] / counts[c] as f64
            } else {
                0.0
            });
        }
    }
    RadarData {
        axes: RADAR_AXES.iter().map(|s| s.to_string()).collect(),
        clusters,
    }
}
