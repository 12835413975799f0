//! Report bundle: rendering, atomic writing and reloading.
//!
//! JSON files are pretty-printed at full precision with a fixed key order;
//! CSV files use a fixed column order and 6 significant digits. The run
//! manifest is rendered last and carries a SHA-256 digest of every other
//! file, so two runs can be compared file by file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cluster::{SelectionRationale, Standardization};
use crate::events::{DecelerationEvent, EventCensus, EventConfig};
use crate::importance::CueImportanceRow;
use crate::ingest::{Criterion, FilterStats};
use crate::kinematics::{Cue, FeatureSummary, Imputer};
use crate::pipeline::{
    self, AnalysisOutcome, InputDigest, PipelineConfig, RunResults, ThresholdAnalysis,
};
use crate::temporal::LagTable;
use crate::{Error, Result};

pub const MANIFEST: &str = "run_manifest.json";

/// Serde adapter writing NaN and infinities as the strings `"nan"`, `"inf"`
/// and `"-inf"` (plain JSON has no spelling for them).
pub mod nonfinite {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else if x.is_nan() {
            s.serialize_str("nan")
        } else if *x > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Text(t) => match t.as_str() {
                "nan" => Ok(f64::NAN),
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(serde::de::Error::custom(format!("not a number: {other}"))),
            },
        }
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// `x` with 6 significant digits, like C's `%.6g`.
pub fn sig6(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.into();
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mant, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..6).contains(&exp) {
        let fixed = format!("{x:.*}", (5 - exp) as usize);
        trim_zeros(&fixed).to_string()
    } else {
        format!("{}e{}{:02}", trim_zeros(mant), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(sig6).unwrap_or_default()
}

fn json<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("report types serialize");
    v.push(b'\n');
    v
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

// ---------------------------------------------------------------------------
// report documents

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionCount {
    pub criterion: Criterion,
    pub rejected: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterStatsDoc {
    pub raw_count: u64,
    pub retained_count: u64,
    pub retained_vehicles: u64,
    pub rejected: Vec<CriterionCount>,
    pub conserved: bool,
}

impl From<&FilterStats> for FilterStatsDoc {
    fn from(s: &FilterStats) -> Self {
        FilterStatsDoc {
            raw_count: s.raw_count,
            retained_count: s.retained_count,
            retained_vehicles: s.retained_vehicles,
            rejected: Criterion::ALL
                .iter()
                .map(|&c| CriterionCount {
                    criterion: c,
                    rejected: s.rejected(c),
                })
                .collect(),
            conserved: s.is_conserved(),
        }
    }
}

impl From<&FilterStatsDoc> for FilterStats {
    fn from(d: &FilterStatsDoc) -> Self {
        let mut s = FilterStats {
            raw_count: d.raw_count,
            retained_count: d.retained_count,
            retained_vehicles: d.retained_vehicles,
            ..Default::default()
        };
        for c in &d.rejected {
            if c.rejected > 0 {
                s.reject(c.criterion, c.rejected);
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSummaryDoc {
    pub summary: FeatureSummary,
    pub imputation: Imputer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEvents {
    pub threshold: f64,
    pub min_duration: f64,
    pub events: Vec<DecelerationEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventsDoc {
    pub thresholds: Vec<ThresholdEvents>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusRow {
    pub threshold: f64,
    pub min_duration: f64,
    pub events: usize,
    pub analyzed: bool,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub k: usize,
    pub inertia: f64,
    pub silhouette: f64,
    #[serde(with = "nonfinite")]
    pub davies_bouldin: f64,
    #[serde(with = "nonfinite")]
    pub calinski_harabasz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterMetricsDoc {
    pub threshold: f64,
    pub n_events: usize,
    pub columns: Vec<String>,
    pub standardization: Standardization,
    pub metrics: Vec<MetricRow>,
    pub selected_k: usize,
    pub selection_rationale: SelectionRationale,
    pub centroids_standardized: Vec<Vec<f64>>,
    pub centroids_original: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerThreshold<T> {
    pub threshold: f64,
    pub k: Option<usize>,
    pub data: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaSummary {
    pub columns: Vec<String>,
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: Option<u64>,
    pub config: PipelineConfig,
    pub inputs: Vec<InputDigest>,
    pub files: Vec<FileDigest>,
}

// ---------------------------------------------------------------------------
// rendering

fn analyzed(results: &RunResults) -> impl Iterator<Item = (&ThresholdAnalysis, &pipeline::AnalysisResult)> {
    results
        .analyses
        .iter()
        .filter_map(|a| a.result().map(|r| (a, r)))
}

fn event_row(threshold: f64, id: usize, e: &DecelerationEvent) -> Vec<String> {
    let f = &e.onset_features;
    vec![
        sig6(threshold),
        id.to_string(),
        e.segment.site_tag.to_string(),
        e.segment.vehicle_id.to_string(),
        e.segment.leader_id.to_string(),
        e.onset_frame.to_string(),
        sig6(e.duration_s),
        sig6(e.mean_decel),
        sig6(e.max_decel),
        format!("{:?}", e.severity).to_lowercase(),
        serde_json::to_value(e.context)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default(),
        sig6(f.v_rel),
        opt(f.ttc),
        sig6(f.gap_closing_rate),
        sig6(f.a_req),
        f.leader_braking_flag.to_string(),
        opt(f.ttc_inv),
        u8::from(f.imputed_ttc).to_string(),
        sig6(e.onset_spacing),
        sig6(e.ego_speed_onset),
        sig6(e.leader_speed_onset),
    ]
}

const EVENT_HEADER: [&str; 21] = [
    "threshold",
    "event_id",
    "site",
    "vehicle_id",
    "leader_id",
    "onset_frame",
    "duration_s",
    "mean_decel",
    "max_decel",
    "severity",
    "context",
    "v_rel",
    "ttc",
    "gap_closing_rate",
    "a_req",
    "leader_braking_flag",
    "ttc_inv",
    "ttc_imputed",
    "spacing",
    "ego_speed",
    "leader_speed",
];

/// Every bundle file except the manifest, keyed by file name.
pub fn render_files(results: &RunResults) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut put = |name: &str, bytes: Vec<u8>| {
        files.insert(name.to_string(), bytes);
    };

    put("filter_stats.json", json(&FilterStatsDoc::from(&results.filter_stats)));
    put(
        "feature_summary.json",
        json(&FeatureSummaryDoc {
            summary: results.feature_summary.clone(),
            imputation: results.imputer,
        }),
    );
    for col in &results.feature_summary.columns {
        let h = &col.histogram;
        put(
            &format!("hist_{}.csv", col.name),
            csv_bytes(
                &["bin_lo", "bin_hi", "count"],
                h.counts.iter().enumerate().map(|(i, c)| {
                    vec![sig6(h.edges[i]), sig6(h.edges[i + 1]), c.to_string()]
                }),
            ),
        );
    }

    put("event_census.json", json(&results.census));
    put("event_census.csv", census_csv(&results.census));
    put(
        "events.json",
        json(&EventsDoc {
            thresholds: results
                .analyses
                .iter()
                .map(|a| ThresholdEvents {
                    threshold: a.threshold,
                    min_duration: a.min_duration,
                    events: a.events.clone(),
                })
                .collect(),
        }),
    );
    put(
        "events.csv",
        csv_bytes(
            &EVENT_HEADER,
            results.analyses.iter().flat_map(|a| {
                a.events
                    .iter()
                    .enumerate()
                    .map(move |(i, e)| event_row(a.threshold, i, e))
            }),
        ),
    );
    put(
        "analysis_status.json",
        json(
            &results
                .analyses
                .iter()
                .map(|a| StatusRow {
                    threshold: a.threshold,
                    min_duration: a.min_duration,
                    events: a.events.len(),
                    analyzed: a.result().is_some(),
                    reason: match &a.outcome {
                        AnalysisOutcome::Skipped { reason } => Some(reason.clone()),
                        AnalysisOutcome::Analyzed(_) => None,
                    },
                })
                .collect::<Vec<_>>(),
        ),
    );

    let per = |f: &dyn Fn(&pipeline::AnalysisResult) -> serde_json::Value| -> Vec<u8> {
        json(
            &analyzed(results)
                .map(|(a, r)| PerThreshold {
                    threshold: a.threshold,
                    k: Some(r.clustering.selected_k),
                    data: f(r),
                })
                .collect::<Vec<_>>(),
        )
    };
    let value = |v: &dyn erased::Ser| v.to_value();
    put("onset_profiles.json", per(&|r| value(&r.onset_profile)));
    put("lag_table.json", per(&|r| value(&r.lag_table)));
    put("cluster_profiles.json", per(&|r| value(&r.profiles)));
    put("cue_importance.json", per(&|r| value(&r.importance)));
    put("radar_data.json", per(&|r| value(&r.radar)));
    put(
        "pca_summary.json",
        per(&|r| {
            value(&PcaSummary {
                columns: r.pca.columns.clone(),
                components: r.pca.components.clone(),
                eigenvalues: r.pca.eigenvalues.clone(),
                explained_variance_ratio: r.pca.explained_variance_ratio.clone(),
            })
        }),
    );

    put(
        "cluster_metrics.json",
        json(
            &analyzed(results)
                .map(|(a, r)| {
                    let c = &r.clustering;
                    let sel = c.selected();
                    ClusterMetricsDoc {
                        threshold: a.threshold,
                        n_events: c.n_events,
                        columns: c.columns.clone(),
                        standardization: c.standardization.clone(),
                        metrics: c
                            .per_k
                            .iter()
                            .map(|o| MetricRow {
                                k: o.k,
                                inertia: o.inertia,
                                silhouette: o.silhouette,
                                davies_bouldin: o.davies_bouldin,
                                calinski_harabasz: o.calinski_harabasz,
                            })
                            .collect(),
                        selected_k: c.selected_k,
                        selection_rationale: c.selection_rationale,
                        centroids_standardized: sel.centroids_standardized.clone(),
                        centroids_original: sel.centroids_original.clone(),
                    }
                })
                .collect::<Vec<_>>(),
        ),
    );

    put(
        "lag_table.csv",
        csv_bytes(
            &[
                "threshold",
                "feature",
                "lag_s",
                "n_pairs",
                "mean_at_lag",
                "mean_at_onset",
                "t_statistic",
                "p_value",
                "cohens_d",
                "significant",
                "magnitude",
                "verdict",
            ],
            analyzed(results).flat_map(|(a, r)| {
                lag_rows(&r.lag_table)
                    .into_iter()
                    .map(move |mut row| {
                        row.insert(0, sig6(a.threshold));
                        row
                    })
            }),
        ),
    );
    put(
        "cluster_assignments.csv",
        csv_bytes(
            &["threshold", "event_id", "site", "vehicle_id", "onset_frame", "cluster"],
            analyzed(results).flat_map(|(a, r)| {
                a.events
                    .iter()
                    .zip(&r.clustering.selected().assignments)
                    .enumerate()
                    .map(move |(i, (e, c))| {
                        vec![
                            sig6(a.threshold),
                            i.to_string(),
                            e.segment.site_tag.to_string(),
                            e.segment.vehicle_id.to_string(),
                            e.onset_frame.to_string(),
                            c.to_string(),
                        ]
                    })
            }),
        ),
    );
    put(
        "cue_importance.csv",
        csv_bytes(
            &[
                "threshold",
                "k",
                "rank",
                "feature",
                "eta_squared",
                "f",
                "p",
                "effect_class",
                "significance",
                "reversal",
            ],
            analyzed(results).flat_map(|(a, r)| {
                r.importance.iter().map(move |row| importance_row(a.threshold, r.clustering.selected_k, row))
            }),
        ),
    );
    put(
        "pca_coords.csv",
        csv_bytes(
            &[
                "threshold", "event_id", "cluster", "pc1", "pc2", "pc3", "v_rel", "ttc", "a_req",
                "ttc_inv", "spacing",
            ],
            analyzed(results).flat_map(|(a, r)| {
                let assign = &r.clustering.selected().assignments;
                r.pca.coords.iter().enumerate().map(move |(i, pc)| {
                    let e = &a.events[i];
                    let f = &e.onset_features;
                    let mut row = vec![sig6(a.threshold), i.to_string(), assign[i].to_string()];
                    for c in 0..3 {
                        row.push(pc.get(c).map(|x| sig6(*x)).unwrap_or_default());
                    }
                    row.extend([
                        sig6(f.v_rel),
                        opt(f.ttc),
                        sig6(f.a_req),
                        opt(f.ttc_inv),
                        sig6(e.onset_spacing),
                    ]);
                    row
                })
            }),
        ),
    );

    if let Some(rows) = &results.feature_rows {
        put(
            "features.csv",
            csv_bytes(
                &[
                    "site",
                    "vehicle_id",
                    "leader_id",
                    "frame",
                    "spacing",
                    "ego_speed",
                    "leader_speed",
                    "ego_accel",
                    "leader_accel",
                    "v_rel",
                    "ttc",
                    "gap_closing_rate",
                    "a_req",
                    "leader_braking_flag",
                    "ttc_inv",
                    "ttc_imputed",
                ],
                rows.iter().map(|r| {
                    let f = &r.features;
                    vec![
                        r.site.to_string(),
                        r.vehicle_id.to_string(),
                        r.leader_id.to_string(),
                        r.frame.to_string(),
                        sig6(r.spacing),
                        sig6(r.ego_speed),
                        sig6(r.leader_speed),
                        sig6(r.ego_accel),
                        sig6(r.leader_accel),
                        sig6(f.v_rel),
                        opt(f.ttc),
                        sig6(f.gap_closing_rate),
                        sig6(f.a_req),
                        f.leader_braking_flag.to_string(),
                        opt(f.ttc_inv),
                        u8::from(f.imputed_ttc).to_string(),
                    ]
                }),
            ),
        );
    } else if let Some(bytes) = &results.carried_features_csv {
        put("features.csv", bytes.clone());
    }
    files
}

mod erased {
    pub trait Ser {
        fn to_value(&self) -> serde_json::Value;
    }

    impl<T: serde::Serialize> Ser for T {
        fn to_value(&self) -> serde_json::Value {
            serde_json::to_value(self).expect("report types serialize")
        }
    }
}

fn lag_rows(t: &LagTable) -> Vec<Vec<String>> {
    t.cells
        .iter()
        .map(|c| {
            vec![
                c.feature.name().to_string(),
                sig6(c.lag_s),
                c.n_pairs.to_string(),
                opt(c.mean_at_lag),
                opt(c.mean_at_onset),
                opt(c.t_statistic),
                opt(c.p_value),
                opt(c.cohens_d),
                c.significant.to_string(),
                c.magnitude
                    .and_then(|m| serde_json::to_value(m).ok())
                    .and_then(|v| v.as_str().map(String::from))
                    .unwrap_or_default(),
                t.verdict(c.feature)
                    .and_then(|v| serde_json::to_value(v).ok())
                    .and_then(|v| v.as_str().map(String::from))
                    .unwrap_or_default(),
            ]
        })
        .collect()
}

fn importance_row(threshold: f64, k: usize, r: &CueImportanceRow) -> Vec<String> {
    vec![
        sig6(threshold),
        k.to_string(),
        r.rank.to_string(),
        r.feature.clone(),
        opt(r.eta_squared),
        sig6(r.f),
        sig6(r.p),
        format!("{:?}", r.effect_class).to_lowercase(),
        r.significance.clone(),
        r.reversal.to_string(),
    ]
}

/// Manifest bytes for the given rendered files.
pub fn render_manifest(results: &RunResults, files: &BTreeMap<String, Vec<u8>>) -> Vec<u8> {
    manifest_bytes(&results.config, &results.inputs, files)
}

pub fn manifest_bytes(
    config: &PipelineConfig,
    inputs: &[InputDigest],
    files: &BTreeMap<String, Vec<u8>>,
) -> Vec<u8> {
    json(&Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: config.seed,
        config: config.clone(),
        inputs: inputs.to_vec(),
        files: files
            .iter()
            .map(|(name, bytes)| FileDigest {
                name: name.clone(),
                bytes: bytes.len() as u64,
                sha256: sha256_hex(bytes),
            })
            .collect(),
    })
}

/// Files of the detection-only bundle: filtering, census and events for
/// every grid cell.
pub fn render_census_files(
    filter_stats: &FilterStats,
    census: &EventCensus,
    grid: &[(EventConfig, Vec<DecelerationEvent>)],
) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    files.insert("filter_stats.json".into(), json(&FilterStatsDoc::from(filter_stats)));
    files.insert("event_census.json".into(), json(census));
    files.insert("event_census.csv".into(), census_csv(census));
    files.insert(
        "events.json".into(),
        json(&EventsDoc {
            thresholds: grid
                .iter()
                .map(|(c, e)| ThresholdEvents {
                    threshold: c.accel_threshold,
                    min_duration: c.min_duration,
                    events: e.clone(),
                })
                .collect(),
        }),
    );
    files
}

fn census_csv(census: &EventCensus) -> Vec<u8> {
    csv_bytes(
        &[
            "threshold",
            "min_duration",
            "events",
            "percent_valid_observations",
            "mild",
            "moderate",
            "hard",
            "insufficient",
        ],
        census.cells.iter().map(|c| {
            let mut row = vec![
                sig6(c.threshold),
                sig6(c.min_duration),
                c.events.to_string(),
                sig6(c.percent_valid_observations),
            ];
            row.extend(c.severity.iter().map(|s| s.count.to_string()));
            row.push(c.insufficient.to_string());
            row
        }),
    )
}

// ---------------------------------------------------------------------------
// writing

fn temp_sibling(out: &Path) -> Result<PathBuf> {
    let name = out
        .file_name()
        .ok_or_else(|| Error::Config(format!("{} is not a directory name", out.display())))?;
    let parent = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    Ok(parent.join(format!(
        ".{}.tmp-{}",
        name.to_string_lossy(),
        std::process::id()
    )))
}

/// Writes `files` plus a manifest into `out`, atomically: everything goes to
/// a temporary sibling directory that is renamed into place at the end. An
/// existing `out` is replaced only if it is empty or holds a previous bundle.
pub fn write_files(
    out: &Path,
    files: &BTreeMap<String, Vec<u8>>,
    manifest: &[u8],
) -> Result<()> {
    if out.exists() {
        let is_dir = out.is_dir();
        let replaceable = is_dir
            && (out.join(MANIFEST).exists()
                || fs::read_dir(out).map_err(|e| Error::io(out, e))?.next().is_none());
        if !replaceable {
            return Err(Error::Config(format!(
                "{} exists and is not a report bundle; refusing to overwrite",
                out.display()
            )));
        }
    }
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let tmp = temp_sibling(out)?;
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    }
    fs::create_dir(&tmp).map_err(|e| Error::io(&tmp, e))?;
    let written = (|| {
        for (name, bytes) in files {
            let p = tmp.join(name);
            fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
        }
        let p = tmp.join(MANIFEST);
        fs::write(&p, manifest).map_err(|e| Error::io(&p, e))?;
        if out.exists() {
            fs::remove_dir_all(out).map_err(|e| Error::io(out, e))?;
        }
        fs::rename(&tmp, out).map_err(|e| Error::io(out, e))
    })();
    if written.is_err() {
        let _ = fs::remove_dir_all(&tmp);
    }
    written
}

/// Renders and writes the full bundle for `results` into `out`.
pub fn write_bundle(out: &Path, results: &RunResults) -> Result<BTreeMap<String, Vec<u8>>> {
    let mut files = render_files(results);
    let manifest = render_manifest(results, &files);
    write_files(out, &files, &manifest)?;
    files.insert(MANIFEST.into(), manifest);
    Ok(files)
}

// ---------------------------------------------------------------------------
// reloading

fn read_json<T: for<'de> Deserialize<'de>>(dir: &Path, name: &str) -> Result<T> {
    let p = dir.join(name);
    let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
    serde_json::from_slice(&bytes).map_err(|source| Error::Json { path: p, source })
}

/// Rebuilds the run from a bundle's serialized events and upstream
/// sections, re-running lags, clustering and cue importance.
pub fn reanalyze_bundle(dir: &Path) -> Result<RunResults> {
    let manifest: Manifest = read_json(dir, MANIFEST)?;
    let stats: FilterStatsDoc = read_json(dir, "filter_stats.json")?;
    let summary: FeatureSummaryDoc = read_json(dir, "feature_summary.json")?;
    let census: EventCensus = read_json(dir, "event_census.json")?;
    let events: EventsDoc = read_json(dir, "events.json")?;
    let carried = dir.join("features.csv");
    let carried_features_csv = if carried.exists() {
        Some(fs::read(&carried).map_err(|e| Error::io(&carried, e))?)
    } else {
        None
    };
    let config = manifest.config;
    let analyses = pipeline::analyze_thresholds(
        events
            .thresholds
            .into_iter()
            .map(|t| (t.threshold, t.min_duration, t.events))
            .collect(),
        &config,
    )?;
    Ok(RunResults {
        config,
        inputs: manifest.inputs,
        filter_stats: FilterStats::from(&stats),
        feature_summary: summary.summary,
        imputer: summary.imputation,
        census,
        analyses,
        feature_rows: None,
        carried_features_csv,
    })
}

/// Onset cue order used in textual summaries.
pub fn cue_names() -> Vec<&'static str> {
    Cue::ALL.iter().map(|c| c.name()).collect()
}

/// Quick text table of per-threshold results.
pub fn summary_text(results: &RunResults) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "observations: {} retained of {} ({} vehicles)\n",
        results.filter_stats.retained_count,
        results.filter_stats.raw_count,
        results.filter_stats.retained_vehicles
    ));
    for c in &results.census.cells {
        s.push_str(&format!(
            "  threshold {:>5} duration {:>3} s: {:>6} events{}\n",
            c.threshold,
            c.min_duration,
            c.events,
            if c.insufficient { " (insufficient)" } else { "" }
        ));
    }
    for a in &results.analyses {
        match &a.outcome {
            AnalysisOutcome::Skipped { reason } => {
                s.push_str(&format!("threshold {}: skipped, {reason}\n", a.threshold));
            }
            AnalysisOutcome::Analyzed(r) => {
                let top: Vec<String> = r
                    .importance
                    .iter()
                    .map(|row| format!("{} {}", row.feature, opt(row.eta_squared)))
                    .collect();
                s.push_str(&format!(
                    "threshold {}: {} events, K = {} ({:?}), eta^2: {}\n",
                    a.threshold,
                    a.events.len(),
                    r.clustering.selected_k,
                    r.clustering.selection_rationale,
                    top.join(", ")
                ));
            }
        }
    }
    s
}
