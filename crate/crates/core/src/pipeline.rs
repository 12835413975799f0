//! End-to-end run: ingest, cues, imputation, the detection grid, and the
//! per-threshold analysis (lags, clustering, cue importance, profiles, PCA).
//!
//! ```no_run
//! use carfollow::pipeline::{run_pipeline, PipelineConfig};
//!
//! let config = PipelineConfig {
//!     inputs: vec!["i80-0400-0415.csv".into()],
//!     seed: Some(42),
//!     ..PipelineConfig::default()
//! };
//! let results = run_pipeline(&config)?;
//! carfollow::report::write_bundle("bundle".as_ref(), &results)?;
//! # Ok::<(), carfollow::Error>(())
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cluster::{self, ClusteringOutcome, KMeansConfig, DEFAULT_K_RANGE};
use crate::events::{
    self, DecelerationEvent, EventCensus, EventConfig, FeatureSegment, SeverityBounds,
    CANONICAL_DURATIONS, CANONICAL_THRESHOLDS, MIN_RELIABLE_EVENTS,
};
use crate::importance::{self, ClusterProfile, CueImportanceRow, LabelRule, Pca, RadarData};
use crate::ingest::{
    self, FilterConfig, FilterStats, IngestOptions, Source, SpacingSource, TrajectorySegment, Units,
    DEFAULT_CHUNK_SIZE, FRAME_INTERVAL_S,
};
use crate::kinematics::{self, BinRule, FeatureSummary, Imputer, KinematicFeatures};
use crate::synth::{self, SynthConfig};
use crate::temporal::{self, LagTable, OnsetProfile, DEFAULT_LAGS_S};
use crate::{Error, Result};

pub const PCA_COMPONENTS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusteringOptions {
    /// Keep the binary leader braking flag as a clustering column.
    pub include_leader_flag: bool,
    pub restarts: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for ClusteringOptions {
    fn default() -> Self {
        let k = KMeansConfig::default();
        ClusteringOptions {
            include_leader_flag: true,
            restarts: k.restarts,
            max_iter: k.max_iter,
            tol: k.tol,
        }
    }
}

/// Severity boundaries for a non-canonical threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdBounds {
    pub threshold: f64,
    pub mild_floor: f64,
    pub hard_below: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub inputs: Vec<PathBuf>,
    /// Path to a synthetic-corpus TOML used instead of `inputs`.
    pub synth_config: Option<PathBuf>,
    /// Inline synthetic-corpus settings (takes precedence over the path).
    pub synth: Option<SynthConfig>,
    pub units: Units,
    pub chunk_size: usize,
    pub spacing_source: SpacingSource,
    pub filters: FilterConfig,
    pub thresholds: Vec<f64>,
    pub durations: Vec<f64>,
    /// Event duration used for the analysis stages; defaults to the
    /// shortest duration in the grid.
    pub analysis_duration: Option<f64>,
    pub dip_tolerance: usize,
    pub severity_bounds: Vec<ThresholdBounds>,
    pub lags: Vec<f64>,
    pub k_range: (usize, usize),
    pub seed: Option<u64>,
    pub clustering: ClusteringOptions,
    pub labels: LabelRule,
    pub histogram: BinRule,
    pub dump_features: bool,
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing)]
    pub workers: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            inputs: vec![],
            synth_config: None,
            synth: None,
            units: Units::Imperial,
            chunk_size: DEFAULT_CHUNK_SIZE,
            spacing_source: SpacingSource::Headway,
            filters: FilterConfig::default(),
            thresholds: CANONICAL_THRESHOLDS.to_vec(),
            durations: CANONICAL_DURATIONS.to_vec(),
            analysis_duration: None,
            dip_tolerance: 0,
            severity_bounds: vec![],
            lags: DEFAULT_LAGS_S.to_vec(),
            k_range: DEFAULT_K_RANGE,
            seed: None,
            clustering: ClusteringOptions::default(),
            labels: LabelRule::default(),
            histogram: BinRule::FreedmanDiaconis,
            dump_features: false,
            out: None,
            workers: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|source| Error::Toml {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.thresholds.is_empty() {
            return bad("at least one threshold is required".into());
        }
        if self.durations.is_empty() {
            return bad("at least one duration is required".into());
        }
        if self.seed.is_none() {
            return bad("a seed is required (set `seed` or pass --seed)".into());
        }
        if self.chunk_size == 0 {
            return bad("chunk_size must be at least 1".into());
        }
        let (lo, hi) = self.k_range;
        if lo < 2 || lo > hi {
            return bad(format!("invalid K range {lo}-{hi} (need 2 <= min <= max)"));
        }
        if let Some(l) = self.lags.iter().find(|&&l| !(l < 0.0)) {
            return bad(format!("lags must be negative seconds, got {l}"));
        }
        if self.inputs.is_empty() && self.synth.is_none() && self.synth_config.is_none() {
            return bad("no input: give input files or a synthetic corpus config".into());
        }
        if !self.inputs.is_empty() && (self.synth.is_some() || self.synth_config.is_some()) {
            return bad("give either input files or a synthetic corpus config, not both".into());
        }
        for ec in self.event_configs()? {
            ec.validate()?;
        }
        Ok(())
    }

    fn event_config(&self, threshold: f64, min_duration: f64) -> Result<EventConfig> {
        let severity_bounds = self
            .severity_bounds
            .iter()
            .find(|b| (b.threshold - threshold).abs() < 1e-9)
            .map(|b| SeverityBounds {
                mild_floor: b.mild_floor,
                hard_below: b.hard_below,
            });
        let config = EventConfig {
            accel_threshold: threshold,
            min_duration,
            frame_interval: FRAME_INTERVAL_S,
            dip_tolerance: self.dip_tolerance,
            severity_bounds,
        };
        config.validate()?;
        Ok(config)
    }

    /// Every (threshold, duration) cell, thresholds outermost.
    pub fn event_configs(&self) -> Result<Vec<EventConfig>> {
        let mut out = Vec::new();
        for &t in &self.thresholds {
            for &d in &self.durations {
                out.push(self.event_config(t, d)?);
            }
        }
        Ok(out)
    }

    pub fn analysis_duration(&self) -> f64 {
        self.analysis_duration.unwrap_or_else(|| {
            self.durations
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min)
        })
    }

    pub fn kmeans(&self) -> KMeansConfig {
        KMeansConfig {
            restarts: self.clustering.restarts,
            max_iter: self.clustering.max_iter,
            tol: self.clustering.tol,
            seed: self.seed.unwrap_or(0),
        }
    }

    /// The synthetic corpus settings, loading them from disk if needed.
    pub fn resolved_synth(&self) -> Result<Option<SynthConfig>> {
        if let Some(s) = &self.synth {
            return Ok(Some(s.clone()));
        }
        let Some(path) = &self.synth_config else {
            return Ok(None);
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let s: SynthConfig = toml::from_str(&text).map_err(|source| Error::Toml {
            path: path.clone(),
            source,
        })?;
        Ok(Some(s))
    }
}

// ---------------------------------------------------------------------------
// results

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisResult {
    pub lag_table: LagTable,
    pub onset_profile: OnsetProfile,
    pub clustering: ClusteringOutcome,
    pub importance: Vec<CueImportanceRow>,
    pub profiles: Vec<ClusterProfile>,
    pub pca: Pca,
    pub radar: RadarData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum AnalysisOutcome {
    Skipped { reason: String },
    Analyzed(Box<AnalysisResult>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdAnalysis {
    pub threshold: f64,
    pub min_duration: f64,
    pub events: Vec<DecelerationEvent>,
    pub outcome: AnalysisOutcome,
}

impl ThresholdAnalysis {
    pub fn result(&self) -> Option<&AnalysisResult> {
        match &self.outcome {
            AnalysisOutcome::Analyzed(r) => Some(r),
            AnalysisOutcome::Skipped { .. } => None,
        }
    }
}

/// One observation with its cues, for the optional per-frame dump.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub site: Arc<str>,
    pub vehicle_id: i64,
    pub leader_id: i64,
    pub frame: i64,
    pub spacing: f64,
    pub ego_speed: f64,
    pub leader_speed: f64,
    pub ego_accel: f64,
    pub leader_accel: f64,
    pub features: KinematicFeatures,
}

#[derive(Debug, Clone)]
pub struct RunResults {
    pub config: PipelineConfig,
    pub inputs: Vec<InputDigest>,
    pub filter_stats: FilterStats,
    pub feature_summary: FeatureSummary,
    pub imputer: Imputer,
    pub census: EventCensus,
    pub analyses: Vec<ThresholdAnalysis>,
    pub feature_rows: Option<Vec<FeatureRow>>,
    /// Bytes of a per-observation dump carried over from an earlier bundle.
    pub carried_features_csv: Option<Vec<u8>>,
}

impl RunResults {
    pub fn analysis(&self, threshold: f64) -> Option<&ThresholdAnalysis> {
        self.analyses
            .iter()
            .find(|a| (a.threshold - threshold).abs() < 1e-9)
    }

    pub fn all_skipped(&self) -> bool {
        self.analyses.iter().all(|a| a.result().is_none())
    }
}

// ---------------------------------------------------------------------------
// stages

fn sha256_file(path: &Path) -> Result<InputDigest> {
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut bytes = 0u64;
    loop {
        let n = std::io::Read::read(&mut f, &mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
        bytes += n as u64;
    }
    Ok(InputDigest {
        name: path.display().to_string(),
        bytes,
        sha256: hex::encode(hasher.finalize()),
    })
}

/// Input sources, the unit system they use and their digests.
pub fn resolve_sources(config: &PipelineConfig) -> Result<(Vec<Source>, Units, Vec<InputDigest>)> {
    if let Some(s) = config.resolved_synth()? {
        let corpus = synth::generate_trajectories(&s)?;
        let name = format!("{}.csv", s.site);
        let digest = InputDigest {
            name: format!("synth:{name}"),
            bytes: corpus.bytes.len() as u64,
            sha256: hex::encode(Sha256::digest(&corpus.bytes)),
        };
        let source = Source::Bytes {
            name,
            data: Arc::from(corpus.bytes),
        };
        return Ok((vec![source], s.units, vec![digest]));
    }
    let mut digests = Vec::new();
    for p in &config.inputs {
        digests.push(sha256_file(p)?);
    }
    let sources = config.inputs.iter().cloned().map(Source::Path).collect();
    Ok((sources, config.units, digests))
}

/// Cues for every observation of every segment, with undefined TTC and
/// looming filled by the population medians.
pub fn segment_features(
    segments: &[TrajectorySegment],
) -> Result<(Vec<Vec<KinematicFeatures>>, Imputer)> {
    let mut features: Vec<Vec<KinematicFeatures>> = segments
        .par_iter()
        .map(|s| {
            s.observations
                .iter()
                .map(kinematics::compute_features)
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<_, _>>()?;
    let imputer = Imputer::fit(features.iter().flatten());
    for f in features.iter_mut().flatten() {
        imputer.apply(f)?;
    }
    Ok((features, imputer))
}

pub fn detect_all(
    segments: &[TrajectorySegment],
    features: &[Vec<KinematicFeatures>],
    config: &EventConfig,
) -> Result<Vec<DecelerationEvent>> {
    let per_segment: Vec<Vec<DecelerationEvent>> = segments
        .par_iter()
        .zip(features.par_iter())
        .enumerate()
        .map(|(i, (s, f))| {
            let fs = FeatureSegment::new(i, s, f)?;
            events::detect_events(&fs, config)
        })
        .collect::<Result<_, _>>()?;
    Ok(per_segment.into_iter().flatten().collect())
}

/// Downstream analysis of one threshold's events (which must already carry
/// their lagged features).
pub fn analyze_events(
    events: &[DecelerationEvent],
    config: &PipelineConfig,
) -> Result<AnalysisOutcome> {
    if events.len() < MIN_RELIABLE_EVENTS {
        return Ok(AnalysisOutcome::Skipped {
            reason: format!(
                "{} events, fewer than the {MIN_RELIABLE_EVENTS} needed for analysis",
                events.len()
            ),
        });
    }
    let lag_table = temporal::precedence_report(events, &config.lags);
    let onset_profile = temporal::onset_profile(events);
    let matrix = cluster::build_event_matrix(events, config.clustering.include_leader_flag)?;
    let (standardized, params) = cluster::standardize(&matrix)?;
    let clustering =
        cluster::cluster_sweep(&standardized, &params, config.k_range, &config.kmeans())?;
    let assignments = &clustering.selected().assignments;
    let importance = importance::rank_cues(events, assignments)?;
    let profiles = importance::cluster_profile(events, assignments, &config.labels)?;
    let pca = importance::pca_project(&standardized, PCA_COMPONENTS)?;
    let radar = importance::radar_data(events, assignments);
    Ok(AnalysisOutcome::Analyzed(Box::new(AnalysisResult {
        lag_table,
        onset_profile,
        clustering,
        importance,
        profiles,
        pca,
        radar,
    })))
}

/// Runs every threshold's analysis and marks cue-dominance reversals.
pub fn analyze_thresholds(
    per_threshold: Vec<(f64, f64, Vec<DecelerationEvent>)>,
    config: &PipelineConfig,
) -> Result<Vec<ThresholdAnalysis>> {
    let mut analyses = Vec::with_capacity(per_threshold.len());
    for (threshold, min_duration, events) in per_threshold {
        let outcome = analyze_events(&events, config)?;
        if let AnalysisOutcome::Skipped { reason } = &outcome {
            log::warn!("threshold {threshold}: analysis skipped ({reason})");
        }
        analyses.push(ThresholdAnalysis {
            threshold,
            min_duration,
            events,
            outcome,
        });
    }
    let mut tables: Vec<&mut Vec<CueImportanceRow>> = analyses
        .iter_mut()
        .filter_map(|a| match &mut a.outcome {
            AnalysisOutcome::Analyzed(r) => Some(&mut r.importance),
            AnalysisOutcome::Skipped { .. } => None,
        })
        .collect();
    importance::mark_reversals(&mut tables);
    Ok(analyses)
}

/// Runs `f` on a pool of `workers` threads (or the global pool).
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(format!("cannot start {n} workers: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Ingest, cues and the detection grid. Shared by the full run and the
/// census-only verb.
pub struct Prepared {
    pub inputs: Vec<InputDigest>,
    pub filter_stats: FilterStats,
    pub segments: Vec<TrajectorySegment>,
    pub features: Vec<Vec<KinematicFeatures>>,
    pub imputer: Imputer,
    pub grid: Vec<(EventConfig, Vec<DecelerationEvent>)>,
    pub census: EventCensus,
}

pub fn prepare(config: &PipelineConfig) -> Result<Prepared> {
    config.validate()?;
    let (sources, units, inputs) = resolve_sources(config)?;
    let options = IngestOptions {
        chunk_size: config.chunk_size,
        units,
        spacing_source: config.spacing_source,
        filters: config.filters,
    };
    let ingested = ingest::ingest_sources(&sources, &options)?;
    log::info!(
        "ingest: {} rows, {} retained in {} segments",
        ingested.stats.raw_count,
        ingested.stats.retained_count,
        ingested.segments.len()
    );
    let (features, imputer) = if ingested.segments.is_empty() {
        (
            vec![],
            Imputer {
                ttc_median: None,
                ttc_inv_median: None,
            },
        )
    } else {
        segment_features(&ingested.segments)?
    };
    let mut grid = Vec::new();
    for ec in config.event_configs()? {
        let found = detect_all(&ingested.segments, &features, &ec)?;
        grid.push((ec, found));
    }
    let cells: Vec<(EventConfig, &[DecelerationEvent])> =
        grid.iter().map(|(c, e)| (*c, e.as_slice())).collect();
    let census = events::event_census(&cells, ingested.stats.retained_count);
    Ok(Prepared {
        inputs,
        filter_stats: ingested.stats,
        segments: ingested.segments,
        features,
        imputer,
        grid,
        census,
    })
}

fn feature_rows(segments: &[TrajectorySegment], features: &[Vec<KinematicFeatures>]) -> Vec<FeatureRow> {
    segments
        .iter()
        .zip(features)
        .flat_map(|(s, fs)| {
            s.observations.iter().zip(fs).map(move |(o, f)| FeatureRow {
                site: s.site_tag.clone(),
                vehicle_id: s.vehicle_id,
                leader_id: s.leader_id,
                frame: o.timestamp_index,
                spacing: o.spacing,
                ego_speed: o.follower.velocity,
                leader_speed: o.leader_velocity,
                ego_accel: o.follower.acceleration,
                leader_accel: o.leader_acceleration,
                features: *f,
            })
        })
        .collect()
}

/// The whole pipeline, in memory. Write the result with
/// [`crate::report::write_bundle`].
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunResults> {
    with_workers(config.workers, || run_inner(config))?
}

fn run_inner(config: &PipelineConfig) -> Result<RunResults> {
    let prepared = prepare(config)?;
    let feature_summary = kinematics::dataset_summary(
        prepared
            .segments
            .iter()
            .zip(&prepared.features)
            .flat_map(|(s, f)| s.observations.iter().zip(f)),
        config.histogram,
    );
    let analysis_duration = config.analysis_duration();
    let mut per_threshold = Vec::new();
    for &threshold in &config.thresholds {
        let cached = prepared.grid.iter().find(|(c, _)| {
            (c.accel_threshold - threshold).abs() < 1e-9
                && (c.min_duration - analysis_duration).abs() < 1e-9
        });
        let mut found = match cached {
            Some((_, e)) => e.clone(),
            None => detect_all(
                &prepared.segments,
                &prepared.features,
                &config.event_config(threshold, analysis_duration)?,
            )?,
        };
        for e in &mut found {
            e.lagged = temporal::extract_lagged(
                &prepared.features[e.segment.segment_index],
                e.onset_index,
                &config.lags,
                FRAME_INTERVAL_S,
            );
        }
        per_threshold.push((threshold, analysis_duration, found));
    }
    let analyses = analyze_thresholds(per_threshold, config)?;
    let feature_rows = config
        .dump_features
        .then(|| feature_rows(&prepared.segments, &prepared.features));
    Ok(RunResults {
        config: config.clone(),
        inputs: prepared.inputs,
        filter_stats: prepared.filter_stats,
        feature_summary,
        imputer: prepared.imputer,
        census: prepared.census,
        analyses,
        feature_rows,
        carried_features_csv: None,
    })
}
