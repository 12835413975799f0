//! Trajectory ingest: bounded-memory chunked parsing of NGSIM-schema text
//! files, imperial to SI conversion, the leader self-join, the quality
//! filters, and segmentation into continuous car-following stretches.
//!
//! Each source is processed in two streaming passes. The first pass builds a
//! compact per-vehicle kinematics index (speed, acceleration, position per
//! frame) used to look up leaders. The second pass joins, filters and buffers
//! retained dyads per vehicle; segments are cut once the source is exhausted.
//! Every per-row decision depends only on row order, never on where a chunk
//! boundary falls, so results do not depend on `chunk_size`.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use flate2::read::MultiGzDecoder;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FRAME_INTERVAL_S: f64 = 0.1;
pub const FRAMES_PER_SECOND: f64 = 10.0;
pub const FEET_TO_METERS: f64 = 0.3048;
pub const DEFAULT_CHUNK_SIZE: usize = 500_000;

/// Short site identifier (`Location` column, or the file stem).
pub type SiteTag = Arc<str>;

pub const REQUIRED_COLUMNS: [&str; 9] = [
    "Vehicle_ID",
    "Frame_ID",
    "Global_Time",
    "Local_Y",
    "v_Vel",
    "v_Acc",
    "Lane_ID",
    "Preceding",
    "Space_Headway",
];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing required column `{0}` in header")]
    MissingColumn(String),
    #[error("input has no header row")]
    MissingHeader,
    #[error("chunk size must be at least 1")]
    ZeroChunkSize,
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    #[default]
    Imperial,
    Si,
}

impl std::str::FromStr for Units {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "imperial" | "ft" | "feet" => Ok(Units::Imperial),
            "si" | "metric" | "m" => Ok(Units::Si),
            other => Err(format!("unknown unit system `{other}` (expected imperial|si)")),
        }
    }
}

/// One raw per-frame vehicle sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub site_tag: SiteTag,
    pub vehicle_id: i64,
    pub frame_id: i64,
    /// Milliseconds.
    pub global_time: i64,
    pub local_y: f64,
    pub velocity: f64,
    pub acceleration: f64,
    pub lane_id: i64,
    /// 0 = no preceding vehicle.
    pub preceding_id: i64,
    pub space_headway: f64,
    pub units: Units,
}

/// A follower sample synchronized with its leader at the same frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadObservation {
    pub follower: TrajectoryRecord,
    pub leader_velocity: f64,
    pub leader_acceleration: f64,
    pub spacing: f64,
    pub timestamp_index: i64,
}

impl DyadObservation {
    pub fn leader_id(&self) -> i64 {
        self.follower.preceding_id
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySegment {
    pub site_tag: SiteTag,
    pub vehicle_id: i64,
    pub leader_id: i64,
    pub observations: Vec<DyadObservation>,
    pub length_frames: usize,
}

impl TrajectorySegment {
    pub fn first_frame(&self) -> i64 {
        self.observations.first().map_or(0, |o| o.timestamp_index)
    }
}

/// Rejection criteria, declared in attribution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Parse,
    Duplicate,
    ValidLeader,
    LeaderMissing,
    ReasonableSpacing,
    MovingVehicles,
    MinimumTrajectory,
}

impl Criterion {
    pub const ALL: [Criterion; 7] = [
        Criterion::Parse,
        Criterion::Duplicate,
        Criterion::ValidLeader,
        Criterion::LeaderMissing,
        Criterion::ReasonableSpacing,
        Criterion::MovingVehicles,
        Criterion::MinimumTrajectory,
    ];
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterStats {
    pub raw_count: u64,
    pub rejected_per_criterion: BTreeMap<Criterion, u64>,
    pub retained_count: u64,
    pub retained_vehicles: u64,
}

impl FilterStats {
    pub fn reject(&mut self, criterion: Criterion, n: u64) {
        *self.rejected_per_criterion.entry(criterion).or_insert(0) += n;
    }

    pub fn rejected(&self, criterion: Criterion) -> u64 {
        self.rejected_per_criterion.get(&criterion).copied().unwrap_or(0)
    }

    pub fn total_rejected(&self) -> u64 {
        self.rejected_per_criterion.values().sum()
    }

    pub fn merge(&mut self, other: &FilterStats) {
        self.raw_count += other.raw_count;
        self.retained_count += other.retained_count;
        self.retained_vehicles += other.retained_vehicles;
        for (c, n) in &other.rejected_per_criterion {
            self.reject(*c, *n);
        }
    }

    /// raw = retained + every rejection.
    pub fn is_conserved(&self) -> bool {
        self.raw_count == self.retained_count + self.total_rejected()
    }
}

// ---------------------------------------------------------------------------
// unit conversion

pub fn convert_units(record: TrajectoryRecord) -> TrajectoryRecord {
    match record.units {
        Units::Si => record,
        Units::Imperial => TrajectoryRecord {
            local_y: record.local_y * FEET_TO_METERS,
            velocity: record.velocity * FEET_TO_METERS,
            acceleration: record.acceleration * FEET_TO_METERS,
            space_headway: record.space_headway * FEET_TO_METERS,
            units: Units::Si,
            ..record
        },
    }
}

pub fn meters_to_feet(meters: f64) -> f64 {
    meters / FEET_TO_METERS
}

// ---------------------------------------------------------------------------
// chunked reading

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Delimiter {
    Comma,
    Whitespace,
}

#[derive(Debug, Clone)]
struct ColumnMap {
    vehicle_id: usize,
    frame_id: usize,
    global_time: usize,
    local_y: usize,
    velocity: usize,
    acceleration: usize,
    lane_id: usize,
    preceding: usize,
    space_headway: usize,
    location: Option<usize>,
}

impl ColumnMap {
    fn from_header(fields: &[&str]) -> Result<Self, IngestError> {
        let find = |name: &str| {
            fields
                .iter()
                .position(|f| f.trim().trim_matches('"').eq_ignore_ascii_case(name))
        };
        let need = |name: &str| find(name).ok_or_else(|| IngestError::MissingColumn(name.to_string()));
        Ok(ColumnMap {
            vehicle_id: need("Vehicle_ID")?,
            frame_id: need("Frame_ID")?,
            global_time: need("Global_Time")?,
            local_y: need("Local_Y")?,
            velocity: need("v_Vel")?,
            acceleration: need("v_Acc")?,
            lane_id: need("Lane_ID")?,
            preceding: need("Preceding")?,
            space_headway: need("Space_Headway")?,
            location: find("Location"),
        })
    }
}

/// One parsed batch plus the rows that failed to parse on the way.
#[derive(Debug, Clone, Default)]
pub struct RecordBatch {
    pub records: Vec<TrajectoryRecord>,
    pub raw_rows: u64,
    pub parse_rejects: u64,
}

/// Iterator over parsed batches of at most `chunk_size` records.
pub struct ChunkReader<R> {
    reader: R,
    columns: ColumnMap,
    delimiter: Delimiter,
    chunk_size: usize,
    units: Units,
    default_site: SiteTag,
    line: String,
    finished: bool,
    source_name: String,
}

/// Opens a chunked reader over `reader`; the first non-empty line must be
/// the header.
pub fn read_chunks<R: BufRead>(
    mut reader: R,
    chunk_size: usize,
    units: Units,
    default_site: SiteTag,
) -> Result<ChunkReader<R>, IngestError> {
    if chunk_size == 0 {
        return Err(IngestError::ZeroChunkSize);
    }
    let source_name = default_site.to_string();
    let mut header = String::new();
    loop {
        header.clear();
        let n = reader.read_line(&mut header).map_err(|source| IngestError::Io {
            path: source_name.clone(),
            source,
        })?;
        if n == 0 {
            return Err(IngestError::MissingHeader);
        }
        if !header.trim().is_empty() {
            break;
        }
    }
    let header = header.trim_start_matches('\u{feff}');
    let delimiter = if header.contains(',') {
        Delimiter::Comma
    } else {
        Delimiter::Whitespace
    };
    let fields = split_fields(header.trim(), delimiter);
    let columns = ColumnMap::from_header(&fields)?;
    Ok(ChunkReader {
        reader,
        columns,
        delimiter,
        chunk_size,
        units,
        default_site,
        line: String::new(),
        finished: false,
        source_name,
    })
}

fn split_fields(line: &str, delimiter: Delimiter) -> Vec<&str> {
    match delimiter {
        Delimiter::Comma => line.split(',').map(str::trim).collect(),
        Delimiter::Whitespace => line.split_whitespace().collect(),
    }
}

fn parse_int(s: &str) -> Option<i64> {
    let s = s.trim().trim_matches('"');
    s.parse::<i64>().ok().or_else(|| {
        let f: f64 = s.parse().ok()?;
        (f.is_finite() && f.fract() == 0.0 && f.abs() < 9.0e18).then_some(f as i64)
    })
}

fn parse_float(s: &str) -> Option<f64> {
    let f: f64 = s.trim().trim_matches('"').parse().ok()?;
    f.is_finite().then_some(f)
}

impl<R: BufRead> ChunkReader<R> {
    fn parse_line(&self, line: &str) -> Option<TrajectoryRecord> {
        let fields = split_fields(line, self.delimiter);
        let c = &self.columns;
        let get = |i: usize| fields.get(i).copied();
        let site_tag = match c.location.and_then(get) {
            Some(loc) if !loc.trim().trim_matches('"').is_empty() => {
                let loc = loc.trim().trim_matches('"');
                if *loc == *self.default_site {
                    self.default_site.clone()
                } else {
                    Arc::from(loc)
                }
            }
            _ => self.default_site.clone(),
        };
        Some(TrajectoryRecord {
            site_tag,
            vehicle_id: parse_int(get(c.vehicle_id)?)?,
            frame_id: parse_int(get(c.frame_id)?)?,
            global_time: parse_int(get(c.global_time)?)?,
            local_y: parse_float(get(c.local_y)?)?,
            velocity: parse_float(get(c.velocity)?)?,
            acceleration: parse_float(get(c.acceleration)?)?,
            lane_id: parse_int(get(c.lane_id)?)?,
            preceding_id: parse_int(get(c.preceding)?)?,
            space_headway: parse_float(get(c.space_headway)?)?,
            units: self.units,
        })
    }
}

impl<R: BufRead> Iterator for ChunkReader<R> {
    type Item = Result<RecordBatch, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.finished {
            return None;
        }
        let mut batch = RecordBatch::default();
        while batch.records.len() < self.chunk_size {
            self.line.clear();
            match self.reader.read_line(&mut self.line) {
                Ok(0) => {
                    self.finished = true;
                    break;
                }
                Ok(_) => {}
                Err(source) => {
                    self.finished = true;
                    return Some(Err(IngestError::Io {
                        path: self.source_name.clone(),
                        source,
                    }));
                }
            }
            let trimmed = self.line.trim();
            if trimmed.is_empty() {
                continue;
            }
            batch.raw_rows += 1;
            match self.parse_line(trimmed) {
                Some(record) => batch.records.push(record),
                None => batch.parse_rejects += 1,
            }
        }
        if batch.raw_rows == 0 {
            None
        } else {
            Some(Ok(batch))
        }
    }
}

// ---------------------------------------------------------------------------
// sources

/// Something that can be opened more than once for the two streaming passes.
#[derive(Debug, Clone)]
pub enum Source {
    Path(PathBuf),
    Bytes { name: String, data: Arc<[u8]> },
}

impl Source {
    pub fn name(&self) -> String {
        match self {
            Source::Path(p) => p.display().to_string(),
            Source::Bytes { name, .. } => name.clone(),
        }
    }

    /// Default site tag: the file stem with any `.gz`/`.csv`/`.txt` removed.
    pub fn default_site(&self) -> SiteTag {
        let raw = match self {
            Source::Path(p) => p
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "input".into()),
            Source::Bytes { name, .. } => name.clone(),
        };
        let mut stem = raw.as_str();
        for ext in [".gz", ".csv", ".txt", ".tsv"] {
            if let Some(s) = stem.strip_suffix(ext) {
                stem = s;
            }
        }
        Arc::from(stem)
    }

    pub fn open(&self) -> Result<Box<dyn BufRead>, IngestError> {
        let io_err = |source| IngestError::Io {
            path: self.name(),
            source,
        };
        let raw: Box<dyn Read> = match self {
            Source::Path(p) => Box::new(File::open(p).map_err(io_err)?),
            Source::Bytes { data, .. } => Box::new(io::Cursor::new(data.clone())),
        };
        let mut buffered = BufReader::with_capacity(1 << 16, raw);
        let gz = buffered.fill_buf().map_err(io_err)?.starts_with(&[0x1f, 0x8b]);
        if gz {
            Ok(Box::new(BufReader::with_capacity(
                1 << 16,
                MultiGzDecoder::new(buffered),
            )))
        } else {
            Ok(Box::new(buffered))
        }
    }
}

impl From<&Path> for Source {
    fn from(p: &Path) -> Self {
        Source::Path(p.to_path_buf())
    }
}

// ---------------------------------------------------------------------------
// leader index and join

#[derive(Debug, Clone, Copy)]
struct Slot {
    velocity: f64,
    acceleration: f64,
    local_y: f64,
    present: bool,
    claimed: bool,
}

const EMPTY_SLOT: Slot = Slot {
    velocity: 0.0,
    acceleration: 0.0,
    local_y: 0.0,
    present: false,
    claimed: false,
};

#[derive(Debug, Default)]
struct Track {
    first_frame: i64,
    slots: Vec<Slot>,
}

impl Track {
    fn slot_index(&self, frame: i64) -> Option<usize> {
        let off = frame.checked_sub(self.first_frame)?;
        (off >= 0 && (off as usize) < self.slots.len()).then_some(off as usize)
    }

    fn insert(&mut self, frame: i64, slot: Slot) {
        if self.slots.is_empty() {
            self.first_frame = frame;
            self.slots.push(slot);
            return;
        }
        if frame < self.first_frame {
            let shift = (self.first_frame - frame) as usize;
            let mut grown = vec![EMPTY_SLOT; shift];
            grown.append(&mut self.slots);
            self.slots = grown;
            self.first_frame = frame;
        }
        let idx = (frame - self.first_frame) as usize;
        if idx >= self.slots.len() {
            self.slots.resize(idx + 1, EMPTY_SLOT);
        }
        // first occurrence wins; later copies are duplicates
        if !self.slots[idx].present {
            self.slots[idx] = slot;
        }
    }
}

/// Per-vehicle kinematics keyed by (site, vehicle) and frame, in SI units.
#[derive(Debug, Default)]
pub struct LeaderIndex {
    tracks: HashMap<(SiteTag, i64), Track>,
}

/// Leader state at one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeaderState {
    pub velocity: f64,
    pub acceleration: f64,
    pub local_y: f64,
}

impl LeaderIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an SI record. Only the first copy of a (site, vehicle, frame) key is kept.
    pub fn insert(&mut self, record: &TrajectoryRecord) {
        debug_assert_eq!(record.units, Units::Si);
        self.tracks
            .entry((record.site_tag.clone(), record.vehicle_id))
            .or_default()
            .insert(
                record.frame_id,
                Slot {
                    velocity: record.velocity,
                    acceleration: record.acceleration,
                    local_y: record.local_y,
                    present: true,
                    claimed: false,
                },
            );
    }

    pub fn lookup(&self, site: &SiteTag, vehicle_id: i64, frame: i64) -> Option<LeaderState> {
        let track = self.tracks.get(&(site.clone(), vehicle_id))?;
        let slot = track.slots[track.slot_index(frame)?];
        slot.present.then_some(LeaderState {
            velocity: slot.velocity,
            acceleration: slot.acceleration,
            local_y: slot.local_y,
        })
    }

    /// Marks the record's key as seen; returns false when it was already
    /// claimed by an earlier row (a duplicate).
    fn claim(&mut self, record: &TrajectoryRecord) -> bool {
        let Some(track) = self
            .tracks
            .get_mut(&(record.site_tag.clone(), record.vehicle_id))
        else {
            return true;
        };
        let Some(idx) = track.slot_index(record.frame_id) else {
            return true;
        };
        let slot = &mut track.slots[idx];
        if slot.claimed {
            false
        } else {
            slot.claimed = true;
            true
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpacingSource {
    /// The dataset's Space_Headway column.
    #[default]
    Headway,
    /// Leader Local_Y minus follower Local_Y.
    Positions,
}

/// Joins SI follower records to their leader at the same frame.
///
/// Rows without a preceding vehicle are counted under `valid_leader`; rows
/// whose leader has no sample at that frame under `leader_missing`.
pub fn join_leader(
    records: &[TrajectoryRecord],
    index: &LeaderIndex,
    spacing_source: SpacingSource,
) -> (Vec<DyadObservation>, FilterStats) {
    let mut stats = FilterStats {
        raw_count: records.len() as u64,
        ..Default::default()
    };
    let mut dyads = Vec::with_capacity(records.len());
    for record in records {
        match join_one(record, index, spacing_source) {
            Ok(d) => dyads.push(d),
            Err(c) => stats.reject(c, 1),
        }
    }
    stats.retained_count = dyads.len() as u64;
    (dyads, stats)
}

fn join_one(
    record: &TrajectoryRecord,
    index: &LeaderIndex,
    spacing_source: SpacingSource,
) -> Result<DyadObservation, Criterion> {
    if record.preceding_id == 0 {
        return Err(Criterion::ValidLeader);
    }
    let leader = index
        .lookup(&record.site_tag, record.preceding_id, record.frame_id)
        .ok_or(Criterion::LeaderMissing)?;
    let spacing = match spacing_source {
        SpacingSource::Headway => record.space_headway,
        SpacingSource::Positions => leader.local_y - record.local_y,
    };
    Ok(DyadObservation {
        follower: record.clone(),
        leader_velocity: leader.velocity,
        leader_acceleration: leader.acceleration,
        spacing,
        timestamp_index: record.frame_id,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub max_spacing: f64,
    pub min_speed: f64,
    pub min_segment_frames: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            max_spacing: 200.0,
            min_speed: 1.0,
            min_segment_frames: 50,
        }
    }
}

fn filter_one(d: &DyadObservation, config: &FilterConfig) -> Result<(), Criterion> {
    if d.follower.preceding_id == 0 {
        return Err(Criterion::ValidLeader);
    }
    if !(d.spacing > 0.0 && d.spacing <= config.max_spacing) {
        return Err(Criterion::ReasonableSpacing);
    }
    if !(d.follower.velocity > config.min_speed && d.leader_velocity > config.min_speed) {
        return Err(Criterion::MovingVehicles);
    }
    Ok(())
}

/// Per-frame quality filters; each rejection goes to the first failing criterion.
pub fn apply_filters(
    dyads: Vec<DyadObservation>,
    config: &FilterConfig,
) -> (Vec<DyadObservation>, FilterStats) {
    let mut stats = FilterStats {
        raw_count: dyads.len() as u64,
        ..Default::default()
    };
    let retained: Vec<_> = dyads
        .into_iter()
        .filter(|d| match filter_one(d, config) {
            Ok(()) => true,
            Err(c) => {
                stats.reject(c, 1);
                false
            }
        })
        .collect();
    stats.retained_count = retained.len() as u64;
    (retained, stats)
}

/// Splits dyads (ordered by vehicle then frame) at frame gaps and leader
/// changes and keeps segments of at least `min_frames`. Returns the segments
/// and the number of observations dropped in short segments.
pub fn segment_trajectories(
    dyads: Vec<DyadObservation>,
    min_frames: usize,
) -> (Vec<TrajectorySegment>, u64) {
    let mut segments = Vec::new();
    let mut dropped = 0u64;
    let mut current: Vec<DyadObservation> = Vec::new();
    let mut flush = |current: &mut Vec<DyadObservation>| {
        if current.is_empty() {
            return;
        }
        let obs = std::mem::take(current);
        if obs.len() >= min_frames {
            let first = &obs[0];
            segments.push(TrajectorySegment {
                site_tag: first.follower.site_tag.clone(),
                vehicle_id: first.follower.vehicle_id,
                leader_id: first.leader_id(),
                length_frames: obs.len(),
                observations: obs,
            });
        } else {
            dropped += obs.len() as u64;
        }
    };
    for d in dyads {
        let breaks = match current.last() {
            None => false,
            Some(prev) => {
                prev.follower.site_tag != d.follower.site_tag
                    || prev.follower.vehicle_id != d.follower.vehicle_id
                    || prev.leader_id() != d.leader_id()
                    || d.timestamp_index != prev.timestamp_index + 1
            }
        };
        if breaks {
            flush(&mut current);
        }
        current.push(d);
    }
    flush(&mut current);
    (segments, dropped)
}

// ---------------------------------------------------------------------------
// streaming driver

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestOptions {
    pub chunk_size: usize,
    pub units: Units,
    pub spacing_source: SpacingSource,
    pub filters: FilterConfig,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            chunk_size: DEFAULT_CHUNK_SIZE,
            units: Units::Imperial,
            spacing_source: SpacingSource::Headway,
            filters: FilterConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct IngestOutput {
    pub segments: Vec<TrajectorySegment>,
    pub stats: FilterStats,
}

type VehicleKey = (SiteTag, i64);

/// Runs the full ingest over each source independently and concatenates the
/// results in source order.
pub fn ingest_sources(sources: &[Source], options: &IngestOptions) -> Result<IngestOutput, IngestError> {
    let mut out = IngestOutput::default();
    for source in sources {
        let one = ingest_source(source, options)?;
        out.stats.merge(&one.stats);
        out.segments.extend(one.segments);
    }
    Ok(out)
}

pub fn ingest_source(source: &Source, options: &IngestOptions) -> Result<IngestOutput, IngestError> {
    let site = source.default_site();
    let mut index = LeaderIndex::new();
    for batch in read_chunks(source.open()?, options.chunk_size, options.units, site.clone())? {
        for record in batch?.records {
            index.insert(&convert_units(record));
        }
    }

    let mut stats = FilterStats::default();
    let mut buffers: BTreeMap<VehicleKey, Vec<DyadObservation>> = BTreeMap::new();
    for batch in read_chunks(source.open()?, options.chunk_size, options.units, site)? {
        let batch = batch?;
        stats.raw_count += batch.raw_rows;
        stats.reject(Criterion::Parse, batch.parse_rejects);
        let mut unique = Vec::with_capacity(batch.records.len());
        for record in batch.records {
            let record = convert_units(record);
            if index.claim(&record) {
                unique.push(record);
            } else {
                stats.reject(Criterion::Duplicate, 1);
            }
        }
        let (dyads, join_stats) = join_leader(&unique, &index, options.spacing_source);
        let (kept, filter_stats) = apply_filters(dyads, &options.filters);
        for (c, n) in join_stats
            .rejected_per_criterion
            .iter()
            .chain(&filter_stats.rejected_per_criterion)
        {
            stats.reject(*c, *n);
        }
        for d in kept {
            buffers
                .entry((d.follower.site_tag.clone(), d.follower.vehicle_id))
                .or_default()
                .push(d);
        }
    }
    drop(index);

    let mut segments = Vec::new();
    for (_, mut dyads) in buffers {
        dyads.sort_by_key(|d| d.timestamp_index);
        let (segs, dropped) = segment_trajectories(dyads, options.filters.min_segment_frames);
        stats.reject(Criterion::MinimumTrajectory, dropped);
        if !segs.is_empty() {
            stats.retained_vehicles += 1;
        }
        stats.retained_count += segs.iter().map(|s| s.length_frames as u64).sum::<u64>();
        segments.extend(segs);
    }
    Ok(IngestOutput { segments, stats })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(vehicle: i64, frame: i64, preceding: i64, v: f64, headway: f64) -> TrajectoryRecord {
        TrajectoryRecord {
            site_tag: Arc::from("t"),
            vehicle_id: vehicle,
            frame_id: frame,
            global_time: frame * 100,
            local_y: 0.0,
            velocity: v,
            acceleration: 0.0,
            lane_id: 1,
            preceding_id: preceding,
            space_headway: headway,
            units: Units::Si,
        }
    }

    fn dyad(vehicle: i64, frame: i64, leader: i64) -> DyadObservation {
        DyadObservation {
            follower: rec(vehicle, frame, leader, 10.0, 30.0),
            leader_velocity: 10.0,
            leader_acceleration: 0.0,
            spacing: 30.0,
            timestamp_index: frame,
        }
    }

    const HEADER: &str = "Vehicle_ID,Frame_ID,Global_Time,Local_Y,v_Vel,v_Acc,Lane_ID,Preceding,Space_Headway\n";

    fn reader(body: &str) -> ChunkReader<io::Cursor<Vec<u8>>> {
        let text = format!("{HEADER}{body}");
        read_chunks(io::Cursor::new(text.into_bytes()), 2, Units::Imperial, Arc::from("t")).unwrap()
    }

    #[test]
    fn unit_conversion_constants() {
        let mut r = rec(1, 1, 0, 10.0, 100.0);
        r.units = Units::Imperial;
        r.acceleration = -1.64042;
        let si = convert_units(r);
        assert!((si.velocity - 3.048).abs() < 1e-12);
        assert!((si.space_headway - 30.48).abs() < 1e-12);
        assert!((si.acceleration - (-0.5)).abs() < 1e-5);
        assert_eq!(si.units, Units::Si);
        // already SI: untouched
        assert_eq!(convert_units(si.clone()), si);
    }

    #[test]
    fn empty_file_yields_no_batches() {
        let mut r = reader("");
        assert!(r.next().is_none());
    }

    #[test]
    fn non_numeric_velocity_is_a_parse_reject() {
        let batches: Vec<_> = reader("1,1,100,0,abc,0,1,0,0\n2,1,100,0,10,0,1,0,0\n")
            .map(Result::unwrap)
            .collect();
        assert_eq!(batches.len(), 1);
        assert_eq!(batches[0].parse_rejects, 1);
        assert_eq!(batches[0].records.len(), 1);
    }

    #[test]
    fn missing_column_is_fatal() {
        let text = "Vehicle_ID,Frame_ID,Global_Time\n1,1,1\n";
        let err = read_chunks(io::Cursor::new(text), 10, Units::Si, Arc::from("x")).err();
        assert!(matches!(err, Some(IngestError::MissingColumn(c)) if c == "Local_Y"));
    }

    #[test]
    fn whitespace_delimited_input_parses() {
        let text = "Vehicle_ID Frame_ID Global_Time Local_Y v_Vel v_Acc Lane_ID Preceding Space_Headway\n\
                    3   12  1113433136100  50.5  30.0  -1.0  2  0  0.00\n";
        let mut r = read_chunks(io::Cursor::new(text), 10, Units::Imperial, Arc::from("x")).unwrap();
        let b = r.next().unwrap().unwrap();
        assert_eq!(b.records[0].global_time, 1113433136100);
        assert_eq!(b.records[0].vehicle_id, 3);
    }

    #[test]
    fn join_matches_leader_at_same_frame() {
        let mut index = LeaderIndex::new();
        let mut leader = rec(5, 10, 0, 15.0, 0.0);
        leader.acceleration = -0.7;
        index.insert(&leader);
        let follower = rec(2, 10, 5, 12.0, 20.0);
        let (dyads, stats) = join_leader(&[follower], &index, SpacingSource::Headway);
        assert_eq!(dyads.len(), 1);
        assert_eq!(dyads[0].leader_velocity, 15.0);
        assert_eq!(dyads[0].leader_acceleration, -0.7);
        assert_eq!(dyads[0].spacing, 20.0);
        assert!(stats.is_conserved());
    }

    #[test]
    fn join_rejections() {
        let mut index = LeaderIndex::new();
        index.insert(&rec(5, 9, 0, 15.0, 0.0));
        let no_leader = rec(2, 10, 0, 12.0, 0.0);
        let absent = rec(3, 10, 5, 12.0, 20.0);
        let (dyads, stats) = join_leader(&[no_leader, absent], &index, SpacingSource::Headway);
        assert!(dyads.is_empty());
        assert_eq!(stats.rejected(Criterion::ValidLeader), 1);
        assert_eq!(stats.rejected(Criterion::LeaderMissing), 1);
    }

    #[test]
    fn filter_attribution() {
        let mut far = dyad(1, 1, 7);
        far.spacing = 250.0;
        let mut slow = dyad(2, 1, 7);
        slow.follower.velocity = 0.5;
        let mut ok = dyad(3, 1, 7);
        ok.spacing = 32.4;
        ok.follower.velocity = 18.2;
        ok.leader_velocity = 18.5;
        // both spacing and speed fail: first criterion wins
        let mut both = dyad(4, 1, 7);
        both.spacing = 0.0;
        both.leader_velocity = 0.2;
        let (kept, stats) = apply_filters(vec![far, slow, ok, both], &FilterConfig::default());
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].follower.vehicle_id, 3);
        assert_eq!(stats.rejected(Criterion::ReasonableSpacing), 2);
        assert_eq!(stats.rejected(Criterion::MovingVehicles), 1);
        assert!(stats.is_conserved());
    }

    #[test]
    fn segmentation_examples() {
        let run = |frames: &[(i64, i64)]| {
            let dyads = frames.iter().map(|&(f, l)| dyad(1, f, l)).collect();
            segment_trajectories(dyads, 50)
        };
        let (s, d) = run(&(1..=120).map(|f| (f, 9)).collect::<Vec<_>>());
        assert_eq!((s.len(), s[0].length_frames, d), (1, 120, 0));

        let (s, d) = run(&(1..=60).map(|f| (f, if f <= 30 { 9 } else { 8 })).collect::<Vec<_>>());
        assert_eq!((s.len(), d), (0, 60));

        let frames: Vec<_> = (1..=49).chain(51..=120).map(|f| (f, 9)).collect();
        let (s, d) = run(&frames);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].length_frames, 70);
        assert_eq!(s[0].first_frame(), 51);
        assert_eq!(d, 49);
    }

    #[test]
    fn duplicate_rows_are_counted_once() {
        let body = "1,1,100,0,10,0,1,0,0\n1,1,100,0,10,0,1,0,0\n";
        let text = format!("{HEADER}{body}");
        let source = Source::Bytes {
            name: "dup".into(),
            data: Arc::from(text.into_bytes()),
        };
        let out = ingest_source(&source, &IngestOptions::default()).unwrap();
        assert_eq!(out.stats.raw_count, 2);
        assert_eq!(out.stats.rejected(Criterion::Duplicate), 1);
        assert_eq!(out.stats.rejected(Criterion::ValidLeader), 1);
        assert!(out.stats.is_conserved());
    }
}
