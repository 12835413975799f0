//! Behavioral modes: K-means over standardized onset features.
//!
//! Each event becomes a 10-column row (six cues at onset, mean and maximum
//! deceleration, and the two onset speeds). Columns are standardized with the
//! population standard deviation, K-means is run for every K in a range, and
//! K is picked by silhouette with a cap for small, weakly structured samples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::DecelerationEvent;

pub const EVENT_COLUMNS: [&str; 10] = [
    "v_rel",
    "ttc",
    "gap_closing_rate",
    "a_req",
    "leader_braking_flag",
    "ttc_inv",
    "mean_decel",
    "max_decel",
    "ego_speed_onset",
    "leader_speed_onset",
];

pub const DEFAULT_K_RANGE: (usize, usize) = (2, 8);
/// Below this many events a weak silhouette caps K at 3.
pub const CAP_SAMPLE_SIZE: usize = 500;
pub const CAP_SILHOUETTE: f64 = 0.3;
pub const CAP_K: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("K = {k} exceeds the {rows} available rows")]
    TooManyClusters { k: usize, rows: usize },
    #[error("K must be at least {min}, got {k}")]
    TooFewClusters { k: usize, min: usize },
    #[error("cluster {0} has no members")]
    EmptyCluster(usize),
    #[error("every column is constant; nothing to cluster")]
    NoVariableColumns,
    #[error("event {event} has no value for {column} (impute before clustering)")]
    MissingValue { event: usize, column: &'static str },
    #[error("{what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("no K in the requested range is feasible for {rows} rows")]
    EmptyKRange { rows: usize },
}

/// Dense row-major matrix with named columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub names: Vec<String>,
    pub n_rows: usize,
    pub data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn from_rows(names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self, ClusterError> {
        let mut data = Vec::with_capacity(rows.len() * names.len());
        for r in rows {
            if r.len() != names.len() {
                return Err(ClusterError::LengthMismatch {
                    what: "row",
                    got: r.len(),
                    expected: names.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(FeatureMatrix {
            names,
            n_rows: rows.len(),
            data,
        })
    }

    /// Single-column matrix, handy for 1-D examples.
    pub fn from_column(name: &str, values: &[f64]) -> Self {
        FeatureMatrix {
            names: vec![name.to_string()],
            n_rows: values.len(),
            data: values.to_vec(),
        }
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.n_cols();
        &self.data[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_cols().max(1)).take(self.n_rows)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.n_cols());
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            names: self.names.clone(),
            n_rows: idx.len(),
            data,
        }
    }
}

/// One row per event, in [`EVENT_COLUMNS`] order. With `include_flag` off the
/// leader braking flag column is left out.
pub fn build_event_matrix(
    events: &[DecelerationEvent],
    include_flag: bool,
) -> Result<FeatureMatrix, ClusterError> {
    let names: Vec<String> = EVENT_COLUMNS
        .iter()
        .filter(|&&c| include_flag || c != "leader_braking_flag")
        .map(|c| c.to_string())
        .collect();
    let mut data = Vec::with_capacity(events.len() * names.len());
    for (i, e) in events.iter().enumerate() {
        let f = &e.onset_features;
        let ttc = f.ttc.ok_or(ClusterError::MissingValue {
            event: i,
            column: "ttc",
        })?;
        let ttc_inv = f.ttc_inv.ok_or(ClusterError::MissingValue {
            event: i,
            column: "ttc_inv",
        })?;
        data.extend([f.v_rel, ttc, f.gap_closing_rate, f.a_req]);
        if include_flag {
            data.push(f64::from(f.leader_braking_flag));
        }
        data.extend([
            ttc_inv,
            e.mean_decel,
            e.max_decel,
            e.ego_speed_onset,
            e.leader_speed_onset,
        ]);
    }
    Ok(FeatureMatrix {
        names,
        n_rows: events.len(),
        data,
    })
}

/// Per-column mean and population sd of the kept columns, plus the names of
/// constant columns that were dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub names: Vec<String>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    pub dropped: Vec<String>,
}

impl Standardization {
    pub fn to_original(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.means.iter().zip(&self.sds))
            .map(|(z, (m, s))| z * s + m)
            .collect()
    }
}

pub fn standardize(m: &FeatureMatrix) -> Result<(FeatureMatrix, Standardization), ClusterError> {
    if m.n_rows < 2 {
        return Err(ClusterError::TooFewRows {
            needed: 2,
            got: m.n_rows,
        });
    }
    let mut keep = Vec::new();
    let mut params = Standardization {
        names: vec![],
        means: vec![],
        sds: vec![],
        dropped: vec![],
    };
    for (j, name) in m.names.iter().enumerate() {
        let col = m.column(j);
        let mean = crate::stats::mean(&col);
        let sd = crate::stats::population_sd(&col);
        if sd == 0.0 || !sd.is_finite() {
            log::warn!("column {name} is constant; dropped before clustering");
            params.dropped.push(name.clone());
            continue;
        }
        keep.push(j);
        params.names.push(name.clone());
        params.means.push(mean);
        params.sds.push(sd);
    }
    if keep.is_empty() {
        return Err(ClusterError::NoVariableColumns);
    }
    let mut data = Vec::with_capacity(m.n_rows * keep.len());
    for r in m.rows() {
        for (c, &j) in keep.iter().enumerate() {
            data.push((r[j] - params.means[c]) / params.sds[c]);
        }
    }
    Ok((
        FeatureMatrix {
            names: params.names.clone(),
            n_rows: m.n_rows,
            data,
        },
        params,
    ))
}

// ---------------------------------------------------------------------------
// K-means

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub restarts: usize,
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            restarts: 50,
            max_iter: 300,
            tol: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LloydRun {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Inertia after every assignment step, then the final partition's.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Index of the winning restart.
    pub restart: usize,
    pub restart_inertias: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}

/// Nearest centroid, ties to the lowest index.
fn nearest(x: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn cluster_means(m: &FeatureMatrix, assignments: &[usize], k: usize) -> Vec<Vec<f64>> {
    let d = m.n_cols();
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (r, &a) in m.rows().zip(assignments) {
        counts[a] += 1;
        for (s, x) in sums[a].iter_mut().zip(r) {
            *s += x;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            for v in s.iter_mut() {
                *v /= c as f64;
            }
        }
    }
    sums
}

fn inertia_of(m: &FeatureMatrix, assignments: &[usize], centroids: &[Vec<f64>]) -> f64 {
    m.rows()
        .zip(assignments)
        .map(|(r, &a)| sq_dist(r, &centroids[a]))
        .sum()
}

/// k-means++ seeding: first center uniform, then D^2 sampling.
pub fn kmeans_plus_plus(m: &FeatureMatrix, k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let n = m.n_rows;
    let mut centroids = vec![m.row(rng.random_range(0..n)).to_vec()];
    let mut d2: Vec<f64> = m.rows().map(|r| sq_dist(r, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc > target && w > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = m.row(pick).to_vec();
        for (i, r) in m.rows().enumerate() {
            d2[i] = d2[i].min(sq_dist(r, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Gives each empty cluster the point farthest from its own centroid, taken
/// from a cluster that can spare it, and moves the empty centroid onto it.
fn fill_empty(
    m: &FeatureMatrix,
    assignments: &mut [usize],
    centroids: &mut [Vec<f64>],
    k: usize,
) {
    let mut counts = vec![0usize; k];
    for &a in assignments.iter() {
        counts[a] += 1;
    }
    for j in 0..k {
        if counts[j] > 0 {
            continue;
        }
        let mut far = None;
        let mut far_d = -1.0;
        for (i, r) in m.rows().enumerate() {
            let a = assignments[i];
            if counts[a] < 2 {
                continue;
            }
            let d = sq_dist(r, &centroids[a]);
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        let Some(i) = far else { break };
        counts[assignments[i]] -= 1;
        counts[j] += 1;
        assignments[i] = j;
        centroids[j] = m.row(i).to_vec();
    }
}

/// Lloyd iterations from the given centroids.
pub fn lloyd(m: &FeatureMatrix, init: Vec<Vec<f64>>, max_iter: usize, tol: f64) -> LloydRun {
    let k = init.len();
    let mut centroids = init;
    let mut assignments = vec![0usize; m.n_rows];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..max_iter {
        iterations += 1;
        for (a, r) in assignments.iter_mut().zip(m.rows()) {
            *a = nearest(r, &centroids).0;
        }
        fill_empty(m, &mut assignments, &mut centroids, k);
        trace.push(inertia_of(m, &assignments, &centroids));
        let updated = cluster_means(m, &assignments, k);
        let shift = updated
            .iter()
            .zip(&centroids)
            .map(|(a, b)| dist(a, b))
            .fold(0.0, f64::max);
        centroids = updated;
        if shift < tol {
            converged = true;
            break;
        }
    }
    // report the partition with its own means as centroids
    let centroids = cluster_means(m, &assignments, k);
    let inertia = inertia_of(m, &assignments, &centroids);
    trace.push(inertia);
    LloydRun {
        assignments,
        centroids,
        inertia,
        iterations,
        converged,
        trace,
    }
}

/// Renumbers clusters by ascending index of their first member.
pub fn canonicalize(assignments: &[usize], k: usize) -> (Vec<usize>, Vec<usize>) {
    let mut map = vec![usize::MAX; k];
    let mut next = 0;
    for &a in assignments {
        if map[a] == usize::MAX {
            map[a] = next;
            next += 1;
        }
    }
    for m in map.iter_mut() {
        if *m == usize::MAX {
            *m = next;
            next += 1;
        }
    }
    (assignments.iter().map(|&a| map[a]).collect(), map)
}

pub fn kmeans(m: &FeatureMatrix, k: usize, config: &KMeansConfig) -> Result<KMeansResult, ClusterError> {
    if k == 0 {
        return Err(ClusterError::TooFewClusters { k, min: 1 });
    }
    if k > m.n_rows {
        return Err(ClusterError::TooManyClusters { k, rows: m.n_rows });
    }
    let runs: Vec<LloydRun> = (0..config.restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(r as u64));
            let init = kmeans_plus_plus(m, k, &mut rng);
            lloyd(m, init, config.max_iter, config.tol)
        })
        .collect();
    let mut best = 0;
    for (i, r) in runs.iter().enumerate() {
        if r.inertia < runs[best].inertia {
            best = i;
        }
    }
    let restart_inertias = runs.iter().map(|r| r.inertia).collect();
    let run = runs.into_iter().nth(best).expect("at least one restart");
    let (assignments, map) = canonicalize(&run.assignments, k);
    let mut centroids = vec![Vec::new(); k];
    for (old, c) in run.centroids.into_iter().enumerate() {
        centroids[map[old]] = c;
    }
    Ok(KMeansResult {
        assignments,
        centroids,
        inertia: run.inertia,
        iterations: run.iterations,
        converged: run.converged,
        restart: best,
        restart_inertias,
    })
}

// ---------------------------------------------------------------------------
// validity indices

/// Members per cluster; errors on an empty cluster or on labels that do not
/// match the row count.
fn groups(m: &FeatureMatrix, assignments: &[usize], min_k: usize) -> Result<Vec<Vec<usize>>, ClusterError> {
    if assignments.len() != m.n_rows {
        return Err(ClusterError::LengthMismatch {
            what: "assignments",
            got: assignments.len(),
            expected: m.n_rows,
        });
    }
    let k = assignments.iter().max().map_or(0, |&a| a + 1);
    if k < min_k {
        return Err(ClusterError::TooFewClusters { k, min: min_k });
    }
    let mut g = vec![Vec::new(); k];
    for (i, &a) in assignments.iter().enumerate() {
        g[a].push(i);
    }
    if let Some(j) = g.iter().position(Vec::is_empty) {
        return Err(ClusterError::EmptyCluster(j));
    }
    Ok(g)
}

pub fn silhouette(m: &FeatureMatrix, assignments: &[usize]) -> Result<f64, ClusterError> {
    let g = groups(m, assignments, 2)?;
    let k = g.len();
    let scores: Vec<f64> = (0..m.n_rows)
        .into_par_iter()
        .map(|i| {
            let own = assignments[i];
            if g[own].len() == 1 {
                return 0.0;
            }
            let x = m.row(i);
            let mut sums = vec![0.0; k];
            for (j, r) in m.rows().enumerate() {
                if j != i {
                    sums[assignments[j]] += dist(x, r);
                }
            }
            let a = sums[own] / (g[own].len() - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own)
                .map(|c| sums[c] / g[c].len() as f64)
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom == 0.0 {
                0.0
            } else {
                (b - a) / denom
            }
        })
        .collect();
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Davies-Bouldin index; `+inf` when two centroids coincide.
pub fn davies_bouldin(m: &FeatureMatrix, assignments: &[usize]) -> Result<f64, ClusterError> {
    let g = groups(m, assignments, 2)?;
    let k = g.len();
    let centroids = cluster_means(m, assignments, k);
    let scatter: Vec<f64> = g
        .iter()
        .zip(&centroids)
        .map(|(members, c)| {
            members.iter().map(|&i| dist(m.row(i), c)).sum::<f64>() / members.len() as f64
        })
        .collect();
    let mut total = 0.0;
    for a in 0..k {
        let mut worst: f64 = 0.0;
        for b in (0..k).filter(|&b| b != a) {
            let sep = dist(&centroids[a], &centroids[b]);
            let ratio = if sep == 0.0 {
                f64::INFINITY
            } else {
                (scatter[a] + scatter[b]) / sep
            };
            worst = worst.max(ratio);
        }
        total += worst;
    }
    let dbi = total / k as f64;
    if dbi.is_infinite() {
        log::warn!("coincident centroids; Davies-Bouldin index is infinite");
    }
    Ok(dbi)
}

/// Calinski-Harabasz index; `+inf` when within-cluster dispersion is zero and
/// NaN when all points sit at one location.
pub fn calinski_harabasz(m: &FeatureMatrix, assignments: &[usize]) -> Result<f64, ClusterError> {
    let g = groups(m, assignments, 2)?;
    let k = g.len();
    let n = m.n_rows;
    if n <= k {
        return Err(ClusterError::TooFewRows { needed: k + 1, got: n });
    }
    let centroids = cluster_means(m, assignments, k);
    let grand = cluster_means(m, &vec![0; n], 1).remove(0);
    let between: f64 = g
        .iter()
        .zip(&centroids)
        .map(|(members, c)| members.len() as f64 * sq_dist(c, &grand))
        .sum();
    let within = inertia_of(m, assignments, &centroids);
    if within == 0.0 {
        if between == 0.0 {
            log::warn!("all points coincide; Calinski-Harabasz index undefined");
            return Ok(f64::NAN);
        }
        log::warn!("zero within-cluster dispersion; Calinski-Harabasz index is infinite");
        return Ok(f64::INFINITY);
    }
    Ok((between / (k - 1) as f64) / (within / (n - k) as f64))
}

// ---------------------------------------------------------------------------
// K selection

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRationale {
    SilhouetteMax,
    CappedAt3,
}

/// Silhouette maximum (ties to the smaller K), capped to the best of K = 2, 3
/// when the sample is small and the structure weak.
pub fn select_k(silhouettes: &[(usize, f64)], n_events: usize) -> Option<(usize, SelectionRationale)> {
    let best_of = |pool: &mut dyn Iterator<Item = &(usize, f64)>| {
        let mut best: Option<(usize, f64)> = None;
        for &(k, s) in pool {
            match best {
                Some((bk, bs)) if s < bs || (s == bs && k > bk) => {}
                _ => best = Some((k, s)),
            }
        }
        best
    };
    let (base_k, base_s) = best_of(&mut silhouettes.iter())?;
    if n_events < CAP_SAMPLE_SIZE && base_s < CAP_SILHOUETTE && base_k > CAP_K {
        if let Some((k, _)) = best_of(&mut silhouettes.iter().filter(|(k, _)| *k <= CAP_K)) {
            return Some((k, SelectionRationale::CappedAt3));
        }
    }
    Some((base_k, SelectionRationale::SilhouetteMax))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KOutcome {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub centroids_standardized: Vec<Vec<f64>>,
    pub centroids_original: Vec<Vec<f64>>,
    pub inertia: f64,
    pub silhouette: f64,
    #[serde(with = "crate::report::nonfinite")]
    pub davies_bouldin: f64,
    #[serde(with = "crate::report::nonfinite")]
    pub calinski_harabasz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringOutcome {
    pub n_events: usize,
    pub columns: Vec<String>,
    pub standardization: Standardization,
    pub per_k: Vec<KOutcome>,
    pub selected_k: usize,
    pub selection_rationale: SelectionRationale,
}

impl ClusteringOutcome {
    pub fn outcome(&self, k: usize) -> Option<&KOutcome> {
        self.per_k.iter().find(|o| o.k == k)
    }

    pub fn selected(&self) -> &KOutcome {
        self.outcome(self.selected_k).expect("selected K is in the sweep")
    }
}

/// K-means and validity indices for every feasible K in `k_min..=k_max`.
pub fn cluster_sweep(
    standardized: &FeatureMatrix,
    params: &Standardization,
    k_range: (usize, usize),
    config: &KMeansConfig,
) -> Result<ClusteringOutcome, ClusterError> {
    let n = standardized.n_rows;
    let (lo, hi) = (k_range.0.max(2), k_range.1);
    let mut per_k = Vec::new();
    for k in lo..=hi {
        if k >= n {
            log::warn!("skipping K = {k}: only {n} events");
            continue;
        }
        let res = kmeans(standardized, k, config)?;
        per_k.push(KOutcome {
            k,
            silhouette: silhouette(standardized, &res.assignments)?,
            davies_bouldin: davies_bouldin(standardized, &res.assignments)?,
            calinski_harabasz: calinski_harabasz(standardized, &res.assignments)?,
            centroids_original: res.centroids.iter().map(|c| params.to_original(c)).collect(),
            centroids_standardized: res.centroids,
            assignments: res.assignments,
            inertia: res.inertia,
        });
    }
    let sil: Vec<(usize, f64)> = per_k.iter().map(|o| (o.k, o.silhouette)).collect();
    let (selected_k, selection_rationale) =
        select_k(&sil, n).ok_or(ClusterError::EmptyKRange { rows: n })?;
    Ok(ClusteringOutcome {
        n_events: n,
        columns: standardized.names.clone(),
        standardization: params.clone(),
        per_k,
        selected_k,
        selection_rationale,
    })
}

/// Chance-corrected agreement between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must cover the same items");
    let n = a.len();
    let ka = a.iter().max().map_or(0, |&x| x + 1);
    let kb = b.iter().max().map_or(0, |&x| x + 1);
    let mut table = vec![vec![0u64; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let c2 = |x: u64| (x * x.saturating_sub(1)) as f64 / 2.0;
    let index: f64 = table.iter().flatten().map(|&x| c2(x)).sum();
    let rows: f64 = table.iter().map(|r| c2(r.iter().sum())).sum();
    let cols: f64 = (0..kb).map(|j| c2(table.iter().map(|r| r[j]).sum())).sum();
    let total = c2(n as u64);
    if total == 0.0 {
        return 1.0;
    }
    let expected = rows * cols / total;
    let max = (rows + cols) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> FeatureMatrix {
        FeatureMatrix::from_column("x", xs)
    }

    #[test]
    fn standardize_one_two_three() {
        let (z, p) = standardize(&line(&[1.0, 2.0, 3.0])).unwrap();
        let want = 1.224_744_871_391_589;
        assert!((z.data[0] + want).abs() < 1e-12);
        assert!(z.data[1].abs() < 1e-15);
        assert!((z.data[2] - want).abs() < 1e-12);
        assert!((p.sds[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn constant_column_is_dropped() {
        let m = FeatureMatrix::from_rows(
            vec!["a".into(), "b".into()],
            &[vec![1.0, 5.0], vec![2.0, 5.0], vec![3.0, 5.0]],
        )
        .unwrap();
        let (z, p) = standardize(&m).unwrap();
        assert_eq!(z.n_cols(), 1);
        assert_eq!(p.dropped, vec!["b".to_string()]);
    }

    #[test]
    fn two_tight_pairs() {
        let m = line(&[0.0, 1.0, 10.0, 11.0]);
        let r = kmeans(&m, 2, &KMeansConfig::default()).unwrap();
        assert_eq!(r.assignments, vec![0, 0, 1, 1]);
        assert_eq!(r.centroids, vec![vec![0.5], vec![10.5]]);
        assert_eq!(r.inertia, 1.0);
        assert!((silhouette(&m, &r.assignments).unwrap() - 0.899_749).abs() < 1e-4);
        assert!((davies_bouldin(&m, &r.assignments).unwrap() - 0.1).abs() < 1e-12);
        assert!((calinski_harabasz(&m, &r.assignments).unwrap() - 200.0).abs() < 1e-9);
    }

    #[test]
    fn k_equals_rows_is_exact() {
        let m = line(&[3.0, -1.0, 7.0, 2.5]);
        let r = kmeans(&m, 4, &KMeansConfig::default()).unwrap();
        assert_eq!(r.inertia, 0.0);
        assert_eq!(r.assignments, vec![0, 1, 2, 3]);
        assert_eq!(
            kmeans(&m, 5, &KMeansConfig::default()),
            Err(ClusterError::TooManyClusters { k: 5, rows: 4 })
        );
    }

    #[test]
    fn identical_points_score_zero() {
        let m = line(&[2.0; 4]);
        assert_eq!(silhouette(&m, &[0, 0, 1, 1]).unwrap(), 0.0);
        assert!(davies_bouldin(&m, &[0, 0, 1, 1]).unwrap().is_infinite());
        assert!(calinski_harabasz(&m, &[0, 0, 1, 1]).unwrap().is_nan());
    }

    #[test]
    fn singleton_contributes_zero() {
        let m = line(&[0.0, 1.0, 50.0]);
        // points 0,1 score 1 - 1/50 and 1 - 1/49; the singleton scores 0
        let want = ((1.0 - 1.0 / 50.0) + (1.0 - 1.0 / 49.0)) / 3.0;
        assert!((silhouette(&m, &[0, 0, 1]).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn silhouette_needs_two_clusters() {
        assert_eq!(
            silhouette(&line(&[1.0, 2.0]), &[0, 0]),
            Err(ClusterError::TooFewClusters { k: 1, min: 2 })
        );
    }

    #[test]
    fn select_k_cases() {
        assert_eq!(
            select_k(&[(2, 0.198), (3, 0.240), (4, 0.221)], 492),
            Some((3, SelectionRationale::SilhouetteMax))
        );
        assert_eq!(
            select_k(&[(2, 0.234), (3, 0.211), (4, 0.196)], 677),
            Some((2, SelectionRationale::SilhouetteMax))
        );
        assert_eq!(
            select_k(&[(2, 0.2), (3, 0.22), (4, 0.21), (5, 0.25)], 300),
            Some((3, SelectionRationale::CappedAt3))
        );
        // cap does not bind on large samples
        assert_eq!(
            select_k(&[(2, 0.2), (3, 0.22), (5, 0.25)], 800),
            Some((5, SelectionRationale::SilhouetteMax))
        );
        // ties go to the smaller K
        assert_eq!(
            select_k(&[(2, 0.4), (3, 0.4)], 100),
            Some((2, SelectionRationale::SilhouetteMax))
        );
    }

    #[test]
    fn canonical_labels_follow_first_member() {
        let (l, _) = canonicalize(&[2, 2, 0, 1, 0], 3);
        assert_eq!(l, vec![0, 0, 1, 2, 1]);
    }

    #[test]
    fn ari_identity_and_relabel() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]), 1.0);
        let ari = adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]);
        assert!((ari - -0.5).abs() < 1e-12);
    }
}
