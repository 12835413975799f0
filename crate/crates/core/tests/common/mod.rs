//! Brute-force references and instance generators shared by the test
//! targets. Everything here goes through pairwise sums on purpose, so it
//! shares no arithmetic path with the library's mean-based formulas.

#![allow(dead_code)]

pub mod fixtures;
pub mod sweeps;

use carfollow::cluster::FeatureMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn d2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn d(a: &[f64], b: &[f64]) -> f64 {
    d2(a, b).sqrt()
}

/// Sum of squared deviations from the mean, via 1/(2n) * sum_ij (x_i - x_j)^2.
fn pairwise_ss(points: &[&[f64]]) -> f64 {
    let n = points.len();
    if n == 0 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += d2(points[i], points[j]);
        }
    }
    s / (2.0 * n as f64)
}

fn members<'a>(rows: &'a [Vec<f64>], labels: &[usize], c: usize) -> Vec<&'a [f64]> {
    rows.iter()
        .zip(labels)
        .filter(|(_, &l)| l == c)
        .map(|(r, _)| r.as_slice())
        .collect()
}

fn n_groups(labels: &[usize]) -> usize {
    labels.iter().max().map_or(0, |&m| m + 1)
}

/// (eta^2, F) for a one-way layout.
pub fn brute_anova(values: &[f64], labels: &[usize]) -> (f64, f64) {
    let rows: Vec<Vec<f64>> = values.iter().map(|&v| vec![v]).collect();
    let all: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
    let total = pairwise_ss(&all);
    let k = n_groups(labels);
    let within: f64 = (0..k).map(|c| pairwise_ss(&members(&rows, labels, c))).sum();
    let between = total - within;
    let n = values.len() as f64;
    let f = (between / (k as f64 - 1.0)) / (within / (n - k as f64));
    (between / total, f)
}

/// Mean silhouette straight from its definition; singletons score 0.
pub fn brute_silhouette(rows: &[Vec<f64>], labels: &[usize]) -> f64 {
    let k = n_groups(labels);
    let n = rows.len();
    let mut total = 0.0;
    for i in 0..n {
        let own = labels[i];
        let own_size = labels.iter().filter(|&&l| l == own).count();
        if own_size == 1 {
            continue;
        }
        let mut a = 0.0;
        for j in 0..n {
            if j != i && labels[j] == own {
                a += d(&rows[i], &rows[j]);
            }
        }
        a /= (own_size - 1) as f64;
        let mut b = f64::INFINITY;
        for c in (0..k).filter(|&c| c != own) {
            let mut s = 0.0;
            let mut m = 0;
            for j in 0..n {
                if labels[j] == c {
                    s += d(&rows[i], &rows[j]);
                    m += 1;
                }
            }
            b = b.min(s / m as f64);
        }
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    total / n as f64
}

fn centroid(points: &[&[f64]]) -> Vec<f64> {
    let dim = points[0].len();
    let mut c = vec![0.0; dim];
    for p in points {
        for (a, x) in c.iter_mut().zip(p.iter()) {
            *a += x;
        }
    }
    c.iter().map(|x| x / points.len() as f64).collect()
}

pub fn brute_davies_bouldin(rows: &[Vec<f64>], labels: &[usize]) -> f64 {
    let k = n_groups(labels);
    let groups: Vec<Vec<&[f64]>> = (0..k).map(|c| members(rows, labels, c)).collect();
    let cents: Vec<Vec<f64>> = groups.iter().map(|g| centroid(g)).collect();
    let scatter: Vec<f64> = groups
        .iter()
        .zip(&cents)
        .map(|(g, c)| g.iter().map(|p| d(p, c)).sum::<f64>() / g.len() as f64)
        .collect();
    let mut total = 0.0;
    for a in 0..k {
        let mut worst = 0.0f64;
        for b in 0..k {
            if a != b {
                worst = worst.max((scatter[a] + scatter[b]) / d(&cents[a], &cents[b]));
            }
        }
        total += worst;
    }
    total / k as f64
}

pub fn brute_calinski_harabasz(rows: &[Vec<f64>], labels: &[usize]) -> f64 {
    let k = n_groups(labels);
    let n = rows.len() as f64;
    let all: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
    let total = pairwise_ss(&all);
    let within: f64 = (0..k).map(|c| pairwise_ss(&members(rows, labels, c))).sum();
    ((total - within) / (k as f64 - 1.0)) / (within / (n - k as f64))
}

/// Within-cluster sum of squares of a labeling.
pub fn brute_inertia(rows: &[Vec<f64>], labels: &[usize]) -> f64 {
    (0..n_groups(labels))
        .map(|c| pairwise_ss(&members(rows, labels, c)))
        .sum()
}

/// (t, D) for paired differences, with the sample variance taken as
/// sum_{i<j} (d_i - d_j)^2 / (n (n - 1)).
pub fn brute_paired(diffs: &[f64]) -> (f64, f64) {
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let mut s = 0.0;
    for i in 0..diffs.len() {
        for j in i + 1..diffs.len() {
            s += (diffs[i] - diffs[j]).powi(2);
        }
    }
    let sd = (s / (n * (n - 1.0))).sqrt();
    let dd = mean / sd;
    (dd * n.sqrt(), dd)
}

/// ARI from raw pair counts.
pub fn brute_ari(a: &[usize], b: &[usize]) -> f64 {
    let (mut ss, mut sd, mut ds, mut dd) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            match (a[i] == a[j], b[i] == b[j]) {
                (true, true) => ss += 1.0,
                (true, false) => sd += 1.0,
                (false, true) => ds += 1.0,
                (false, false) => dd += 1.0,
            }
        }
    }
    2.0 * (ss * dd - sd * ds) / ((ss + sd) * (sd + dd) + (ss + ds) * (ds + dd))
}

/// Every partition of `n` items into exactly `k` non-empty labeled groups,
/// as restricted growth strings. Returns the minimum inertia.
pub fn exhaustive_min_inertia(rows: &[Vec<f64>], k: usize) -> f64 {
    fn go(
        rows: &[Vec<f64>],
        k: usize,
        labels: &mut Vec<usize>,
        used: usize,
        best: &mut f64,
    ) {
        let i = labels.len();
        if i == rows.len() {
            if used == k {
                *best = best.min(brute_inertia(rows, labels));
            }
            return;
        }
        if k - used > rows.len() - i {
            return;
        }
        for c in 0..(used + 1).min(k) {
            labels.push(c);
            go(rows, k, labels, used.max(c + 1), best);
            labels.pop();
        }
    }
    let mut best = f64::INFINITY;
    go(rows, k, &mut Vec::with_capacity(rows.len()), 0, &mut best);
    best
}

/// Random points in `dim` dimensions, loosely grouped around `k` centers.
pub fn random_points(rng: &mut impl Rng, n: usize, dim: usize, k: usize) -> Vec<Vec<f64>> {
    let centers: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect())
        .collect();
    (0..n)
        .map(|i| {
            centers[i % k]
                .iter()
                .map(|c| c + rng.random_range(-2.0..2.0))
                .collect()
        })
        .collect()
}

/// Labels with every group in `0..k` non-empty.
pub fn random_labels(rng: &mut impl Rng, n: usize, k: usize) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..n).map(|i| if i < k { i } else { rng.random_range(0..k) }).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        labels.swap(i, j);
    }
    labels
}

pub fn matrix(rows: &[Vec<f64>]) -> FeatureMatrix {
    let names = (0..rows[0].len()).map(|j| format!("x{j}")).collect();
    FeatureMatrix::from_rows(names, rows).unwrap()
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}
