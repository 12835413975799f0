//! Randomized comparisons against the brute-force references.

use carfollow::cluster::{calinski_harabasz, davies_bouldin, kmeans, silhouette, KMeansConfig};
use carfollow::importance::anova_eta_squared;
use carfollow::temporal::{cohens_d_paired, paired_t_test_diffs};
use rand::Rng;

use super::*;

pub const ORACLE_TOL: f64 = 1e-9;

fn check(what: &str, i: usize, got: f64, want: f64) -> Result<(), String> {
    if close(got, want, ORACLE_TOL) {
        Ok(())
    } else {
        Err(format!("instance {i}: {what} {got} vs reference {want}"))
    }
}

/// Every statistic on `instances` random inputs with at most 50 items.
/// Returns the number of comparisons made.
pub fn oracle_sweep(instances: usize, seed: u64) -> Result<usize, String> {
    let mut rng = rng(seed);
    let mut compared = 0;
    for i in 0..instances {
        let n = rng.random_range(6..=50);
        let k = rng.random_range(2..=4.min(n / 2));
        let dim = rng.random_range(1..=4);
        let rows = random_points(&mut rng, n, dim, k);
        let labels = random_labels(&mut rng, n, k);
        let m = matrix(&rows);

        let values: Vec<f64> = rows.iter().map(|r| r[0] * 3.0 + 1.0).collect();
        let a = anova_eta_squared(&values, &labels).map_err(|e| e.to_string())?;
        let (eta, f) = brute_anova(&values, &labels);
        check("eta^2", i, a.eta_squared.unwrap_or(f64::NAN), eta)?;
        check("F", i, a.f, f)?;

        let sil = silhouette(&m, &labels).map_err(|e| e.to_string())?;
        check("silhouette", i, sil, brute_silhouette(&rows, &labels))?;
        let dbi = davies_bouldin(&m, &labels).map_err(|e| e.to_string())?;
        check("DBI", i, dbi, brute_davies_bouldin(&rows, &labels))?;
        let chi = calinski_harabasz(&m, &labels).map_err(|e| e.to_string())?;
        check("CHI", i, chi, brute_calinski_harabasz(&rows, &labels))?;

        let diffs: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..2.0)).collect();
        let t = paired_t_test_diffs(&diffs).map_err(|e| e.to_string())?;
        let d = cohens_d_paired(&diffs).map_err(|e| e.to_string())?;
        let (bt, bd) = brute_paired(&diffs);
        check("paired t", i, t.t.unwrap_or(f64::NAN), bt)?;
        check("Cohen's D", i, d.unwrap_or(f64::NAN), bd)?;
        compared += 7;
    }
    Ok(compared)
}

/// K-means against exhaustive enumeration on small instances. Returns the
/// number of instances checked.
pub fn exhaustive_sweep(instances: usize, seed: u64) -> Result<usize, String> {
    let mut rng = rng(seed);
    for i in 0..instances {
        let n = rng.random_range(5..=12);
        let k = 2 + i % 2;
        let dim = rng.random_range(1..=3);
        let groups = rng.random_range(1..=4);
        let rows = random_points(&mut rng, n, dim, groups);
        let config = KMeansConfig {
            seed: i as u64,
            ..KMeansConfig::default()
        };
        let got = kmeans(&matrix(&rows), k, &config).map_err(|e| e.to_string())?;
        let best = exhaustive_min_inertia(&rows, k);
        // Same partition, summed in a different order.
        if !close(got.inertia, best, 1e-9 * best.max(1.0)) {
            return Err(format!(
                "instance {i} (n {n}, k {k}): inertia {} vs optimum {best}",
                got.inertia
            ));
        }
    }
    Ok(instances)
}
