//! K-means over standardized onset features with silhouette, Davies-Bouldin
//! and Calinski-Harabasz for each K, checked against the planted modes.

use carfollow::cluster::{adjusted_rand_index, build_event_matrix, cluster_sweep, standardize, KMeansConfig};
use carfollow::pipeline::{prepare, PipelineConfig};
use carfollow::synth::{planted_truth, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let synth = SynthConfig::three_mode(300, 5);
    let truth = planted_truth(&synth)?;
    let config = PipelineConfig {
        synth: Some(synth),
        seed: Some(5),
        thresholds: vec![-0.5],
        durations: vec![1.0],
        ..PipelineConfig::default()
    };
    let prepared = prepare(&config)?;
    let events = &prepared.grid[0].1;
    let matrix = build_event_matrix(events, true)?;
    let (z, params) = standardize(&matrix)?;
    let kmeans = KMeansConfig {
        seed: 5,
        ..KMeansConfig::default()
    };
    let outcome = cluster_sweep(&z, &params, (2, 6), &kmeans)?;
    println!("{} events, columns {:?}", outcome.n_events, outcome.columns);
    println!("{:>3} {:>10} {:>8} {:>10} {:>10}", "K", "silhouette", "DBI", "CHI", "inertia");
    for o in &outcome.per_k {
        println!(
            "{:>3} {:>10.4} {:>8.4} {:>10.1} {:>10.2}",
            o.k, o.silhouette, o.davies_bouldin, o.calinski_harabasz, o.inertia
        );
    }
    let chosen = outcome.selected();
    let planted: Vec<usize> = events
        .iter()
        .map(|e| truth.mode_of(e.segment.vehicle_id).unwrap_or(usize::MAX))
        .collect();
    println!(
        "selected K = {} ({:?}), ARI vs planted modes {:.3}",
        outcome.selected_k,
        outcome.selection_rationale,
        adjusted_rand_index(&planted, &chosen.assignments)
    );
    Ok(())
}
