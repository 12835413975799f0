//! Ranks cues by eta-squared across behavioral modes, on a corpus where
//! spacing carries no mode information.

use carfollow::pipeline::{run_pipeline, PipelineConfig};
use carfollow::synth::SynthConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = PipelineConfig {
        synth: Some(SynthConfig::spacing_null(300, 6)),
        seed: Some(6),
        thresholds: vec![-0.5],
        ..PipelineConfig::default()
    };
    let results = run_pipeline(&config)?;
    let Some(r) = results.analyses[0].result() else {
        println!("not enough events");
        return Ok(());
    };
    println!("K = {}", r.clustering.selected_k);
    println!("{:>4} {:<20} {:>8} {:>10} {:>5}", "rank", "cue", "eta^2", "F", "");
    for row in &r.importance {
        println!(
            "{:>4} {:<20} {:>8.4} {:>10.2} {:>5}",
            row.rank,
            row.feature,
            row.eta_squared.unwrap_or(0.0),
            row.f,
            row.significance
        );
    }
    println!();
    for p in &r.profiles {
        println!(
            "cluster {} ({:.0}%, {}): v_rel {:.2}, ttc {:.1}, leader braking {:.0}%",
            p.cluster,
            p.share_percent,
            p.label,
            p.mean("v_rel").unwrap_or(f64::NAN),
            p.mean("ttc").unwrap_or(f64::NAN),
            p.leader_braking_percent
        );
    }
    println!(
        "PCA: first two components explain {:.1}%",
        100.0 * r.pca.explained_variance_ratio.iter().take(2).sum::<f64>()
    );
    Ok(())
}
