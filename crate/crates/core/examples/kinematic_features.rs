//! Cue values for a handful of car-following states, then the population
//! summary with undefined TTC filled by the median.

use carfollow::kinematics::{dataset_summary, features_from_state, BinRule};
use carfollow::pipeline::segment_features;
use carfollow::ingest::{ingest_source, IngestOptions, Source};
use carfollow::synth::{generate_trajectories, SynthConfig};
use std::sync::Arc;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // (ego speed, leader speed, leader accel, spacing)
    let states = [(20.0, 15.0, 0.0, 30.0), (15.0, 15.0, -1.0, 25.0), (12.0, 18.0, 0.3, 40.0)];
    println!("{:>6} {:>8} {:>8} {:>8} {:>5}", "v_rel", "ttc", "a_req", "ttc_inv", "flag");
    for (ego, lead, la, s) in states {
        let f = features_from_state(ego, lead, la, s)?;
        let show = |x: Option<f64>| x.map_or("undef".to_string(), |v| format!("{v:.3}"));
        println!(
            "{:>6.2} {:>8} {:>8.3} {:>8} {:>5}",
            f.v_rel,
            show(f.ttc),
            f.a_req,
            show(f.ttc_inv),
            f.leader_braking_flag
        );
    }

    let corpus = generate_trajectories(&SynthConfig::three_mode(60, 2))?;
    let source = Source::Bytes {
        name: "synthetic.csv".into(),
        data: Arc::from(corpus.bytes),
    };
    let out = ingest_source(&source, &IngestOptions::default())?;
    let (features, imputer) = segment_features(&out.segments)?;
    println!("\nmedian fill: ttc {:?}, ttc_inv {:?}", imputer.ttc_median, imputer.ttc_inv_median);
    let summary = dataset_summary(
        out.segments
            .iter()
            .zip(&features)
            .flat_map(|(s, f)| s.observations.iter().zip(f)),
        BinRule::FreedmanDiaconis,
    );
    println!(
        "{} observations, TTC imputed for {:.1}%",
        summary.observations,
        100.0 * summary.ttc_imputation_rate
    );
    for c in &summary.columns {
        println!(
            "  {:<20} mean {:>9.3}  sd {:>9.3}  median {:>9.3}  bins {}",
            c.name,
            c.mean,
            c.sd,
            c.median,
            c.histogram.counts.len()
        );
    }
    Ok(())
}
