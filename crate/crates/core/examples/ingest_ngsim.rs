//! Streams an NGSIM trajectory file into car-following segments and prints
//! the filter attribution.
//!
//!     cargo run --release --example ingest_ngsim -- trajectories-0750am-0805am.txt
//!
//! Without an argument a small synthetic file in the same layout is used.

use std::path::PathBuf;
use std::sync::Arc;

use carfollow::ingest::{ingest_source, Criterion, IngestOptions, Source};
use carfollow::synth::{generate_trajectories, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let source = match std::env::args().nth(1) {
        Some(path) => Source::Path(PathBuf::from(path)),
        None => {
            let corpus = generate_trajectories(&SynthConfig::three_mode(40, 1))?;
            Source::Bytes {
                name: "synthetic.csv".into(),
                data: Arc::from(corpus.bytes),
            }
        }
    };
    let options = IngestOptions {
        chunk_size: 50_000,
        ..IngestOptions::default()
    };
    let out = ingest_source(&source, &options)?;
    let stats = &out.stats;
    println!("{}: {} rows read", source.name(), stats.raw_count);
    for c in Criterion::ALL {
        println!("  rejected by {c:?}: {}", stats.rejected(c));
    }
    println!(
        "retained {} observations from {} vehicles in {} segments",
        stats.retained_count,
        stats.retained_vehicles,
        out.segments.len()
    );
    if let Some(s) = out.segments.first() {
        let o = &s.observations[0];
        println!(
            "first segment: vehicle {} behind {}, {} frames, spacing {:.1} m at {:.1} m/s",
            s.vehicle_id, s.leader_id, s.length_frames, o.spacing, o.follower.velocity
        );
    }
    Ok(())
}
