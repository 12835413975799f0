//! Braking runs in a single acceleration trace, then the event census over a
//! synthetic corpus.

use carfollow::events::{qualifying_runs, EventConfig};
use carfollow::pipeline::{prepare, PipelineConfig};
use carfollow::synth::SynthConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let accel = [0.1, -0.6, -0.8, -1.2, -0.4, -0.7, -0.9, -0.6, 0.2, -0.55];
    for threshold in [-0.5, -0.3] {
        let config = EventConfig::new(threshold, 0.2)?;
        println!("threshold {threshold}: runs {:?}", qualifying_runs(&accel, &config));
    }

    let config = PipelineConfig {
        synth: Some(SynthConfig::three_mode(200, 3)),
        seed: Some(3),
        ..PipelineConfig::default()
    };
    let prepared = prepare(&config)?;
    println!("\n{} valid observations", prepared.census.valid_observations);
    println!("{:>9} {:>9} {:>7} {:>9}", "threshold", "duration", "events", "% obs");
    for c in &prepared.census.cells {
        println!(
            "{:>9} {:>9} {:>7} {:>9.4}{}",
            c.threshold,
            c.min_duration,
            c.events,
            c.percent_valid_observations,
            if c.insufficient { "  (too few)" } else { "" }
        );
    }
    let (ec, events) = &prepared.grid[0];
    if let Some(e) = events.first() {
        println!(
            "\nfirst event at {} / {} s: vehicle {}, {:.1} s, peak {:.2} m/s^2, {:?}, {:?}",
            ec.accel_threshold,
            ec.min_duration,
            e.segment.vehicle_id,
            e.duration_s,
            e.max_decel,
            e.severity,
            e.context
        );
    }
    Ok(())
}
