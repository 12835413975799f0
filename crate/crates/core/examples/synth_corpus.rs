//! Writes a synthetic corpus with planted braking modes in the NGSIM layout.
//!
//!     cargo run --release --example synth_corpus -- out.csv

use carfollow::synth::{generate_trajectories, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = SynthConfig::three_mode(100, 7);
    let corpus = generate_trajectories(&config)?;
    let counts = config.mode_counts();
    for (mode, n) in config.modes.iter().zip(&counts) {
        println!("{:<14} {n} vehicles", mode.name);
    }
    println!(
        "{} rows, {} planted braking episodes",
        corpus.bytes.iter().filter(|&&b| b == b'\n').count() - 1,
        corpus.truth.episodes.len()
    );
    match std::env::args().nth(1) {
        Some(path) => {
            std::fs::write(&path, &corpus.bytes)?;
            println!("wrote {path}");
        }
        None => {
            let text = String::from_utf8_lossy(&corpus.bytes);
            for line in text.lines().take(4) {
                println!("{line}");
            }
        }
    }
    Ok(())
}
