//! End to end: synthetic corpus, both thresholds, report bundle on disk.
//!
//!     cargo run --release --example full_pipeline -- /tmp/bundle

use std::path::PathBuf;

use carfollow::pipeline::{run_pipeline, PipelineConfig};
use carfollow::report::{summary_text, write_bundle};
use carfollow::synth::SynthConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("carfollow-example-bundle"));
    let config = PipelineConfig {
        synth: Some(SynthConfig::three_mode(300, 8)),
        seed: Some(8),
        ..PipelineConfig::default()
    };
    let results = run_pipeline(&config)?;
    let files = write_bundle(&out, &results)?;
    print!("{}", summary_text(&results));
    println!("{} files in {}", files.len(), out.display());
    Ok(())
}
