//! Paired tests of cue values before braking onset against the onset value.

use carfollow::kinematics::Cue;
use carfollow::pipeline::{run_pipeline, PipelineConfig};
use carfollow::synth::SynthConfig;
use carfollow::temporal::{cohens_d_paired, paired_t_test};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let before = [4.1, 3.8, 5.0, 4.4, 3.9, 4.7];
    let onset = [5.0, 4.9, 5.6, 5.1, 4.6, 5.8];
    let t = paired_t_test(&before, &onset)?;
    let diffs: Vec<f64> = onset.iter().zip(&before).map(|(o, b)| o - b).collect();
    println!(
        "toy: t = {:.3}, df = {}, p = {:.4}, D = {:.3}",
        t.t.unwrap_or(f64::NAN),
        t.df,
        t.p,
        cohens_d_paired(&diffs)?.unwrap_or(f64::NAN)
    );

    let config = PipelineConfig {
        synth: Some(SynthConfig::three_mode(300, 4)),
        seed: Some(4),
        thresholds: vec![-0.5],
        ..PipelineConfig::default()
    };
    let results = run_pipeline(&config)?;
    let Some(r) = results.analyses[0].result() else {
        println!("not enough events");
        return Ok(());
    };
    let table = &r.lag_table;
    println!("\n{} events", table.events);
    for cue in Cue::ALL {
        print!("{:<20}", format!("{cue:?}"));
        for &lag in &config.lags {
            match table.cell(cue, lag) {
                Some(c) if c.available => print!(
                    " {lag:>4}s d={:>6.2}{}",
                    c.cohens_d.unwrap_or(f64::NAN),
                    if c.significant { "*" } else { " " }
                ),
                _ => print!(" {lag:>4}s    n/a  "),
            }
        }
        println!("  -> {:?}", table.verdict(cue));
    }
    Ok(())
}
