use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use carfollow::ingest::Units;
use carfollow::pipeline::{self, PipelineConfig};
use carfollow::report;
use carfollow::synth::{self, SynthConfig};
use carfollow::{Error, Result};

#[derive(Parser)]
#[command(name = "carfollow", version, about = "Car-following deceleration analysis")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Full pipeline: ingest, events, lags, clustering, cue importance.
    Run(RunArgs),
    /// Detection grid only: filtering, event census and events.
    Census(RunArgs),
    /// Generate a synthetic corpus with planted braking modes.
    Synth(SynthArgs),
    /// Re-run the analysis stages from a bundle's serialized events.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML config; command-line flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Trajectory files (NGSIM layout, optionally gzip-compressed).
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    input: Vec<PathBuf>,
    /// Synthetic corpus TOML to analyze instead of input files.
    #[arg(long)]
    synth_config: Option<PathBuf>,
    #[arg(long)]
    units: Option<Units>,
    #[arg(long)]
    chunk_size: Option<usize>,
    /// Comma-separated acceleration thresholds, e.g. -0.5,-0.3
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    thresholds: Option<Vec<f64>>,
    /// Comma-separated minimum durations in seconds.
    #[arg(long, value_delimiter = ',')]
    durations: Option<Vec<f64>>,
    /// Candidate cluster counts as MIN-MAX, e.g. 2-8.
    #[arg(long, value_parser = parse_k_range)]
    k_range: Option<(usize, usize)>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "bundle")]
    out: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
    /// Also write one CSV row per observation.
    #[arg(long)]
    dump_features: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    ThreeMode,
    SpacingNull,
}

#[derive(Args)]
struct SynthArgs {
    /// Corpus TOML; overrides the preset.
    #[arg(long)]
    synth_config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "three-mode")]
    preset: Preset,
    #[arg(long, default_value_t = 300)]
    vehicles: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    units: Option<Units>,
    #[arg(long, default_value = "synth")]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Existing bundle directory.
    #[arg(long)]
    input: PathBuf,
    /// Destination; defaults to rewriting the input bundle.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

fn parse_k_range(s: &str) -> std::result::Result<(usize, usize), String> {
    let (lo, hi) = s
        .split_once('-')
        .ok_or_else(|| format!("expected MIN-MAX, got `{s}`"))?;
    let p = |x: &str| x.trim().parse::<usize>().map_err(|e| format!("`{x}`: {e}"));
    Ok((p(lo)?, p(hi)?))
}

fn config_from(args: &RunArgs) -> Result<PipelineConfig> {
    let mut c = match &args.config {
        Some(p) => PipelineConfig::from_toml_file(p)?,
        None => PipelineConfig::default(),
    };
    if !args.input.is_empty() {
        c.inputs = args.input.clone();
        c.synth = None;
        c.synth_config = None;
    }
    if let Some(p) = &args.synth_config {
        c.synth_config = Some(p.clone());
        c.synth = None;
        c.inputs.clear();
    }
    if let Some(u) = args.units {
        c.units = u;
    }
    if let Some(n) = args.chunk_size {
        c.chunk_size = n;
    }
    if let Some(t) = &args.thresholds {
        c.thresholds = t.clone();
    }
    if let Some(d) = &args.durations {
        c.durations = d.clone();
    }
    if let Some(k) = args.k_range {
        c.k_range = k;
    }
    if args.seed.is_some() {
        c.seed = args.seed;
    }
    if args.workers.is_some() {
        c.workers = args.workers;
    }
    c.dump_features |= args.dump_features;
    c.out = Some(args.out.clone());
    Ok(c)
}

fn finish(results: &pipeline::RunResults, out: &Path) -> Result<()> {
    report::write_bundle(out, results)?;
    print!("{}", report::summary_text(results));
    println!("bundle written to {}", out.display());
    // Some braking was found but no threshold reached the analysis minimum.
    let any_events = results.analyses.iter().any(|a| !a.events.is_empty());
    if results.all_skipped() && any_events {
        return Err(Error::InsufficientSample);
    }
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let config = config_from(&args)?;
    let results = pipeline::run_pipeline(&config)?;
    finish(&results, &args.out)
}

fn census(args: RunArgs) -> Result<()> {
    let config = config_from(&args)?;
    let prepared = pipeline::with_workers(config.workers, || pipeline::prepare(&config))??;
    let files =
        report::render_census_files(&prepared.filter_stats, &prepared.census, &prepared.grid);
    let manifest = report::manifest_bytes(&config, &prepared.inputs, &files);
    report::write_files(&args.out, &files, &manifest)?;
    for c in &prepared.census.cells {
        println!(
            "{}\t{}\t{}{}",
            c.threshold,
            c.min_duration,
            c.events,
            if c.insufficient { "\tinsufficient" } else { "" }
        );
    }
    Ok(())
}

fn synth_cmd(args: SynthArgs) -> Result<()> {
    let mut config = match &args.synth_config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            toml::from_str::<SynthConfig>(&text).map_err(|source| Error::Toml {
                path: p.clone(),
                source,
            })?
        }
        None => {
            let seed = args.seed.unwrap_or(0);
            match args.preset {
                Preset::ThreeMode => SynthConfig::three_mode(args.vehicles, seed),
                Preset::SpacingNull => SynthConfig::spacing_null(args.vehicles, seed),
            }
        }
    };
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(u) = args.units {
        config.units = u;
    }
    let corpus = synth::generate_trajectories(&config)?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let data = args.out.join(format!("{}.csv", config.site));
    std::fs::write(&data, &corpus.bytes).map_err(|e| Error::io(&data, e))?;
    let truth = args.out.join("ground_truth.json");
    let mut json = serde_json::to_vec_pretty(&corpus.truth).expect("truth serializes");
    json.push(b'\n');
    std::fs::write(&truth, json).map_err(|e| Error::io(&truth, e))?;
    let cfg = args.out.join("synth_config.toml");
    let text = toml::to_string(&config).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(&cfg, text).map_err(|e| Error::io(&cfg, e))?;
    println!(
        "{} followers written to {} (truth in {})",
        config.n_vehicles,
        data.display(),
        truth.display()
    );
    Ok(())
}

fn report_cmd(args: ReportArgs) -> Result<()> {
    let results =
        pipeline::with_workers(args.workers, || report::reanalyze_bundle(&args.input))??;
    let out = args.out.unwrap_or(args.input);
    finish(&results, &out)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.verb {
        Verb::Run(a) => run(a),
        Verb::Census(a) => census(a),
        Verb::Synth(a) => synth_cmd(a),
        Verb::Report(a) => report_cmd(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
