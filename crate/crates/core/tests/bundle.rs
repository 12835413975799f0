use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use carfollow::pipeline::{run_pipeline, PipelineConfig};
use carfollow::report::{self, Manifest};
use carfollow::synth::{ModeSpec, Profile, SynthConfig};

fn config(n: usize, seed: u64) -> PipelineConfig {
    PipelineConfig {
        synth: Some(SynthConfig::three_mode(n, seed)),
        seed: Some(seed),
        ..PipelineConfig::default()
    }
}

fn read_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn identical_runs_give_identical_bundles() {
    let tmp = tempfile::tempdir().unwrap();
    let c = config(120, 9);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    report::write_bundle(&a, &run_pipeline(&c).unwrap()).unwrap();
    let one_worker = PipelineConfig {
        workers: Some(1),
        ..c.clone()
    };
    report::write_bundle(&b, &run_pipeline(&one_worker).unwrap()).unwrap();
    assert_eq!(read_dir(&a), read_dir(&b));
}

#[test]
fn manifest_covers_every_file() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("bundle");
    report::write_bundle(&out, &run_pipeline(&config(80, 2)).unwrap()).unwrap();
    let files = read_dir(&out);
    let manifest: Manifest = serde_json::from_slice(&files[report::MANIFEST]).unwrap();
    assert_eq!(manifest.files.len(), files.len() - 1);
    for f in &manifest.files {
        assert_eq!(report::sha256_hex(&files[&f.name]), f.sha256, "{}", f.name);
    }
    assert_eq!(manifest.seed, Some(2));
    assert_eq!(manifest.inputs.len(), 1);
    assert!(!files.contains_key("features.csv"));
}

#[test]
fn report_stage_reproduces_the_bundle() {
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("first");
    let c = PipelineConfig {
        dump_features: true,
        ..config(100, 4)
    };
    report::write_bundle(&first, &run_pipeline(&c).unwrap()).unwrap();
    let again = report::reanalyze_bundle(&first).unwrap();
    let second = tmp.path().join("second");
    report::write_bundle(&second, &again).unwrap();
    let (a, b) = (read_dir(&first), read_dir(&second));
    assert!(a.contains_key("features.csv"));
    assert_eq!(a, b);
}

#[test]
fn cue_table_has_six_rows_per_threshold() {
    let r = run_pipeline(&config(100, 1)).unwrap();
    let files = report::render_files(&r);
    let text = String::from_utf8(files["cue_importance.csv"].clone()).unwrap();
    let analyzed = r.analyses.iter().filter(|a| a.result().is_some()).count();
    assert_eq!(analyzed, 2);
    assert_eq!(text.lines().count(), 1 + 6 * analyzed);
    assert_eq!(r.census.cells.len(), 2 * 4);
}

#[test]
fn refuses_to_replace_other_directories() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("precious");
    fs::create_dir(&out).unwrap();
    fs::write(out.join("notes.txt"), "keep me").unwrap();
    let r = run_pipeline(&config(60, 3)).unwrap();
    let err = report::write_bundle(&out, &r).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert_eq!(fs::read_to_string(out.join("notes.txt")).unwrap(), "keep me");
    let leftovers: Vec<_> = fs::read_dir(tmp.path()).unwrap().collect();
    assert_eq!(leftovers.len(), 1);
    // A previous bundle is fine to replace.
    let prior = tmp.path().join("prior");
    report::write_bundle(&prior, &r).unwrap();
    report::write_bundle(&prior, &r).unwrap();
}

#[test]
fn quiet_corpus_skips_analysis() {
    let synth = SynthConfig {
        seed: 1,
        n_vehicles: 10,
        modes: vec![ModeSpec {
            name: "cruise".into(),
            share: 1.0,
            v_rel: Profile { mean: 1.0, sd: 0.1 },
            spacing: Profile { mean: 40.0, sd: 1.0 },
            episode: None,
            leader_braking_prob: 0.0,
        }],
        ..SynthConfig::default()
    };
    let r = run_pipeline(&PipelineConfig {
        synth: Some(synth),
        seed: Some(1),
        ..PipelineConfig::default()
    })
    .unwrap();
    assert!(r.census.cells.iter().all(|c| c.events == 0));
    assert!(r.all_skipped());
    let files = report::render_files(&r);
    let status: serde_json::Value = serde_json::from_slice(&files["analysis_status.json"]).unwrap();
    assert_eq!(status[0]["analyzed"], false);
    let header_only = |name: &str| files[name].iter().filter(|&&b| b == b'\n').count() == 1;
    assert!(header_only("pca_coords.csv") && header_only("events.csv"));
}

#[test]
fn config_round_trips_through_toml() {
    let c = config(10, 8);
    let text = toml::to_string(&c).unwrap();
    let back: PipelineConfig = toml::from_str(&text).unwrap();
    assert_eq!(back, c);
    assert!(toml::from_str::<PipelineConfig>("seed = 1\nthreshold = [-0.5]").is_err());
}

#[test]
fn missing_seed_is_a_configuration_error() {
    let c = PipelineConfig {
        seed: None,
        ..config(10, 0)
    };
    assert_eq!(run_pipeline(&c).unwrap_err().exit_code(), 2);
}
