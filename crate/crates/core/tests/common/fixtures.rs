//! Hand-computed fixtures. Each returns `Err` with a description on
//! mismatch so the same list can back individual tests and the acceptance
//! summary.

use std::sync::Arc;

use carfollow::cluster::{
    calinski_harabasz, davies_bouldin, kmeans, select_k, silhouette, standardize, FeatureMatrix,
    KMeansConfig, SelectionRationale,
};
use carfollow::events::{
    classify_severity, detect_events, EventConfig, FeatureSegment, Severity,
};
use carfollow::importance::{anova_eta_squared, cluster_profile, pca_project, rank_cues, LabelRule};
use carfollow::ingest::{
    convert_units, segment_trajectories, DyadObservation, TrajectoryRecord, TrajectorySegment, Units,
    FRAME_INTERVAL_S,
};
use carfollow::kinematics::{features_from_state, impute_undefined, Cue, KinematicFeatures};
use carfollow::pipeline::{self, PipelineConfig};
use carfollow::stats;
use carfollow::synth::{EpisodeSpec, ModeSpec, NoiseSpec, Profile, SynthConfig};
use carfollow::temporal::{
    cohens_d_paired, extract_lagged, paired_t_test_diffs, precedence_report, Precedence,
};
use rand_distr::{Distribution, Normal};

pub type Check = Result<(), String>;

fn near(what: &str, got: f64, want: f64, tol: f64) -> Check {
    if (got - want).abs() <= tol {
        Ok(())
    } else {
        Err(format!("{what}: got {got}, want {want} (tol {tol})"))
    }
}

fn ensure(what: &str, ok: bool) -> Check {
    ok.then_some(()).ok_or_else(|| what.to_string())
}

fn record(vehicle: i64, frame: i64, leader: i64) -> TrajectoryRecord {
    TrajectoryRecord {
        site_tag: Arc::from("t"),
        vehicle_id: vehicle,
        frame_id: frame,
        global_time: frame * 100,
        local_y: frame as f64,
        velocity: 10.0,
        acceleration: 0.0,
        lane_id: 1,
        preceding_id: leader,
        space_headway: 20.0,
        units: Units::Si,
    }
}

fn dyad(vehicle: i64, frame: i64, leader: i64, accel: f64) -> DyadObservation {
    let mut follower = record(vehicle, frame, leader);
    follower.acceleration = accel;
    DyadObservation {
        follower,
        leader_velocity: 10.0,
        leader_acceleration: 0.0,
        spacing: 30.0,
        timestamp_index: frame,
    }
}

fn segment_of(accels: &[f64]) -> (TrajectorySegment, Vec<KinematicFeatures>) {
    let obs: Vec<DyadObservation> = accels
        .iter()
        .enumerate()
        .map(|(i, &a)| dyad(1, 100 + i as i64, 2, a))
        .collect();
    let features = obs
        .iter()
        .map(|_| features_from_state(12.0, 10.0, 0.0, 30.0).unwrap())
        .collect();
    let seg = TrajectorySegment {
        site_tag: Arc::from("t"),
        vehicle_id: 1,
        leader_id: 2,
        length_frames: obs.len(),
        observations: obs,
    };
    (seg, features)
}

pub fn unit_conversion() -> Check {
    let mut r = record(1, 1, 0);
    r.units = Units::Imperial;
    r.acceleration = -1.64042;
    near("converted accel", convert_units(r).acceleration, -0.5, 5e-5)
}

pub fn leader_change_short_segments() -> Check {
    let dyads: Vec<_> = (1..=60)
        .map(|f| dyad(1, f, if f <= 30 { 2 } else { 3 }, 0.0))
        .collect();
    let (segs, dropped) = segment_trajectories(dyads, 50);
    ensure("both 30-frame segments dropped", segs.is_empty() && dropped == 60)
}

pub fn frame_gap_split() -> Check {
    let dyads: Vec<_> = (1..=49).chain(51..=120).map(|f| dyad(1, f, 2, 0.0)).collect();
    let (segs, dropped) = segment_trajectories(dyads, 50);
    ensure(
        "49 dropped, 70 kept",
        segs.len() == 1 && segs[0].length_frames == 70 && dropped == 49,
    )
}

pub fn cue_formulas() -> Check {
    let f = features_from_state(20.0, 10.0, 0.0, 30.0).map_err(|e| e.to_string())?;
    near("v_rel", f.v_rel, 10.0, 1e-12)?;
    near("ttc", f.ttc.unwrap_or(f64::NAN), 3.0, 1e-12)?;
    near("a_req", f.a_req, 5.0, 1e-12)?;
    near("ttc_inv", f.ttc_inv.unwrap_or(f64::NAN), 1.0 / 3.0, 1e-12)
}

pub fn median_imputation() -> Check {
    let mut fs: Vec<KinematicFeatures> = [0.1, 0.2, 0.3, 0.4]
        .iter()
        .map(|&inv| features_from_state(10.0 + inv * 10.0, 10.0, 0.0, 10.0).unwrap())
        .collect();
    fs.push(features_from_state(10.0, 12.0, 0.0, 10.0).unwrap());
    let out = impute_undefined(fs).map_err(|e| e.to_string())?;
    let last = out.last().unwrap();
    ensure("flagged as imputed", last.imputed_ttc_inv)?;
    near("imputed ttc_inv", last.ttc_inv.unwrap(), 0.25, 1e-12)
}

pub fn population_sd() -> Check {
    near("mean", stats::mean(&[1.0, 2.0, 3.0]), 2.0, 1e-12)?;
    near("sd", stats::population_sd(&[1.0, 2.0, 3.0]), (2.0f64 / 3.0).sqrt(), 1e-12)
}

fn detect(accels: &[f64], threshold: f64, min_duration: f64) -> Result<Vec<carfollow::events::DecelerationEvent>, String> {
    let (seg, features) = segment_of(accels);
    let fs = FeatureSegment::new(0, &seg, &features).map_err(|e| e.to_string())?;
    let config = EventConfig::new(threshold, min_duration).map_err(|e| e.to_string())?;
    detect_events(&fs, &config).map_err(|e| e.to_string())
}

pub fn single_run_event() -> Check {
    let mut a = vec![0.0; 5];
    a.extend([-0.6; 15]);
    a.extend([0.0; 5]);
    let ev = detect(&a, -0.5, 1.0)?;
    ensure("one event", ev.len() == 1)?;
    near("duration", ev[0].duration_s, 1.5, 1e-12)?;
    ensure("onset at run start", ev[0].onset_index == 5 && ev[0].onset_frame == 105)
}

pub fn interrupted_runs() -> Check {
    let mut a = vec![-0.6; 12];
    a.extend([0.1; 3]);
    a.extend([-0.7; 12]);
    let ev = detect(&a, -0.5, 1.0)?;
    ensure("two events", ev.len() == 2)?;
    near("first duration", ev[0].duration_s, 1.2, 1e-12)?;
    near("second duration", ev[1].duration_s, 1.2, 1e-12)
}

pub fn severity_boundary() -> Check {
    let c = EventConfig::new(-0.3, 1.0).map_err(|e| e.to_string())?;
    let s = classify_severity(-2.0, &c).map_err(|e| e.to_string())?;
    ensure("-2.0 at -0.3 is moderate", s == Severity::Moderate)
}

fn clean_config(n: usize, peak: f64, duration_s: f64) -> SynthConfig {
    SynthConfig {
        seed: 11,
        n_vehicles: n,
        noise: NoiseSpec {
            follower_accel_sd: 0.0,
            leader_accel_sd: 0.0,
        },
        ego_speed: Profile { mean: 20.0, sd: 0.0 },
        modes: vec![ModeSpec {
            name: "only".into(),
            share: 1.0,
            v_rel: Profile { mean: 3.0, sd: 0.0 },
            spacing: Profile { mean: 35.0, sd: 0.0 },
            episode: Some(EpisodeSpec {
                intensity: peak,
                intensity_sd: 0.0,
                duration_s,
            }),
            leader_braking_prob: 0.0,
        }],
        ..SynthConfig::default()
    }
}

fn census_for(synth: SynthConfig, thresholds: Vec<f64>, durations: Vec<f64>) -> Result<pipeline::Prepared, String> {
    let config = PipelineConfig {
        synth: Some(synth),
        seed: Some(1),
        thresholds,
        durations,
        ..PipelineConfig::default()
    };
    pipeline::prepare(&config).map_err(|e| e.to_string())
}

pub fn planted_census() -> Check {
    let p = census_for(clean_config(10, -0.8, 1.2), vec![-0.5], vec![1.0, 2.0])?;
    let at = |d: f64| p.census.cell(-0.5, d).map(|c| c.events);
    ensure(
        &format!("10 events at 1.0 s and 0 at 2.0 s, got {:?} / {:?}", at(1.0), at(2.0)),
        at(1.0) == Some(10) && at(2.0) == Some(0),
    )
}

pub fn lag_availability() -> Check {
    let f = features_from_state(12.0, 10.0, 0.0, 30.0).unwrap();
    let lagged = extract_lagged(&vec![f; 40], 20, &[-5.0, -3.0, -1.0], FRAME_INTERVAL_S);
    ensure(
        "only -1 s available",
        lagged[0].features.is_none() && lagged[1].features.is_none() && lagged[2].features.is_some(),
    )
}

pub fn paired_t() -> Check {
    let t = paired_t_test_diffs(&[1.0, 2.0, 3.0]).map_err(|e| e.to_string())?;
    near("mean", t.mean_diff, 2.0, 1e-12)?;
    near("sd", t.sd_diff, 1.0, 1e-12)?;
    near("t", t.t.unwrap_or(f64::NAN), 2.0 * 3f64.sqrt(), 1e-12)?;
    near("df", t.df, 2.0, 0.0)
}

pub fn cohens_d() -> Check {
    let up = cohens_d_paired(&[1.0, 2.0, 3.0]).map_err(|e| e.to_string())?;
    let down = cohens_d_paired(&[-1.0, -2.0, -3.0]).map_err(|e| e.to_string())?;
    near("D", up.unwrap_or(f64::NAN), 2.0, 1e-12)?;
    near("negated D", down.unwrap_or(f64::NAN), -2.0, 1e-12)
}

pub fn closing_speed_precedes() -> Check {
    let config = PipelineConfig {
        synth: Some(SynthConfig::three_mode(150, 5)),
        seed: Some(5),
        thresholds: vec![-0.5],
        durations: vec![1.0],
        ..PipelineConfig::default()
    };
    let r = pipeline::run_pipeline(&config).map_err(|e| e.to_string())?;
    let events = &r.analyses[0].events;
    let table = precedence_report(events, &[-5.0, -3.0, -1.0]);
    let cell = table.cell(Cue::VRel, -3.0).ok_or("missing v_rel cell")?;
    ensure(
        &format!("v_rel precedes at -3 s (D {:?}, p {:?})", cell.cohens_d, cell.p_value),
        table.verdict(Cue::VRel) == Some(Precedence::Precedes) && cell.significant,
    )
}

pub fn standardize_column() -> Check {
    let (z, _) = standardize(&FeatureMatrix::from_column("x", &[1.0, 2.0, 3.0])).map_err(|e| e.to_string())?;
    let want = 1.5f64.sqrt();
    near("z0", z.row(0)[0], -want, 1e-12)?;
    near("z1", z.row(1)[0], 0.0, 1e-12)?;
    near("z2", z.row(2)[0], want, 1e-12)
}

fn four_points() -> FeatureMatrix {
    FeatureMatrix::from_column("x", &[0.0, 1.0, 10.0, 11.0])
}

pub fn kmeans_four_points() -> Check {
    let r = kmeans(&four_points(), 2, &KMeansConfig::default()).map_err(|e| e.to_string())?;
    ensure("partition {0,1},{10,11}", r.assignments == vec![0, 0, 1, 1])?;
    near("centroid 0", r.centroids[0][0], 0.5, 1e-12)?;
    near("centroid 1", r.centroids[1][0], 10.5, 1e-12)?;
    near("inertia", r.inertia, 1.0, 1e-12)
}

pub fn validity_four_points() -> Check {
    let m = four_points();
    let labels = [0, 0, 1, 1];
    let sil = silhouette(&m, &labels).map_err(|e| e.to_string())?;
    near("silhouette", sil, (1.0 - 1.0 / 10.5 + 1.0 - 1.0 / 9.5) / 2.0, 1e-12)?;
    near("silhouette (rounded)", sil, 0.8997, 1e-4)?;
    near("DBI", davies_bouldin(&m, &labels).map_err(|e| e.to_string())?, 0.1, 1e-12)?;
    near("CHI", calinski_harabasz(&m, &labels).map_err(|e| e.to_string())?, 200.0, 1e-9)
}

pub fn k_cap() -> Check {
    let sils: Vec<(usize, f64)> = (2..=8)
        .map(|k| (k, if k == 5 { 0.25 } else if k == 3 { 0.2 } else { 0.1 }))
        .collect();
    let got = select_k(&sils, 300);
    ensure(
        &format!("capped at K = 3, got {got:?}"),
        got == Some((3, SelectionRationale::CappedAt3)),
    )
}

pub fn anova_two_groups() -> Check {
    let a = anova_eta_squared(&[0.0, 1.0, 2.0, 3.0], &[0, 0, 1, 1]).map_err(|e| e.to_string())?;
    near("SS between", a.ss_between, 4.0, 1e-12)?;
    near("SS total", a.ss_total, 5.0, 1e-12)?;
    near("eta^2", a.eta_squared.unwrap_or(f64::NAN), 0.8, 1e-12)?;
    near("F", a.f, 8.0, 1e-12)
}

pub fn spacing_null_ranking() -> Check {
    let config = PipelineConfig {
        synth: Some(SynthConfig::spacing_null(300, 2)),
        seed: Some(2),
        thresholds: vec![-0.5],
        durations: vec![1.0],
        ..PipelineConfig::default()
    };
    let r = pipeline::run_pipeline(&config).map_err(|e| e.to_string())?;
    let res = r.analyses[0].result().ok_or("analysis skipped")?;
    let rows = rank_cues(&r.analyses[0].events, &res.clustering.selected().assignments)
        .map_err(|e| e.to_string())?;
    let eta = |name: &str| rows.iter().find(|x| x.feature == name).and_then(|x| x.eta_squared);
    let top_is_closure = matches!(rows[0].feature.as_str(), "v_rel" | "gap_closing_rate" | "ttc");
    let v_rel_top = rows
        .iter()
        .position(|x| x.feature == "v_rel")
        .is_some_and(|i| i < rows.iter().position(|x| x.feature == "gap_closing_rate").unwrap_or(9));
    ensure(
        &format!("closure cue first, spacing ~0 (spacing {:?})", eta("spacing")),
        top_is_closure && v_rel_top && eta("spacing").is_some_and(|e| e < 0.05),
    )
}

pub fn planted_profiles() -> Check {
    let synth = SynthConfig::three_mode(300, 3);
    let truth = carfollow::synth::planted_truth(&synth).map_err(|e| e.to_string())?;
    let config = PipelineConfig {
        synth: Some(synth.clone()),
        seed: Some(3),
        thresholds: vec![-0.5],
        durations: vec![1.0],
        ..PipelineConfig::default()
    };
    let r = pipeline::run_pipeline(&config).map_err(|e| e.to_string())?;
    let a = &r.analyses[0];
    let res = a.result().ok_or("analysis skipped")?;
    let assign = &res.clustering.selected().assignments;
    let profiles = cluster_profile(&a.events, assign, &LabelRule::default()).map_err(|e| e.to_string())?;
    for p in &profiles {
        let mut votes = vec![0usize; synth.modes.len()];
        for (e, &c) in a.events.iter().zip(assign) {
            if c == p.cluster {
                votes[truth.mode_of(e.segment.vehicle_id).unwrap()] += 1;
            }
        }
        let mode = &synth.modes[(0..votes.len()).max_by_key(|&i| votes[i]).unwrap()];
        near(&format!("cluster {} v_rel", p.cluster), p.mean("v_rel").unwrap_or(f64::NAN), mode.v_rel.mean, 0.3)?;
        near(&format!("cluster {} spacing", p.cluster), p.mean("spacing").unwrap_or(f64::NAN), mode.spacing.mean, 1.5)?;
    }
    Ok(())
}

pub fn isotropic_pca() -> Check {
    let mut rng = super::rng(99);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let rows: Vec<Vec<f64>> = (0..5000)
        .map(|_| vec![normal.sample(&mut rng), normal.sample(&mut rng)])
        .collect();
    let pca = pca_project(&super::matrix(&rows), 2).map_err(|e| e.to_string())?;
    near("ratio 1", pca.explained_variance_ratio[0], 0.5, 0.05)?;
    near("ratio 2", pca.explained_variance_ratio[1], 0.5, 0.05)
}

pub fn clean_episode() -> Check {
    let p = census_for(clean_config(1, -2.0, 1.5), vec![-0.5], vec![1.0])?;
    let events = &p.grid[0].1;
    ensure(&format!("one event, got {}", events.len()), events.len() == 1)?;
    near("max decel", events[0].max_decel, -2.0, 0.01)
}

pub const ALL: &[(&str, fn() -> Check)] = &[
    ("unit_conversion", unit_conversion),
    ("leader_change_short_segments", leader_change_short_segments),
    ("frame_gap_split", frame_gap_split),
    ("cue_formulas", cue_formulas),
    ("median_imputation", median_imputation),
    ("population_sd", population_sd),
    ("single_run_event", single_run_event),
    ("interrupted_runs", interrupted_runs),
    ("severity_boundary", severity_boundary),
    ("planted_census", planted_census),
    ("lag_availability", lag_availability),
    ("paired_t", paired_t),
    ("cohens_d", cohens_d),
    ("closing_speed_precedes", closing_speed_precedes),
    ("standardize_column", standardize_column),
    ("kmeans_four_points", kmeans_four_points),
    ("validity_four_points", validity_four_points),
    ("k_cap", k_cap),
    ("anova_two_groups", anova_two_groups),
    ("spacing_null_ranking", spacing_null_ranking),
    ("planted_profiles", planted_profiles),
    ("isotropic_pca", isotropic_pca),
    ("clean_episode", clean_episode),
];
