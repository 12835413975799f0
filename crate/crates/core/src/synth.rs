//! Synthetic trajectory corpora with planted behavioral modes.
//!
//! Each simulated vehicle pair is a scripted leader and a follower that
//! cruises, then brakes once in a planted episode. Mode parameters fix the
//! follower's situation at braking onset (closing speed, spacing, whether the
//! leader is braking) and the episode's intensity and duration, so clustering
//! and ranking results can be checked against known ground truth.
//!
//! The leader closes the gap at a steady rate before onset, optionally brakes
//! hard over the last 0.8 s, and speeds back up afterwards. Gaussian noise is
//! added to both vehicles' accelerations before integrating to speed and
//! position, so every row is kinematically consistent. Initial speeds and
//! positions are solved after integration so that onset states land exactly
//! on the sampled targets.
//!
//! ```
//! use carfollow::synth::SynthConfig;
//!
//! let mut config = SynthConfig::three_mode(12, 7);
//! config.frames_per_vehicle = 200;
//! let corpus = carfollow::synth::generate_trajectories(&config).unwrap();
//! assert_eq!(corpus.truth.vehicles.len(), 12);
//! assert!(corpus.bytes.starts_with(b"Vehicle_ID,"));
//! ```

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{meters_to_feet, Units, FRAME_INTERVAL_S};

const DT: f64 = FRAME_INTERVAL_S;
/// Episodes start at this acceleration and ramp to their peak.
const EPISODE_ENTRY: f64 = -0.8;
const PULSE_FRAMES: usize = 8;
const GLOBAL_TIME_BASE_MS: i64 = 1_113_433_135_300;
const MIN_SPACING: f64 = 2.0;
const MAX_SPACING: f64 = 195.0;
const MIN_SPEED: f64 = 1.5;

const STRUCTURE_STREAM: u64 = 0x5354_5255;
const NOISE_STREAM: u64 = 0x4e4f_4953;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("mode shares sum to {0}, expected 1")]
    SharesDoNotSumToOne(f64),
    #[error("no modes configured")]
    NoModes,
    #[error("mode `{mode}`: episode intensity must be negative, got {value}")]
    NonNegativeIntensity { mode: String, value: f64 },
    #[error("mode `{mode}`: duration {value} s is not a positive multiple of 0.1 s")]
    BadDuration { mode: String, value: f64 },
    #[error("mode `{mode}`: {what} must lie in [0, 1], got {value}")]
    BadProbability {
        mode: String,
        what: &'static str,
        value: f64,
    },
    #[error("{what} must be non-negative, got {value}")]
    NegativeSpread { what: String, value: f64 },
    #[error("n_vehicles must be at least 1")]
    NoVehicles,
    #[error("episode of {episode_frames} frames starting at frame index {onset} does not fit a {frames}-frame trajectory")]
    EpisodeOutOfRange {
        onset: usize,
        episode_frames: usize,
        frames: usize,
    },
    #[error("approach rate must be positive, got {0}")]
    BadApproachRate(f64),
    #[error("vehicle pair {pair}: {reason}")]
    Infeasible { pair: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub mean: f64,
    #[serde(default)]
    pub sd: f64,
}

impl Profile {
    pub fn fixed(mean: f64) -> Self {
        Profile { mean, sd: 0.0 }
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        // always draw so every vehicle consumes the same number of values
        let z: f64 = Normal::new(0.0, 1.0).expect("unit normal").sample(rng);
        self.mean + self.sd * z
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    /// Peak follower acceleration during the episode (negative).
    pub intensity: f64,
    #[serde(default)]
    pub intensity_sd: f64,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSpec {
    pub name: String,
    pub share: f64,
    /// Closing speed at onset (m/s).
    pub v_rel: Profile,
    /// Spacing at onset (m).
    pub spacing: Profile,
    #[serde(default)]
    pub episode: Option<EpisodeSpec>,
    /// Chance that the leader brakes over the 0.8 s up to onset.
    #[serde(default)]
    pub leader_braking_prob: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub follower_accel_sd: f64,
    pub leader_accel_sd: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            follower_accel_sd: 0.05,
            leader_accel_sd: 0.03,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    /// Number of followers; each comes with its own leader.
    pub n_vehicles: usize,
    pub frames_per_vehicle: usize,
    /// Frame index of braking onset inside each trajectory. Defaults to
    /// leaving `post_episode_s` after the episode.
    pub onset_index: Option<usize>,
    pub post_episode_s: f64,
    /// Follower speed at onset (m/s).
    pub ego_speed: Profile,
    /// Leader deceleration (m/s^2) that builds up the closing speed.
    pub approach_rate: f64,
    pub leader_pulse_decel: f64,
    /// Leader acceleration after onset, reopening the gap.
    pub leader_recovery_accel: f64,
    pub noise: NoiseSpec,
    pub units: Units,
    pub site: String,
    pub first_frame: i64,
    pub modes: Vec<ModeSpec>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            n_vehicles: 100,
            frames_per_vehicle: 350,
            onset_index: None,
            post_episode_s: 2.0,
            ego_speed: Profile { mean: 20.0, sd: 2.0 },
            approach_rate: 0.35,
            leader_pulse_decel: -1.0,
            leader_recovery_accel: 1.0,
            noise: NoiseSpec::default(),
            units: Units::Imperial,
            site: "synth".into(),
            first_frame: 1,
            modes: vec![],
        }
    }
}

impl SynthConfig {
    /// Three modes with the urgency contrast of a preventive, an
    /// intermediate and a reactive braking style (onset TTC near 17, 8 and
    /// 4 s).
    pub fn three_mode(n_vehicles: usize, seed: u64) -> Self {
        let mode = |name: &str, share, v_rel, spacing, peak, dur, p| ModeSpec {
            name: name.into(),
            share,
            v_rel: Profile { mean: v_rel, sd: 0.2 },
            spacing: Profile { mean: spacing, sd: 2.5 },
            episode: Some(EpisodeSpec {
                intensity: peak,
                intensity_sd: 0.1,
                duration_s: dur,
            }),
            leader_braking_prob: p,
        };
        SynthConfig {
            seed,
            n_vehicles,
            modes: vec![
                mode("preventive", 0.5, 2.0, 34.0, -1.1, 1.2, 0.1),
                mode("intermediate", 0.3, 4.8, 38.0, -2.0, 1.5, 0.3),
                mode("reactive", 0.2, 8.0, 32.0, -3.0, 2.0, 0.9),
            ],
            ego_speed: Profile { mean: 20.0, sd: 0.5 },
            ..SynthConfig::default()
        }
    }

    /// Modes that differ only in closing speed; spacing at onset has the
    /// same distribution in every mode.
    pub fn spacing_null(n_vehicles: usize, seed: u64) -> Self {
        let mode = |name: &str, share, v_rel| ModeSpec {
            name: name.into(),
            share,
            v_rel: Profile { mean: v_rel, sd: 0.4 },
            spacing: Profile { mean: 35.0, sd: 5.0 },
            episode: Some(EpisodeSpec {
                intensity: -1.8,
                intensity_sd: 0.2,
                duration_s: 1.5,
            }),
            leader_braking_prob: 0.3,
        };
        SynthConfig {
            seed,
            n_vehicles,
            modes: vec![
                mode("slow_closure", 0.4, 2.0),
                mode("medium_closure", 0.35, 5.0),
                mode("fast_closure", 0.25, 8.0),
            ],
            ..SynthConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.modes.is_empty() {
            return Err(SynthError::NoModes);
        }
        if self.n_vehicles == 0 {
            return Err(SynthError::NoVehicles);
        }
        let total: f64 = self.modes.iter().map(|m| m.share).sum();
        if (total - 1.0).abs() > 1e-6 || self.modes.iter().any(|m| m.share < 0.0) {
            return Err(SynthError::SharesDoNotSumToOne(total));
        }
        if !(self.approach_rate > 0.0) {
            return Err(SynthError::BadApproachRate(self.approach_rate));
        }
        let spreads = [
            ("noise.follower_accel_sd".to_string(), self.noise.follower_accel_sd),
            ("noise.leader_accel_sd".to_string(), self.noise.leader_accel_sd),
            ("ego_speed.sd".to_string(), self.ego_speed.sd),
        ];
        for m in &self.modes {
            for (what, value) in [
                ("leader_braking_prob", m.leader_braking_prob),
                ("share", m.share),
            ] {
                if !(0.0..=1.0).contains(&value) {
                    return Err(SynthError::BadProbability {
                        mode: m.name.clone(),
                        what,
                        value,
                    });
                }
            }
            let mut own = vec![
                (format!("{}.v_rel.sd", m.name), m.v_rel.sd),
                (format!("{}.spacing.sd", m.name), m.spacing.sd),
            ];
            if let Some(ep) = &m.episode {
                if !(ep.intensity < 0.0) {
                    return Err(SynthError::NonNegativeIntensity {
                        mode: m.name.clone(),
                        value: ep.intensity,
                    });
                }
                let tenths = ep.duration_s / DT;
                if !(ep.duration_s > 0.0) || (tenths - tenths.round()).abs() > 1e-6 {
                    return Err(SynthError::BadDuration {
                        mode: m.name.clone(),
                        value: ep.duration_s,
                    });
                }
                own.push((format!("{}.episode.intensity_sd", m.name), ep.intensity_sd));
                let frames = self.episode_frames(ep);
                let onset = self.onset_for(frames);
                if onset == 0 || onset + frames > self.frames_per_vehicle {
                    return Err(SynthError::EpisodeOutOfRange {
                        onset,
                        episode_frames: frames,
                        frames: self.frames_per_vehicle,
                    });
                }
            }
            for (what, value) in own {
                if value < 0.0 {
                    return Err(SynthError::NegativeSpread { what, value });
                }
            }
        }
        for (what, value) in spreads {
            if value < 0.0 {
                return Err(SynthError::NegativeSpread { what, value });
            }
        }
        let onset = self.onset_for(0);
        if onset >= self.frames_per_vehicle {
            return Err(SynthError::EpisodeOutOfRange {
                onset,
                episode_frames: 0,
                frames: self.frames_per_vehicle,
            });
        }
        Ok(())
    }

    fn episode_frames(&self, ep: &EpisodeSpec) -> usize {
        (ep.duration_s / DT).round() as usize
    }

    fn post_frames(&self) -> usize {
        (self.post_episode_s / DT).round().max(0.0) as usize
    }

    fn onset_for(&self, episode_frames: usize) -> usize {
        self.onset_index.unwrap_or_else(|| {
            self.frames_per_vehicle
                .saturating_sub(episode_frames + self.post_frames())
        })
    }

    /// Vehicles per mode by largest remainder (ties to the earlier mode).
    pub fn mode_counts(&self) -> Vec<usize> {
        let n = self.n_vehicles as f64;
        let exact: Vec<f64> = self.modes.iter().map(|m| m.share * n).collect();
        let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
        let mut left = self.n_vehicles - counts.iter().sum::<usize>().min(self.n_vehicles);
        let mut order: Vec<usize> = (0..exact.len()).collect();
        order.sort_by(|&a, &b| {
            let fa = exact[a] - exact[a].floor();
            let fb = exact[b] - exact[b].floor();
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        for &m in order.iter().cycle() {
            if left == 0 {
                break;
            }
            counts[m] += 1;
            left -= 1;
        }
        counts
    }
}

// ---------------------------------------------------------------------------
// ground truth

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleTruth {
    pub vehicle_id: i64,
    pub leader_id: i64,
    pub mode: usize,
    pub mode_name: String,
    pub ego_speed_onset: f64,
    pub v_rel_onset: f64,
    pub spacing_onset: f64,
    pub leader_braking: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTruth {
    pub vehicle_id: i64,
    pub onset_frame: i64,
    pub duration_s: f64,
    pub max_decel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub site: String,
    pub vehicles: Vec<VehicleTruth>,
    pub episodes: Vec<EpisodeTruth>,
}

impl GroundTruth {
    pub fn mode_of(&self, vehicle_id: i64) -> Option<usize> {
        self.vehicles
            .iter()
            .find(|v| v.vehicle_id == vehicle_id)
            .map(|v| v.mode)
    }
}

#[derive(Debug, Clone)]
struct Plan {
    pair: usize,
    mode: usize,
    ego_speed: f64,
    v_rel: f64,
    spacing: f64,
    leader_brakes: bool,
    onset: usize,
    episode: Option<(usize, f64)>,
}

fn stream(seed: u64, tag: u64, pair: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ tag);
    rng.set_stream(pair as u64);
    rng
}

fn plans(config: &SynthConfig) -> Vec<Plan> {
    let counts = config.mode_counts();
    let modes: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(m, &c)| std::iter::repeat_n(m, c))
        .collect();
    modes
        .into_iter()
        .enumerate()
        .map(|(pair, mode)| {
            let spec = &config.modes[mode];
            let mut rng = stream(config.seed, STRUCTURE_STREAM, pair);
            let ego_speed = config.ego_speed.sample(&mut rng);
            let v_rel = spec.v_rel.sample(&mut rng);
            let spacing = spec.spacing.sample(&mut rng);
            let leader_brakes = rng.random::<f64>() < spec.leader_braking_prob;
            let peak_z: f64 = Normal::new(0.0, 1.0).expect("unit normal").sample(&mut rng);
            let episode = spec.episode.map(|ep| {
                let peak = (ep.intensity + ep.intensity_sd * peak_z).min(-0.51);
                (config.episode_frames(&ep), peak)
            });
            Plan {
                pair,
                mode,
                ego_speed,
                v_rel,
                spacing,
                leader_brakes,
                onset: config.onset_for(episode.map_or(0, |e| e.0)),
                episode,
            }
        })
        .collect()
}

fn leader_id(pair: usize) -> i64 {
    2 * pair as i64 + 1
}

fn follower_id(pair: usize) -> i64 {
    2 * pair as i64 + 2
}

/// Ground truth implied by the configuration alone (no noise involved).
pub fn planted_truth(config: &SynthConfig) -> Result<GroundTruth, SynthError> {
    config.validate()?;
    let plans = plans(config);
    Ok(truth_from(config, &plans))
}

fn truth_from(config: &SynthConfig, plans: &[Plan]) -> GroundTruth {
    let vehicles = plans
        .iter()
        .map(|p| VehicleTruth {
            vehicle_id: follower_id(p.pair),
            leader_id: leader_id(p.pair),
            mode: p.mode,
            mode_name: config.modes[p.mode].name.clone(),
            ego_speed_onset: p.ego_speed,
            v_rel_onset: p.v_rel,
            spacing_onset: p.spacing,
            leader_braking: p.leader_brakes,
        })
        .collect();
    let episodes = plans
        .iter()
        .filter_map(|p| {
            p.episode.map(|(frames, peak)| EpisodeTruth {
                vehicle_id: follower_id(p.pair),
                onset_frame: config.first_frame + p.onset as i64,
                duration_s: frames as f64 * DT,
                max_decel: peak,
            })
        })
        .collect();
    GroundTruth {
        site: config.site.clone(),
        vehicles,
        episodes,
    }
}

// ---------------------------------------------------------------------------
// simulation

/// Acceleration profile of a planted episode: enters at -0.8 (or the peak,
/// if milder), ramps to the peak over a quarter of the episode, holds, and
/// ramps back.
pub fn episode_profile(frames: usize, peak: f64) -> Vec<f64> {
    let base = EPISODE_ENTRY.max(peak);
    let ramp = (frames / 4).max(1) as f64;
    (0..frames)
        .map(|i| {
            let s = ((i + 1) as f64 / ramp)
                .min((frames - i) as f64 / ramp)
                .min(1.0);
            base + (peak - base) * s
        })
        .collect()
}

struct PairTrack {
    follower: Vec<(f64, f64, f64)>,
    leader: Vec<(f64, f64, f64)>,
}

/// Integrates one (speed, position) track from accelerations, starting at
/// zero speed and position.
fn integrate(accel: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut v = Vec::with_capacity(accel.len());
    let mut y = Vec::with_capacity(accel.len());
    let (mut vc, mut yc) = (0.0, 0.0);
    for &a in accel {
        v.push(vc);
        y.push(yc);
        yc += vc * DT + 0.5 * a * DT * DT;
        vc += a * DT;
    }
    (v, y)
}

fn simulate(config: &SynthConfig, plan: &Plan) -> Result<PairTrack, SynthError> {
    let n = config.frames_per_vehicle;
    let mut rng = stream(config.seed, NOISE_STREAM, plan.pair);
    let f_noise = Normal::new(0.0, config.noise.follower_accel_sd).expect("validated sd");
    let l_noise = Normal::new(0.0, config.noise.leader_accel_sd).expect("validated sd");

    let onset = plan.onset;
    let episode = plan
        .episode
        .map(|(frames, peak)| (frames, episode_profile(frames, peak)));
    let ramp_frames = ((plan.v_rel.max(0.0) / config.approach_rate) / DT).round() as usize;
    let ramp_start = onset.saturating_sub(ramp_frames);
    let pulse_start = onset.saturating_sub(PULSE_FRAMES - 1);

    let mut af = Vec::with_capacity(n);
    let mut al = Vec::with_capacity(n);
    for t in 0..n {
        let nf = f_noise.sample(&mut rng);
        let nl = l_noise.sample(&mut rng);
        let follower = match &episode {
            Some((frames, shape)) if t >= onset && t < onset + frames => shape[t - onset],
            _ => 0.0,
        };
        let leader = if t > onset {
            config.leader_recovery_accel
        } else if plan.leader_brakes && t >= pulse_start {
            config.leader_pulse_decel
        } else if t >= ramp_start {
            -config.approach_rate
        } else {
            0.0
        };
        af.push(follower + nf);
        al.push(leader + nl);
    }

    let (vf0, yf0) = integrate(&af);
    let (vl0, yl0) = integrate(&al);
    let cf = plan.ego_speed - vf0[onset];
    let cl = plan.ego_speed - plan.v_rel - vl0[onset];
    let t0 = onset as f64 * DT;
    let yf_onset = yf0[onset] + cf * t0;
    let y_shift = yf_onset + plan.spacing - (yl0[onset] + cl * t0);

    let mut follower = Vec::with_capacity(n);
    let mut leader = Vec::with_capacity(n);
    for t in 0..n {
        let tt = t as f64 * DT;
        let (vf, yf) = (vf0[t] + cf, yf0[t] + cf * tt);
        let (vl, yl) = (vl0[t] + cl, yl0[t] + cl * tt + y_shift);
        let gap = yl - yf;
        if !(MIN_SPACING..=MAX_SPACING).contains(&gap) {
            return Err(SynthError::Infeasible {
                pair: plan.pair,
                reason: format!("spacing {gap:.1} m at frame index {t} is outside [{MIN_SPACING}, {MAX_SPACING}]"),
            });
        }
        if vf < MIN_SPEED || vl < MIN_SPEED {
            return Err(SynthError::Infeasible {
                pair: plan.pair,
                reason: format!("speed below {MIN_SPEED} m/s at frame index {t}"),
            });
        }
        follower.push((yf, vf, af[t]));
        leader.push((yl, vl, al[t]));
    }
    Ok(PairTrack { follower, leader })
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    /// Delimited text in the NGSIM column layout.
    pub bytes: Vec<u8>,
    pub truth: GroundTruth,
}

pub const SYNTH_HEADER: &str =
    "Vehicle_ID,Frame_ID,Global_Time,Local_Y,v_Vel,v_Acc,Lane_ID,Preceding,Space_Headway,Location";

/// Generates the corpus for `config`. Identical configurations give
/// identical bytes.
pub fn generate_trajectories(config: &SynthConfig) -> Result<SynthCorpus, SynthError> {
    config.validate()?;
    let plans = plans(config);
    let scale = |x: f64| match config.units {
        Units::Imperial => meters_to_feet(x),
        Units::Si => x,
    };
    let blocks: Vec<String> = plans
        .par_iter()
        .map(|plan| {
            let track = simulate(config, plan)?;
            let mut out = String::with_capacity(track.follower.len() * 2 * 80);
            let lane = 1 + (plan.pair % 5) as i64;
            let mut row = |vid: i64, t: usize, (y, v, a): (f64, f64, f64), preceding: i64, gap: f64| {
                let frame = config.first_frame + t as i64;
                let _ = writeln!(
                    out,
                    "{vid},{frame},{},{:.6},{:.6},{:.6},{lane},{preceding},{:.6},{}",
                    GLOBAL_TIME_BASE_MS + frame * 100,
                    scale(y),
                    scale(v),
                    scale(a),
                    scale(gap),
                    config.site
                );
            };
            for (t, &state) in track.leader.iter().enumerate() {
                row(leader_id(plan.pair), t, state, 0, 0.0);
            }
            for (t, &state) in track.follower.iter().enumerate() {
                let gap = track.leader[t].0 - state.0;
                row(follower_id(plan.pair), t, state, leader_id(plan.pair), gap);
            }
            Ok(out)
        })
        .collect::<Result<_, SynthError>>()?;
    let mut bytes = Vec::with_capacity(blocks.iter().map(String::len).sum::<usize>() + 128);
    bytes.extend_from_slice(SYNTH_HEADER.as_bytes());
    bytes.push(b'\n');
    for b in blocks {
        bytes.extend_from_slice(b.as_bytes());
    }
    Ok(SynthCorpus {
        bytes,
        truth: truth_from(config, &plans),
    })
}
