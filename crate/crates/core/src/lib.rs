//! Car-following deceleration analysis.
//!
//! The crate takes NGSIM-schema vehicle trajectories through a two-stage
//! analysis:
//!
//! 1. **Availability**: [`ingest`] streams raw files into leader-follower
//!    dyads and continuous segments, [`kinematics`] computes the six cue
//!    values per observation (relative velocity, TTC, gap closing rate,
//!    required deceleration, leader braking flag, looming), and [`events`]
//!    detects sustained braking episodes with severity and context labels.
//! 2. **Utilization**: [`temporal`] tests whether cues change before braking
//!    onset, [`cluster`] finds behavioral modes with K-means, and
//!    [`importance`] ranks cues by how much of the between-mode variance they
//!    explain (one-way ANOVA eta-squared).
//!
//! [`synth`] generates corpora with planted modes for end-to-end checks, and
//! [`pipeline`] wires everything together and writes the report bundle.
//!
//! Every capability has a runnable program under `examples/`; run one with
//! `cargo run --release -p carfollow --example <name>`.

pub mod cluster;
pub mod error;
pub mod events;
pub mod importance;
pub mod ingest;
pub mod kinematics;
pub mod pipeline;
pub mod report;
pub mod stats;
pub mod synth;
pub mod temporal;

pub use error::{Error, Result};
