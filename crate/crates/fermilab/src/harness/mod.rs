//! Configuration, scaling fits, reports, checkpoints, experiment orchestration
//! and the command-line surface.

mod checkpoint;
pub mod cli;
mod config;
mod experiments;
mod fit;
mod report;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{parse_override, ExperimentConfig, ExperimentKind, GridSpec, PotentialSpec, SweepSpec, TimeSpec, Tolerances};
pub use experiments::{compute_experiment, husimi_at, run_experiment, FIT_EXCLUDED};
pub use fit::{fit_excluding_smallest, fit_power_law, PowerLawFit};
pub use report::{emit_report, Assertion, Checkpoint, FitRecord, Manifest, Report, Table};
