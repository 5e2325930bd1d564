//! Experiment orchestration: run configuration, training, evaluation by
//! Chamfer distance, ablations and the finite-difference gradient suite.

mod ablate;
mod chamfer;
mod config;
pub mod gradcheck;
mod report;
mod sample;
mod train;

pub use ablate::ablate;
pub use chamfer::{chamfer, chamfer_brute_force, PointGrid};
pub use config::{
    AblationSwitches, OutputConfig, PerturbConfig, RenderConfig, RunConfig, SceneConfig, TrainConfig, MIN_RESOLUTION,
};
pub use report::{ablation_csv, IterationLog, Report, CSV_HEADER};
pub use sample::{sample_points, OPACITY_CUTOFF};
pub use train::{colorize_from_views, evaluation_points, initial_cloud, train, Trainer, CODE_VERSION};
