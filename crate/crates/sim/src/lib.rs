//! Deterministic store simulator: synthetic pose data, scripted customers,
//! and end-to-end runs scored against ground truth.

pub mod pose;
pub mod run;
pub mod scenario;

pub use pose::{generate_pose_dataset, PoseParams};
pub use run::{run_scenario, RunReport};
pub use scenario::{generate, GeneratedRun, Scenario};
