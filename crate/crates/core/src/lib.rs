//! Color upsampling for 3D point clouds.
//!
//! Points are grouped into cubic blocks, each block is flattened to 2D along
//! its minimum spanning tree, and missing colors are reconstructed by a
//! greedy sparse model over weighted DCT basis functions (FSMMR). Baseline
//! interpolators and a seeded evaluation harness are included for
//! comparison.

pub mod baselines;
pub mod cloud;
pub mod error;
pub mod evaluation;
pub mod fsmmr;
pub mod parallel;
pub mod pipeline;
pub mod ply;
pub mod seed;
pub mod spatial;
pub mod surface;
pub mod synthetic;

pub use baselines::InterpolatorKind;
pub use cloud::{partition_into_blocks, Block, ColorPoint, ColorPointCloud, Point3, Rgb, Role};
pub use error::{Error, Result};
pub use evaluation::{run_experiment, ExperimentReport, ExperimentSpec};
pub use fsmmr::{FsmmrConfig, Window};
pub use pipeline::{reconstruct, MethodParams, Reconstruction};
pub use ply::{read_ply, write_ply, PlyFormat};
pub use surface::{flatten_block, RootPolicy};
