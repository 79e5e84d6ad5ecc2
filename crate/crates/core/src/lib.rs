//! Joint hardware/software design-space exploration for stencil
//! accelerators.
//!
//! Hardware points (SM count, vector units per SM, shared memory per SM) are
//! enumerated under an area budget; for each point every weighted
//! (kernel, problem size) instance gets its own optimal tiling, and the
//! weighted times are summed. The `(area, GFLOP/s)` Pareto frontier of the
//! resulting designs is the main output.

// Validation uses `!(x > 0.0)` style checks so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod area;
pub mod calibration;
pub mod config;
pub mod error;
pub mod explorer;
pub mod report;
pub mod store;
pub mod tiles;
pub mod time_model;
pub mod workload;

pub use area::{area_breakdown, sm_area, total_area, AreaBreakdown, AreaCoefficients, HardwareConfig};
pub use calibration::{fit_linear, predict_block_area, AreaSample, LinearFit, MemoryType};
pub use error::{Error, Result};
pub use explorer::{DesignPoint, Explorer, HardwareSpace};
pub use store::ResultsStore;
pub use tiles::{optimize_tiles, SearchOptions, TileCandidates, TileSearchBounds, TileSolution};
pub use time_model::{MachineConstants, ReferenceModel, TileConfig, TimeModel};
pub use workload::{ProblemSize, StencilKernel, WorkloadSpec};
