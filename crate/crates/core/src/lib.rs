//! k-means clustering with a two-stage accelerator.
//!
//! The engine implements plain Lloyd iterations: assign every point to its
//! nearest center by squared Euclidean distance, move each center to the
//! mean of its points, and stop once the largest squared center shift drops
//! to a tolerance. The two-stage runner first clusters a small uniform
//! sample at a loose tolerance (the fast stage), then finishes on the full
//! dataset from those centers at a tight tolerance (the slow stage). On
//! large datasets the slow stage needs far fewer full-data iterations than
//! k-means started from scratch, which is where the speed-up comes from.
//!
//! The crate also ships a synthetic blob generator, CSV persistence, full
//! per-iteration tracing, a distance-computation cost model, and a
//! wall-clock benchmark harness that pairs baseline and two-stage runs over
//! a (sample fraction, tolerance) grid.
//!
//! All randomness is ChaCha8-based and seeded, and all reductions run over
//! fixed chunks combined in a fixed order, so results are bit-for-bit
//! reproducible across runs and worker counts.

pub mod bench;
pub mod dataset;
pub mod engine;
pub mod error;
pub mod trace;
pub mod two_stage;

pub use bench::{
    emit_report, predicted_cost, predicted_two_stage_cost, run_benchmark, BenchCell, BenchConfig,
    BenchReport, CostModelInput, DatasetInfo, DatasetSource, ReportFormat,
};
pub use dataset::{generate_blobs, load_csv, save_csv, BlobSpec, Dataset};
pub use engine::{
    squared_distance, Assignment, Centers, ClusterResult, Engine, StageParams, StageTag,
};
pub use error::{Error, Result};
pub use trace::{IterationTrace, TraceRecord};
pub use two_stage::{
    init_centers_random, match_centers, matched_center_distance, run_baseline, run_two_stage,
    sample_subset, TwoStageConfig, TwoStageResult,
};
