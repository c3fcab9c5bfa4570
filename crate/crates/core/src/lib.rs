//! Change-point detection for eclipse attacks on peer-to-peer overlays.
//!
//! A sequence of directed neighbour graphs is scanned with a non-parametric
//! Fréchet statistic. Graphs are compared under the Frobenius metric, may be
//! compressed with a Johnson-Lindenstrauss projection first, and the maximum
//! statistic is compared against a Brownian-bridge quantile.

pub mod cli;
pub mod detector;
pub mod error;
pub mod eval;
pub mod frechet;
pub mod graph;
pub mod io;
pub mod projection;
pub mod rng;
pub mod simulate;

pub use detector::{
    detect, detect_objects, detect_with_threshold, estimate_onset, simulate_bridge_quantile,
    BridgeMaxima, BridgeQuantileTable, DetectConfig, DetectionReport, ProjectionConfig,
    QuantileCache,
};
pub use error::{Error, Result};
pub use frechet::{statistic_curve, MeanMode, ObjectSequence, StatisticCurve};
pub use graph::{frobenius_distance, AdjacencyMatrix, GraphSequence, GroundTruth, Snr};
pub use projection::{build_jl_map, min_jl_dimension, project_sequence, JlMap, ProjectedSequence};
pub use simulate::{apply_observation_noise, generate_sequence, AttackScenario};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
