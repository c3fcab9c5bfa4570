//! Threshold calibration, the detection decision and onset estimation.
//!
//! The threshold is the `(1 - alpha)` quantile of `max_t B(t)^2` over the
//! trimmed window, where `B` is the standardized Brownian bridge
//! `(W(t) - t W(1)) / sqrt(t (1 - t))`. It is estimated by Monte Carlo on
//! the uniform grid `t = i / G`; path `i` draws from ChaCha stream `i`.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frechet::{admissible_splits, statistic_curve, MeanMode, ObjectSequence, StatisticCurve};
use crate::graph::GraphSequence;
use crate::projection::{build_jl_map, project_objects, JlDescriptor, SourceInfo, DEFAULT_MAX_RETRIES};
use crate::rng::{stream_rng, DetRng};

pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_DELTA: f64 = 0.1;
pub const DEFAULT_PATHS: usize = 10_000;
pub const DEFAULT_QUANTILE_SEED: u64 = 0x5eed;

/// Standardized bridge values at `t = i / grid` for `i = 1..grid`.
pub fn standardized_bridge_path(grid: usize, rng: &mut DetRng) -> Vec<f64> {
    let step = (1.0 / grid as f64).sqrt();
    let mut walk = Vec::with_capacity(grid);
    let mut w = 0.0;
    for _ in 0..grid {
        w += rng.sample::<f64, _>(StandardNormal) * step;
        walk.push(w);
    }
    let end = w;
    (1..grid)
        .map(|i| {
            let t = i as f64 / grid as f64;
            (walk[i - 1] - t * end) / (t * (1.0 - t)).sqrt()
        })
        .collect()
}

/// Sorted per-path maxima of `B(t)^2` over the admissible window.
#[derive(Clone, Debug, PartialEq)]
pub struct BridgeMaxima {
    pub delta: f64,
    pub grid_points: usize,
    pub seed: u64,
    sorted: Vec<f64>,
}

impl BridgeMaxima {
    pub fn simulate(delta: f64, grid_points: usize, n_paths: usize, seed: u64) -> Result<Self> {
        if !(delta > 0.0 && delta < 0.5) {
            return Err(Error::InvalidParameters(format!("delta {delta} outside (0, 0.5)")));
        }
        if grid_points < 10 {
            return Err(Error::InvalidParameters(format!(
                "grid needs at least 10 points, got {grid_points}"
            )));
        }
        if n_paths < 1000 {
            return Err(Error::InvalidParameters(format!(
                "need at least 1000 paths, got {n_paths}"
            )));
        }
        let window = admissible_splits(grid_points, delta);
        if window.is_empty() {
            return Err(Error::WindowEmpty {
                n: grid_points,
                delta,
            });
        }
        let mut sorted: Vec<f64> = (0..n_paths)
            .into_par_iter()
            .map(|path| {
                let mut rng = stream_rng(seed, path as u64);
                let b = standardized_bridge_path(grid_points, &mut rng);
                window
                    .clone()
                    .map(|i| b[i - 1] * b[i - 1])
                    .fold(0.0, f64::max)
            })
            .collect();
        sorted.sort_by(f64::total_cmp);
        Ok(Self {
            delta,
            grid_points,
            seed,
            sorted,
        })
    }

    pub fn n_paths(&self) -> usize {
        self.sorted.len()
    }

    /// Empirical `(1 - alpha)` quantile (inverse of the empirical CDF).
    pub fn quantile(&self, alpha: f64) -> Result<f64> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidParameters(format!("alpha {alpha} outside (0, 1)")));
        }
        let n = self.sorted.len();
        let rank = ((1.0 - alpha) * n as f64).ceil() as usize;
        Ok(self.sorted[rank.clamp(1, n) - 1])
    }

    pub fn table(&self, alpha: f64) -> Result<BridgeQuantileTable> {
        Ok(BridgeQuantileTable {
            alpha,
            delta: self.delta,
            grid_points: self.grid_points,
            n_paths: self.n_paths(),
            seed: self.seed,
            quantile: self.quantile(alpha)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BridgeQuantileTable {
    pub alpha: f64,
    pub delta: f64,
    pub grid_points: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub quantile: f64,
}

pub fn simulate_bridge_quantile(
    alpha: f64,
    delta: f64,
    grid_points: usize,
    n_paths: usize,
    seed: u64,
) -> Result<BridgeQuantileTable> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameters(format!("alpha {alpha} outside (0, 1)")));
    }
    BridgeMaxima::simulate(delta, grid_points, n_paths, seed)?.table(alpha)
}

/// On-disk cache of quantile tables, one small JSON file per key.
#[derive(Clone, Debug)]
pub struct QuantileCache {
    dir: PathBuf,
}

impl QuantileCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, alpha: f64, delta: f64, grid: usize, paths: usize, seed: u64) -> PathBuf {
        self.dir.join(format!(
            "bridge-a{:016x}-d{:016x}-g{grid}-p{paths}-s{seed}.json",
            alpha.to_bits(),
            delta.to_bits()
        ))
    }

    /// Returns the table and whether it came from disk.
    pub fn get_or_compute(
        &self,
        alpha: f64,
        delta: f64,
        grid: usize,
        paths: usize,
        seed: u64,
    ) -> Result<(BridgeQuantileTable, bool)> {
        let path = self.path_for(alpha, delta, grid, paths, seed);
        if let Ok(text) = fs::read_to_string(&path) {
            if let Ok(table) = serde_json::from_str::<BridgeQuantileTable>(&text) {
                let key = (table.alpha, table.delta, table.grid_points, table.n_paths, table.seed);
                if key == (alpha, delta, grid, paths, seed) {
                    return Ok((table, true));
                }
            }
        }
        let table = simulate_bridge_quantile(alpha, delta, grid, paths, seed)?;
        fs::create_dir_all(&self.dir)?;
        fs::write(&path, serde_json::to_string_pretty(&table)?)?;
        Ok((table, false))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionConfig {
    pub k: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub max_retries: usize,
}

impl ProjectionConfig {
    pub fn new(k: usize, epsilon: f64, seed: u64) -> Self {
        Self {
            k,
            epsilon,
            seed,
            max_retries: DEFAULT_MAX_RETRIES,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectConfig {
    pub alpha: f64,
    pub delta: f64,
    pub mean_mode: MeanMode,
    pub projection: Option<ProjectionConfig>,
    pub quantile_paths: usize,
    /// Calibration grid; `None` uses the sequence length.
    pub quantile_grid: Option<usize>,
    pub quantile_seed: u64,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            delta: DEFAULT_DELTA,
            mean_mode: MeanMode::Euclidean,
            projection: None,
            quantile_paths: DEFAULT_PATHS,
            quantile_grid: None,
            quantile_seed: DEFAULT_QUANTILE_SEED,
        }
    }
}

impl DetectConfig {
    pub fn grid_for(&self, n: usize) -> usize {
        self.quantile_grid.unwrap_or(n)
    }

    pub fn threshold_for(&self, n: usize) -> Result<BridgeQuantileTable> {
        simulate_bridge_quantile(
            self.alpha,
            self.delta,
            self.grid_for(n),
            self.quantile_paths,
            self.quantile_seed,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub version: String,
    pub detected: bool,
    /// Split size maximising the statistic; present only when detected.
    pub tau_hat: Option<usize>,
    pub max_scaled_stat: f64,
    pub threshold: f64,
    pub quantile: BridgeQuantileTable,
    pub config: DetectConfig,
    pub projection: Option<JlDescriptor>,
    pub source: Option<SourceInfo>,
    pub warnings: Vec<String>,
    pub curve: StatisticCurve,
}

/// Admissible split with the largest statistic, smallest on ties.
pub fn estimate_onset(curve: &StatisticCurve) -> Result<usize> {
    curve
        .argmax_position()
        .map(|i| curve.splits[i])
        .ok_or(Error::WindowEmpty {
            n: curve.n_total,
            delta: curve.delta,
        })
}

/// Runs the full pipeline, calibrating the threshold on the fly.
pub fn detect(seq: &GraphSequence, config: &DetectConfig) -> Result<DetectionReport> {
    let table = config.threshold_for(seq.len())?;
    detect_with_threshold(seq, config, &table)
}

/// As [`detect`], with a precomputed threshold.
pub fn detect_with_threshold(
    seq: &GraphSequence,
    config: &DetectConfig,
    table: &BridgeQuantileTable,
) -> Result<DetectionReport> {
    let objects = ObjectSequence::from_graphs(seq)?;
    let mut report = detect_objects(&objects, config, table)?;
    report.source = Some(SourceInfo::of(seq));
    Ok(report)
}

/// Detection on already vectorized objects.
pub fn detect_objects(
    objects: &ObjectSequence,
    config: &DetectConfig,
    table: &BridgeQuantileTable,
) -> Result<DetectionReport> {
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(Error::InvalidParameters(format!(
            "alpha {} outside (0, 1)",
            config.alpha
        )));
    }
    let mut warnings = Vec::new();
    let (analysed, projection) = match &config.projection {
        Some(pc) => {
            if pc.k > objects.dim() {
                warnings.push(format!(
                    "projection dimension {} exceeds data dimension {}",
                    pc.k,
                    objects.dim()
                ));
            }
            let map = build_jl_map(pc.k, pc.epsilon, objects, pc.seed, pc.max_retries)?;
            (project_objects(objects, &map)?, Some(map.descriptor(false)))
        }
        None => (objects.clone(), None),
    };
    let curve = statistic_curve(&analysed, config.delta, config.mean_mode)?;
    let pos = curve.argmax_position().ok_or(Error::WindowEmpty {
        n: curve.n_total,
        delta: curve.delta,
    })?;
    let max_scaled_stat = curve.scaled[pos];
    let detected = max_scaled_stat >= table.quantile;
    Ok(DetectionReport {
        version: crate::VERSION.to_string(),
        detected,
        tau_hat: detected.then(|| curve.splits[pos]),
        max_scaled_stat,
        threshold: table.quantile,
        quantile: table.clone(),
        config: config.clone(),
        projection,
        source: None,
        warnings,
        curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frechet::statistic_curve;
    use crate::simulate::{generate_sequence, AttackScenario};

    #[test]
    fn bridge_marginals_are_standard() {
        // standard error of each mean is 0.01, so 0.04 is four of them
        let grid = 50;
        let paths = 10_000;
        let mut sum = vec![0.0; grid - 1];
        let mut sum_sq = vec![0.0; grid - 1];
        for p in 0..paths {
            let b = standardized_bridge_path(grid, &mut stream_rng(3, p as u64));
            for (i, v) in b.iter().enumerate() {
                sum[i] += v;
                sum_sq[i] += v * v;
            }
        }
        for i in 0..grid - 1 {
            let mean = sum[i] / paths as f64;
            let var = sum_sq[i] / paths as f64 - mean * mean;
            assert!(mean.abs() < 0.04, "mean at {i}: {mean}");
            assert!((var - 1.0).abs() < 0.05, "var at {i}: {var}");
        }
    }

    #[test]
    fn bridge_correlation_matches_covariance() {
        // corr(B(s), B(t)) = sqrt(s (1 - t) / (t (1 - s))) for s <= t
        let grid = 20;
        let (i, j) = (4, 12);
        let (s, t) = (i as f64 / grid as f64, j as f64 / grid as f64);
        let paths = 20_000;
        let mut acc = 0.0;
        for p in 0..paths {
            let b = standardized_bridge_path(grid, &mut stream_rng(4, p as u64));
            acc += b[i - 1] * b[j - 1];
        }
        let expected = (s * (1.0 - t) / (t * (1.0 - s))).sqrt();
        assert!((acc / paths as f64 - expected).abs() < 0.03);
    }

    fn gaussian_objects(n: usize, dim: usize, shift_at: Option<usize>, seed: u64) -> ObjectSequence {
        let mut rng = stream_rng(seed, 0);
        let data: Vec<f64> = (0..n * dim)
            .map(|i| {
                let z: f64 = rng.sample(StandardNormal);
                match shift_at {
                    Some(tau) if i / dim + 1 >= tau => z + 1.0,
                    _ => z,
                }
            })
            .collect();
        ObjectSequence::from_flat(data, dim, crate::frechet::ObjectKind::Vector).unwrap()
    }

    fn gaussian_rejection_rate(dim: usize) -> f64 {
        let config = DetectConfig::default();
        let table = config.threshold_for(200).unwrap();
        let hits = (0..500u64)
            .into_par_iter()
            .filter(|&t| {
                detect_objects(&gaussian_objects(200, dim, None, 1000 + t), &config, &table)
                    .unwrap()
                    .detected
            })
            .count();
        hits as f64 / 500.0
    }

    #[test]
    fn gaussian_null_rejection_rate() {
        let rate = gaussian_rejection_rate(5);
        assert!((0.02..=0.10).contains(&rate), "{rate}");
    }

    #[test]
    fn mean_shift_onset_is_recovered() {
        let mut hits = 0;
        for t in 0..100u64 {
            let objs = gaussian_objects(200, 3, Some(121), 5000 + t);
            let curve = statistic_curve(&objs, 0.1, MeanMode::Euclidean).unwrap();
            // first shifted point is 121, so the ideal split keeps 120 before it
            if estimate_onset(&curve).unwrap().abs_diff(120) <= 10 {
                hits += 1;
            }
        }
        assert!(hits >= 90, "{hits}");
    }

    #[test]
    fn quantile_decreases_with_alpha() {
        let maxima = BridgeMaxima::simulate(0.1, 200, 4000, 1).unwrap();
        let q: Vec<f64> = [0.01, 0.05, 0.1, 0.5, 0.95]
            .iter()
            .map(|&a| maxima.quantile(a).unwrap())
            .collect();
        assert!(q.windows(2).all(|w| w[0] > w[1]), "{q:?}");
        assert!(q[4] > 0.0);
    }

    #[test]
    fn quantile_is_seed_deterministic() {
        let a = simulate_bridge_quantile(0.05, 0.1, 100, 2000, 9).unwrap();
        let b = simulate_bridge_quantile(0.05, 0.1, 100, 2000, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_bridge_parameters() {
        assert!(simulate_bridge_quantile(0.0, 0.1, 100, 2000, 0).is_err());
        assert!(simulate_bridge_quantile(0.05, 0.5, 100, 2000, 0).is_err());
        assert!(simulate_bridge_quantile(0.05, 0.1, 5, 2000, 0).is_err());
        assert!(simulate_bridge_quantile(0.05, 0.1, 100, 10, 0).is_err());
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cache = QuantileCache::new(dir.path());
        let (a, hit_a) = cache.get_or_compute(0.05, 0.1, 100, 2000, 3).unwrap();
        let (b, hit_b) = cache.get_or_compute(0.05, 0.1, 100, 2000, 3).unwrap();
        assert!(!hit_a && hit_b);
        assert_eq!(a, b);
    }

    #[test]
    fn onset_of_unique_and_flat_curves() {
        let seq = generate_sequence(&AttackScenario::honest(10, 3, 1000, 1)).unwrap();
        let objs = ObjectSequence::from_graphs(&seq).unwrap();
        let mut curve = statistic_curve(&objs, 0.1, MeanMode::Euclidean).unwrap();
        curve.values.iter_mut().for_each(|v| *v = 0.5);
        assert_eq!(estimate_onset(&curve).unwrap(), 101);
        let at = curve.splits.iter().position(|&n| n == 600).unwrap();
        curve.values[at] = 3.0;
        assert_eq!(estimate_onset(&curve).unwrap(), 600);
        curve.splits.clear();
        curve.values.clear();
        assert!(matches!(estimate_onset(&curve), Err(Error::WindowEmpty { .. })));
    }

    #[test]
    fn decision_matches_threshold_exactly() {
        let seq = generate_sequence(&AttackScenario::paper_iv(true, 5)).unwrap();
        let config = DetectConfig {
            quantile_paths: 2000,
            ..DetectConfig::default()
        };
        let report = detect(&seq, &config).unwrap();
        assert_eq!(report.detected, report.max_scaled_stat >= report.threshold);
        assert!(report.detected);
        let tau = report.tau_hat.unwrap();
        assert!((590..=610).contains(&tau), "{tau}");

        // forcing the threshold onto the maximum still counts as a detection
        let mut table = report.quantile.clone();
        table.quantile = report.max_scaled_stat;
        let again = detect_with_threshold(&seq, &config, &table).unwrap();
        assert!(again.detected);
        table.quantile = f64::from_bits(report.max_scaled_stat.to_bits() + 1);
        let below = detect_with_threshold(&seq, &config, &table).unwrap();
        assert!(!below.detected && below.tau_hat.is_none());
    }

    #[test]
    fn reports_are_reproducible() {
        let seq = generate_sequence(&AttackScenario::paper_iv(false, 6)).unwrap();
        let config = DetectConfig {
            quantile_paths: 2000,
            projection: Some(ProjectionConfig::new(100, 0.9, 8)),
            ..DetectConfig::default()
        };
        let a = serde_json::to_string(&detect(&seq, &config).unwrap()).unwrap();
        let b = serde_json::to_string(&detect(&seq, &config).unwrap()).unwrap();
        assert_eq!(a, b);
    }
}
