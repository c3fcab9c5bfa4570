//! Monte Carlo experiments: null calibration, labelled accuracy and onset
//! error, ROC curves under observation noise, and raw-vs-projected curves.
//!
//! Trial `i` of an experiment with master seed `s` simulates its sequence
//! with seed `derive_seed(s, i)`; noise and projection seeds are derived from
//! that in turn. Trials run in parallel and results are collected in trial
//! order, so every summary is a pure function of its inputs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, Binomial, ContinuousCDF, DiscreteCDF};

use crate::detector::{detect_objects, BridgeQuantileTable, DetectConfig, ProjectionConfig};
use crate::error::{Error, Result};
use crate::frechet::{admissible_splits, statistic_curve, ObjectSequence};
use crate::graph::{GraphSequence, Snr};
use crate::projection::{build_jl_map, project_objects, JlMap};
use crate::rng::{derive_seed, stream_rng};
use crate::simulate::{apply_observation_noise, generate_sequence, AttackScenario};

const NOISE_STREAM: u64 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub detect: DetectConfig,
    pub snr: Snr,
    pub master_seed: u64,
}

impl ExperimentConfig {
    pub fn new(detect: DetectConfig, master_seed: u64) -> Self {
        Self {
            detect,
            snr: Snr::CLEAN,
            master_seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: usize,
    pub seed: u64,
    pub attack: bool,
    pub true_tau: Option<usize>,
    pub max_scaled_stat: f64,
    pub detected: bool,
    /// Argmax split, reported whether or not the threshold was crossed.
    pub onset: usize,
}

impl TrialRecord {
    pub fn correct(&self) -> bool {
        self.detected == self.attack
    }

    pub fn onset_error(&self) -> Option<f64> {
        self.true_tau.map(|tau| self.onset as f64 - tau as f64)
    }
}

/// Simulated sequence for trial `index`, with observation noise applied.
pub fn trial_sequence(
    scenario: &AttackScenario,
    snr: Snr,
    master_seed: u64,
    index: usize,
) -> Result<GraphSequence> {
    let seed = derive_seed(master_seed, index as u64);
    let seq = generate_sequence(&scenario.clone().with_seed(seed))?;
    if snr.is_clean() {
        return Ok(seq);
    }
    apply_observation_noise(&seq, snr, &mut stream_rng(seed, NOISE_STREAM))
}

fn trial_config(config: &DetectConfig, index: usize) -> DetectConfig {
    let mut c = config.clone();
    if let Some(pc) = c.projection.as_mut() {
        pc.seed = derive_seed(pc.seed, index as u64);
    }
    c
}

fn run_trial(
    scenario: &AttackScenario,
    cfg: &ExperimentConfig,
    table: &BridgeQuantileTable,
    index: usize,
) -> Result<TrialRecord> {
    let seq = trial_sequence(scenario, cfg.snr, cfg.master_seed, index)?;
    let objects = ObjectSequence::from_graphs(&seq)?;
    let report = detect_objects(&objects, &trial_config(&cfg.detect, index), table)?;
    let onset = crate::detector::estimate_onset(&report.curve)?;
    Ok(TrialRecord {
        index,
        seed: derive_seed(cfg.master_seed, index as u64),
        attack: scenario.attack,
        true_tau: scenario.tau,
        max_scaled_stat: report.max_scaled_stat,
        detected: report.detected,
        onset,
    })
}

fn run_many(
    jobs: &[(AttackScenario, usize)],
    cfg: &ExperimentConfig,
    table: &BridgeQuantileTable,
) -> Result<Vec<TrialRecord>> {
    jobs.par_iter()
        .map(|(sc, i)| run_trial(sc, cfg, table, *i))
        .collect()
}

/// Central `level` acceptance region of `Binomial(n, p) / n`.
pub fn binomial_band(n: usize, p: f64, level: f64) -> Result<(f64, f64)> {
    let b = Binomial::new(p, n as u64)
        .map_err(|e| Error::InvalidParameters(format!("binomial({n}, {p}): {e}")))?;
    let tail = (1.0 - level) / 2.0;
    let lo = b.inverse_cdf(tail) as f64 / n as f64;
    let hi = b.inverse_cdf(1.0 - tail) as f64 / n as f64;
    Ok((lo, hi))
}

/// Clopper-Pearson interval for a success rate.
pub fn clopper_pearson(successes: usize, n: usize, level: f64) -> Result<(f64, f64)> {
    if n == 0 || successes > n {
        return Err(Error::InvalidParameters(format!("{successes} successes of {n}")));
    }
    let tail = (1.0 - level) / 2.0;
    let (k, n) = (successes as f64, n as f64);
    let beta = |a: f64, b: f64, q: f64| -> Result<f64> {
        Beta::new(a, b)
            .map(|d| d.inverse_cdf(q))
            .map_err(|e| Error::InvalidParameters(e.to_string()))
    };
    let lo = if successes == 0 { 0.0 } else { beta(k, n - k + 1.0, tail)? };
    let hi = if successes as f64 == n { 1.0 } else { beta(k + 1.0, n - k, 1.0 - tail)? };
    Ok((lo, hi))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub trials: usize,
    pub alpha: f64,
    pub threshold: f64,
    pub rejections: usize,
    pub rate: f64,
    /// 95% Clopper-Pearson interval for the false-alarm rate.
    pub confidence_interval: (f64, f64),
    /// 99% binomial acceptance band around `alpha`.
    pub nominal_band: (f64, f64),
    pub within_band: bool,
    pub records: Vec<TrialRecord>,
}

/// False-alarm rate of the detector over independent null sequences.
pub fn run_calibration(
    h0: &AttackScenario,
    trials: usize,
    alpha: f64,
    cfg: &ExperimentConfig,
) -> Result<CalibrationResult> {
    if trials < 50 {
        return Err(Error::InvalidParameters(format!(
            "calibration needs at least 50 trials, got {trials}"
        )));
    }
    if h0.attack {
        return Err(Error::InvalidScenario("calibration needs a null scenario".into()));
    }
    h0.validate()?;
    let mut cfg = cfg.clone();
    cfg.detect.alpha = alpha;
    let table = cfg.detect.threshold_for(h0.n)?;
    let jobs: Vec<_> = (0..trials).map(|i| (h0.clone(), i)).collect();
    let records = run_many(&jobs, &cfg, &table)?;
    let rejections = records.iter().filter(|r| r.detected).count();
    let rate = rejections as f64 / trials as f64;
    let nominal_band = binomial_band(trials, alpha, 0.99)?;
    Ok(CalibrationResult {
        trials,
        alpha,
        threshold: table.quantile,
        rejections,
        rate,
        confidence_interval: clopper_pearson(rejections, trials, 0.95)?,
        nominal_band,
        within_band: rate >= nominal_band.0 && rate <= nominal_band.1,
        records,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub trials: usize,
    pub threshold: f64,
    pub detection_accuracy: f64,
    pub false_alarm_rate: Option<f64>,
    pub detection_rate: Option<f64>,
    /// Root mean squared `onset - tau` over attacked trials.
    pub onset_rmse: Option<f64>,
    pub median_abs_onset_error: Option<f64>,
    pub scenario: AttackScenario,
    pub config: ExperimentConfig,
    pub records: Vec<TrialRecord>,
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    })
}

fn summarise(
    records: Vec<TrialRecord>,
    threshold: f64,
    scenario: &AttackScenario,
    cfg: &ExperimentConfig,
) -> ExperimentSummary {
    let rate = |attack: bool| {
        let class: Vec<_> = records.iter().filter(|r| r.attack == attack).collect();
        (!class.is_empty())
            .then(|| class.iter().filter(|r| r.detected).count() as f64 / class.len() as f64)
    };
    let errors: Vec<f64> = records.iter().filter_map(|r| r.onset_error()).collect();
    let onset_rmse = (!errors.is_empty())
        .then(|| (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt());
    ExperimentSummary {
        trials: records.len(),
        threshold,
        detection_accuracy: records.iter().filter(|r| r.correct()).count() as f64
            / records.len() as f64,
        false_alarm_rate: rate(false),
        detection_rate: rate(true),
        onset_rmse,
        median_abs_onset_error: median(errors.iter().map(|e| e.abs()).collect()),
        scenario: scenario.clone(),
        config: cfg.clone(),
        records,
    }
}

/// Balanced null/attack trials: indices `0..n` are null, `n..2n` attacked.
pub fn run_labeled_trials(
    h1: &AttackScenario,
    trials_per_class: usize,
    cfg: &ExperimentConfig,
) -> Result<ExperimentSummary> {
    if trials_per_class == 0 {
        return Err(Error::InvalidParameters("trials must be positive".into()));
    }
    if !h1.attack {
        return Err(Error::InvalidScenario("labelled trials need an attack scenario".into()));
    }
    h1.validate()?;
    let h0 = h1.null_counterpart();
    let table = cfg.detect.threshold_for(h1.n)?;
    let jobs: Vec<_> = (0..trials_per_class)
        .map(|i| (h0.clone(), i))
        .chain((trials_per_class..2 * trials_per_class).map(|i| (h1.clone(), i)))
        .collect();
    let records = run_many(&jobs, cfg, &table)?;
    Ok(summarise(records, table.quantile, h1, cfg))
}

/// Onset error over attacked trials only.
pub fn run_onset_rmse(
    h1: &AttackScenario,
    trials: usize,
    cfg: &ExperimentConfig,
) -> Result<ExperimentSummary> {
    if trials == 0 {
        return Err(Error::InvalidParameters("trials must be positive".into()));
    }
    if !h1.attack {
        return Err(Error::InvalidScenario("onset estimation needs an attack scenario".into()));
    }
    h1.validate()?;
    let table = cfg.detect.threshold_for(h1.n)?;
    let jobs: Vec<_> = (0..trials).map(|i| (h1.clone(), i)).collect();
    let records = run_many(&jobs, cfg, &table)?;
    Ok(summarise(records, table.quantile, h1, cfg))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub false_positive_rate: f64,
    pub true_positive_rate: f64,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub snr: Snr,
    pub trials_per_class: usize,
    pub master_seed: u64,
    pub scenario: AttackScenario,
    /// Sorted by increasing threshold.
    pub points: Vec<RocPoint>,
    pub auc: f64,
    pub null_scores: Vec<f64>,
    pub attack_scores: Vec<f64>,
}

/// ROC points and trapezoid AUC for the rule `score >= threshold`.
///
/// Without an explicit sweep every distinct pooled score is a threshold,
/// plus one above the maximum so the curve reaches (0, 0).
pub fn roc_from_scores(
    null_scores: &[f64],
    attack_scores: &[f64],
    sweep: Option<&[f64]>,
) -> Result<(Vec<RocPoint>, f64)> {
    if null_scores.is_empty() || attack_scores.is_empty() {
        return Err(Error::InvalidParameters("ROC needs scores from both classes".into()));
    }
    let mut thresholds: Vec<f64> = match sweep {
        Some(s) => s.to_vec(),
        None => {
            let mut t: Vec<f64> = null_scores.iter().chain(attack_scores).copied().collect();
            let top = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            t.push(top + 1.0);
            t
        }
    };
    if thresholds.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidParameters("thresholds must be finite".into()));
    }
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let frac = |s: &[f64], h: f64| s.iter().filter(|&&x| x >= h).count() as f64 / s.len() as f64;
    let points: Vec<RocPoint> = thresholds
        .iter()
        .map(|&h| RocPoint {
            false_positive_rate: frac(null_scores, h),
            true_positive_rate: frac(attack_scores, h),
            threshold: h,
        })
        .collect();
    // rates fall as the threshold rises, so walking backwards sweeps FPR upwards
    let auc = points
        .windows(2)
        .map(|w| {
            let (hi, lo) = (&w[0], &w[1]);
            (hi.false_positive_rate - lo.false_positive_rate)
                * (hi.true_positive_rate + lo.true_positive_rate)
                / 2.0
        })
        .sum();
    Ok((points, auc))
}

/// One ROC curve per SNR. Trial seeds are shared across SNRs, so each
/// curve sees the same clean sequences under different noise.
pub fn run_roc(
    h1: &AttackScenario,
    snr_list: &[Snr],
    trials_per_class: usize,
    sweep: Option<&[f64]>,
    cfg: &ExperimentConfig,
) -> Result<Vec<RocCurve>> {
    if trials_per_class == 0 {
        return Err(Error::InvalidParameters("trials must be positive".into()));
    }
    if snr_list.is_empty() {
        return Err(Error::InvalidParameters("no SNR values given".into()));
    }
    h1.validate()?;
    let h0 = h1.null_counterpart();
    let table = cfg.detect.threshold_for(h1.n)?;
    snr_list
        .iter()
        .map(|&snr| {
            let cfg = ExperimentConfig { snr, ..cfg.clone() };
            let jobs: Vec<_> = (0..trials_per_class)
                .map(|i| (h0.clone(), i))
                .chain((trials_per_class..2 * trials_per_class).map(|i| (h1.clone(), i)))
                .collect();
            let records = run_many(&jobs, &cfg, &table)?;
            let scores = |attack: bool| -> Vec<f64> {
                records
                    .iter()
                    .filter(|r| r.attack == attack)
                    .map(|r| r.max_scaled_stat)
                    .collect()
            };
            let (null_scores, attack_scores) = (scores(false), scores(true));
            let (points, auc) = roc_from_scores(&null_scores, &attack_scores, sweep)?;
            Ok(RocCurve {
                snr,
                trials_per_class,
                master_seed: cfg.master_seed,
                scenario: h1.clone(),
                points,
                auc,
                null_scores,
                attack_scores,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ComparisonProjection {
    Identity,
    Gaussian(ProjectionConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveComparison {
    pub trials: usize,
    pub projection: ComparisonProjection,
    pub splits: Vec<usize>,
    pub mean_original: Vec<f64>,
    pub mean_projected: Vec<f64>,
    /// Share of splits where the averaged projected curve is at least the
    /// averaged original curve.
    pub fraction_projected_ge: f64,
    pub argmax_original: usize,
    pub argmax_projected: usize,
    pub max_observed_distortion: Option<f64>,
    pub scenario: AttackScenario,
    pub config: ExperimentConfig,
}

fn argmax_split(splits: &[usize], values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    splits[best]
}

/// Trial-averaged scaled curves on raw and projected versions of the same
/// sequences.
pub fn compare_projected_vs_original(
    scenario: &AttackScenario,
    trials: usize,
    projection: &ComparisonProjection,
    cfg: &ExperimentConfig,
) -> Result<CurveComparison> {
    if trials < 20 {
        return Err(Error::InvalidParameters(format!(
            "comparison needs at least 20 trials, got {trials}"
        )));
    }
    scenario.validate()?;
    let delta = cfg.detect.delta;
    let mode = cfg.detect.mean_mode;
    let per_trial: Vec<(Vec<f64>, Vec<f64>, Option<f64>)> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let seq = trial_sequence(scenario, cfg.snr, cfg.master_seed, i)?;
            let objects = ObjectSequence::from_graphs(&seq)?;
            let map = match projection {
                ComparisonProjection::Identity => JlMap::identity(objects.dim(), 0.5)?,
                ComparisonProjection::Gaussian(pc) => build_jl_map(
                    pc.k,
                    pc.epsilon,
                    &objects,
                    derive_seed(pc.seed, i as u64),
                    pc.max_retries,
                )?,
            };
            let raw = statistic_curve(&objects, delta, mode)?;
            let proj = statistic_curve(&project_objects(&objects, &map)?, delta, mode)?;
            let distortion = map.verification().map(|v| v.observed_distortion);
            Ok((raw.scaled, proj.scaled, distortion))
        })
        .collect::<Result<_>>()?;

    let splits: Vec<usize> = admissible_splits(scenario.n, delta).collect();
    let average = |curves: Vec<&Vec<f64>>| {
        let mut acc = vec![0.0; splits.len()];
        for c in curves {
            for (a, v) in acc.iter_mut().zip(c) {
                *a += v;
            }
        }
        acc.iter_mut().for_each(|a| *a /= trials as f64);
        acc
    };
    let mean_original = average(per_trial.iter().map(|t| &t.0).collect());
    let mean_projected = average(per_trial.iter().map(|t| &t.1).collect());
    let dominated = mean_projected
        .iter()
        .zip(&mean_original)
        .filter(|(p, o)| p >= o)
        .count();
    let max_observed_distortion = per_trial
        .iter()
        .filter_map(|t| t.2)
        .reduce(f64::max);
    Ok(CurveComparison {
        trials,
        projection: projection.clone(),
        fraction_projected_ge: dominated as f64 / splits.len() as f64,
        argmax_original: argmax_split(&splits, &mean_original),
        argmax_projected: argmax_split(&splits, &mean_projected),
        splits,
        mean_original,
        mean_projected,
        max_observed_distortion,
        scenario: scenario.clone(),
        config: cfg.clone(),
    })
}
