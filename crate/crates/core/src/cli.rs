//! Command-line front end.
//!
//! Exit codes: 0 success (or no attack), 1 attack detected, 2 usage or
//! parameter error, 3 data error, 4 degenerate statistic.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::detector::{
    detect_with_threshold, simulate_bridge_quantile, BridgeQuantileTable, DetectConfig,
    ProjectionConfig, QuantileCache, DEFAULT_ALPHA, DEFAULT_DELTA, DEFAULT_PATHS,
    DEFAULT_QUANTILE_SEED,
};
use crate::error::Error;
use crate::eval::{
    compare_projected_vs_original, run_calibration, run_labeled_trials, run_roc,
    ComparisonProjection, ExperimentConfig, RocCurve,
};
use crate::frechet::MeanMode;
use crate::graph::Snr;
use crate::io::{load_dataset, save_dataset, write_curve_csv, write_json};
use crate::projection::DEFAULT_MAX_RETRIES;
use crate::simulate::{apply_observation_noise, generate_sequence, AttackScenario};
use crate::rng::stream_rng;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ATTACK: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_DEGENERATE: i32 = 4;

pub const CACHE_ENV: &str = "ECLIPSEWATCH_CACHE_DIR";

#[derive(Parser, Debug)]
#[command(name = "eclipsewatch", version, about = "Eclipse-attack detection on graph sequences")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a sequence of neighbour graphs and write it as a dataset file.
    Simulate(SimulateArgs),
    /// Run the detector on a dataset file.
    Detect(DetectCmd),
    /// Print the Brownian-bridge threshold for a significance level.
    Quantile(QuantileArgs),
    /// Empirical false-alarm rate over simulated null sequences.
    Calibrate(CalibrateArgs),
    /// Accuracy and onset error over balanced null/attack trials.
    Evaluate(EvaluateArgs),
    /// ROC curves of the maximum statistic under observation noise.
    Roc(RocArgs),
    /// Trial-averaged statistic curves on raw and projected matrices.
    CompareStat(CompareArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Preset {
    PaperIv,
}

#[derive(Args, Debug, Clone)]
struct ScenarioArgs {
    /// Start from a named scenario; explicit flags override its fields.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Number of vertices.
    #[arg(long)]
    p: Option<usize>,
    /// Out-degree of every vertex.
    #[arg(long)]
    q: Option<usize>,
    /// Sequence length.
    #[arg(long)]
    n: Option<usize>,
    /// Rows of each adjacency matrix to keep (defaults to all).
    #[arg(long)]
    rows: Option<usize>,
    /// Comma-separated 0-based victim vertices.
    #[arg(long)]
    victims: Option<String>,
    /// Comma-separated 0-based attacker vertices.
    #[arg(long)]
    attackers: Option<String>,
    #[arg(long)]
    victim_prob: Option<f64>,
}

#[derive(Args, Debug, Clone)]
struct DetectArgs {
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    /// Project vectorized matrices to this dimension first.
    #[arg(long)]
    jl_dim: Option<usize>,
    /// Distortion tolerance the projection must satisfy.
    #[arg(long, default_value_t = 0.9)]
    epsilon: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_RETRIES)]
    max_retries: usize,
    #[arg(long, default_value_t = MeanMode::Euclidean)]
    mean_mode: MeanMode,
    #[arg(long, default_value_t = DEFAULT_PATHS)]
    quantile_paths: usize,
    /// Grid for the bridge simulation (defaults to the sequence length).
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_QUANTILE_SEED)]
    quantile_seed: u64,
}

impl DetectArgs {
    fn config(&self, jl_seed: u64) -> DetectConfig {
        DetectConfig {
            alpha: self.alpha,
            delta: self.delta,
            mean_mode: self.mean_mode,
            projection: self.jl_dim.map(|k| ProjectionConfig {
                k,
                epsilon: self.epsilon,
                seed: jl_seed,
                max_retries: self.max_retries,
            }),
            quantile_paths: self.quantile_paths,
            quantile_grid: self.grid,
            quantile_seed: self.quantile_seed,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct CacheArgs {
    /// Directory for cached quantile tables.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    no_cache: bool,
}

impl CacheArgs {
    fn cache(&self) -> Option<QuantileCache> {
        if self.no_cache {
            return None;
        }
        let dir = self
            .cache_dir
            .clone()
            .or_else(|| std::env::var_os(CACHE_ENV).map(PathBuf::from))
            .or_else(|| {
                std::env::var_os("HOME").map(|h| PathBuf::from(h).join(".cache").join("eclipsewatch"))
            })
            .unwrap_or_else(|| std::env::temp_dir().join("eclipsewatch-cache"));
        Some(QuantileCache::new(dir))
    }

    fn table(
        &self,
        alpha: f64,
        delta: f64,
        grid: usize,
        paths: usize,
        seed: u64,
    ) -> crate::Result<(BridgeQuantileTable, bool)> {
        match self.cache() {
            Some(c) => c.get_or_compute(alpha, delta, grid, paths, seed),
            None => Ok((simulate_bridge_quantile(alpha, delta, grid, paths, seed)?, false)),
        }
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Switch the attack on (requires --tau).
    #[arg(long)]
    attack: bool,
    /// 1-based index of the first attacked snapshot.
    #[arg(long)]
    tau: Option<usize>,
    /// Observation SNR ("inf" for none).
    #[arg(long, default_value = "inf")]
    snr: Snr,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DetectCmd {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    detect: DetectArgs,
    /// Seed of the random projection.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the statistic curve as CSV here.
    #[arg(long)]
    curve: Option<PathBuf>,
    #[command(flatten)]
    cache: CacheArgs,
}

#[derive(Args, Debug)]
struct QuantileArgs {
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    #[arg(long, default_value_t = 1000)]
    grid: usize,
    #[arg(long, default_value_t = DEFAULT_PATHS)]
    paths: usize,
    #[arg(long, default_value_t = DEFAULT_QUANTILE_SEED)]
    seed: u64,
    #[command(flatten)]
    cache: CacheArgs,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    detect: DetectArgs,
    /// Master seed; trial seeds are derived from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Base seed for per-trial projections.
    #[arg(long, default_value_t = 0)]
    jl_seed: u64,
}

impl ExperimentArgs {
    fn config(&self) -> ExperimentConfig {
        ExperimentConfig::new(self.detect.config(self.jl_seed), self.seed)
    }
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    #[arg(long, default_value_t = 500)]
    trials: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    /// Onset of attacked trials (defaults to the preset's or 0.6 n).
    #[arg(long)]
    tau: Option<usize>,
    /// Trials per class.
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RocArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    #[arg(long)]
    tau: Option<usize>,
    /// Comma-separated SNR values, e.g. inf,4,2.
    #[arg(long, default_value = "inf,4,2")]
    snr: String,
    /// Trials per class and SNR.
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Compare under the attack law instead of the null.
    #[arg(long)]
    attack: bool,
    #[arg(long)]
    tau: Option<usize>,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 100)]
    jl_dim: usize,
    #[arg(long, default_value_t = 0.9)]
    epsilon: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_RETRIES)]
    max_retries: usize,
    /// Use the identity map instead of a random projection.
    #[arg(long)]
    identity: bool,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    #[arg(long, default_value_t = MeanMode::Euclidean)]
    mean_mode: MeanMode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    jl_seed: u64,
    /// Paired curves as CSV (n, t, original, projected).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Lib(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Exit status for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::DegenerateVariance(_) => EXIT_DEGENERATE,
        Error::Io(_)
        | Error::Json(_)
        | Error::Parse { .. }
        | Error::DimensionMismatch { .. }
        | Error::InvalidMatrix(_)
        | Error::EmptySegment => EXIT_DATA,
        _ => EXIT_USAGE,
    }
}

fn parse_list(s: &str, what: &str) -> CliResult<Vec<usize>> {
    if s.trim() == "-" || s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("bad {what} index '{v}'")))
        })
        .collect()
}

fn build_scenario(a: &ScenarioArgs, attack: bool, tau: Option<usize>) -> CliResult<AttackScenario> {
    let mut sc = match a.preset {
        Some(Preset::PaperIv) => AttackScenario::paper_iv(false, 0),
        None => {
            let p = a.p.unwrap_or(100);
            let mut sc = AttackScenario::honest(p, a.q.unwrap_or(5), a.n.unwrap_or(1000), 0);
            sc.victims = vec![0];
            sc.attackers = if p >= 3 { vec![p - 2, p - 1] } else { Vec::new() };
            sc
        }
    };
    if let Some(p) = a.p {
        sc.p = p;
        if a.rows.is_none() && a.preset.is_none() {
            sc.rows_used = p;
        }
    }
    if let Some(q) = a.q {
        sc.q = q;
    }
    if let Some(n) = a.n {
        sc.n = n;
    }
    if let Some(r) = a.rows {
        sc.rows_used = r;
    }
    if let Some(v) = &a.victims {
        sc.victims = parse_list(v, "victim")?;
    }
    if let Some(v) = &a.attackers {
        sc.attackers = parse_list(v, "attacker")?;
    }
    if let Some(pr) = a.victim_prob {
        sc.victim_prob = pr;
    }
    sc.attack = attack;
    sc.tau = if attack {
        match tau {
            Some(t) => Some(t),
            None => return Err(CliError::Usage("--attack requires --tau".into())),
        }
    } else {
        if tau.is_some() {
            return Err(CliError::Usage("--tau is only valid with --attack".into()));
        }
        None
    };
    sc.validate()?;
    Ok(sc)
}

/// Attack scenario for experiments, defaulting the onset to 60% of n.
fn attack_scenario(a: &ScenarioArgs, tau: Option<usize>) -> CliResult<AttackScenario> {
    let n = a.n.unwrap_or(1000);
    let tau = tau.unwrap_or((n as f64 * 0.6).round() as usize);
    build_scenario(a, true, Some(tau))
}

fn parse_snr_list(s: &str) -> CliResult<Vec<Snr>> {
    s.split(',')
        .map(|v| {
            v.parse::<Snr>()
                .map_err(|_| CliError::Usage(format!("bad SNR '{v}'")))
        })
        .collect()
}

fn require_trials(trials: usize) -> CliResult<()> {
    if trials == 0 {
        return Err(CliError::Usage("--trials must be positive".into()));
    }
    Ok(())
}

fn cmd_simulate(a: &SimulateArgs) -> CliResult<i32> {
    let sc = build_scenario(&a.scenario, a.attack, a.tau)?.with_seed(a.seed);
    let mut seq = generate_sequence(&sc)?;
    if !a.snr.is_clean() {
        seq = apply_observation_noise(&seq, a.snr, &mut stream_rng(a.seed, 1))?;
    }
    save_dataset(&seq, &a.out)?;
    let onset = sc.tau.map_or("-".to_string(), |t| t.to_string());
    println!(
        "wrote {}: p={} q={} n={} rows_used={} attack={} tau={} snr={} seed={}",
        a.out.display(),
        sc.p,
        sc.q,
        sc.n,
        sc.rows_used,
        sc.attack,
        onset,
        a.snr,
        a.seed
    );
    Ok(EXIT_OK)
}

fn cmd_detect(a: &DetectCmd) -> CliResult<i32> {
    let seq = load_dataset(&a.input)?;
    let config = a.detect.config(a.seed);
    let (table, _) = a.cache.table(
        config.alpha,
        config.delta,
        config.grid_for(seq.len()),
        config.quantile_paths,
        config.quantile_seed,
    )?;
    let report = detect_with_threshold(&seq, &config, &table)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(path) = &a.out {
        write_json(&report, path)?;
    }
    if let Some(path) = &a.curve {
        write_curve_csv(&report.curve, path)?;
    }
    match report.tau_hat {
        Some(n) => {
            println!(
                "attack detected at n* = {n} (max T = {:.4} >= threshold {:.4})",
                report.max_scaled_stat, report.threshold
            );
            Ok(EXIT_ATTACK)
        }
        None => {
            println!(
                "no attack (max T = {:.4} < threshold {:.4})",
                report.max_scaled_stat, report.threshold
            );
            Ok(EXIT_OK)
        }
    }
}

fn cmd_quantile(a: &QuantileArgs) -> CliResult<i32> {
    let start = Instant::now();
    let (table, hit) = a.cache.table(a.alpha, a.delta, a.grid, a.paths, a.seed)?;
    println!("{}", table.quantile);
    eprintln!(
        "alpha={} delta={} grid={} paths={} seed={} ({}, {:.2?})",
        table.alpha,
        table.delta,
        table.grid_points,
        table.n_paths,
        table.seed,
        if hit { "cached" } else { "simulated" },
        start.elapsed()
    );
    Ok(EXIT_OK)
}

fn cmd_calibrate(a: &CalibrateArgs) -> CliResult<i32> {
    require_trials(a.trials)?;
    let sc = build_scenario(&a.exp.scenario, false, None)?;
    let cfg = a.exp.config();
    let r = run_calibration(&sc, a.trials, cfg.detect.alpha, &cfg)?;
    if let Some(path) = &a.out {
        write_json(&r, path)?;
    }
    println!(
        "false-alarm rate {:.4} ({}/{}), 95% CI [{:.4}, {:.4}], 99% band around alpha [{:.4}, {:.4}], threshold {:.4}",
        r.rate,
        r.rejections,
        r.trials,
        r.confidence_interval.0,
        r.confidence_interval.1,
        r.nominal_band.0,
        r.nominal_band.1,
        r.threshold
    );
    Ok(EXIT_OK)
}

fn cmd_evaluate(a: &EvaluateArgs) -> CliResult<i32> {
    require_trials(a.trials)?;
    let sc = attack_scenario(&a.exp.scenario, a.tau)?;
    let s = run_labeled_trials(&sc, a.trials, &a.exp.config())?;
    if let Some(path) = &a.out {
        write_json(&s, path)?;
    }
    let fmt = |v: Option<f64>| v.map_or("-".into(), |x| format!("{x:.4}"));
    println!(
        "accuracy {:.4} over {} trials (false alarms {}, detections {}), onset RMSE {}, median |error| {}",
        s.detection_accuracy,
        s.trials,
        fmt(s.false_alarm_rate),
        fmt(s.detection_rate),
        fmt(s.onset_rmse),
        fmt(s.median_abs_onset_error)
    );
    Ok(EXIT_OK)
}

pub fn roc_csv(curve: &RocCurve) -> String {
    let mut s = String::from("threshold,fpr,tpr\n");
    for p in &curve.points {
        let _ = writeln!(
            s,
            "{},{},{}",
            p.threshold, p.false_positive_rate, p.true_positive_rate
        );
    }
    s
}

fn cmd_roc(a: &RocArgs) -> CliResult<i32> {
    require_trials(a.trials)?;
    let snrs = parse_snr_list(&a.snr)?;
    let sc = attack_scenario(&a.exp.scenario, a.tau)?;
    let curves = run_roc(&sc, &snrs, a.trials, None, &a.exp.config())?;
    fs::create_dir_all(&a.out_dir).map_err(Error::from)?;
    for c in &curves {
        let path = a.out_dir.join(format!("roc-snr-{}.csv", c.snr));
        fs::write(&path, roc_csv(c)).map_err(Error::from)?;
        println!("snr {}: AUC {:.4} -> {}", c.snr, c.auc, path.display());
    }
    write_json(&curves, a.out_dir.join("roc-summary.json"))?;
    Ok(EXIT_OK)
}

fn cmd_compare(a: &CompareArgs) -> CliResult<i32> {
    if a.trials < 20 {
        return Err(CliError::Usage("--trials must be at least 20".into()));
    }
    let sc = if a.attack {
        attack_scenario(&a.scenario, a.tau)?
    } else {
        build_scenario(&a.scenario, false, a.tau)?
    };
    let projection = if a.identity {
        ComparisonProjection::Identity
    } else {
        ComparisonProjection::Gaussian(ProjectionConfig {
            k: a.jl_dim,
            epsilon: a.epsilon,
            seed: a.jl_seed,
            max_retries: a.max_retries,
        })
    };
    let detect = DetectConfig {
        delta: a.delta,
        mean_mode: a.mean_mode,
        ..DetectConfig::default()
    };
    let c = compare_projected_vs_original(
        &sc,
        a.trials,
        &projection,
        &ExperimentConfig::new(detect, a.seed),
    )?;
    if let Some(path) = &a.out {
        let mut s = String::from("n,t,original,projected\n");
        for ((n, o), p) in c.splits.iter().zip(&c.mean_original).zip(&c.mean_projected) {
            let _ = writeln!(s, "{n},{},{o},{p}", *n as f64 / sc.n as f64);
        }
        fs::write(path, s).map_err(Error::from)?;
    }
    if let Some(path) = &a.json {
        write_json(&c, path)?;
    }
    println!(
        "projected >= original at {:.1}% of splits; argmax original {} projected {}",
        100.0 * c.fraction_projected_ge,
        c.argmax_original,
        c.argmax_projected
    );
    Ok(EXIT_OK)
}

fn dispatch(cli: &Cli) -> CliResult<i32> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Detect(a) => cmd_detect(a),
        Command::Quantile(a) => cmd_quantile(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Roc(a) => cmd_roc(a),
        Command::CompareStat(a) => cmd_compare(a),
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Lib(e)) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(args: &[&str], attack: bool, tau: Option<usize>) -> CliResult<AttackScenario> {
        #[derive(Parser)]
        struct Wrap {
            #[command(flatten)]
            s: ScenarioArgs,
        }
        let w = Wrap::try_parse_from(std::iter::once("x").chain(args.iter().copied())).unwrap();
        build_scenario(&w.s, attack, tau)
    }

    #[test]
    fn preset_fills_reference_setup() {
        let sc = scenario(&["--preset", "paper-iv"], true, Some(600)).unwrap();
        assert_eq!((sc.p, sc.q, sc.n, sc.rows_used), (100, 5, 1000, 4));
        assert_eq!(sc.attackers, vec![98, 99]);
        let sc = scenario(&["--preset", "paper-iv", "--attackers", "96,97,98,99"], true, Some(600))
            .unwrap();
        assert_eq!(sc.attackers.len(), 4);
    }

    #[test]
    fn explicit_flags_default_to_full_rows() {
        let sc = scenario(&["--p", "20", "--q", "3", "--n", "200"], false, None).unwrap();
        assert_eq!((sc.p, sc.rows_used), (20, 20));
        assert_eq!((sc.victims.clone(), sc.attackers.clone()), (vec![0], vec![18, 19]));
    }

    #[test]
    fn attack_needs_tau() {
        assert!(matches!(scenario(&[], true, None), Err(CliError::Usage(_))));
        assert!(matches!(scenario(&[], false, Some(600)), Err(CliError::Usage(_))));
    }

    #[test]
    fn exit_codes_by_error_kind() {
        assert_eq!(exit_code(&Error::DegenerateVariance(0.0)), EXIT_DEGENERATE);
        assert_eq!(
            exit_code(&Error::Parse { line: 1, message: String::new() }),
            EXIT_DATA
        );
        assert_eq!(exit_code(&Error::InvalidEpsilon(2.0)), EXIT_USAGE);
    }
}
