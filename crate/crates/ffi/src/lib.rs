//! C ABI for the eclipsewatch detector.
//!
//! Sequences and reports are opaque handles owned by the caller and released
//! with their `_free` function. Every function returns an [`EwStatus`]
//! (or a plain value for infallible accessors); on failure the message is
//! available from [`ew_last_error_message`] on the same thread. Panics never
//! cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use eclipsewatch::detector::{detect, DetectConfig, DetectionReport, ProjectionConfig};
use eclipsewatch::graph::{frobenius_distance, AdjacencyMatrix, GraphSequence, Snr};
use eclipsewatch::io::{load_dataset, save_dataset, to_json};
use eclipsewatch::rng::stream_rng;
use eclipsewatch::simulate::{apply_observation_noise, generate_sequence, AttackScenario};
use eclipsewatch::{simulate_bridge_quantile, Error, MeanMode};

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EwStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DataError = 3,
    DegenerateVariance = 4,
    ProjectionFailed = 5,
    IoError = 6,
    Panic = 99,
}

/// Mean used by the statistic.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EwMeanMode {
    Euclidean = 0,
    SampleRestricted = 1,
}

/// Detector settings. Start from [`ew_detect_config_default`].
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct EwDetectConfig {
    pub alpha: f64,
    pub delta: f64,
    pub mean_mode: EwMeanMode,
    /// Projection dimension; 0 disables the projection.
    pub jl_dim: usize,
    pub epsilon: f64,
    pub jl_seed: u64,
    pub max_retries: usize,
    pub quantile_paths: usize,
    /// Bridge grid; 0 uses the sequence length.
    pub quantile_grid: usize,
    pub quantile_seed: u64,
}

/// Opaque graph sequence.
pub struct EwSequence(GraphSequence);

/// Opaque detection report.
pub struct EwReport(DetectionReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> EwStatus {
    match e {
        Error::DegenerateVariance(_) => EwStatus::DegenerateVariance,
        Error::DistortionNotAchieved { .. } => EwStatus::ProjectionFailed,
        Error::Io(_) => EwStatus::IoError,
        Error::Parse { .. }
        | Error::Json(_)
        | Error::DimensionMismatch { .. }
        | Error::InvalidMatrix(_)
        | Error::EmptySegment => EwStatus::DataError,
        _ => EwStatus::InvalidArgument,
    }
}

enum Failure {
    Null(&'static str),
    Arg(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> EwStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EwStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            EwStatus::NullPointer
        }
        Ok(Err(Failure::Arg(msg))) => {
            set_error(msg);
            EwStatus::InvalidArgument
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            EwStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn path<'a>(p: *const c_char) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Arg("path is not valid UTF-8".into()))
}

fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null("out"));
    }
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

/// Message for the last failed call on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ew_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ew_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

/// Simulates a sequence. `tau` is the 1-based first attacked snapshot and is
/// ignored when `attack` is false. Victim and attacker arrays may be NULL
/// when their length is 0.
///
/// # Safety
/// Array pointers must be valid for their lengths; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ew_simulate(
    p: usize,
    q: usize,
    n: usize,
    rows_used: usize,
    attack: bool,
    tau: usize,
    victims: *const usize,
    n_victims: usize,
    attackers: *const usize,
    n_attackers: usize,
    seed: u64,
    out: *mut *mut EwSequence,
) -> EwStatus {
    guard(|| {
        let mut sc = AttackScenario::honest(p, q, n, seed);
        sc.rows_used = rows_used;
        sc.attack = attack;
        sc.tau = attack.then_some(tau);
        sc.victims = slice(victims, n_victims, "victims")?.to_vec();
        sc.attackers = slice(attackers, n_attackers, "attackers")?.to_vec();
        put(out, EwSequence(generate_sequence(&sc)?))
    })
}

/// Simulates the 100-vertex, 4-row, 1000-snapshot preset (onset 600).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ew_simulate_paper_iv(
    attack: bool,
    seed: u64,
    out: *mut *mut EwSequence,
) -> EwStatus {
    guard(|| put(out, EwSequence(generate_sequence(&AttackScenario::paper_iv(attack, seed))?)))
}

/// Builds a sequence from `n` row-major `rows_used x p` 0/1 matrices laid
/// out back to back.
///
/// # Safety
/// `entries` must hold `n * rows_used * p` bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ew_sequence_from_entries(
    n: usize,
    rows_used: usize,
    p: usize,
    q: usize,
    entries: *const u8,
    out: *mut *mut EwSequence,
) -> EwStatus {
    guard(|| {
        let width = rows_used
            .checked_mul(p)
            .filter(|w| *w > 0)
            .ok_or_else(|| Failure::Arg("empty matrix shape".into()))?;
        let total = n
            .checked_mul(width)
            .ok_or_else(|| Failure::Arg("shape overflows".into()))?;
        let data = slice(entries, total, "entries")?;
        let snaps = data
            .chunks(width)
            .map(|c| AdjacencyMatrix::from_entries(rows_used, p, c.to_vec()))
            .collect::<Result<Vec<_>, _>>()?;
        put(out, EwSequence(GraphSequence::new(snaps, q, None, None)?))
    })
}

/// Reads a dataset file.
///
/// # Safety
/// `file` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ew_sequence_load(file: *const c_char, out: *mut *mut EwSequence) -> EwStatus {
    guard(|| put(out, EwSequence(load_dataset(path(file)?)?)))
}

/// Writes a dataset file.
///
/// # Safety
/// `seq` must come from this library; `file` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ew_sequence_save(seq: *const EwSequence, file: *const c_char) -> EwStatus {
    guard(|| Ok(save_dataset(&deref(seq, "seq")?.0, path(file)?)?))
}

/// Returns a noisy copy; `snr` of +infinity returns an identical copy.
///
/// # Safety
/// `seq` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ew_sequence_apply_noise(
    seq: *const EwSequence,
    snr: f64,
    seed: u64,
    out: *mut *mut EwSequence,
) -> EwStatus {
    guard(|| {
        let seq = &deref(seq, "seq")?.0;
        let snr = if snr.is_infinite() && snr > 0.0 { Snr::CLEAN } else { Snr::new(snr)? };
        put(out, EwSequence(apply_observation_noise(seq, snr, &mut stream_rng(seed, 1))?))
    })
}

/// Number of snapshots, or 0 for NULL.
///
/// # Safety
/// `seq` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn ew_sequence_len(seq: *const EwSequence) -> usize {
    seq.as_ref().map_or(0, |s| s.0.len())
}

/// Entries per snapshot (`rows_used * p`), or 0 for NULL.
///
/// # Safety
/// `seq` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn ew_sequence_dim(seq: *const EwSequence) -> usize {
    seq.as_ref().map_or(0, |s| s.0.dim())
}

/// # Safety
/// `seq` must be NULL or come from this library, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ew_sequence_free(seq: *mut EwSequence) {
    if !seq.is_null() {
        drop(Box::from_raw(seq));
    }
}

#[no_mangle]
pub extern "C" fn ew_detect_config_default() -> EwDetectConfig {
    let d = DetectConfig::default();
    EwDetectConfig {
        alpha: d.alpha,
        delta: d.delta,
        mean_mode: EwMeanMode::Euclidean,
        jl_dim: 0,
        epsilon: 0.9,
        jl_seed: 0,
        max_retries: eclipsewatch::projection::DEFAULT_MAX_RETRIES,
        quantile_paths: d.quantile_paths,
        quantile_grid: 0,
        quantile_seed: d.quantile_seed,
    }
}

fn to_config(c: &EwDetectConfig) -> DetectConfig {
    DetectConfig {
        alpha: c.alpha,
        delta: c.delta,
        mean_mode: match c.mean_mode {
            EwMeanMode::Euclidean => MeanMode::Euclidean,
            EwMeanMode::SampleRestricted => MeanMode::SampleRestricted,
        },
        projection: (c.jl_dim > 0).then_some(ProjectionConfig {
            k: c.jl_dim,
            epsilon: c.epsilon,
            seed: c.jl_seed,
            max_retries: c.max_retries,
        }),
        quantile_paths: c.quantile_paths,
        quantile_grid: (c.quantile_grid > 0).then_some(c.quantile_grid),
        quantile_seed: c.quantile_seed,
    }
}

/// Runs the detector. `config` may be NULL for defaults.
///
/// # Safety
/// `seq` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ew_detect(
    seq: *const EwSequence,
    config: *const EwDetectConfig,
    out: *mut *mut EwReport,
) -> EwStatus {
    guard(|| {
        let seq = &deref(seq, "seq")?.0;
        let cfg = config
            .as_ref()
            .copied()
            .unwrap_or_else(|| ew_detect_config_default());
        put(out, EwReport(detect(seq, &to_config(&cfg))?))
    })
}

/// # Safety
/// `report` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn ew_report_detected(report: *const EwReport) -> bool {
    report.as_ref().is_some_and(|r| r.0.detected)
}

/// Writes the estimated onset and returns true when an attack was detected.
///
/// # Safety
/// `report` must be NULL or come from this library; `out` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn ew_report_tau_hat(report: *const EwReport, out: *mut usize) -> bool {
    match (report.as_ref().and_then(|r| r.0.tau_hat), out.is_null()) {
        (Some(t), false) => {
            *out = t;
            true
        }
        (Some(_), true) => true,
        (None, _) => false,
    }
}

/// Maximum scaled statistic, NaN for NULL.
///
/// # Safety
/// `report` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn ew_report_max_stat(report: *const EwReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.0.max_scaled_stat)
}

/// Threshold used, NaN for NULL.
///
/// # Safety
/// `report` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn ew_report_threshold(report: *const EwReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.0.threshold)
}

/// Number of admissible splits in the curve, 0 for NULL.
///
/// # Safety
/// `report` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn ew_report_curve_len(report: *const EwReport) -> usize {
    report.as_ref().map_or(0, |r| r.0.curve.len())
}

/// Copies splits and scaled statistics into caller buffers of length `cap`,
/// which must be at least [`ew_report_curve_len`].
///
/// # Safety
/// Buffers must be writable for `cap` elements.
#[no_mangle]
pub unsafe extern "C" fn ew_report_curve(
    report: *const EwReport,
    splits: *mut usize,
    scaled: *mut f64,
    cap: usize,
) -> EwStatus {
    guard(|| {
        let c = &deref(report, "report")?.0.curve;
        if cap < c.len() {
            return Err(Failure::Arg(format!("buffer holds {cap}, curve has {}", c.len())));
        }
        if splits.is_null() || scaled.is_null() {
            return Err(Failure::Null("curve buffer"));
        }
        ptr::copy_nonoverlapping(c.splits.as_ptr(), splits, c.len());
        ptr::copy_nonoverlapping(c.scaled.as_ptr(), scaled, c.len());
        Ok(())
    })
}

/// Full report as JSON. Release with [`ew_string_free`].
///
/// # Safety
/// `report` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ew_report_to_json(report: *const EwReport, out: *mut *mut c_char) -> EwStatus {
    guard(|| {
        let json = to_json(&deref(report, "report")?.0)?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        *out = CString::new(json)
            .map_err(|_| Failure::Arg("report contains NUL".into()))?
            .into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be NULL or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn ew_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `report` must be NULL or come from this library, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ew_report_free(report: *mut EwReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// `(1 - alpha)` quantile of the squared standardized bridge maximum.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ew_bridge_quantile(
    alpha: f64,
    delta: f64,
    grid: usize,
    paths: usize,
    seed: u64,
    out: *mut f64,
) -> EwStatus {
    guard(|| {
        let q = simulate_bridge_quantile(alpha, delta, grid, paths, seed)?.quantile;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        *out = q;
        Ok(())
    })
}

/// Frobenius distance between two row-major `rows x p` 0/1 matrices.
///
/// # Safety
/// `a` and `b` must hold `rows * p` bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ew_frobenius_distance(
    a: *const u8,
    b: *const u8,
    rows: usize,
    p: usize,
    out: *mut f64,
) -> EwStatus {
    guard(|| {
        let len = rows
            .checked_mul(p)
            .ok_or_else(|| Failure::Arg("shape overflows".into()))?;
        let a = AdjacencyMatrix::from_entries(rows, p, slice(a, len, "a")?.to_vec())?;
        let b = AdjacencyMatrix::from_entries(rows, p, slice(b, len, "b")?.to_vec())?;
        let d = frobenius_distance(&a, &b)?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        *out = d;
        Ok(())
    })
}
