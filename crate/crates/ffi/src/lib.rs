//! C ABI over the noisegate simulator.
//!
//! Every fallible call returns an [`NgStatus`] and writes its result through an
//! out-pointer. On failure the message is kept per thread and can be read with
//! [`ng_last_error_message`]. Handles are opaque and must be released with the
//! matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use noisegate::coincidence::{cross_correlation, CountSummary};
use noisegate::harness::{self, ExperimentConfig, PhasematchFile};
use noisegate::spectral::{self, JsaGrid};
use noisegate::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Domain = 3,
    Contract = 4,
    Undefined = 5,
    Truncation = 6,
    Parse = 7,
    Calibration = 8,
    Io = 9,
    Json = 10,
    Panic = 11,
}

/// Experiment configuration handle.
pub struct NgExperiment {
    config: ExperimentConfig,
}

/// Joint spectral amplitude handle.
pub struct NgJsa {
    grid: JsaGrid,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NgCountSummary {
    pub n_signal: f64,
    pub n_idler: f64,
    pub n_coincidence: f64,
    pub duration: f64,
    pub rep_rate: f64,
    pub signal_counts: u64,
    pub idler_counts: u64,
    pub coincidence_counts: u64,
}

/// Analytic rates per second, idler dead time included.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NgExpectation {
    pub n_signal: f64,
    pub n_idler_off: f64,
    pub n_idler_on: f64,
    pub n_coincidence_off: f64,
    pub n_coincidence_on: f64,
    pub rep_rate: f64,
}

impl From<CountSummary> for NgCountSummary {
    fn from(s: CountSummary) -> Self {
        Self {
            n_signal: s.n_signal,
            n_idler: s.n_idler,
            n_coincidence: s.n_coincidence,
            duration: s.duration,
            rep_rate: s.rep_rate,
            signal_counts: s.signal_counts,
            idler_counts: s.idler_counts,
            coincidence_counts: s.coincidence_counts,
        }
    }
}

impl From<&NgCountSummary> for CountSummary {
    fn from(s: &NgCountSummary) -> Self {
        CountSummary {
            n_signal: s.n_signal,
            n_idler: s.n_idler,
            n_coincidence: s.n_coincidence,
            duration: s.duration,
            rep_rate: s.rep_rate,
            signal_counts: s.signal_counts,
            idler_counts: s.idler_counts,
            coincidence_counts: s.coincidence_counts,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(error: &Error) -> NgStatus {
    match error {
        Error::Domain(_) => NgStatus::Domain,
        Error::Contract(_) => NgStatus::Contract,
        Error::Undefined(_) => NgStatus::Undefined,
        Error::Truncation { .. } => NgStatus::Truncation,
        Error::Parse { .. } => NgStatus::Parse,
        Error::Calibration(_) => NgStatus::Calibration,
        Error::Io { .. } => NgStatus::Io,
        Error::Json(_) => NgStatus::Json,
    }
}

struct Failure(NgStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> NgStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => NgStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(_) => {
            set_last_error("internal panic".to_string());
            NgStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(NgStatus::NullPointer, format!("{what} is null"))
}

unsafe fn out_ref<'a, T>(ptr: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    ptr.as_mut().ok_or_else(|| null(what))
}

unsafe fn path_arg<'a>(ptr: *const c_char) -> Result<&'a Path, Failure> {
    if ptr.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map(Path::new)
        .map_err(|_| Failure(NgStatus::InvalidUtf8, "path is not valid UTF-8".to_string()))
}

/// Message of the last failed call on this thread, or null if none. Valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ng_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Static name of a status code.
#[no_mangle]
pub extern "C" fn ng_status_string(status: NgStatus) -> *const c_char {
    let s: &'static CStr = match status {
        NgStatus::Ok => c"ok",
        NgStatus::NullPointer => c"null pointer",
        NgStatus::InvalidUtf8 => c"invalid UTF-8",
        NgStatus::Domain => c"domain error",
        NgStatus::Contract => c"contract violation",
        NgStatus::Undefined => c"undefined value",
        NgStatus::Truncation => c"truncation",
        NgStatus::Parse => c"parse error",
        NgStatus::Calibration => c"calibration failed",
        NgStatus::Io => c"I/O error",
        NgStatus::Json => c"JSON error",
        NgStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}

/// # Safety
/// `out` must be a valid pointer to writable storage for one handle pointer.
#[no_mangle]
pub unsafe extern "C" fn ng_experiment_new_default(out: *mut *mut NgExperiment) -> NgStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = Box::into_raw(Box::new(NgExperiment {
            config: ExperimentConfig::default(),
        }));
        Ok(())
    })
}

/// Loads a `key = value` experiment config.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ng_experiment_load(path: *const c_char, out: *mut *mut NgExperiment) -> NgStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let config = ExperimentConfig::load(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(NgExperiment { config }));
        Ok(())
    })
}

/// # Safety
/// `experiment` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn ng_experiment_free(experiment: *mut NgExperiment) {
    if !experiment.is_null() {
        drop(Box::from_raw(experiment));
    }
}

unsafe fn with_experiment(
    experiment: *mut NgExperiment,
    f: impl FnOnce(&mut ExperimentConfig) -> Result<(), Failure>,
) -> NgStatus {
    guard(|| f(&mut out_ref(experiment, "experiment")?.config))
}

/// # Safety
/// `experiment` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ng_experiment_set_pump_power(experiment: *mut NgExperiment, power_mw: f64) -> NgStatus {
    with_experiment(experiment, |c| {
        let mut next = c.clone();
        next.source.pump_power_mw = power_mw;
        next.validate()?;
        *c = next;
        Ok(())
    })
}

/// # Safety
/// `experiment` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ng_experiment_set_seed(experiment: *mut NgExperiment, seed: u64) -> NgStatus {
    with_experiment(experiment, |c| {
        c.seed = seed;
        Ok(())
    })
}

/// Simulated time in seconds.
///
/// # Safety
/// `experiment` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ng_experiment_set_duration(experiment: *mut NgExperiment, duration_s: f64) -> NgStatus {
    with_experiment(experiment, |c| {
        let mut next = c.clone();
        next.duration = duration_s;
        next.validate()?;
        *c = next;
        Ok(())
    })
}

/// Rescales the herald-path transmission so the total signal efficiency is `eta`.
///
/// # Safety
/// `experiment` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ng_experiment_set_eta_signal_total(experiment: *mut NgExperiment, eta: f64) -> NgStatus {
    with_experiment(experiment, |c| {
        let mut next = c.clone();
        next.set_eta_signal_total(eta);
        next.validate()?;
        *c = next;
        Ok(())
    })
}

/// Rescales the idler-path transmission so the total idler efficiency is `eta`.
///
/// # Safety
/// `experiment` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ng_experiment_set_eta_idler_total(experiment: *mut NgExperiment, eta: f64) -> NgStatus {
    with_experiment(experiment, |c| {
        let mut next = c.clone();
        next.set_eta_idler_total(eta);
        next.validate()?;
        *c = next;
        Ok(())
    })
}

/// One Monte Carlo run with the gate on (`gate_enabled` true) or off.
///
/// # Safety
/// `experiment` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ng_run(experiment: *const NgExperiment, gate_enabled: bool, out: *mut NgCountSummary) -> NgStatus {
    guard(|| {
        let exp = experiment.as_ref().ok_or_else(|| null("experiment"))?;
        let out = out_ref(out, "out")?;
        *out = harness::run(&exp.config, gate_enabled)?.into();
        Ok(())
    })
}

/// Analytic expected rates, idler dead time included.
///
/// # Safety
/// `experiment` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ng_expectations(experiment: *const NgExperiment, out: *mut NgExpectation) -> NgStatus {
    guard(|| {
        let exp = experiment.as_ref().ok_or_else(|| null("experiment"))?;
        let out = out_ref(out, "out")?;
        let e = harness::expectations(&exp.config)?.with_dead_time(&exp.config);
        *out = NgExpectation {
            n_signal: e.n_signal,
            n_idler_off: e.n_idler_off,
            n_idler_on: e.n_idler_on,
            n_coincidence_off: e.n_coincidence_off,
            n_coincidence_on: e.n_coincidence_on,
            rep_rate: e.rep_rate,
        };
        Ok(())
    })
}

/// g = N_si R_p / (N_s N_i).
///
/// # Safety
/// `summary` must be readable; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ng_cross_correlation(summary: *const NgCountSummary, out: *mut f64) -> NgStatus {
    guard(|| {
        let s = summary.as_ref().ok_or_else(|| null("summary"))?;
        *out_ref(out, "out")? = cross_correlation(&s.into())?;
        Ok(())
    })
}

/// Single-mode thermal probability of `n` pairs at mean `mu`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ng_thermal_pmf(mu: f64, n: i64, out: *mut f64) -> NgStatus {
    guard(|| {
        *out_ref(out, "out")? = noisegate::pair_source::thermal_pmf(mu, n)?;
        Ok(())
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ng_purity_from_g2(g2: f64, out: *mut f64) -> NgStatus {
    guard(|| {
        *out_ref(out, "out")? = spectral::purity_from_g2(g2)?;
        Ok(())
    })
}

/// Reads a grid in the JSA text format.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ng_jsa_load(path: *const c_char, out: *mut *mut NgJsa) -> NgStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let grid = spectral::read_jsa(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(NgJsa { grid }));
        Ok(())
    })
}

/// Builds the grid described by a phase-matching config file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ng_jsa_from_phasematch(path: *const c_char, out: *mut *mut NgJsa) -> NgStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let file = PhasematchFile::load(path_arg(path)?)?;
        let grid = spectral::build_jsa(&file.config, &file.axes()?)?;
        *out = Box::into_raw(Box::new(NgJsa { grid }));
        Ok(())
    })
}

/// Purity sum(lambda_n^2) of the Schmidt spectrum.
///
/// # Safety
/// `jsa` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ng_jsa_purity(jsa: *const NgJsa, out: *mut f64) -> NgStatus {
    guard(|| {
        let jsa = jsa.as_ref().ok_or_else(|| null("jsa"))?;
        let lambdas = spectral::schmidt_decompose(&jsa.grid)?;
        *out_ref(out, "out")? = spectral::purity(&lambdas)?;
        Ok(())
    })
}

/// # Safety
/// `jsa` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn ng_jsa_free(jsa: *mut NgJsa) {
    if !jsa.is_null() {
        drop(Box::from_raw(jsa));
    }
}
