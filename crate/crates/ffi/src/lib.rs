//! C ABI over the active-recon toolkit.
//!
//! Every fallible call returns an [`ArStatus`]; on failure a message is kept
//! per thread and read back with [`ar_last_error`]. Objects cross the boundary
//! as opaque handles that the caller releases with the matching `_free`.
//! Strings returned to the caller are released with [`ar_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::BufReader;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use active_recon::coverage::{coverage_map, CoverageLabel, CoverageMap, CoverageSummary};
use active_recon::fusion::{confidence, FusedSurface};
use active_recon::geometry::{CameraJson, CameraModel};
use active_recon::sim::{self, LoopState, SceneSpec, Termination};
use active_recon::{Config, Error};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Geometry = 5,
    Solve = 6,
    Coverage = 7,
    Planning = 8,
    Evaluation = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArTermination {
    FullyCovered = 0,
    NoReachableNbv = 1,
    MaxIterations = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArLabel {
    Covered = 0,
    Uncovered = 1,
    Ignored = 2,
}

/// Label counts; `fraction` is NaN when nothing is covered or uncovered.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArCoverageSummary {
    pub covered: usize,
    pub uncovered: usize,
    pub ignored: usize,
    pub fraction: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArIsoPoint {
    pub position: [f64; 3],
    pub normal: [f64; 3],
    pub signal: f64,
    pub label: ArLabel,
    pub good_views: usize,
}

/// Loop parameters.
pub struct ArConfig(Config);

/// Result of a closed-loop run.
pub struct ArSimulation(LoopState);

/// Fused triangle soup.
pub struct ArSurface(FusedSurface);

/// Labeled iso-points.
pub struct ArCoverage(CoverageMap);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> ArStatus {
    match err {
        Error::Geometry(_) => ArStatus::Geometry,
        Error::Solve(_) => ArStatus::Solve,
        Error::Coverage(_) => ArStatus::Coverage,
        Error::Planning(_) => ArStatus::Planning,
        Error::Eval(_) => ArStatus::Evaluation,
        Error::Stage { source, .. } => status_of(source),
        Error::Invalid(_) => ArStatus::InvalidArgument,
        Error::Io(_) => ArStatus::Io,
        Error::Json(_) => ArStatus::Parse,
    }
}

struct Failure(ArStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

type FfiResult<T = ()> = Result<T, Failure>;

/// Runs `f`, records any failure or panic, and maps it to a status.
fn guard(f: impl FnOnce() -> FfiResult) -> ArStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            clear_error();
            ArStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            ArStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(ArStatus::NullPointer, format!("{what} is null"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> FfiResult<&'a T> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &str) -> FfiResult<&'a mut T> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(ArStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> FfiResult {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> FfiResult {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    let c = CString::new(s).map_err(|_| Failure(ArStatus::InvalidArgument, "string contains NUL".into()))?;
    *out = c.into_raw();
    Ok(())
}

fn parse_error(e: serde_json::Error) -> Failure {
    Failure(ArStatus::Parse, e.to_string())
}

fn summary(s: &CoverageSummary) -> ArCoverageSummary {
    ArCoverageSummary {
        covered: s.covered,
        uncovered: s.uncovered,
        ignored: s.ignored,
        fraction: s.fraction.unwrap_or(f64::NAN),
    }
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn ar_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ar_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn ar_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Γ for the given mean errors and scales.
#[no_mangle]
pub extern "C" fn ar_confidence(e_p: f64, e_n: f64, e_v: f64, sigma_p: f64, sigma_n: f64, sigma_v: f64) -> f64 {
    confidence(e_p, e_n, e_v, sigma_p, sigma_n, sigma_v)
}

// ---- config

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ar_config_new(out: *mut *mut ArConfig) -> ArStatus {
    guard(|| put(out, ArConfig(Config::default())))
}

/// Config from JSON; missing fields take defaults.
///
/// # Safety
/// `json` must be a NUL-terminated string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ar_config_from_json(json: *const c_char, out: *mut *mut ArConfig) -> ArStatus {
    guard(|| {
        let cfg: Config = serde_json::from_str(read_str(json, "json")?).map_err(parse_error)?;
        put(out, ArConfig(cfg))
    })
}

/// # Safety
/// `cfg` must be a live handle, `out` writable. Free the string with
/// [`ar_string_free`].
#[no_mangle]
pub unsafe extern "C" fn ar_config_to_json(cfg: *const ArConfig, out: *mut *mut c_char) -> ArStatus {
    guard(|| put_string(out, active_recon::config::to_json(&deref(cfg, "config")?.0)))
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ar_config_set_seed(cfg: *mut ArConfig, seed: u64) -> ArStatus {
    guard(|| {
        deref_mut(cfg, "config")?.0.seed = seed;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ar_config_set_max_iterations(cfg: *mut ArConfig, n: usize) -> ArStatus {
    guard(|| {
        deref_mut(cfg, "config")?.0.max_iterations = n;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ar_config_free(cfg: *mut ArConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

// ---- closed loop

/// Runs the capture loop from the configured orbit. `scene_json` may be null
/// for the built-in box-with-overhang scene.
///
/// # Safety
/// `cfg` must be a live handle, `scene_json` null or NUL-terminated, `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn ar_simulate(
    cfg: *const ArConfig,
    scene_json: *const c_char,
    out: *mut *mut ArSimulation,
) -> ArStatus {
    guard(|| {
        let params = &deref(cfg, "config")?.0;
        let spec: SceneSpec = if scene_json.is_null() {
            SceneSpec::box_with_overhang()
        } else {
            serde_json::from_str(read_str(scene_json, "scene_json")?).map_err(parse_error)?
        };
        let initial = sim::rectangular_orbit(&params.orbit, params.camera.intrinsics());
        let state = sim::run_loop(&spec, initial, params)?;
        put(out, ArSimulation(state))
    })
}

/// Number of recorded iterations (the initial orbit counts as one).
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ar_simulation_iteration_count(sim: *const ArSimulation) -> usize {
    sim.as_ref().map_or(0, |s| s.0.iterations.len())
}

/// # Safety
/// `sim` must be a live handle, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ar_simulation_summary(
    sim: *const ArSimulation,
    iteration: usize,
    out: *mut ArCoverageSummary,
) -> ArStatus {
    guard(|| {
        let state = &deref(sim, "simulation")?.0;
        let record = state
            .iterations
            .get(iteration)
            .ok_or_else(|| Failure(ArStatus::InvalidArgument, format!("iteration {iteration} out of range")))?;
        *deref_mut(out, "out")? = summary(&record.summary());
        Ok(())
    })
}

/// Pitch of the plane chosen after `iteration`, degrees; NaN when none was.
///
/// # Safety
/// `sim` must be a live handle, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ar_simulation_selected_pitch(
    sim: *const ArSimulation,
    iteration: usize,
    out: *mut f64,
) -> ArStatus {
    guard(|| {
        let state = &deref(sim, "simulation")?.0;
        let record = state
            .iterations
            .get(iteration)
            .ok_or_else(|| Failure(ArStatus::InvalidArgument, format!("iteration {iteration} out of range")))?;
        *deref_mut(out, "out")? = record.selected_pitch().unwrap_or(f64::NAN);
        Ok(())
    })
}

/// # Safety
/// `sim` must be a live handle, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ar_simulation_termination(sim: *const ArSimulation, out: *mut ArTermination) -> ArStatus {
    guard(|| {
        let t = match deref(sim, "simulation")?.0.termination {
            Termination::FullyCovered => ArTermination::FullyCovered,
            Termination::NoReachableNbv => ArTermination::NoReachableNbv,
            Termination::MaxIterations => ArTermination::MaxIterations,
        };
        *deref_mut(out, "out")? = t;
        Ok(())
    })
}

/// Per-iteration metrics as JSON. Free with [`ar_string_free`].
///
/// # Safety
/// `sim` must be a live handle, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ar_simulation_metrics_json(sim: *const ArSimulation, out: *mut *mut c_char) -> ArStatus {
    guard(|| {
        let value = deref(sim, "simulation")?.0.metrics_json();
        put_string(out, serde_json::to_string_pretty(&value).map_err(Error::from)?)
    })
}

/// Writes all iteration outputs under `dir`.
///
/// # Safety
/// `sim` must be a live handle, `dir` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ar_simulation_write(sim: *const ArSimulation, dir: *const c_char) -> ArStatus {
    guard(|| {
        let state = &deref(sim, "simulation")?.0;
        Ok(sim::write_state(state, Path::new(read_str(dir, "dir")?))?)
    })
}

/// Copy of the fused surface after `iteration`.
///
/// # Safety
/// `sim` must be a live handle, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ar_simulation_surface(
    sim: *const ArSimulation,
    iteration: usize,
    out: *mut *mut ArSurface,
) -> ArStatus {
    guard(|| {
        let state = &deref(sim, "simulation")?.0;
        let record = state
            .iterations
            .get(iteration)
            .ok_or_else(|| Failure(ArStatus::InvalidArgument, format!("iteration {iteration} out of range")))?;
        put(out, ArSurface(record.surface.clone()))
    })
}

/// # Safety
/// `sim` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ar_simulation_free(sim: *mut ArSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

// ---- surfaces and coverage

/// Reads a fused surface PLY (ASCII or binary).
///
/// # Safety
/// `path` must be NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ar_surface_read_ply(path: *const c_char, out: *mut *mut ArSurface) -> ArStatus {
    guard(|| {
        let path = read_str(path, "path")?;
        let file = File::open(path).map_err(|e| Failure(ArStatus::Io, format!("{path}: {e}")))?;
        let surface = FusedSurface::read_ply(BufReader::new(file))
            .map_err(|e| Failure(ArStatus::Parse, format!("{path}: {e}")))?;
        put(out, ArSurface(surface))
    })
}

/// # Safety
/// `surface` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ar_surface_triangle_count(surface: *const ArSurface) -> usize {
    surface.as_ref().map_or(0, |s| s.0.len())
}

/// # Safety
/// `surface` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ar_surface_free(surface: *mut ArSurface) {
    if !surface.is_null() {
        drop(Box::from_raw(surface));
    }
}

/// Samples and labels `surface` against cameras given as a JSON array of
/// camera records, using the config's coverage parameters.
///
/// # Safety
/// Handles must be live, `cameras_json` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ar_coverage_compute(
    surface: *const ArSurface,
    cameras_json: *const c_char,
    cfg: *const ArConfig,
    out: *mut *mut ArCoverage,
) -> ArStatus {
    guard(|| {
        let surface = &deref(surface, "surface")?.0;
        let params = &deref(cfg, "config")?.0;
        let records: Vec<CameraJson> =
            serde_json::from_str(read_str(cameras_json, "cameras_json")?).map_err(parse_error)?;
        let cameras = records.iter().map(CameraModel::try_from).collect::<Result<Vec<_>, _>>().map_err(Error::from)?;
        let map = coverage_map(surface, &cameras, &params.coverage).map_err(Error::from)?;
        put(out, ArCoverage(map))
    })
}

/// # Safety
/// `coverage` must be a live handle, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ar_coverage_summary(coverage: *const ArCoverage, out: *mut ArCoverageSummary) -> ArStatus {
    guard(|| {
        let s = summary(&deref(coverage, "coverage")?.0.summary);
        *deref_mut(out, "out")? = s;
        Ok(())
    })
}

/// # Safety
/// `coverage` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ar_coverage_point_count(coverage: *const ArCoverage) -> usize {
    coverage.as_ref().map_or(0, |c| c.0.points.len())
}

/// # Safety
/// `coverage` must be a live handle, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ar_coverage_point(
    coverage: *const ArCoverage,
    index: usize,
    out: *mut ArIsoPoint,
) -> ArStatus {
    guard(|| {
        let map = &deref(coverage, "coverage")?.0;
        let p = map
            .points
            .get(index)
            .ok_or_else(|| Failure(ArStatus::InvalidArgument, format!("point {index} out of range")))?;
        let label = match p.label {
            CoverageLabel::Covered => ArLabel::Covered,
            CoverageLabel::Uncovered => ArLabel::Uncovered,
            CoverageLabel::Ignored => ArLabel::Ignored,
        };
        *deref_mut(out, "out")? = ArIsoPoint {
            position: p.position.into(),
            normal: p.normal.into(),
            signal: p.signal,
            label,
            good_views: p.good_views.len(),
        };
        Ok(())
    })
}

/// # Safety
/// `coverage` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ar_coverage_free(coverage: *mut ArCoverage) {
    if !coverage.is_null() {
        drop(Box::from_raw(coverage));
    }
}
