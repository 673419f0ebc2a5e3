//! C interface to `flocklab`.
//!
//! Configurations, runs and sweeps live behind opaque handles that the caller
//! releases with the matching `*_free` function. Every fallible call returns a
//! [`FlStatus`]; the message of the most recent failure on the calling thread
//! is available through [`fl_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use flocklab::harness::{
    fit_rate, run_single, run_sweep, verify_inequalities, ExperimentConfig, OutputOptions, RateFit, RunRecord,
    SweepResult, TolerancePolicy,
};
use flocklab::FlockError;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidConfig = 3,
    Parse = 4,
    Io = 5,
    /// Vacuum, CFL, blow-up, non-finite or negative values, mass drift.
    Numerical = 6,
    GridMismatch = 7,
    DegenerateFit = 8,
    OutOfRange = 9,
    Panic = 10,
}

impl From<&FlockError> for FlStatus {
    fn from(e: &FlockError) -> Self {
        match e {
            FlockError::InvalidGrid(_)
            | FlockError::InvalidConfig(_)
            | FlockError::VelocityTail { .. }
            | FlockError::AsymmetricKernel { .. } => FlStatus::InvalidConfig,
            FlockError::Parse(_) => FlStatus::Parse,
            FlockError::Io(_) => FlStatus::Io,
            FlockError::GridMismatch(_) => FlStatus::GridMismatch,
            FlockError::DegenerateFit(_) => FlStatus::DegenerateFit,
            _ => FlStatus::Numerical,
        }
    }
}

/// Opaque experiment configuration.
pub struct FlConfig(ExperimentConfig);

/// Opaque result of a single kinetic run.
pub struct FlRun(RunRecord);

/// Opaque result of an epsilon sweep.
pub struct FlSweep(SweepResult);

/// Scalar diagnostics of one snapshot.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct FlReport {
    pub t: f64,
    pub kinetic_entropy: f64,
    pub d1: f64,
    pub d2: f64,
    pub macro_entropy: f64,
    pub rel_entropy: f64,
    pub rel_dissipation: f64,
    pub jensen_gap: f64,
    pub maxwellian_gap: f64,
    pub budget_a: f64,
    pub budget_b: f64,
    pub budget_c: f64,
    pub mass: f64,
    pub momentum: f64,
}

/// One point of a sweep.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct FlSweepPoint {
    pub epsilon: f64,
    pub sup_rel_entropy: f64,
    pub integrated_rel_dissipation: f64,
    pub error: f64,
    pub final_maxwellian_gap: f64,
}

/// Log-log least-squares fit `log error = slope log eps + intercept`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct FlRateFit {
    pub slope: f64,
    pub intercept: f64,
    pub max_residual: f64,
}

impl From<&RateFit> for FlRateFit {
    fn from(f: &RateFit) -> Self {
        FlRateFit {
            slope: f.slope,
            intercept: f.intercept,
            max_residual: f.max_residual,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: FlStatus, msg: impl Into<String>) -> FlStatus {
    set_error(msg.into());
    status
}

fn from_err(e: FlockError) -> FlStatus {
    let s = FlStatus::from(&e);
    fail(s, e.to_string())
}

/// Run `body`, converting panics into `FlStatus::Panic`.
fn guard(body: impl FnOnce() -> Result<(), FlStatus>) -> FlStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => FlStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(FlStatus::Panic, format!("panic: {msg}"))
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, FlStatus> {
    if p.is_null() {
        return Err(fail(FlStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(FlStatus::InvalidArgument, format!("{name} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, FlStatus> {
    p.as_ref().ok_or_else(|| fail(FlStatus::NullPointer, format!("{name} is null")))
}

unsafe fn mut_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, FlStatus> {
    p.as_mut().ok_or_else(|| fail(FlStatus::NullPointer, format!("{name} is null")))
}

unsafe fn output_options(out_dir: *const c_char) -> Result<OutputOptions, FlStatus> {
    Ok(OutputOptions {
        dir: if out_dir.is_null() {
            None
        } else {
            Some(PathBuf::from(str_arg(out_dir, "out_dir")?))
        },
        snapshots: false,
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length, 0 when there is none.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn fl_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len - 1);
                ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
                *buf.add(n) = 0;
            }
            bytes.len()
        }
    })
}

/// The built-in demonstration configuration.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fl_config_demo(out: *mut *mut FlConfig) -> FlStatus {
    guard(|| {
        let out = mut_arg(out, "out")?;
        *out = Box::into_raw(Box::new(FlConfig(ExperimentConfig::demo())));
        Ok(())
    })
}

/// Parse a TOML experiment description.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fl_config_from_toml(toml: *const c_char, out: *mut *mut FlConfig) -> FlStatus {
    guard(|| {
        let text = str_arg(toml, "toml")?;
        let out = mut_arg(out, "out")?;
        let cfg = ExperimentConfig::from_toml_str(text).map_err(from_err)?;
        *out = Box::into_raw(Box::new(FlConfig(cfg)));
        Ok(())
    })
}

/// Load a TOML experiment file; relative kernel files resolve next to it.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fl_config_load(path: *const c_char, out: *mut *mut FlConfig) -> FlStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let out = mut_arg(out, "out")?;
        let cfg = ExperimentConfig::load(path.as_ref()).map_err(from_err)?;
        *out = Box::into_raw(Box::new(FlConfig(cfg)));
        Ok(())
    })
}

/// Release a configuration. Null is ignored.
///
/// # Safety
/// `cfg` must come from one of the `fl_config_*` constructors and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fl_config_free(cfg: *mut FlConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

unsafe fn edit_config(cfg: *mut FlConfig, edit: impl FnOnce(&mut ExperimentConfig)) -> FlStatus {
    guard(|| {
        let c = mut_arg(cfg, "cfg")?;
        let mut next = c.0.clone();
        edit(&mut next);
        next.validate().map_err(from_err)?;
        c.0 = next;
        Ok(())
    })
}

/// Set the relaxation scale used by single runs.
///
/// # Safety
/// `cfg` must be a live configuration handle.
#[no_mangle]
pub unsafe extern "C" fn fl_config_set_epsilon(cfg: *mut FlConfig, epsilon: f64) -> FlStatus {
    edit_config(cfg, |c| c.model.epsilon = epsilon)
}

/// Set the kinetic grid resolution and velocity cut-off.
///
/// # Safety
/// `cfg` must be a live configuration handle.
#[no_mangle]
pub unsafe extern "C" fn fl_config_set_grid(cfg: *mut FlConfig, nx: usize, nv: usize, v_max: f64) -> FlStatus {
    edit_config(cfg, |c| {
        c.grids.nx = nx;
        c.grids.nv = nv;
        c.grids.v_max = v_max;
    })
}

/// Set the final time and the snapshot interval.
///
/// # Safety
/// `cfg` must be a live configuration handle.
#[no_mangle]
pub unsafe extern "C" fn fl_config_set_times(cfg: *mut FlConfig, t_final: f64, snapshot_dt: f64) -> FlStatus {
    edit_config(cfg, |c| {
        c.model.t_final = t_final;
        c.model.snapshot_dt = snapshot_dt;
    })
}

/// Replace the sweep list.
///
/// # Safety
/// `cfg` must be a live configuration handle and `values` point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn fl_config_set_epsilon_list(cfg: *mut FlConfig, values: *const f64, len: usize) -> FlStatus {
    if values.is_null() {
        return fail(FlStatus::NullPointer, "values is null");
    }
    let list = std::slice::from_raw_parts(values, len).to_vec();
    let status = edit_config(cfg, |c| c.sweep.epsilon_list = list);
    if status != FlStatus::Ok {
        return status;
    }
    guard(|| (*cfg).0.validate_epsilon_list().map_err(from_err))
}

/// Serialise the configuration as TOML. Same buffer convention as [`fl_last_error`];
/// returns the full length, or 0 if `cfg` is null.
///
/// # Safety
/// `cfg` must be a live handle; `buf` null or `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn fl_config_to_toml(cfg: *const FlConfig, buf: *mut c_char, len: usize) -> usize {
    let Some(c) = cfg.as_ref() else { return 0 };
    let text = c.0.to_toml();
    if !buf.is_null() && len > 0 {
        let n = text.len().min(len - 1);
        ptr::copy_nonoverlapping(text.as_ptr().cast(), buf, n);
        *buf.add(n) = 0;
    }
    text.len()
}

/// One kinetic run at the configured epsilon against its Euler reference.
/// `out_dir` may be null; otherwise `reports.csv` (and a failure manifest on abort) go there.
///
/// # Safety
/// `cfg` must be a live handle, `out_dir` null or NUL-terminated, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn fl_run_single(cfg: *const FlConfig, out_dir: *const c_char, out: *mut *mut FlRun) -> FlStatus {
    guard(|| {
        let c = ref_arg(cfg, "cfg")?;
        let opts = output_options(out_dir)?;
        let out = mut_arg(out, "out")?;
        let rec = run_single(&c.0, &opts).map_err(from_err)?;
        *out = Box::into_raw(Box::new(FlRun(rec)));
        Ok(())
    })
}

/// Release a run. Null is ignored.
///
/// # Safety
/// `run` must come from [`fl_run_single`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fl_run_free(run: *mut FlRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Number of snapshots recorded by a run (0 for null).
///
/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fl_run_report_count(run: *const FlRun) -> usize {
    run.as_ref().map_or(0, |r| r.0.reports.len())
}

/// Diagnostics of snapshot `index`.
///
/// # Safety
/// `run` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn fl_run_report(run: *const FlRun, index: usize, out: *mut FlReport) -> FlStatus {
    guard(|| {
        let r = ref_arg(run, "run")?;
        let out = mut_arg(out, "out")?;
        let rep = r.0.reports.get(index).ok_or_else(|| {
            fail(
                FlStatus::OutOfRange,
                format!("report {index} requested, run has {}", r.0.reports.len()),
            )
        })?;
        *out = FlReport {
            t: rep.t,
            kinetic_entropy: rep.kinetic_entropy,
            d1: rep.d1,
            d2: rep.d2,
            macro_entropy: rep.macro_entropy,
            rel_entropy: rep.rel_entropy,
            rel_dissipation: rep.rel_dissipation,
            jensen_gap: rep.jensen_gap,
            maxwellian_gap: rep.maxwellian_gap,
            budget_a: rep.budget.kinetic_approx,
            budget_b: rep.budget.coupling,
            budget_c: rep.budget.shifted_dissipation,
            mass: rep.mass,
            momentum: rep.momentum,
        };
        Ok(())
    })
}

/// `sup_t` relative entropy and the time integral of the relative dissipation.
///
/// # Safety
/// `run` must be a live handle; `sup_rel_entropy` and `integrated_dissipation` valid.
#[no_mangle]
pub unsafe extern "C" fn fl_run_error_functional(
    run: *const FlRun,
    sup_rel_entropy: *mut f64,
    integrated_dissipation: *mut f64,
) -> FlStatus {
    guard(|| {
        let r = ref_arg(run, "run")?;
        let a = mut_arg(sup_rel_entropy, "sup_rel_entropy")?;
        let b = mut_arg(integrated_dissipation, "integrated_dissipation")?;
        (*a, *b) = r.0.error_functional();
        Ok(())
    })
}

/// Check the run against the inequality ledger with default tolerances.
/// `passed` receives 1 when every entry holds, 0 otherwise; the rendered
/// ledger is copied into `buf` with the [`fl_last_error`] convention when non-null.
///
/// # Safety
/// `run` must be a live handle, `passed` valid, `buf` null or `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn fl_run_verify(run: *const FlRun, passed: *mut i32, buf: *mut c_char, len: usize) -> FlStatus {
    guard(|| {
        let r = ref_arg(run, "run")?;
        let passed = mut_arg(passed, "passed")?;
        let ledger = verify_inequalities(&r.0, &TolerancePolicy::default());
        *passed = i32::from(ledger.passed());
        if !buf.is_null() && len > 0 {
            let text = ledger.render();
            let n = text.len().min(len - 1);
            ptr::copy_nonoverlapping(text.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        Ok(())
    })
}

/// Kinetic runs over the configured epsilon list and the rate fit.
///
/// # Safety
/// `cfg` must be a live handle, `out_dir` null or NUL-terminated, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn fl_sweep_run(cfg: *const FlConfig, out_dir: *const c_char, out: *mut *mut FlSweep) -> FlStatus {
    guard(|| {
        let c = ref_arg(cfg, "cfg")?;
        let opts = output_options(out_dir)?;
        let out = mut_arg(out, "out")?;
        let res = run_sweep(&c.0, &opts).map_err(from_err)?;
        *out = Box::into_raw(Box::new(FlSweep(res)));
        Ok(())
    })
}

/// Release a sweep. Null is ignored.
///
/// # Safety
/// `sweep` must come from [`fl_sweep_run`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fl_sweep_free(sweep: *mut FlSweep) {
    if !sweep.is_null() {
        drop(Box::from_raw(sweep));
    }
}

/// Number of sweep points (0 for null).
///
/// # Safety
/// `sweep` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fl_sweep_point_count(sweep: *const FlSweep) -> usize {
    sweep.as_ref().map_or(0, |s| s.0.points.len())
}

/// # Safety
/// `sweep` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn fl_sweep_point(sweep: *const FlSweep, index: usize, out: *mut FlSweepPoint) -> FlStatus {
    guard(|| {
        let s = ref_arg(sweep, "sweep")?;
        let out = mut_arg(out, "out")?;
        let p = s.0.points.get(index).ok_or_else(|| {
            fail(
                FlStatus::OutOfRange,
                format!("point {index} requested, sweep has {}", s.0.points.len()),
            )
        })?;
        *out = FlSweepPoint {
            epsilon: p.epsilon,
            sup_rel_entropy: p.sup_rel_entropy,
            integrated_rel_dissipation: p.integrated_rel_dissipation,
            error: p.error,
            final_maxwellian_gap: p.final_maxwellian_gap,
        };
        Ok(())
    })
}

/// The fit over all points (`largest3 == 0`) or over the three largest epsilons.
///
/// # Safety
/// `sweep` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn fl_sweep_fit(sweep: *const FlSweep, largest3: i32, out: *mut FlRateFit) -> FlStatus {
    guard(|| {
        let s = ref_arg(sweep, "sweep")?;
        let out = mut_arg(out, "out")?;
        *out = if largest3 != 0 {
            (&s.0.fit_largest3).into()
        } else {
            (&s.0.fit).into()
        };
        Ok(())
    })
}

/// Fit `log error = slope log eps + intercept` to `len` points.
///
/// # Safety
/// `epsilon` and `error` must point to `len` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fl_fit_rate(epsilon: *const f64, error: *const f64, len: usize, out: *mut FlRateFit) -> FlStatus {
    guard(|| {
        if epsilon.is_null() || error.is_null() {
            return Err(fail(FlStatus::NullPointer, "epsilon or error is null"));
        }
        let out = mut_arg(out, "out")?;
        let e = std::slice::from_raw_parts(epsilon, len);
        let r = std::slice::from_raw_parts(error, len);
        let pts: Vec<(f64, f64)> = e.iter().copied().zip(r.iter().copied()).collect();
        *out = (&fit_rate(&pts).map_err(from_err)?).into();
        Ok(())
    })
}
