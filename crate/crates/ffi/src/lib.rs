//! C ABI over the platerod solver.
//!
//! Models and solutions are opaque handles created and freed through this
//! interface. Every fallible function returns a [`PlaterodStatus`]; after a
//! failure, [`platerod_last_error`] describes it on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use platerod::config::RunConfig;
use platerod::forces::{check_admissibility, Verdict};
use platerod::recovery3d::delta_sweep;
use platerod::solver::{solve, SolveReport, SolveStatus};
use platerod::{Error, LimitState, Model};

/// Result codes. The values 2 to 4 coincide with the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlaterodStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    NotConverged = 3,
    Nonphysical = 4,
    InvalidArgument = 5,
    Io = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// A configured model.
pub struct PlaterodModel {
    config: RunConfig,
    model: Model,
}

/// The outcome of a solve.
pub struct PlaterodSolution {
    report: SolveReport,
}

/// One row of a δ-sweep.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PlaterodSweepRow {
    pub delta: f64,
    pub elastic: f64,
    pub load: f64,
    pub total: f64,
    pub limit_energy: f64,
    pub gap: f64,
    pub min_det: f64,
}

/// Small-data admissibility of the loads. `verdict` is 0 admissible,
/// 1 inadmissible, 2 indeterminate.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PlaterodAdmissibility {
    pub fp_norm: f64,
    pub fr3_norm: f64,
    pub min_fr3: f64,
    pub threshold_p: f64,
    pub threshold_r: f64,
    pub case1_holds: bool,
    pub verdict: i32,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> PlaterodStatus {
    match e {
        Error::Nonphysical { .. } => PlaterodStatus::Nonphysical,
        Error::InvalidArgument(_) => PlaterodStatus::InvalidArgument,
        Error::Io { .. } => PlaterodStatus::Io,
        _ => PlaterodStatus::Config,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (PlaterodStatus, String)>) -> PlaterodStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            PlaterodStatus::Ok
        }
        Ok(Err((s, msg))) => {
            set_error(&msg);
            s
        }
        Err(_) => {
            set_error("internal panic");
            PlaterodStatus::Panic
        }
    }
}

fn lib(e: Error) -> (PlaterodStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (PlaterodStatus, String) {
    (PlaterodStatus::NullPointer, format!("{what} is null"))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, (PlaterodStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (PlaterodStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], (PlaterodStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn new_model(config: RunConfig) -> Result<*mut PlaterodModel, (PlaterodStatus, String)> {
    let model = config.build_model().map_err(lib)?;
    Ok(Box::into_raw(Box::new(PlaterodModel { config, model })))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn platerod_version() -> *const c_char {
    static V: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    V.as_ptr().cast()
}

/// Message of the last failure on this thread; empty after a success. Valid
/// until the next call on the same thread.
#[no_mangle]
pub extern "C" fn platerod_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Builds a model from JSON config text. Relative table paths resolve
/// against `base_dir`, which may be null for the current directory.
///
/// # Safety
/// `json` and a non-null `base_dir` must be NUL-terminated strings; `out` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn platerod_model_from_json(json: *const c_char, base_dir: *const c_char, out: *mut *mut PlaterodModel) -> PlaterodStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let json = text(json, "json")?;
        let base = if base_dir.is_null() { "" } else { text(base_dir, "base_dir")? };
        *out = new_model(RunConfig::from_json(json, base).map_err(lib)?)?;
        Ok(())
    })
}

/// Builds a model from a config file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn platerod_model_from_file(path: *const c_char, out: *mut *mut PlaterodModel) -> PlaterodStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        *out = new_model(RunConfig::from_file(text(path, "path")?).map_err(lib)?)?;
        Ok(())
    })
}

/// Frees a model; null is ignored.
///
/// # Safety
/// `m` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn platerod_model_free(m: *mut PlaterodModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Number of nodal unknowns, all and unconstrained.
///
/// # Safety
/// `m` must be a live model; the outputs must be writable or null.
#[no_mangle]
pub unsafe extern "C" fn platerod_model_dofs(m: *const PlaterodModel, total: *mut usize, free: *mut usize) -> PlaterodStatus {
    guard(|| {
        let m = m.as_ref().ok_or_else(|| null("model"))?;
        if !total.is_null() {
            *total = m.model.dofs.n_total();
        }
        if !free.is_null() {
            *free = m.model.dofs.n_free();
        }
        Ok(())
    })
}

/// Limit energy of a state of `len` nodal values.
///
/// # Safety
/// `state` must hold `len` values; `energy` must be writable.
#[no_mangle]
pub unsafe extern "C" fn platerod_energy(m: *const PlaterodModel, state: *const f64, len: usize, energy: *mut f64) -> PlaterodStatus {
    guard(|| {
        let m = m.as_ref().ok_or_else(|| null("model"))?;
        let s = slice(state, len, "state")?;
        if energy.is_null() {
            return Err(null("energy"));
        }
        let st = LimitState { values: s.to_vec() };
        if !st.is_admissible(&m.model.dofs) {
            return Err((PlaterodStatus::InvalidArgument, format!("state of length {len} is not admissible for this model")));
        }
        *energy = m.model.energy(&st);
        Ok(())
    })
}

/// Admissibility of the configured loads.
///
/// # Safety
/// `m` must be a live model; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn platerod_check_forces(m: *const PlaterodModel, out: *mut PlaterodAdmissibility) -> PlaterodStatus {
    guard(|| {
        let m = m.as_ref().ok_or_else(|| null("model"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let th = m.config.thresholds().map_err(lib)?;
        let r = check_admissibility(&m.model.forces, &m.model.plate.domain, m.model.rod.length, th).map_err(lib)?;
        *out = PlaterodAdmissibility {
            fp_norm: r.fp_norm,
            fr3_norm: r.fr3_norm,
            min_fr3: r.min_fr3,
            threshold_p: r.thresholds.threshold_p,
            threshold_r: r.thresholds.threshold_r,
            case1_holds: r.case1_holds,
            verdict: match r.verdict {
                Verdict::Admissible => 0,
                Verdict::Inadmissible => 1,
                Verdict::Indeterminate => 2,
            },
        };
        Ok(())
    })
}

/// Minimizes the limit energy with the configured solver options. A solution
/// is produced even when the solver does not converge; the status is then
/// `NotConverged`.
///
/// # Safety
/// `m` must be a live model; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn platerod_solve(m: *const PlaterodModel, out: *mut *mut PlaterodSolution) -> PlaterodStatus {
    let mut converged = true;
    let s = guard(|| {
        let m = m.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let report = solve(&m.model, &m.config.solver).map_err(lib)?;
        converged = report.converged();
        *out = Box::into_raw(Box::new(PlaterodSolution { report }));
        Ok(())
    });
    if s == PlaterodStatus::Ok && !converged {
        set_error("solver did not converge");
        return PlaterodStatus::NotConverged;
    }
    s
}

/// Frees a solution; null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn platerod_solution_free(s: *mut PlaterodSolution) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Energy, iteration count and convergence flag of a solution.
///
/// # Safety
/// `s` must be a live solution; the outputs must be writable or null.
#[no_mangle]
pub unsafe extern "C" fn platerod_solution_summary(
    s: *const PlaterodSolution,
    energy: *mut f64,
    iterations: *mut usize,
    converged: *mut bool,
) -> PlaterodStatus {
    guard(|| {
        let s = s.as_ref().ok_or_else(|| null("solution"))?;
        if !energy.is_null() {
            *energy = s.report.energy;
        }
        if !iterations.is_null() {
            *iterations = s.report.iterations;
        }
        if !converged.is_null() {
            *converged = s.report.status == SolveStatus::Converged;
        }
        Ok(())
    })
}

/// Copies the nodal values of a solution. With `buf` null or `cap` too small
/// only `len` is set (and `BufferTooSmall` returned for a short buffer).
///
/// # Safety
/// `buf` must hold `cap` values when non-null; `len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn platerod_solution_state(s: *const PlaterodSolution, buf: *mut f64, cap: usize, len: *mut usize) -> PlaterodStatus {
    guard(|| {
        let s = s.as_ref().ok_or_else(|| null("solution"))?;
        let v = &s.report.state.values;
        *len.as_mut().ok_or_else(|| null("len"))? = v.len();
        if buf.is_null() {
            return Ok(());
        }
        if cap < v.len() {
            return Err((PlaterodStatus::BufferTooSmall, format!("buffer holds {cap} values, {} needed", v.len())));
        }
        std::slice::from_raw_parts_mut(buf, v.len()).copy_from_slice(v);
        Ok(())
    })
}

/// Rescaled 3D recovery energies of a solution for `n_deltas` decreasing
/// thickness parameters at plateau parameter `n`, one row per δ.
///
/// # Safety
/// `deltas` must hold `n_deltas` values and `rows` room for as many rows.
#[no_mangle]
pub unsafe extern "C" fn platerod_sweep(
    m: *const PlaterodModel,
    s: *const PlaterodSolution,
    n: u32,
    deltas: *const f64,
    n_deltas: usize,
    rows: *mut PlaterodSweepRow,
) -> PlaterodStatus {
    let mut nonphysical = false;
    let st = guard(|| {
        let m = m.as_ref().ok_or_else(|| null("model"))?;
        let s = s.as_ref().ok_or_else(|| null("solution"))?;
        let d = slice(deltas, n_deltas, "deltas")?;
        if n_deltas > 0 && rows.is_null() {
            return Err(null("rows"));
        }
        let out = delta_sweep(&m.model, &s.report.state, n, d, &m.config.sweep.quadrature).map_err(lib)?;
        for (k, r) in out.iter().enumerate() {
            nonphysical |= !r.total.is_finite();
            *rows.add(k) = PlaterodSweepRow {
                delta: r.delta,
                elastic: r.elastic,
                load: r.load,
                total: r.total,
                limit_energy: r.limit_energy,
                gap: r.gap,
                min_det: r.min_det,
            };
        }
        Ok(())
    });
    if st == PlaterodStatus::Ok && nonphysical {
        set_error("nonphysical deformation in the sweep");
        return PlaterodStatus::Nonphysical;
    }
    st
}
