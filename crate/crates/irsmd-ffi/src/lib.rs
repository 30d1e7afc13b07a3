//! C ABI for the irsmd solver.
//!
//! Conventions: handles are opaque pointers created by `irsmd_*_new`-style
//! constructors and released by the matching `irsmd_*_free`; every fallible
//! call returns an [`IrsmdStatus`] and leaves a human-readable message
//! retrievable through [`irsmd_last_error_message`] (thread-local, valid
//! until the next failing call on the same thread). Buffers are caller
//! allocated.

use irsmd::config::RunConfig;
use irsmd::geometry::{DistanceGenerator, FeasibleSet};
use irsmd::linalg::{DenseMatrix, SparseVec};
use irsmd::oracles::{
    BilevelProblem, ElasticNetOracle, HingeOracle, LeastSquaresOracle, SampleSource,
};
use irsmd::schedules::Schedule;
use irsmd::solver::{self, RunReport, SolverOptions};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IrsmdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    ValidationFailed = 4,
    IoError = 5,
    RuntimeError = 6,
}

/// Opaque bilevel problem handle.
pub struct IrsmdProblem(BilevelProblem);

/// Opaque schedule handle.
pub struct IrsmdSchedule(Schedule);

/// Opaque run-report handle.
pub struct IrsmdReport(RunReport);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn fail(status: IrsmdStatus, message: impl std::fmt::Display) -> IrsmdStatus {
    let msg = CString::new(message.to_string()).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
    status
}

/// Message for the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn irsmd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

fn guarded(body: impl FnOnce() -> IrsmdStatus) -> IrsmdStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => fail(IrsmdStatus::RuntimeError, "internal panic"),
    }
}

unsafe fn problem_ref<'a>(p: *const IrsmdProblem) -> Option<&'a BilevelProblem> {
    unsafe { p.as_ref() }.map(|w| &w.0)
}

unsafe fn schedule_ref<'a>(s: *const IrsmdSchedule) -> Option<&'a Schedule> {
    unsafe { s.as_ref() }.map(|w| &w.0)
}

unsafe fn report_ref<'a>(r: *const IrsmdReport) -> Option<&'a RunReport> {
    unsafe { r.as_ref() }.map(|w| &w.0)
}

fn box_problem(p: BilevelProblem, out: *mut *mut IrsmdProblem) -> IrsmdStatus {
    unsafe { *out = Box::into_raw(Box::new(IrsmdProblem(p))) };
    IrsmdStatus::Ok
}

/// Least-squares inner objective ‖Ax − b‖² with an elastic-net outer
/// objective of modulus `mu_h`, over the whole space. `a` is row-major
/// `rows` x `cols`; `b` has length `rows`.
///
/// # Safety
/// `a` must point to `rows*cols` doubles, `b` to `rows` doubles, and `out`
/// must be a valid location to store the new handle.
#[no_mangle]
pub unsafe extern "C" fn irsmd_problem_least_squares(
    a: *const f64,
    rows: usize,
    cols: usize,
    b: *const f64,
    mu_h: f64,
    out: *mut *mut IrsmdProblem,
) -> IrsmdStatus {
    guarded(|| {
        if a.is_null() || b.is_null() || out.is_null() {
            return fail(IrsmdStatus::NullPointer, "null pointer argument");
        }
        let data = unsafe { std::slice::from_raw_parts(a, rows * cols) }.to_vec();
        let rhs = unsafe { std::slice::from_raw_parts(b, rows) }.to_vec();
        let inner = match LeastSquaresOracle::new(DenseMatrix::new(rows, cols, data), rhs) {
            Ok(o) => Arc::new(o),
            Err(e) => return fail(IrsmdStatus::InvalidArgument, e),
        };
        let outer = match ElasticNetOracle::new(mu_h, cols) {
            Ok(o) => Arc::new(o),
            Err(e) => return fail(IrsmdStatus::InvalidArgument, e),
        };
        match BilevelProblem::new(inner, outer, FeasibleSet::whole_space(cols)) {
            Ok(p) => box_problem(p, out),
            Err(e) => fail(IrsmdStatus::InvalidArgument, e),
        }
    })
}

/// Hinge-loss inner objective over sparse examples (CSR layout: `offsets`
/// has `n_examples + 1` entries into `indices`/`values`; feature indices are
/// 0-based and strictly increasing per example; labels are -1 or +1), with
/// an elastic-net outer objective of modulus `mu_h`.
///
/// # Safety
/// All arrays must match the CSR layout described above.
#[no_mangle]
pub unsafe extern "C" fn irsmd_problem_hinge(
    offsets: *const usize,
    indices: *const u32,
    values: *const f64,
    n_examples: usize,
    labels: *const i32,
    dim: usize,
    mu_h: f64,
    out: *mut *mut IrsmdProblem,
) -> IrsmdStatus {
    guarded(|| {
        if offsets.is_null() || indices.is_null() || values.is_null() || labels.is_null() || out.is_null() {
            return fail(IrsmdStatus::NullPointer, "null pointer argument");
        }
        let offsets = unsafe { std::slice::from_raw_parts(offsets, n_examples + 1) };
        let nnz = offsets[n_examples];
        let indices = unsafe { std::slice::from_raw_parts(indices, nnz) };
        let values = unsafe { std::slice::from_raw_parts(values, nnz) };
        let labels = unsafe { std::slice::from_raw_parts(labels, n_examples) };
        let mut data = Vec::with_capacity(n_examples);
        for i in 0..n_examples {
            let (lo, hi) = (offsets[i], offsets[i + 1]);
            if lo > hi || hi > nnz {
                return fail(IrsmdStatus::InvalidArgument, "offsets are not monotone");
            }
            data.push((
                SparseVec::new(dim, indices[lo..hi].to_vec(), values[lo..hi].to_vec()),
                labels[i] as f64,
            ));
        }
        let inner = match HingeOracle::new(data) {
            Ok(o) => Arc::new(o),
            Err(e) => return fail(IrsmdStatus::InvalidArgument, e),
        };
        let outer = match ElasticNetOracle::new(mu_h, dim) {
            Ok(o) => Arc::new(o),
            Err(e) => return fail(IrsmdStatus::InvalidArgument, e),
        };
        match BilevelProblem::new(inner, outer, FeasibleSet::whole_space(dim)) {
            Ok(p) => box_problem(p, out),
            Err(e) => fail(IrsmdStatus::InvalidArgument, e),
        }
    })
}

/// Compile a two-stage problem file (see the crate docs for the format) into
/// a bilevel problem over the stacked variable.
///
/// # Safety
/// `path` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn irsmd_problem_two_stage_file(
    path: *const c_char,
    out: *mut *mut IrsmdProblem,
) -> IrsmdStatus {
    guarded(|| {
        if path.is_null() || out.is_null() {
            return fail(IrsmdStatus::NullPointer, "null pointer argument");
        }
        let path = match unsafe { CStr::from_ptr(path) }.to_str() {
            Ok(s) => s,
            Err(_) => return fail(IrsmdStatus::InvalidArgument, "path is not valid UTF-8"),
        };
        let spec = match irsmd::twostage::load_two_stage_file(Path::new(path)) {
            Ok(s) => s,
            Err(e) => return fail(IrsmdStatus::IoError, e),
        };
        let compiled = match irsmd::twostage::compile(spec) {
            Ok(c) => c,
            Err(e) => return fail(IrsmdStatus::InvalidArgument, e),
        };
        match compiled.into_problem() {
            Ok(p) => box_problem(p, out),
            Err(e) => fail(IrsmdStatus::InvalidArgument, e),
        }
    })
}

/// Load an experiment config file and build its problem (data paths resolve
/// relative to the config file).
///
/// # Safety
/// `path` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn irsmd_problem_from_config(
    path: *const c_char,
    out: *mut *mut IrsmdProblem,
) -> IrsmdStatus {
    guarded(|| {
        if path.is_null() || out.is_null() {
            return fail(IrsmdStatus::NullPointer, "null pointer argument");
        }
        let path = match unsafe { CStr::from_ptr(path) }.to_str() {
            Ok(s) => s,
            Err(_) => return fail(IrsmdStatus::InvalidArgument, "path is not valid UTF-8"),
        };
        let cfg = match RunConfig::from_file(Path::new(path)) {
            Ok(c) => c,
            Err(e) => return fail(IrsmdStatus::IoError, e),
        };
        match irsmd::experiment::resolve_problem(&cfg) {
            Ok(resolved) => box_problem(resolved.problem, out),
            Err(e) => fail(IrsmdStatus::InvalidArgument, e),
        }
    })
}

/// Replace the feasible set with a box (componentwise bounds of length
/// `dim`, which must match the problem dimension).
///
/// # Safety
/// `lower`/`upper` must point to `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn irsmd_problem_set_box(
    problem: *mut IrsmdProblem,
    lower: *const f64,
    upper: *const f64,
    dim: usize,
) -> IrsmdStatus {
    guarded(|| {
        let Some(IrsmdProblem(p)) = (unsafe { problem.as_mut() }) else {
            return fail(IrsmdStatus::NullPointer, "null problem");
        };
        if lower.is_null() || upper.is_null() {
            return fail(IrsmdStatus::NullPointer, "null bounds");
        }
        if dim != p.dim() {
            return fail(IrsmdStatus::DimensionMismatch, format!(
                "set dimension {dim} does not match problem dimension {}",
                p.dim()
            ));
        }
        let lo = unsafe { std::slice::from_raw_parts(lower, dim) }.to_vec();
        let hi = unsafe { std::slice::from_raw_parts(upper, dim) }.to_vec();
        let set = match FeasibleSet::bounded_box(lo, hi) {
            Ok(s) => s,
            Err(e) => return fail(IrsmdStatus::InvalidArgument, e),
        };
        match p.with_set(set) {
            Ok(updated) => {
                *p = updated;
                IrsmdStatus::Ok
            }
            Err(e) => fail(IrsmdStatus::InvalidArgument, e),
        }
    })
}

/// Switch deterministic mode (exact subgradients, no sampling) on or off.
///
/// # Safety
/// The handle must be NULL or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn irsmd_problem_set_deterministic(
    problem: *mut IrsmdProblem,
    deterministic: bool,
) -> IrsmdStatus {
    guarded(|| {
        let Some(IrsmdProblem(p)) = (unsafe { problem.as_mut() }) else {
            return fail(IrsmdStatus::NullPointer, "null problem");
        };
        *p = p.clone().deterministic(deterministic);
        IrsmdStatus::Ok
    })
}

/// Problem dimension, or 0 for a null handle.
///
/// # Safety
/// The handle must be NULL or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn irsmd_problem_dim(problem: *const IrsmdProblem) -> usize {
    unsafe { problem_ref(problem) }.map_or(0, |p| p.dim())
}

/// Schedule attaining the O(1/N^{0.5−δ}) rate: γ_k = γ₀/(k+1)^{0.5+0.5δ},
/// λ_k = λ₀/(k+1)^{0.5−δ}.
///
/// # Safety
/// `out` must be a valid location to store the new handle.
#[no_mangle]
pub unsafe extern "C" fn irsmd_schedule_rate(
    delta: f64,
    gamma0: f64,
    lambda0: f64,
    r: f64,
    out: *mut *mut IrsmdSchedule,
) -> IrsmdStatus {
    guarded(|| {
        if out.is_null() {
            return fail(IrsmdStatus::NullPointer, "null out pointer");
        }
        match Schedule::with_rate_exponent(delta, gamma0, lambda0, r) {
            Ok(s) => {
                unsafe { *out = Box::into_raw(Box::new(IrsmdSchedule(s))) };
                IrsmdStatus::Ok
            }
            Err(e) => fail(IrsmdStatus::InvalidArgument, e),
        }
    })
}

/// General power-law schedule γ_k = γ₀/(k+1)^a, λ_k = λ₀/(k+1)^b.
///
/// # Safety
/// `out` must be a valid location to store the new handle.
#[no_mangle]
pub unsafe extern "C" fn irsmd_schedule_power(
    gamma0: f64,
    lambda0: f64,
    a: f64,
    b: f64,
    r: f64,
    out: *mut *mut IrsmdSchedule,
) -> IrsmdStatus {
    guarded(|| {
        if out.is_null() {
            return fail(IrsmdStatus::NullPointer, "null out pointer");
        }
        match Schedule::new(gamma0, lambda0, a, b, r) {
            Ok(s) => {
                unsafe { *out = Box::into_raw(Box::new(IrsmdSchedule(s))) };
                IrsmdStatus::Ok
            }
            Err(e) => fail(IrsmdStatus::InvalidArgument, e),
        }
    })
}

/// Evaluate (γ_k, λ_k).
///
/// # Safety
/// `gamma`/`lambda` must be valid output locations.
#[no_mangle]
pub unsafe extern "C" fn irsmd_schedule_values(
    schedule: *const IrsmdSchedule,
    k: u64,
    gamma: *mut f64,
    lambda: *mut f64,
) -> IrsmdStatus {
    guarded(|| {
        let Some(s) = (unsafe { schedule_ref(schedule) }) else {
            return fail(IrsmdStatus::NullPointer, "null schedule");
        };
        if gamma.is_null() || lambda.is_null() {
            return fail(IrsmdStatus::NullPointer, "null out pointer");
        }
        let (g, l) = s.values_at(k);
        unsafe {
            *gamma = g;
            *lambda = l;
        }
        IrsmdStatus::Ok
    })
}

/// 1 when the schedule passes the convergence validator, 0 when it fails,
/// -1 for a null handle.
///
/// # Safety
/// The handle must be NULL or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn irsmd_schedule_convergence_ok(schedule: *const IrsmdSchedule) -> i32 {
    match unsafe { schedule_ref(schedule) } {
        Some(s) => s.convergence_report().passed as i32,
        None => -1,
    }
}

/// 1 when the schedule satisfies the recursive-bound diagnostic conditions.
///
/// # Safety
/// The handle must be NULL or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn irsmd_schedule_bound_diagnostic_ok(schedule: *const IrsmdSchedule) -> i32 {
    match unsafe { schedule_ref(schedule) } {
        Some(s) => s.bound_diagnostic_report().passed as i32,
        None => -1,
    }
}

/// Run the solver for `iterations` steps from `x0` (NULL means the origin,
/// projected onto the feasible set) with the given seed.
///
/// # Safety
/// `x0` must be NULL or point to `irsmd_problem_dim(problem)` doubles;
/// `out` must be a valid location to store the new report handle.
#[no_mangle]
pub unsafe extern "C" fn irsmd_run(
    problem: *const IrsmdProblem,
    schedule: *const IrsmdSchedule,
    x0: *const f64,
    iterations: u64,
    seed: u64,
    override_validation: bool,
    out: *mut *mut IrsmdReport,
) -> IrsmdStatus {
    guarded(|| {
        let Some(p) = (unsafe { problem_ref(problem) }) else {
            return fail(IrsmdStatus::NullPointer, "null problem");
        };
        let Some(s) = (unsafe { schedule_ref(schedule) }) else {
            return fail(IrsmdStatus::NullPointer, "null schedule");
        };
        if out.is_null() {
            return fail(IrsmdStatus::NullPointer, "null out pointer");
        }
        let x0 = if x0.is_null() {
            vec![0.0; p.dim()]
        } else {
            unsafe { std::slice::from_raw_parts(x0, p.dim()) }.to_vec()
        };
        let opts = SolverOptions { override_validation, ..Default::default() };
        let dgf = DistanceGenerator::euclidean();
        let mut src = SampleSource::from_seed(seed);
        match solver::run(p, &dgf, s, &x0, iterations, &mut src, &opts) {
            Ok(report) => {
                unsafe { *out = Box::into_raw(Box::new(IrsmdReport(report))) };
                IrsmdStatus::Ok
            }
            Err(e @ irsmd::solver::SolverError::ScheduleRejected(_))
            | Err(e @ irsmd::solver::SolverError::InitialProductTooLarge { .. }) => {
                fail(IrsmdStatus::ValidationFailed, e)
            }
            Err(e) => fail(IrsmdStatus::InvalidArgument, e),
        }
    })
}

/// Dimension of the report's iterates, or 0 for a null handle.
///
/// # Safety
/// The handle must be NULL or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn irsmd_report_dim(report: *const IrsmdReport) -> usize {
    unsafe { report_ref(report) }.map_or(0, |r| r.final_average.len())
}

/// Number of iterations the run executed, or 0 for a null handle.
///
/// # Safety
/// The handle must be NULL or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn irsmd_report_iterations(report: *const IrsmdReport) -> u64 {
    unsafe { report_ref(report) }.map_or(0, |r| r.iterations)
}

/// Copy the final weighted average x̄_N into `buf`.
///
/// # Safety
/// `buf` must point to `len >= irsmd_report_dim(report)` doubles.
#[no_mangle]
pub unsafe extern "C" fn irsmd_report_average(
    report: *const IrsmdReport,
    buf: *mut f64,
    len: usize,
) -> IrsmdStatus {
    guarded(|| {
        let Some(r) = (unsafe { report_ref(report) }) else {
            return fail(IrsmdStatus::NullPointer, "null report");
        };
        if buf.is_null() {
            return fail(IrsmdStatus::NullPointer, "null buffer");
        }
        if len < r.final_average.len() {
            return fail(IrsmdStatus::DimensionMismatch, format!(
                "buffer holds {len}, need {}",
                r.final_average.len()
            ));
        }
        unsafe {
            std::ptr::copy_nonoverlapping(r.final_average.as_ptr(), buf, r.final_average.len());
        }
        IrsmdStatus::Ok
    })
}

/// Exact f and h at the final average, when the run evaluated checkpoints
/// (NaN otherwise).
///
/// # Safety
/// `f` and `h` must be valid output locations.
#[no_mangle]
pub unsafe extern "C" fn irsmd_report_final_values(
    report: *const IrsmdReport,
    f: *mut f64,
    h: *mut f64,
) -> IrsmdStatus {
    guarded(|| {
        let Some(r) = (unsafe { report_ref(report) }) else {
            return fail(IrsmdStatus::NullPointer, "null report");
        };
        if f.is_null() || h.is_null() {
            return fail(IrsmdStatus::NullPointer, "null out pointer");
        }
        let last = r.trace.last();
        unsafe {
            *f = last.and_then(|row| row.f_value).unwrap_or(f64::NAN);
            *h = last.and_then(|row| row.h_value).unwrap_or(f64::NAN);
        }
        IrsmdStatus::Ok
    })
}

/// Number of checkpoint rows in the trace.
///
/// # Safety
/// The handle must be NULL or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn irsmd_report_trace_len(report: *const IrsmdReport) -> usize {
    unsafe { report_ref(report) }.map_or(0, |r| r.trace.len())
}

/// Read one checkpoint row; f/h are NaN when the run did not evaluate them.
///
/// # Safety
/// All out pointers must be valid locations.
#[no_mangle]
pub unsafe extern "C" fn irsmd_report_trace_row(
    report: *const IrsmdReport,
    index: usize,
    k: *mut u64,
    gamma: *mut f64,
    lambda: *mut f64,
    f: *mut f64,
    h: *mut f64,
) -> IrsmdStatus {
    guarded(|| {
        let Some(r) = (unsafe { report_ref(report) }) else {
            return fail(IrsmdStatus::NullPointer, "null report");
        };
        let Some(row) = r.trace.get(index) else {
            return fail(IrsmdStatus::InvalidArgument, format!(
                "trace index {index} out of range ({} rows)",
                r.trace.len()
            ));
        };
        if k.is_null() || gamma.is_null() || lambda.is_null() || f.is_null() || h.is_null() {
            return fail(IrsmdStatus::NullPointer, "null out pointer");
        }
        unsafe {
            *k = row.k;
            *gamma = row.gamma;
            *lambda = row.lambda;
            *f = row.f_value.unwrap_or(f64::NAN);
            *h = row.h_value.unwrap_or(f64::NAN);
        }
        IrsmdStatus::Ok
    })
}

/// # Safety
/// `problem` must be a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn irsmd_problem_free(problem: *mut IrsmdProblem) {
    if !problem.is_null() {
        drop(unsafe { Box::from_raw(problem) });
    }
}

/// # Safety
/// `schedule` must be a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn irsmd_schedule_free(schedule: *mut IrsmdSchedule) {
    if !schedule.is_null() {
        drop(unsafe { Box::from_raw(schedule) });
    }
}

/// # Safety
/// `report` must be a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn irsmd_report_free(report: *mut IrsmdReport) {
    if !report.is_null() {
        drop(unsafe { Box::from_raw(report) });
    }
}
