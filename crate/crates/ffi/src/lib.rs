//! C ABI over `sivi-core`.
//!
//! Conventions:
//! - Every fallible function returns a [`SiviStatus`]; `SIVI_STATUS_OK` is zero.
//!   On failure, [`sivi_last_error_message`] describes the most recent error
//!   raised on the calling thread.
//! - Problems and traces are opaque handles created by `sivi_*_new`/`sivi_solve`
//!   and released with the matching `*_free` function. Freeing `NULL` is a no-op.
//! - Vectors are passed as `(pointer, length)` of `double`; matrices are dense
//!   row-major. Infinite bounds are written as `INFINITY`/`-INFINITY`.
//! - Panics never cross the boundary; they are reported as `SIVI_STATUS_PANIC`.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use sivi_core::feasible::{BoxSet, FeasibleSet};
use sivi_core::harness::export_trace_csv;
use sivi_core::numkit::{Matrix, Vector};
use sivi_core::oracle::{AdditiveGaussianOracle, AffineMap, BatchSchedule};
use sivi_core::problems::{build_example1_with_noise, NetworkModel, NetworkOptions};
use sivi_core::solver::{solve, GapEvalMode, SolverConfig, Trace};
use sivi_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiviStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    IterationLimit = 4,
    Unsupported = 5,
    Io = 6,
    Panic = 7,
}

impl From<&Error> for SiviStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::DimensionMismatch { .. }
            | Error::NotSquare { .. }
            | Error::NotSymmetric { .. }
            | Error::InvalidParameter { .. }
            | Error::Parse(_) => SiviStatus::InvalidArgument,
            Error::NonFinite { .. } | Error::Diverged { .. } | Error::Model(_) | Error::EmptySet(_) => {
                SiviStatus::Numerical
            }
            Error::IterationLimit { .. } => SiviStatus::IterationLimit,
            Error::Unsupported(_) => SiviStatus::Unsupported,
            Error::Io { .. } => SiviStatus::Io,
        }
    }
}

/// Opaque problem handle.
pub struct SiviProblem {
    inner: sivi_core::SiviProblem,
}

/// Opaque solver trace handle.
pub struct SiviTrace {
    inner: Trace,
}

/// Solver settings. Obtain defaults from [`sivi_solver_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SiviSolverOptions {
    /// Step parameter, positive.
    pub eta: f64,
    /// Batch growth: `N_k = ceil((k+1)^(2+2*delta))`, positive.
    pub delta: f64,
    /// Upper bound on the batch size; 0 means no bound.
    pub cap: u64,
    /// Number of iterations.
    pub iters: usize,
    pub seed: u64,
    /// Independent random stream under `seed`, e.g. a replication index.
    pub stream: u64,
    pub record_every: usize,
    /// 0 evaluates the recorded gap with the exact mean map; otherwise the
    /// number of fresh samples used to estimate it.
    pub gap_samples: u64,
}

/// One recorded iteration.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SiviRecord {
    pub k: usize,
    pub cumulative_samples: u64,
    pub gap_norm: f64,
    /// Distance to the known solution, NaN when none is known.
    pub err: f64,
    pub wall_time: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn clear_last_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

/// Internal failure carrying the status to report.
struct Failure(SiviStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(SiviStatus::from(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(SiviStatus::NullPointer, format!("{what} is NULL"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(SiviStatus::InvalidArgument, msg.into())
}

fn guard<F>(f: F) -> SiviStatus
where
    F: FnOnce() -> Result<(), Failure>,
{
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SiviStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            set_last_error(format!("panic: {msg}"));
            SiviStatus::Panic
        }
    }
}

/// # Safety
/// `ptr` must be NULL or point to `len` readable doubles.
unsafe fn read_vector(ptr: *const f64, len: usize, what: &str) -> Result<Vector, Failure> {
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(Vector::from_column_slice(std::slice::from_raw_parts(ptr, len)))
}

/// # Safety
/// As [`read_vector`]; NULL yields `None`.
unsafe fn read_optional(ptr: *const f64, len: usize, what: &str) -> Result<Option<Vector>, Failure> {
    if ptr.is_null() {
        Ok(None)
    } else {
        read_vector(ptr, len, what).map(Some)
    }
}

/// # Safety
/// `out` must be NULL or valid for writes.
unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. The string stays
/// valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn sivi_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sivi_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// The three-dimensional affine box problem with Gaussian noise of the given
/// standard deviation per coordinate.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sivi_problem_example1_new(noise_scale: f64, out: *mut *mut SiviProblem) -> SiviStatus {
    guard(|| {
        if !(noise_scale >= 0.0) || !noise_scale.is_finite() {
            return Err(invalid("noise_scale must be finite and nonnegative"));
        }
        store(out, SiviProblem { inner: build_example1_with_noise(noise_scale) })
    })
}

/// A random transportation network with `m` supply markets, `n` demand
/// markets and `q` coupling halfspaces, generated from `model_seed`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sivi_problem_example2_new(
    model_seed: u64,
    m: usize,
    n: usize,
    q: usize,
    noise_scale: f64,
    out: *mut *mut SiviProblem,
) -> SiviStatus {
    guard(|| {
        let opts = NetworkOptions {
            m,
            n,
            q,
            ..Default::default()
        };
        let model = NetworkModel::generate(model_seed, &opts)?;
        store(out, SiviProblem { inner: model.problem(noise_scale)? })
    })
}

/// `G(x, xi) = A x + d + noise_scale * xi` over the box `[lower, upper]`.
/// `matrix` is `dim * dim` row-major. `lower`/`upper` may be NULL for an
/// unbounded side, `x0` may be NULL for the origin and `x_star` may be NULL
/// when no solution is known.
///
/// # Safety
/// Non-NULL pointers must reference arrays of the stated sizes; `out` must be
/// valid for writes.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn sivi_problem_affine_new(
    dim: usize,
    matrix: *const f64,
    offset: *const f64,
    lower: *const f64,
    upper: *const f64,
    noise_scale: f64,
    x0: *const f64,
    x_star: *const f64,
    out: *mut *mut SiviProblem,
) -> SiviStatus {
    guard(|| {
        if dim == 0 {
            return Err(invalid("dim must be positive"));
        }
        if matrix.is_null() {
            return Err(null("matrix"));
        }
        let a = Matrix::from_row_slice(dim, dim, std::slice::from_raw_parts(matrix, dim * dim));
        let d = read_vector(offset, dim, "offset")?;
        let lo = read_optional(lower, dim, "lower")?.unwrap_or_else(|| Vector::from_element(dim, f64::NEG_INFINITY));
        let hi = read_optional(upper, dim, "upper")?.unwrap_or_else(|| Vector::from_element(dim, f64::INFINITY));
        let start = read_optional(x0, dim, "x0")?.unwrap_or_else(|| Vector::zeros(dim));
        let solution = read_optional(x_star, dim, "x_star")?;
        let oracle = AdditiveGaussianOracle::new(AffineMap::new(a, d)?, noise_scale)?;
        let set = FeasibleSet::Box(BoxSet::new(lo, hi)?);
        let problem = sivi_core::SiviProblem::new("affine", Box::new(oracle), set, start, solution)?;
        store(out, SiviProblem { inner: problem })
    })
}

/// Dimension of the decision variable, 0 for NULL.
///
/// # Safety
/// `problem` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sivi_problem_dim(problem: *const SiviProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.inner.dim())
}

/// Projects `u` onto the problem's feasible set.
///
/// # Safety
/// `u` and `out` must reference `len` doubles; `problem` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sivi_problem_project(
    problem: *const SiviProblem,
    u: *const f64,
    out: *mut f64,
    len: usize,
) -> SiviStatus {
    guard(|| {
        let p = problem.as_ref().ok_or_else(|| null("problem"))?;
        if len != p.inner.dim() {
            return Err(invalid(format!("length {len} does not match dimension {}", p.inner.dim())));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let y = p.inner.set.project(&read_vector(u, len, "u")?)?;
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(y.as_slice());
        Ok(())
    })
}

/// # Safety
/// `problem` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sivi_problem_free(problem: *mut SiviProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Fills `out` with the defaults: eta 1, delta 0.5, no cap, 100 iterations,
/// seed 1, stream 0, every iteration recorded, exact gap evaluation.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sivi_solver_options_default(out: *mut SiviSolverOptions) -> SiviStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = SiviSolverOptions {
            eta: 1.0,
            delta: 0.5,
            cap: 0,
            iters: 100,
            seed: 1,
            stream: 0,
            record_every: 1,
            gap_samples: 0,
        };
        Ok(())
    })
}

fn solver_config(o: &SiviSolverOptions) -> Result<SolverConfig, Failure> {
    let cap = (o.cap > 0).then_some(o.cap);
    let mut cfg = SolverConfig::new(o.eta, o.iters, BatchSchedule::new(o.delta, cap)?);
    cfg.master_seed = o.seed;
    cfg.stream_id = o.stream;
    cfg.record_every = o.record_every;
    cfg.gap_eval_mode = match o.gap_samples {
        0 => GapEvalMode::ExactMean,
        m => GapEvalMode::MonteCarlo(Some(m)),
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Runs the solver. On success `*out` receives a trace handle.
///
/// # Safety
/// `problem` and `options` must be live; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sivi_solve(
    problem: *const SiviProblem,
    options: *const SiviSolverOptions,
    out: *mut *mut SiviTrace,
) -> SiviStatus {
    guard(|| {
        let p = problem.as_ref().ok_or_else(|| null("problem"))?;
        let o = options.as_ref().ok_or_else(|| null("options"))?;
        let trace = solve(&p.inner, &solver_config(o)?)?;
        store(out, SiviTrace { inner: trace })
    })
}

/// Number of records, 0 for NULL.
///
/// # Safety
/// `trace` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sivi_trace_len(trace: *const SiviTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.inner.len())
}

/// # Safety
/// `trace` must be live and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sivi_trace_record(trace: *const SiviTrace, index: usize, out: *mut SiviRecord) -> SiviStatus {
    guard(|| {
        let t = trace.as_ref().ok_or_else(|| null("trace"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let r = t
            .inner
            .records
            .get(index)
            .ok_or_else(|| invalid(format!("record {index} out of range ({} records)", t.inner.len())))?;
        *out = SiviRecord {
            k: r.k,
            cumulative_samples: r.cumulative_samples,
            gap_norm: r.gap_norm,
            err: r.err.unwrap_or(f64::NAN),
            wall_time: r.wall_time,
        };
        Ok(())
    })
}

/// Copies the iterate of record `index` into `out[0..len]`; `len` must equal
/// the problem dimension.
///
/// # Safety
/// `trace` must be live and `out` must reference `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sivi_trace_iterate(trace: *const SiviTrace, index: usize, out: *mut f64, len: usize) -> SiviStatus {
    guard(|| {
        let t = trace.as_ref().ok_or_else(|| null("trace"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let r = t
            .inner
            .records
            .get(index)
            .ok_or_else(|| invalid(format!("record {index} out of range ({} records)", t.inner.len())))?;
        if r.x.len() != len {
            return Err(invalid(format!("buffer length {len}, iterate length {}", r.x.len())));
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(r.x.as_slice());
        Ok(())
    })
}

/// Writes the trace as CSV (`k,cum_samples,gap_norm,err`).
///
/// # Safety
/// `trace` must be live and `path` a NUL-terminated UTF-8 string.
#[no_mangle]
pub unsafe extern "C" fn sivi_trace_write_csv(trace: *const SiviTrace, path: *const c_char) -> SiviStatus {
    guard(|| {
        let t = trace.as_ref().ok_or_else(|| null("trace"))?;
        if path.is_null() {
            return Err(null("path"));
        }
        let path = CStr::from_ptr(path).to_str().map_err(|_| invalid("path is not UTF-8"))?;
        export_trace_csv(&t.inner, Path::new(path))?;
        Ok(())
    })
}

/// # Safety
/// `trace` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sivi_trace_free(trace: *mut SiviTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Batch size at iteration `k` for growth `delta` and `cap` (0 = none).
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sivi_batch_size(delta: f64, cap: u64, k: usize, out: *mut u64) -> SiviStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = BatchSchedule::new(delta, (cap > 0).then_some(cap))?.batch_size(k);
        Ok(())
    })
}

/// Projects `u` onto the box `[lo, hi]` (entries may be infinite).
///
/// # Safety
/// All pointers must reference `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sivi_project_box(
    len: usize,
    lo: *const f64,
    hi: *const f64,
    u: *const f64,
    out: *mut f64,
) -> SiviStatus {
    guard(|| {
        let set = BoxSet::new(read_vector(lo, len, "lo")?, read_vector(hi, len, "hi")?)?;
        let y = set.project(&read_vector(u, len, "u")?)?;
        if out.is_null() {
            return Err(null("out"));
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(y.as_slice());
        Ok(())
    })
}
