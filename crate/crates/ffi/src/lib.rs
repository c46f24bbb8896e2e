//! C interface to the cabcd solvers.
//!
//! Objects cross the boundary as opaque handles owned by the caller and
//! released with the matching `*_free` function. Every entry point returns a
//! [`CabcdStatus`]; the message of the most recent failure on the calling
//! thread is available from [`cabcd_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use cabcd::cli::{load_dataset, CliError};
use cabcd::comm::{AllToAllModel, Backend, CommError};
use cabcd::partition::LayoutKind;
use cabcd::solvers::{solve, Algorithm, CheckInterval, RunOptions, SolveOutput, SolverConfig, SolverError};
use cabcd::sparse::{CsrMatrix, SparseError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CabcdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Factorization = 5,
    Comm = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CabcdAlgorithm {
    Cg = 0,
    Bcd = 1,
    CaBcd = 2,
    Bdcd = 3,
    CaBdcd = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CabcdLayout {
    /// The algorithm's natural layout.
    Natural = 0,
    Row = 1,
    Column = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CabcdBackend {
    Lockstep = 0,
    Threaded = 1,
}

/// Critical-path cost counters.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CabcdCounters {
    pub flops: u64,
    pub words: u64,
    pub messages: u64,
}

/// A ridge problem: `d x n` matrix (features by data points) and labels.
pub struct CabcdProblem {
    x: CsrMatrix,
    y: Vec<f64>,
}

pub struct CabcdConfig {
    solver: SolverConfig,
    run: RunOptions,
}

pub struct CabcdResult {
    output: SolveOutput,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn fail(status: CabcdStatus, msg: impl Into<String>) -> CabcdStatus {
    set_error(msg);
    status
}

fn sparse_status(e: &SparseError) -> CabcdStatus {
    match e {
        SparseError::Io(_) => CabcdStatus::Io,
        SparseError::Parse { .. } => CabcdStatus::Parse,
        SparseError::NotPositiveDefinite { .. } => CabcdStatus::Factorization,
        _ => CabcdStatus::InvalidArgument,
    }
}

fn solver_status(e: &SolverError) -> CabcdStatus {
    match e {
        SolverError::InvalidConfig { .. } | SolverError::Partition(_) => CabcdStatus::InvalidArgument,
        SolverError::Factorization { .. } => CabcdStatus::Factorization,
        SolverError::Sparse(s) => sparse_status(s),
        SolverError::Comm(CommError::ZeroRanks) => CabcdStatus::InvalidArgument,
        SolverError::Comm(_) => CabcdStatus::Comm,
    }
}

fn guard(f: impl FnOnce() -> CabcdStatus) -> CabcdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(CabcdStatus::Panic, "internal panic"),
    }
}

unsafe fn input<'a, T>(p: *const T, len: usize) -> Option<&'a [T]> {
    if len == 0 {
        Some(&[])
    } else if p.is_null() {
        None
    } else {
        Some(slice::from_raw_parts(p, len))
    }
}

unsafe fn handle<'a, T>(p: *const T) -> Result<&'a T, CabcdStatus> {
    p.as_ref().ok_or_else(|| fail(CabcdStatus::NullPointer, "null handle"))
}

unsafe fn handle_mut<'a, T>(p: *mut T) -> Result<&'a mut T, CabcdStatus> {
    p.as_mut().ok_or_else(|| fail(CabcdStatus::NullPointer, "null handle"))
}

unsafe fn emit<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

macro_rules! tryc {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(status) => return status,
        }
    };
}

/// Message of the last failure on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cabcd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn cabcd_status_str(status: CabcdStatus) -> *const c_char {
    let s: &'static CStr = match status {
        CabcdStatus::Ok => c"ok",
        CabcdStatus::NullPointer => c"null pointer",
        CabcdStatus::InvalidArgument => c"invalid argument",
        CabcdStatus::Io => c"i/o error",
        CabcdStatus::Parse => c"parse error",
        CabcdStatus::Factorization => c"factorization failed",
        CabcdStatus::Comm => c"communication error",
        CabcdStatus::BufferTooSmall => c"buffer too small",
        CabcdStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}

/// Builds a problem from `nnz` coordinate triplets of the `d x n` matrix
/// and `n` labels. Duplicate coordinates are rejected.
///
/// # Safety
/// `rows`, `cols` and `vals` must point to `nnz` elements, `y` to `n`
/// elements, and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cabcd_problem_from_triplets(
    d: usize,
    n: usize,
    rows: *const usize,
    cols: *const usize,
    vals: *const f64,
    nnz: usize,
    y: *const f64,
    out: *mut *mut CabcdProblem,
) -> CabcdStatus {
    guard(|| {
        if out.is_null() {
            return fail(CabcdStatus::NullPointer, "out is null");
        }
        let (Some(r), Some(c), Some(v), Some(y)) = (input(rows, nnz), input(cols, nnz), input(vals, nnz), input(y, n))
        else {
            return fail(CabcdStatus::NullPointer, "null input array");
        };
        let triplets: Vec<_> = (0..nnz).map(|k| (r[k], c[k], v[k])).collect();
        match CsrMatrix::from_triplets(d, n, &triplets) {
            Ok(x) => {
                emit(out, CabcdProblem { x, y: y.to_vec() });
                CabcdStatus::Ok
            }
            Err(e) => fail(sparse_status(&e), e.to_string()),
        }
    })
}

/// Reads a LIBSVM file (one data point per line). `features` of 0 infers
/// the dimension from the largest index.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cabcd_problem_load_libsvm(
    path: *const c_char,
    features: usize,
    out: *mut *mut CabcdProblem,
) -> CabcdStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            return fail(CabcdStatus::NullPointer, "null argument");
        }
        let Ok(path) = CStr::from_ptr(path).to_str() else {
            return fail(CabcdStatus::InvalidArgument, "path is not UTF-8");
        };
        match load_dataset(Path::new(path), (features > 0).then_some(features)) {
            Ok(ds) => {
                emit(out, CabcdProblem { x: ds.x, y: ds.y });
                CabcdStatus::Ok
            }
            Err(CliError::Sparse(e)) => fail(sparse_status(&e), e.to_string()),
            Err(e @ (CliError::Io(_) | CliError::Dataset(_))) => fail(CabcdStatus::Io, e.to_string()),
            Err(e) => fail(CabcdStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// # Safety
/// `problem` must come from a `cabcd_problem_*` constructor or be NULL.
#[no_mangle]
pub unsafe extern "C" fn cabcd_problem_free(problem: *mut CabcdProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// # Safety
/// `problem` must be a live handle; the out pointers may be NULL.
#[no_mangle]
pub unsafe extern "C" fn cabcd_problem_dims(
    problem: *const CabcdProblem,
    d: *mut usize,
    n: *mut usize,
    nnz: *mut usize,
) -> CabcdStatus {
    guard(|| {
        let p = tryc!(handle(problem));
        for (dst, v) in [(d, p.x.n_rows()), (n, p.x.n_cols()), (nnz, p.x.nnz())] {
            if !dst.is_null() {
                *dst = v;
            }
        }
        CabcdStatus::Ok
    })
}

/// A configuration with `s = 1`, tolerance 0, seed 0, one rank, stopping
/// checks once per epoch and no recording.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cabcd_config_new(
    algorithm: CabcdAlgorithm,
    block_size: usize,
    lambda: f64,
    max_iters: usize,
    out: *mut *mut CabcdConfig,
) -> CabcdStatus {
    guard(|| {
        if out.is_null() {
            return fail(CabcdStatus::NullPointer, "out is null");
        }
        let alg = match algorithm {
            CabcdAlgorithm::Cg => Algorithm::Cg,
            CabcdAlgorithm::Bcd => Algorithm::Bcd,
            CabcdAlgorithm::CaBcd => Algorithm::CaBcd,
            CabcdAlgorithm::Bdcd => Algorithm::Bdcd,
            CabcdAlgorithm::CaBdcd => Algorithm::CaBdcd,
        };
        emit(
            out,
            CabcdConfig {
                solver: SolverConfig::new(alg, block_size, lambda, max_iters),
                run: RunOptions::default(),
            },
        );
        CabcdStatus::Ok
    })
}

/// # Safety
/// `config` must come from [`cabcd_config_new`] or be NULL.
#[no_mangle]
pub unsafe extern "C" fn cabcd_config_free(config: *mut CabcdConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Sets the unrolling depth of the CA variants.
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cabcd_config_set_s(config: *mut CabcdConfig, s: usize) -> CabcdStatus {
    guard(|| {
        tryc!(handle_mut(config)).solver.s = s;
        CabcdStatus::Ok
    })
}

/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cabcd_config_set_tol(config: *mut CabcdConfig, tol: f64) -> CabcdStatus {
    guard(|| {
        tryc!(handle_mut(config)).solver.tol = tol;
        CabcdStatus::Ok
    })
}

/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cabcd_config_set_seed(config: *mut CabcdConfig, seed: u64) -> CabcdStatus {
    guard(|| {
        tryc!(handle_mut(config)).solver.seed = seed;
        CabcdStatus::Ok
    })
}

/// Stopping checks every `every` iterations; 0 disables them.
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cabcd_config_set_check_interval(config: *mut CabcdConfig, every: usize) -> CabcdStatus {
    guard(|| {
        tryc!(handle_mut(config)).solver.check_interval = match every {
            0 => CheckInterval::Never,
            k => CheckInterval::Every(k),
        };
        CabcdStatus::Ok
    })
}

/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cabcd_config_set_ranks(
    config: *mut CabcdConfig,
    ranks: usize,
    layout: CabcdLayout,
    backend: CabcdBackend,
) -> CabcdStatus {
    guard(|| {
        let c = tryc!(handle_mut(config));
        if ranks == 0 {
            return fail(CabcdStatus::InvalidArgument, "ranks must be at least 1");
        }
        c.run = RunOptions {
            ranks,
            backend: match backend {
                CabcdBackend::Lockstep => Backend::LockstepSerial,
                CabcdBackend::Threaded => Backend::Threaded,
            },
            layout: match layout {
                CabcdLayout::Natural => None,
                CabcdLayout::Row => Some(LayoutKind::OneDRow),
                CabcdLayout::Column => Some(LayoutKind::OneDColumn),
            },
            all_to_all: AllToAllModel::SmallMessage,
        };
        CabcdStatus::Ok
    })
}

/// Runs the configured solver on `problem`.
///
/// # Safety
/// `problem` and `config` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cabcd_solve(
    problem: *const CabcdProblem,
    config: *const CabcdConfig,
    out: *mut *mut CabcdResult,
) -> CabcdStatus {
    guard(|| {
        let p = tryc!(handle(problem));
        let c = tryc!(handle(config));
        if out.is_null() {
            return fail(CabcdStatus::NullPointer, "out is null");
        }
        match solve(&p.x, &p.y, &c.solver, &c.run) {
            Ok(output) => {
                emit(out, CabcdResult { output });
                CabcdStatus::Ok
            }
            Err(e) => fail(solver_status(&e), e.to_string()),
        }
    })
}

/// # Safety
/// `result` must come from [`cabcd_solve`] or be NULL.
#[no_mangle]
pub unsafe extern "C" fn cabcd_result_free(result: *mut CabcdResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Copies the `d` weights into `buf`. `*written` receives `d` even when the
/// buffer is too small, so a first call with `len = 0` sizes the buffer.
///
/// # Safety
/// `result` must be a live handle, `buf` must hold `len` elements and
/// `written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cabcd_result_weights(
    result: *const CabcdResult,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> CabcdStatus {
    guard(|| {
        let r = tryc!(handle(result));
        if written.is_null() {
            return fail(CabcdStatus::NullPointer, "written is null");
        }
        let w = &r.output.w;
        *written = w.len();
        if len < w.len() {
            return fail(CabcdStatus::BufferTooSmall, format!("need {} elements", w.len()));
        }
        if !w.is_empty() {
            if buf.is_null() {
                return fail(CabcdStatus::NullPointer, "buf is null");
            }
            ptr::copy_nonoverlapping(w.as_ptr(), buf, w.len());
        }
        CabcdStatus::Ok
    })
}

/// # Safety
/// `result` must be a live handle; the out pointers may be NULL.
#[no_mangle]
pub unsafe extern "C" fn cabcd_result_summary(
    result: *const CabcdResult,
    iterations: *mut usize,
    converged: *mut bool,
    counters: *mut CabcdCounters,
) -> CabcdStatus {
    guard(|| {
        let r = &tryc!(handle(result)).output;
        if !iterations.is_null() {
            *iterations = r.iterations;
        }
        if !converged.is_null() {
            *converged = r.converged;
        }
        if !counters.is_null() {
            *counters = CabcdCounters {
                flops: r.counters.flops,
                words: r.counters.words,
                messages: r.counters.messages,
            };
        }
        CabcdStatus::Ok
    })
}
