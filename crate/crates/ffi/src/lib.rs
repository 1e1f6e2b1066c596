//! C ABI over `pencil-core`.
//!
//! Tuples and decompositions cross the boundary as opaque handles that the
//! caller releases with the matching `*_free`. Every entry point returns a
//! [`PencilStatus`] (or a plain value for infallible getters) and never
//! unwinds into C; on failure a message is kept per thread and can be read
//! with [`pencil_last_error`].
//!
//! Matrices are exchanged as `2·dim²` doubles: row-major, each entry stored
//! as a real part followed by an imaginary part.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use pencil_core::conditions::{analyze, AnalyzeOptions, Overall};
use pencil_core::decomposer::decompose;
use pencil_core::instances::{generate, Family};
use pencil_core::io::{TupleFile, TupleMetadata};
use pencil_core::linalg::c64;
use pencil_core::{CMat, DecompositionResult, HermitianTuple, PencilError};

/// Outcome of a call. The first four values agree with the `pencil` exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PencilStatus {
    Ok = 0,
    /// The tuple was tested and is not a direct sum of identical copies.
    ConditionsFailed = 1,
    /// A hypothesis of the test does not hold, e.g. `k` does not divide the dimension.
    PreconditionViolated = 2,
    /// I/O or format failure.
    Error = 3,
    NullPointer = 4,
    InvalidArgument = 5,
    Numerical = 6,
    /// A Rust panic was caught at the boundary.
    Panic = 7,
}

/// Opaque Hermitian tuple.
pub struct PencilTuple(HermitianTuple);

/// Opaque result of a successful decomposition.
pub struct PencilDecomposition(DecompositionResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = CString::new(text).ok());
}

fn clear_last_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

fn status_for(e: &PencilError) -> PencilStatus {
    match e {
        PencilError::InvalidArgument(_)
        | PencilError::DimensionMismatch(_)
        | PencilError::IndexOutOfRange { .. }
        | PencilError::NotHermitian { .. }
        | PencilError::NonFinite => PencilStatus::InvalidArgument,
        PencilError::NumericalBreakdown(_) | PencilError::BranchTrackingLost { .. } => PencilStatus::Numerical,
        e if e.is_structural() => PencilStatus::ConditionsFailed,
        e if e.is_precondition() => PencilStatus::PreconditionViolated,
        _ => PencilStatus::Error,
    }
}

fn fail(e: PencilError) -> PencilStatus {
    let status = status_for(&e);
    set_last_error(e.to_string());
    status
}

/// Runs `body` with the error slot cleared, turning panics into [`PencilStatus::Panic`].
fn guard(body: impl FnOnce() -> PencilStatus) -> PencilStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let detail = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {detail}"));
            PencilStatus::Panic
        }
    }
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            set_last_error(concat!("`", stringify!($p), "` is null"));
            return PencilStatus::NullPointer;
        })+
    };
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, PencilStatus> {
    match CStr::from_ptr(p).to_str() {
        Ok(s) => Ok(Path::new(s)),
        Err(_) => {
            set_last_error("path is not valid UTF-8");
            Err(PencilStatus::InvalidArgument)
        }
    }
}

fn write_matrix(m: &CMat, out: *mut f64, out_len: usize) -> PencilStatus {
    let (rows, cols) = m.shape();
    let need = 2 * rows * cols;
    if out_len < need {
        set_last_error(format!("output buffer holds {out_len} doubles, {need} needed"));
        return PencilStatus::InvalidArgument;
    }
    // SAFETY: the caller guarantees `out` addresses `out_len ≥ need` doubles.
    let buf = unsafe { std::slice::from_raw_parts_mut(out, need) };
    for r in 0..rows {
        for c in 0..cols {
            let z = m[(r, c)];
            buf[2 * (r * cols + c)] = z.re;
            buf[2 * (r * cols + c) + 1] = z.im;
        }
    }
    PencilStatus::Ok
}

fn boxed<T>(value: T, out: *mut *mut T) -> PencilStatus {
    // SAFETY: `out` was checked non-null by the caller.
    unsafe { *out = Box::into_raw(Box::new(value)) };
    PencilStatus::Ok
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn pencil_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pencil_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a tuple from `m` consecutive `dim×dim` matrices in the interleaved
/// layout (`2·m·dim²` doubles). Each matrix must be Hermitian.
///
/// # Safety
/// `data` must address `2·m·dim²` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pencil_tuple_new(
    dim: usize,
    m: usize,
    data: *const f64,
    out: *mut *mut PencilTuple,
) -> PencilStatus {
    guard(|| {
        non_null!(data, out);
        if dim == 0 || m == 0 {
            set_last_error("dim and m must be positive");
            return PencilStatus::InvalidArgument;
        }
        let values = std::slice::from_raw_parts(data, 2 * m * dim * dim);
        let matrices = values
            .chunks_exact(2 * dim * dim)
            .map(|block| CMat::from_fn(dim, dim, |r, c| c64(block[2 * (r * dim + c)], block[2 * (r * dim + c) + 1])))
            .collect();
        match HermitianTuple::new(matrices) {
            Ok(t) => boxed(PencilTuple(t), out),
            Err(e) => fail(e),
        }
    })
}

/// Reads a tuple file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pencil_tuple_load(path: *const c_char, out: *mut *mut PencilTuple) -> PencilStatus {
    guard(|| {
        non_null!(path, out);
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match TupleFile::load(path).and_then(|f| f.to_tuple(false)) {
            Ok(t) => boxed(PencilTuple(t), out),
            Err(e) => fail(e),
        }
    })
}

/// Writes a tuple file atomically.
///
/// # Safety
/// `tuple` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn pencil_tuple_save(tuple: *const PencilTuple, path: *const c_char) -> PencilStatus {
    guard(|| {
        non_null!(tuple, path);
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match TupleFile::from_tuple(&(*tuple).0, TupleMetadata::default()).save(path) {
            Ok(()) => PencilStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// Generates an instance. `family` is `decomposable`, `conjugate_negative`
/// or `commuting`.
///
/// # Safety
/// `family` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pencil_tuple_generate(
    family: *const c_char,
    n: usize,
    k: usize,
    m: usize,
    seed: u64,
    out: *mut *mut PencilTuple,
) -> PencilStatus {
    guard(|| {
        non_null!(family, out);
        let family = match CStr::from_ptr(family).to_str().map_err(|_| ()).and_then(|s| s.parse::<Family>().map_err(|_| ())) {
            Ok(f) => f,
            Err(()) => {
                set_last_error("unknown family");
                return PencilStatus::InvalidArgument;
            }
        };
        match generate(family, n, k, m, seed) {
            Ok((t, _)) => boxed(PencilTuple(t), out),
            Err(e) => fail(e),
        }
    })
}

/// Matrix dimension, or 0 for a null handle.
///
/// # Safety
/// `tuple` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn pencil_tuple_dim(tuple: *const PencilTuple) -> usize {
    tuple.as_ref().map_or(0, |t| t.0.dim())
}

/// Number of matrices, or 0 for a null handle.
///
/// # Safety
/// `tuple` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn pencil_tuple_len(tuple: *const PencilTuple) -> usize {
    tuple.as_ref().map_or(0, |t| t.0.len())
}

/// Copies matrix `index` (0-based) into `out`.
///
/// # Safety
/// `tuple` must come from this library; `out` must address `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pencil_tuple_matrix(
    tuple: *const PencilTuple,
    index: usize,
    out: *mut f64,
    out_len: usize,
) -> PencilStatus {
    guard(|| {
        non_null!(tuple, out);
        let t = &(*tuple).0;
        if index >= t.len() {
            return fail(PencilError::IndexOutOfRange { index, limit: t.len() });
        }
        write_matrix(&t.matrices()[index], out, out_len)
    })
}

/// Releases a tuple. Null is ignored.
///
/// # Safety
/// `tuple` must be null or an unreleased handle from this library.
#[no_mangle]
pub unsafe extern "C" fn pencil_tuple_free(tuple: *mut PencilTuple) {
    if !tuple.is_null() {
        drop(Box::from_raw(tuple));
    }
}

fn options(seed: u64) -> AnalyzeOptions {
    AnalyzeOptions {
        seed,
        ..AnalyzeOptions::default()
    }
}

/// Runs the word test with default options. Returns `Ok` when every word
/// passes, `ConditionsFailed` or `PreconditionViolated` for a negative
/// verdict, and an error status when the test itself could not finish.
///
/// # Safety
/// `tuple` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn pencil_analyze(tuple: *const PencilTuple, k: usize, seed: u64) -> PencilStatus {
    guard(|| {
        non_null!(tuple);
        let report = analyze(&(*tuple).0, k, &options(seed));
        if let Some(first) = report.errors.first() {
            set_last_error(first.clone());
            return PencilStatus::Error;
        }
        match report.overall {
            Overall::Pass => PencilStatus::Ok,
            Overall::Fail => {
                set_last_error(format!("{} failing word(s)", report.failing_words.len()));
                PencilStatus::ConditionsFailed
            }
            Overall::PreconditionViolated => {
                set_last_error(report.precondition_detail.clone().unwrap_or_default());
                PencilStatus::PreconditionViolated
            }
        }
    })
}

/// Like [`pencil_analyze`] but always produces the full JSON report in
/// `*json_out`, to be released with [`pencil_string_free`]. The status
/// reflects only whether the report could be produced.
///
/// # Safety
/// `tuple` must come from this library; `json_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pencil_analyze_json(
    tuple: *const PencilTuple,
    k: usize,
    seed: u64,
    json_out: *mut *mut c_char,
) -> PencilStatus {
    guard(|| {
        non_null!(tuple, json_out);
        let report = analyze(&(*tuple).0, k, &options(seed));
        match serde_json::to_string_pretty(&report) {
            Ok(text) => {
                *json_out = CString::new(text).expect("JSON has no interior NUL").into_raw();
                PencilStatus::Ok
            }
            Err(e) => fail(e.into()),
        }
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or an unreleased string from this library.
#[no_mangle]
pub unsafe extern "C" fn pencil_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Splits the tuple into `k` identical copies.
///
/// # Safety
/// `tuple` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pencil_decompose(
    tuple: *const PencilTuple,
    k: usize,
    seed: u64,
    out: *mut *mut PencilDecomposition,
) -> PencilStatus {
    guard(|| {
        non_null!(tuple, out);
        match decompose(&(*tuple).0, k, seed) {
            Ok(d) => boxed(PencilDecomposition(d), out),
            Err(e) => fail(e),
        }
    })
}

/// `max_l ‖Q A_l Q* − I_k ⊗ B_l‖_F`, or NaN for a null handle.
///
/// # Safety
/// `d` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn pencil_decomposition_residual(d: *const PencilDecomposition) -> f64 {
    d.as_ref().map_or(f64::NAN, |d| d.0.residual)
}

/// Dimension `n` of the reduced matrices, or 0 for a null handle.
///
/// # Safety
/// `d` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn pencil_decomposition_reduced_dim(d: *const PencilDecomposition) -> usize {
    d.as_ref().map_or(0, |d| d.0.n)
}

/// Copies reduced matrix `index` (`n×n`) into `out`.
///
/// # Safety
/// `d` must come from this library; `out` must address `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pencil_decomposition_reduced_matrix(
    d: *const PencilDecomposition,
    index: usize,
    out: *mut f64,
    out_len: usize,
) -> PencilStatus {
    guard(|| {
        non_null!(d, out);
        let reduced = &(*d).0.reduced;
        match reduced.get(index) {
            Some(b) => write_matrix(b, out, out_len),
            None => fail(PencilError::IndexOutOfRange { index, limit: reduced.len() }),
        }
    })
}

/// Copies the reducing unitary `Q` (`nk×nk`, with `Q A_l Q* = I_k ⊗ B_l`) into `out`.
///
/// # Safety
/// `d` must come from this library; `out` must address `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pencil_decomposition_unitary(
    d: *const PencilDecomposition,
    out: *mut f64,
    out_len: usize,
) -> PencilStatus {
    guard(|| {
        non_null!(d, out);
        write_matrix(&(*d).0.unitary(), out, out_len)
    })
}

/// Releases a decomposition. Null is ignored.
///
/// # Safety
/// `d` must be null or an unreleased handle from this library.
#[no_mangle]
pub unsafe extern "C" fn pencil_decomposition_free(d: *mut PencilDecomposition) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

