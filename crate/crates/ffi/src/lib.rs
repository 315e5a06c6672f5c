//! C ABI for `spectral-mds`.
//!
//! Matrices are opaque handles created by `mds_matrix_gaussian` or
//! `mds_matrix_subsampling` and released with `mds_matrix_free`. Every other
//! call returns an [`MdsStatus`]; on failure `mds_last_error_message` describes
//! the most recent error on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use spectral_mds::estimator::{estimate_sinusoid, EstimatorConfig};
use spectral_mds::model::{SignalModel, SinusoidParams};
use spectral_mds::recovery::{recover, RecoveryConfig};
use spectral_mds::sensing::{Measurement, SensingMatrix};
use spectral_mds::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MdsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    DimensionMismatch = 3,
    ZeroSignal = 4,
    RankDeficient = 5,
    BufferTooSmall = 6,
    Internal = 7,
}

/// One component `amplitude * sin(omega * t + phase)`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MdsSinusoid {
    pub omega: f64,
    pub amplitude: f64,
    pub phase: f64,
}

/// Opaque sensing matrix handle.
pub struct MdsMatrix {
    inner: SensingMatrix,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> MdsStatus {
    match e {
        Error::InvalidParameter(_)
        | Error::RejectionBudget { .. }
        | Error::CountMismatch { .. } => MdsStatus::InvalidParameter,
        Error::DimensionMismatch { .. } => MdsStatus::DimensionMismatch,
        Error::ZeroSignal(_) => MdsStatus::ZeroSignal,
        Error::RankDeficient { .. } => MdsStatus::RankDeficient,
        _ => MdsStatus::Internal,
    }
}

struct Fail(MdsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(MdsStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> MdsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            MdsStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            MdsStatus::Internal
        }
    }
}

unsafe fn input<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn output<'a>(
    p: *mut f64,
    cap: usize,
    need: usize,
    what: &str,
) -> Result<&'a mut [f64], Fail> {
    if cap < need {
        return Err(Fail(
            MdsStatus::BufferTooSmall,
            format!("{what} holds {cap} values, {need} required"),
        ));
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, need))
}

unsafe fn handle<'a>(h: *const MdsMatrix) -> Result<&'a SensingMatrix, Fail> {
    h.as_ref().map(|m| &m.inner).ok_or_else(|| null("matrix"))
}

fn to_c(p: &SinusoidParams) -> MdsSinusoid {
    MdsSinusoid {
        omega: p.omega(),
        amplitude: p.amplitude(),
        phase: p.phase(),
    }
}

unsafe fn new_matrix(
    out: *mut *mut MdsMatrix,
    build: impl FnOnce() -> spectral_mds::Result<SensingMatrix>,
) -> MdsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let inner = build()?;
        *out = Box::into_raw(Box::new(MdsMatrix { inner }));
        Ok(())
    })
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn mds_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Creates an `m x n` matrix with i.i.d. `N(0, 1/m)` entries drawn from `seed`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn mds_matrix_gaussian(
    m: usize,
    n: usize,
    seed: u64,
    out: *mut *mut MdsMatrix,
) -> MdsStatus {
    new_matrix(out, || SensingMatrix::gaussian(m, n, seed))
}

/// Creates an `m x n` matrix whose rows are distinct basis vectors chosen by `seed`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn mds_matrix_subsampling(
    m: usize,
    n: usize,
    seed: u64,
    out: *mut *mut MdsMatrix,
) -> MdsStatus {
    new_matrix(out, || SensingMatrix::subsampling(m, n, seed))
}

/// Releases a handle. Null is accepted and ignored.
///
/// # Safety
/// `matrix` must be null or a handle returned by this library that has not
/// been freed yet.
#[no_mangle]
pub unsafe extern "C" fn mds_matrix_free(matrix: *mut MdsMatrix) {
    if !matrix.is_null() {
        drop(Box::from_raw(matrix));
    }
}

/// Number of rows, or 0 for a null handle.
///
/// # Safety
/// `matrix` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mds_matrix_rows(matrix: *const MdsMatrix) -> usize {
    matrix.as_ref().map_or(0, |m| m.inner.rows())
}

/// Number of columns, or 0 for a null handle.
///
/// # Safety
/// `matrix` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mds_matrix_cols(matrix: *const MdsMatrix) -> usize {
    matrix.as_ref().map_or(0, |m| m.inner.cols())
}

/// Writes `Phi x` (length `rows`) into `out`.
///
/// # Safety
/// `x` must point to `x_len` readable doubles and `out` to `out_len`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn mds_measure(
    matrix: *const MdsMatrix,
    x: *const f64,
    x_len: usize,
    out: *mut f64,
    out_len: usize,
) -> MdsStatus {
    guard(|| {
        let phi = handle(matrix)?;
        let x = input(x, x_len, "x")?;
        let m = phi.measure(x)?;
        output(out, out_len, m.len(), "out")?.copy_from_slice(&m.values);
        Ok(())
    })
}

/// Writes `sum_j a_j sin(w_j t + p_j)` for `t = 1..=n` into `out`.
///
/// # Safety
/// `components` must point to `k` readable records and `out` to `n`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn mds_synthesize(
    components: *const MdsSinusoid,
    k: usize,
    n: usize,
    out: *mut f64,
) -> MdsStatus {
    guard(|| {
        let comps = if k == 0 {
            &[][..]
        } else if components.is_null() {
            return Err(null("components"));
        } else {
            std::slice::from_raw_parts(components, k)
        };
        let params = comps
            .iter()
            .map(|c| SinusoidParams::new(c.omega, c.amplitude, c.phase))
            .collect::<spectral_mds::Result<Vec<_>>>()?;
        let model = SignalModel::from_estimates(n, params)?;
        output(out, n, n, "out")?.copy_from_slice(&model.synthesize());
        Ok(())
    })
}

/// Best single sinusoid for the residual `r` (length `rows`) with the default
/// estimator settings. `residual_sq` may be null.
///
/// # Safety
/// `r` must point to `r_len` readable doubles; `out` must be writable;
/// `residual_sq` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn mds_estimate_sinusoid(
    matrix: *const MdsMatrix,
    r: *const f64,
    r_len: usize,
    out: *mut MdsSinusoid,
    residual_sq: *mut f64,
) -> MdsStatus {
    guard(|| {
        let phi = handle(matrix)?;
        let r = input(r, r_len, "r")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let est = estimate_sinusoid(phi, r, &EstimatorConfig::default())?;
        *out = to_c(&est.params);
        if !residual_sq.is_null() {
            *residual_sq = est.residual_sq;
        }
        Ok(())
    })
}

/// Recovers `k` sinusoids from the measurement `m` (length `rows`).
///
/// `max_sweeps = 0` selects the library default. The components go to
/// `out_components` (capacity `k`); `out_signal` (length `cols`) and
/// `final_residual` may be null.
///
/// # Safety
/// All non-null pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn mds_recover(
    matrix: *const MdsMatrix,
    m: *const f64,
    m_len: usize,
    k: usize,
    max_sweeps: usize,
    out_components: *mut MdsSinusoid,
    out_signal: *mut f64,
    final_residual: *mut f64,
) -> MdsStatus {
    guard(|| {
        let phi = handle(matrix)?;
        let values = input(m, m_len, "m")?.to_vec();
        if out_components.is_null() {
            return Err(null("out_components"));
        }
        let mut cfg = RecoveryConfig::new(k);
        if max_sweeps > 0 {
            cfg.max_sweeps = max_sweeps;
        }
        let res = recover(phi, &Measurement::new(values, phi.seed()), &cfg)?;
        let comps = std::slice::from_raw_parts_mut(out_components, k);
        for (dst, src) in comps.iter_mut().zip(res.model.components()) {
            *dst = to_c(src);
        }
        if !out_signal.is_null() {
            std::slice::from_raw_parts_mut(out_signal, res.signal.len())
                .copy_from_slice(&res.signal);
        }
        if !final_residual.is_null() {
            *final_residual = res.final_residual_norm;
        }
        Ok(())
    })
}
