//! C ABI over `lipext`.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`*_from_*`
//! functions and released by the matching `*_free`. Every fallible call
//! returns a [`LipextStatus`]; on failure the message is available from
//! [`lipext_last_error_message`] on the same thread. Matrices are dense,
//! row-major `double` arrays.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use lipext::extension::{build_operator, operator_norm_exact, ExtensionOperator};
use lipext::free_space::{kr_norm, BalancedChain};
use lipext::generators::gen_path;
use lipext::measures::{consistency, family_doubling, resolve_r_max, uniformity, MeasureFamily};
use lipext::metric::{matrix_from_rows, FiniteMetricSpace};
use lipext::Error;
use ndarray::Array2;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LipextStatus {
    Ok = 0,
    NullPointer = 1,
    Parameter = 2,
    Format = 3,
    InvariantViolation = 4,
    PremiseViolation = 5,
    Solver = 6,
    Io = 7,
    Panic = 8,
}

/// A validated finite metric space.
pub struct LipextSpace {
    inner: Arc<FiniteMetricSpace>,
}

/// One measure per point of a space.
pub struct LipextFamily {
    inner: Arc<MeasureFamily>,
}

/// The extension matrix for a family and a subset.
pub struct LipextOperator {
    inner: ExtensionOperator,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> LipextStatus {
    match e {
        Error::Parameter(_) => LipextStatus::Parameter,
        Error::Format(_) | Error::Json(_) => LipextStatus::Format,
        Error::InvariantViolation(_) => LipextStatus::InvariantViolation,
        Error::PremiseViolation(_) => LipextStatus::PremiseViolation,
        Error::Solver(_) => LipextStatus::Solver,
        Error::Io(_) => LipextStatus::Io,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LipextStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LipextStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(&format!("null pointer: {what}"));
            LipextStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            LipextStatus::Panic
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

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &'static str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn check_len(got: usize, want: usize, what: &str) -> Result<(), Failure> {
    if got != want {
        return Err(Error::Parameter(format!("{what}: expected length {want}, got {got}")).into());
    }
    Ok(())
}

/// Message of the last failed call on this thread. Valid until the next
/// failing call on the same thread; never NULL.
#[no_mangle]
pub extern "C" fn lipext_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lipext_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a space from an `n x n` row-major distance matrix, validating the
/// metric axioms.
///
/// # Safety
/// `dist` must point to `n * n` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lipext_space_from_matrix(
    dist: *const f64,
    n: usize,
    out: *mut *mut LipextSpace,
) -> LipextStatus {
    guard(|| {
        let d = slice(dist, n * n, "dist")?;
        let rows: Vec<Vec<f64>> = d.chunks(n.max(1)).map(<[f64]>::to_vec).collect();
        let space = FiniteMetricSpace::from_matrix(matrix_from_rows(&rows)?)?;
        store(out, LipextSpace { inner: Arc::new(space) })
    })
}

/// Parses a `lipext/1` space document (explicit matrix or generator).
///
/// # Safety
/// `json` must be a valid NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lipext_space_from_json(json: *const c_char, out: *mut *mut LipextSpace) -> LipextStatus {
    guard(|| {
        if json.is_null() {
            return Err(Failure::Null("json"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|_| Error::Format("space document is not UTF-8".into()))?;
        let value = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        let space = lipext::io::parse_space(&value)?;
        store(out, LipextSpace { inner: Arc::new(space) })
    })
}

/// Unit-spaced path with `n` points.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lipext_space_path(n: usize, out: *mut *mut LipextSpace) -> LipextStatus {
    guard(|| store(out, LipextSpace { inner: Arc::new(gen_path(n)?) }))
}

/// # Safety
/// `space` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lipext_space_size(space: *const LipextSpace, out: *mut usize) -> LipextStatus {
    guard(|| {
        let s = deref(space, "space")?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        *out = s.inner.size();
        Ok(())
    })
}

/// # Safety
/// `space` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lipext_space_free(space: *mut LipextSpace) {
    if !space.is_null() {
        drop(Box::from_raw(space));
    }
}

unsafe fn new_family(
    space: *const LipextSpace,
    out: *mut *mut LipextFamily,
    make: impl FnOnce(Arc<FiniteMetricSpace>) -> lipext::Result<MeasureFamily>,
) -> LipextStatus {
    guard(|| {
        let s = deref(space, "space")?;
        let family = make(Arc::clone(&s.inner))?;
        store(out, LipextFamily { inner: Arc::new(family) })
    })
}

/// Counting measure at every point.
///
/// # Safety
/// `space` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lipext_family_counting(
    space: *const LipextSpace,
    out: *mut *mut LipextFamily,
) -> LipextStatus {
    new_family(space, out, |s| Ok(MeasureFamily::counting(s)))
}

/// `mu_m = delta_m`.
///
/// # Safety
/// `space` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lipext_family_dirac(space: *const LipextSpace, out: *mut *mut LipextFamily) -> LipextStatus {
    new_family(space, out, |s| Ok(MeasureFamily::dirac(s)))
}

/// `w_m(x) = exp(-d(m, x) / scale)`.
///
/// # Safety
/// `space` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lipext_family_kernel(
    space: *const LipextSpace,
    scale: f64,
    out: *mut *mut LipextFamily,
) -> LipextStatus {
    new_family(space, out, |s| MeasureFamily::kernel(s, scale))
}

/// Explicit `n x n` row-major weights, row = center.
///
/// # Safety
/// `weights` must point to `n * n` readable doubles where `n` is the space
/// size; `space` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lipext_family_from_weights(
    space: *const LipextSpace,
    weights: *const f64,
    len: usize,
    out: *mut *mut LipextFamily,
) -> LipextStatus {
    guard(|| {
        let s = deref(space, "space")?;
        let n = s.inner.size();
        check_len(len, n * n, "weights")?;
        let w = slice(weights, len, "weights")?;
        let arr = ndarray_from(w, n, n);
        let family = MeasureFamily::new(Arc::clone(&s.inner), arr)?;
        store(out, LipextFamily { inner: Arc::new(family) })
    })
}

fn ndarray_from(data: &[f64], rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |(i, j)| data[i * cols + j])
}

/// Doubling `D`, consistency `C` on `(0, r_max]` and uniformity `K`. A
/// nonpositive `r_max` selects the diameter. Any output pointer may be NULL.
///
/// # Safety
/// `family` must be a live handle; non-NULL outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn lipext_family_constants(
    family: *const LipextFamily,
    r_max: f64,
    doubling: *mut f64,
    consistency_out: *mut f64,
    uniformity_out: *mut f64,
) -> LipextStatus {
    guard(|| {
        let f = &deref(family, "family")?.inner;
        let r = resolve_r_max(f.base(), (r_max > 0.0).then_some(r_max));
        let d = family_doubling(f)?;
        let c = consistency(f, r)?;
        let k = uniformity(f);
        if let Some(p) = doubling.as_mut() {
            *p = d;
        }
        if let Some(p) = consistency_out.as_mut() {
            *p = c;
        }
        if let Some(p) = uniformity_out.as_mut() {
            *p = k;
        }
        Ok(())
    })
}

/// # Safety
/// `family` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lipext_family_free(family: *mut LipextFamily) {
    if !family.is_null() {
        drop(Box::from_raw(family));
    }
}

/// Builds the extension operator for `subset` (point indices, any order,
/// duplicates ignored).
///
/// # Safety
/// `subset` must point to `len` readable indices; `family` must be a live
/// handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lipext_operator_build(
    family: *const LipextFamily,
    subset: *const usize,
    len: usize,
    out: *mut *mut LipextOperator,
) -> LipextStatus {
    guard(|| {
        let f = deref(family, "family")?;
        let s = slice(subset, len, "subset")?;
        let op = build_operator(&f.inner, s)?;
        store(out, LipextOperator { inner: op })
    })
}

/// Number of points `M` and of subset points `|S|`; the subset is sorted.
///
/// # Safety
/// `op` must be a live handle; non-NULL outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn lipext_operator_shape(
    op: *const LipextOperator,
    points: *mut usize,
    subset_size: *mut usize,
) -> LipextStatus {
    guard(|| {
        let o = &deref(op, "op")?.inner;
        if let Some(p) = points.as_mut() {
            *p = o.space().size();
        }
        if let Some(p) = subset_size.as_mut() {
            *p = o.subset().len();
        }
        Ok(())
    })
}

/// Copies the sorted subset into `out` (`len` must equal `|S|`).
///
/// # Safety
/// `out` must point to `len` writable indices.
#[no_mangle]
pub unsafe extern "C" fn lipext_operator_subset(op: *const LipextOperator, out: *mut usize, len: usize) -> LipextStatus {
    guard(|| {
        let o = &deref(op, "op")?.inner;
        check_len(len, o.subset().len(), "subset")?;
        slice_mut(out, len, "out")?.copy_from_slice(o.subset());
        Ok(())
    })
}

/// Copies the `M x |S|` matrix into `out`, row-major.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn lipext_operator_matrix(op: *const LipextOperator, out: *mut f64, len: usize) -> LipextStatus {
    guard(|| {
        let o = &deref(op, "op")?.inner;
        let m = o.matrix();
        check_len(len, m.len(), "matrix")?;
        let dst = slice_mut(out, len, "out")?;
        for (d, v) in dst.iter_mut().zip(m.iter()) {
            *d = *v;
        }
        Ok(())
    })
}

/// `F = E f` for `f` given as `|S| x k` (rows in sorted subset order),
/// written as `M x k` into `out`.
///
/// # Safety
/// `f` must point to `|S| * k` readable doubles and `out` to `out_len`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn lipext_operator_apply(
    op: *const LipextOperator,
    f: *const f64,
    k: usize,
    out: *mut f64,
    out_len: usize,
) -> LipextStatus {
    guard(|| {
        let o = &deref(op, "op")?.inner;
        let s = o.subset().len();
        if k == 0 {
            return Err(Error::Parameter("value dimension k must be positive".into()).into());
        }
        check_len(out_len, o.space().size() * k, "out")?;
        let values = ndarray_from(slice(f, s * k, "f")?, s, k);
        let ext = o.apply(&values)?;
        for (d, v) in slice_mut(out, out_len, "out")?.iter_mut().zip(ext.iter()) {
            *d = *v;
        }
        Ok(())
    })
}

/// Exact operator norm for scalar data. `degenerate` is set to 1 when
/// `|S| = 1` (the norm is then reported as 0). Either output may be NULL.
///
/// # Safety
/// `op` must be a live handle; non-NULL outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn lipext_operator_norm(
    op: *const LipextOperator,
    value: *mut f64,
    degenerate: *mut i32,
) -> LipextStatus {
    guard(|| {
        let o = &deref(op, "op")?.inner;
        let norm = operator_norm_exact(o)?;
        if let Some(p) = value.as_mut() {
            *p = norm.value;
        }
        if let Some(p) = degenerate.as_mut() {
            *p = i32::from(norm.degenerate);
        }
        Ok(())
    })
}

/// # Safety
/// `op` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lipext_operator_free(op: *mut LipextOperator) {
    if !op.is_null() {
        drop(Box::from_raw(op));
    }
}

/// Transport norm of the balanced chain `sum coeffs[i] delta(i)`.
///
/// # Safety
/// `coeffs` must point to `len` readable doubles (`len` = space size);
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lipext_kr_norm(
    space: *const LipextSpace,
    coeffs: *const f64,
    len: usize,
    out: *mut f64,
) -> LipextStatus {
    guard(|| {
        let s = &deref(space, "space")?.inner;
        let c = slice(coeffs, len, "coeffs")?;
        let chain = BalancedChain::new(s, c.to_vec())?;
        let value = kr_norm(s, &chain)?.value;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        *out = value;
        Ok(())
    })
}
