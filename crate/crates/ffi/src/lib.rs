//! C interface to the donor-qubit simulator.
//!
//! Objects cross the boundary as opaque handles created by `*_new` or
//! `*_from_*` functions and released by the matching `*_free`. Every
//! fallible call returns a [`DqStatus`]; on failure a description is kept
//! per thread and can be read with [`dq_last_error`]. Panics never unwind
//! into C: they are caught and reported as `DQ_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use donor_qubit::config::params_from_str;
use donor_qubit::experiments::{h_prime_at, run, run_in_memory, Manifest};
use donor_qubit::gates::{exact_qubit_splitting, predict_rz_angle, simulate_rz_angle};
use donor_qubit::propagation::{EvolveOptions, Frame};
use donor_qubit::pulses::make_cphase_schedule;
use donor_qubit::twoqubit::{cphase_angle, CphaseOptions, TwoQubitLayout};
use donor_qubit::{Error, SystemParams};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DqStatus {
    Ok = 0,
    /// A required pointer argument was null.
    Null = 1,
    /// Bad parameter, unit, manifest or string encoding.
    InvalidArgument = 2,
    /// The simulation itself failed (convergence, leakage, tracking, root finding).
    Simulation = 3,
    Io = 4,
    /// A Rust panic was caught at the boundary.
    Panic = 5,
}

/// Integration frame for single-qubit simulations.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DqFrame {
    Effective = 0,
    LabOrbital = 1,
    LabPosition = 2,
}

impl From<DqFrame> for Frame {
    fn from(f: DqFrame) -> Frame {
        match f {
            DqFrame::Effective => Frame::Effective,
            DqFrame::LabOrbital => Frame::LabOrbital,
            DqFrame::LabPosition => Frame::LabPosition,
        }
    }
}

/// Device parameters. Opaque.
pub struct DqParams {
    inner: SystemParams,
}

/// A parsed experiment manifest. Opaque.
pub struct DqManifest {
    inner: Manifest,
}

/// Phases of a two-qubit CPHASE operation, in radians.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DqCphaseReport {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub phi: f64,
    pub correction1: f64,
    pub correction2: f64,
    pub nonadiabaticity: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> DqStatus {
    match e {
        Error::InvalidParameter { .. }
        | Error::Unit { .. }
        | Error::Manifest { .. }
        | Error::Parse(_)
        | Error::UnknownLabel(_) => DqStatus::InvalidArgument,
        Error::Io(_) => DqStatus::Io,
        _ => DqStatus::Simulation,
    }
}

/// Internal failure carrying the status to report.
struct Fail(DqStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(DqStatus::Null, format!("`{what}` is null"))
}

/// Runs `f` behind the panic barrier and records any failure.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DqStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DqStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            DqStatus::Panic
        }
    }
}

/// # Safety
/// `p` is null or a valid NUL-terminated string.
unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(DqStatus::InvalidArgument, format!("`{what}` is not valid UTF-8")))
}

/// # Safety
/// `p` is null or points to a live value of type T.
unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

/// # Safety
/// `p` is null or valid for a write of T.
unsafe fn write_out<T>(p: *mut T, what: &str, value: T) -> Result<(), Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(value);
    Ok(())
}

fn into_c_string(s: String) -> Result<*mut c_char, Fail> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Fail(DqStatus::InvalidArgument, "output contains a NUL byte".into()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dq_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn dq_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by the library.
///
/// # Safety
/// `s` is null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dq_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Default device parameters. Never returns null.
#[no_mangle]
pub extern "C" fn dq_params_new() -> *mut DqParams {
    Box::into_raw(Box::new(DqParams {
        inner: SystemParams::default(),
    }))
}

/// Parameters from TOML text with unit-tagged values, e.g.
/// `b0 = "0.25 T"`. Unset keys keep their defaults.
///
/// # Safety
/// `toml_text` is a NUL-terminated string; `out` is valid for a write.
#[no_mangle]
pub unsafe extern "C" fn dq_params_from_toml(toml_text: *const c_char, out: *mut *mut DqParams) -> DqStatus {
    guard(|| {
        let text = str_arg(toml_text, "toml_text")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = params_from_str(text)?;
        write_out(out, "out", Box::into_raw(Box::new(DqParams { inner })))
    })
}

/// # Safety
/// `params` is null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dq_params_free(params: *mut DqParams) {
    if !params.is_null() {
        drop(Box::from_raw(params));
    }
}

/// Reads one parameter in internal units (rad/s, rad/s/T, m, T, V/m).
///
/// # Safety
/// `params` is a live handle, `key` a NUL-terminated string, `out` valid
/// for a write.
#[no_mangle]
pub unsafe extern "C" fn dq_params_get(params: *const DqParams, key: *const c_char, out: *mut f64) -> DqStatus {
    guard(|| {
        let p = &ref_arg(params, "params")?.inner;
        let value = match str_arg(key, "key")? {
            "hyperfine_a" => p.hyperfine_a,
            "gamma_e" => p.gamma_e,
            "gamma_n" => p.gamma_n,
            "delta_gamma" => p.delta_gamma,
            "donor_depth" => p.donor_depth,
            "b0" => p.b0,
            "vt" => p.vt,
            "de_idle" => p.de_idle,
            other => {
                return Err(Fail(DqStatus::InvalidArgument, format!("unknown parameter `{other}`")));
            }
        };
        write_out(out, "out", value)
    })
}

/// Qubit splitting at static field offset `de` (V/m): exact
/// diagonalization and the first-order closed form, both in rad/s.
///
/// # Safety
/// `params` is a live handle; the outputs are valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dq_qubit_splitting(
    params: *const DqParams,
    de: f64,
    exact: *mut f64,
    approx: *mut f64,
) -> DqStatus {
    guard(|| {
        let p = &ref_arg(params, "params")?.inner;
        if !de.is_finite() {
            return Err(Fail(DqStatus::InvalidArgument, "`de` must be finite".into()));
        }
        let e = exact_qubit_splitting(p, de)?;
        write_out(exact, "exact", e)?;
        write_out(approx, "approx", p.qubit_splitting_approx(de))
    })
}

/// dδq/dΔE at `de`, in rad/s per V/m.
///
/// # Safety
/// `params` is a live handle; `out` is valid for a write.
#[no_mangle]
pub unsafe extern "C" fn dq_dephasing_sensitivity(params: *const DqParams, de: f64, out: *mut f64) -> DqStatus {
    guard(|| {
        let p = &ref_arg(params, "params")?.inner;
        write_out(out, "out", p.dephasing_sensitivity(de))
    })
}

/// Z angle of the Rz schedule of the given duration (s): simulated in
/// `frame` and predicted from the phase integral.
///
/// # Safety
/// `params` is a live handle; the outputs are valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dq_rz_angle(
    params: *const DqParams,
    duration: f64,
    frame: DqFrame,
    simulated: *mut f64,
    predicted: *mut f64,
) -> DqStatus {
    guard(|| {
        let p = &ref_arg(params, "params")?.inner;
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(Fail(DqStatus::InvalidArgument, "`duration` must be positive".into()));
        }
        let sim = simulate_rz_angle(p, duration, &EvolveOptions::new(frame.into()), 0.0)?;
        let pred = predict_rz_angle(p, duration)?.unreduced;
        write_out(simulated, "simulated", sim)?;
        write_out(predicted, "predicted", pred)
    })
}

/// Effective Hamiltonian H′ at a static control point, row-major, 64
/// entries each for real and imaginary parts, in rad/s.
///
/// # Safety
/// `params` is a live handle; `re` and `im` each point to 64 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn dq_hprime(
    params: *const DqParams,
    de: f64,
    ea: f64,
    ba: f64,
    re: *mut f64,
    im: *mut f64,
) -> DqStatus {
    guard(|| {
        let p = &ref_arg(params, "params")?.inner;
        if re.is_null() {
            return Err(null("re"));
        }
        if im.is_null() {
            return Err(null("im"));
        }
        let h = h_prime_at(p, de, ea, ba)?;
        let re = std::slice::from_raw_parts_mut(re, 64);
        let im = std::slice::from_raw_parts_mut(im, 64);
        for r in 0..8 {
            for c in 0..8 {
                re[8 * r + c] = h[(r, c)].re;
                im[8 * r + c] = h[(r, c)].im;
            }
        }
        Ok(())
    })
}

/// CPHASE phases for two identical donors `separation` metres apart, both
/// driven by the default smooth schedule of the given duration (s).
///
/// # Safety
/// `params` is a live handle; `out` is valid for a write.
#[no_mangle]
pub unsafe extern "C" fn dq_cphase(
    params: *const DqParams,
    separation: f64,
    duration: f64,
    out: *mut DqCphaseReport,
) -> DqStatus {
    guard(|| {
        let p = &ref_arg(params, "params")?.inner;
        let layout = TwoQubitLayout {
            separation,
            qubits: [*p; 2],
            coupling_override: None,
        };
        let s = make_cphase_schedule(p, duration)?;
        let rep = cphase_angle(&layout, [&s, &s], [0.0; 2], &CphaseOptions::default())?;
        write_out(
            out,
            "out",
            DqCphaseReport {
                alpha: rep.alpha,
                beta: rep.beta,
                gamma: rep.gamma,
                delta: rep.delta,
                phi: rep.phi,
                correction1: rep.local_corrections[0],
                correction2: rep.local_corrections[1],
                nonadiabaticity: rep.nonadiabaticity,
            },
        )
    })
}

/// Parses a manifest from TOML text.
///
/// # Safety
/// `toml_text` is a NUL-terminated string; `out` is valid for a write.
#[no_mangle]
pub unsafe extern "C" fn dq_manifest_from_toml(toml_text: *const c_char, out: *mut *mut DqManifest) -> DqStatus {
    guard(|| {
        let inner = Manifest::from_toml(str_arg(toml_text, "toml_text")?)?;
        write_out(out, "out", Box::into_raw(Box::new(DqManifest { inner })))
    })
}

/// Reads and parses a manifest file.
///
/// # Safety
/// `path` is a NUL-terminated string; `out` is valid for a write.
#[no_mangle]
pub unsafe extern "C" fn dq_manifest_load(path: *const c_char, out: *mut *mut DqManifest) -> DqStatus {
    guard(|| {
        let inner = Manifest::load(&PathBuf::from(str_arg(path, "path")?))?;
        write_out(out, "out", Box::into_raw(Box::new(DqManifest { inner })))
    })
}

/// # Safety
/// `manifest` is null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dq_manifest_free(manifest: *mut DqManifest) {
    if !manifest.is_null() {
        drop(Box::from_raw(manifest));
    }
}

/// Checks a manifest without running it.
///
/// # Safety
/// `manifest` is a live handle.
#[no_mangle]
pub unsafe extern "C" fn dq_manifest_validate(manifest: *const DqManifest) -> DqStatus {
    guard(|| {
        ref_arg(manifest, "manifest")?.inner.validate()?;
        Ok(())
    })
}

/// Runs a manifest. With `write_file` the output file named in the
/// manifest is written. When `text` is non-null it receives the rendered
/// output, to be released with [`dq_string_free`].
///
/// # Safety
/// `manifest` is a live handle; `text` is null or valid for a write.
#[no_mangle]
pub unsafe extern "C" fn dq_manifest_run(
    manifest: *const DqManifest,
    write_file: bool,
    text: *mut *mut c_char,
) -> DqStatus {
    guard(|| {
        let m = &ref_arg(manifest, "manifest")?.inner;
        let out = if write_file { run(m)? } else { run_in_memory(m)? };
        if !text.is_null() {
            text.write(into_c_string(out.rendered)?);
        }
        Ok(())
    })
}
