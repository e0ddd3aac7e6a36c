use std::ffi::{CStr, CString};
use std::ptr;

use donor_qubit_ffi::*;

fn last_error() -> String {
    let p = dq_last_error();
    assert!(!p.is_null(), "expected an error message");
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(dq_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn params_round_trip_through_handles() {
    let text = CString::new("b0 = \"0.25 T\"\nhyperfine_a = \"100 MHz\"").unwrap();
    let mut p: *mut DqParams = ptr::null_mut();
    assert_eq!(unsafe { dq_params_from_toml(text.as_ptr(), &mut p) }, DqStatus::Ok);
    assert!(!p.is_null());
    let key = CString::new("hyperfine_a").unwrap();
    let mut a = 0.0;
    assert_eq!(unsafe { dq_params_get(p, key.as_ptr(), &mut a) }, DqStatus::Ok);
    assert!((a - std::f64::consts::TAU * 100e6).abs() < 1e-3);
    let key = CString::new("b0").unwrap();
    let mut b = 0.0;
    assert_eq!(unsafe { dq_params_get(p, key.as_ptr(), &mut b) }, DqStatus::Ok);
    assert_eq!(b, 0.25);
    unsafe { dq_params_free(p) };
}

#[test]
fn bad_units_map_to_invalid_argument_with_message() {
    let text = CString::new("b0 = 0.25").unwrap();
    let mut p: *mut DqParams = ptr::null_mut();
    assert_eq!(
        unsafe { dq_params_from_toml(text.as_ptr(), &mut p) },
        DqStatus::InvalidArgument
    );
    assert!(p.is_null());
    assert!(last_error().contains("b0"));

    let q = dq_params_new();
    let key = CString::new("nonsense").unwrap();
    let mut x = 0.0;
    assert_eq!(
        unsafe { dq_params_get(q, key.as_ptr(), &mut x) },
        DqStatus::InvalidArgument
    );
    unsafe { dq_params_free(q) };
}

#[test]
fn null_arguments_are_reported() {
    let mut x = 0.0;
    let mut y = 0.0;
    assert_eq!(
        unsafe { dq_qubit_splitting(ptr::null(), 0.0, &mut x, &mut y) },
        DqStatus::Null
    );
    assert!(last_error().contains("params"));
    let p = dq_params_new();
    assert_eq!(
        unsafe { dq_qubit_splitting(p, 0.0, ptr::null_mut(), &mut y) },
        DqStatus::Null
    );
    assert_eq!(
        unsafe { dq_params_from_toml(ptr::null(), ptr::null_mut()) },
        DqStatus::Null
    );
    unsafe { dq_params_free(p) };
    // freeing null is a no-op
    unsafe {
        dq_params_free(ptr::null_mut());
        dq_manifest_free(ptr::null_mut());
        dq_string_free(ptr::null_mut());
    }
}

#[test]
fn success_clears_the_previous_error() {
    let mut x = 0.0;
    let mut y = 0.0;
    assert_eq!(
        unsafe { dq_qubit_splitting(ptr::null(), 0.0, &mut x, &mut y) },
        DqStatus::Null
    );
    let p = dq_params_new();
    assert_eq!(unsafe { dq_dephasing_sensitivity(p, 1e4, &mut x) }, DqStatus::Ok);
    assert!(dq_last_error().is_null());
    unsafe { dq_params_free(p) };
}

#[test]
fn splitting_matches_the_library() {
    let p = dq_params_new();
    let (mut exact, mut approx) = (0.0, 0.0);
    assert_eq!(
        unsafe { dq_qubit_splitting(p, -2e4, &mut exact, &mut approx) },
        DqStatus::Ok
    );
    let params = donor_qubit::SystemParams::default();
    assert_eq!(approx, params.qubit_splitting_approx(-2e4));
    assert_eq!(exact, donor_qubit::gates::exact_qubit_splitting(&params, -2e4).unwrap());
    unsafe { dq_params_free(p) };
}

#[test]
fn hprime_is_hermitian() {
    let p = dq_params_new();
    let mut re = [0.0f64; 64];
    let mut im = [0.0f64; 64];
    let st = unsafe { dq_hprime(p, 1e4, 0.0, 0.0, re.as_mut_ptr(), im.as_mut_ptr()) };
    assert_eq!(st, DqStatus::Ok);
    let scale = re.iter().chain(&im).fold(0.0f64, |m, x| m.max(x.abs()));
    for r in 0..8 {
        for c in 0..8 {
            assert!((re[8 * r + c] - re[8 * c + r]).abs() <= 1e-12 * scale);
            assert!((im[8 * r + c] + im[8 * c + r]).abs() <= 1e-12 * scale);
        }
    }
    unsafe { dq_params_free(p) };
}

#[test]
fn rz_angle_in_effective_frame() {
    let p = dq_params_new();
    let (mut sim, mut pred) = (0.0, 0.0);
    let st = unsafe { dq_rz_angle(p, 13.56e-9, DqFrame::Effective, &mut sim, &mut pred) };
    assert_eq!(st, DqStatus::Ok);
    assert!((sim + std::f64::consts::PI).abs() < 0.08, "{sim}");
    assert_eq!(
        unsafe { dq_rz_angle(p, -1.0, DqFrame::Effective, &mut sim, &mut pred) },
        DqStatus::InvalidArgument
    );
    unsafe { dq_params_free(p) };
}

#[test]
fn cphase_rejects_bad_geometry_and_reports_phases() {
    let p = dq_params_new();
    let mut rep = DqCphaseReport::default();
    assert_eq!(
        unsafe { dq_cphase(p, -1.0, 300e-9, &mut rep) },
        DqStatus::InvalidArgument
    );
    assert_eq!(unsafe { dq_cphase(p, 500e-9, 300e-9, &mut rep) }, DqStatus::Ok);
    assert!((rep.phi - (rep.alpha - rep.beta - rep.gamma + rep.delta)).abs() < 1e-12);
    unsafe { dq_params_free(p) };
}

#[test]
fn manifest_runs_in_memory() {
    let text = CString::new(
        "kind = \"splitting-curve\"\noutput = \"unused.dat\"\n[grid]\nstart = \"-1e4 V/m\"\nstop = \"1e4 V/m\"\npoints = 5\n",
    )
    .unwrap();
    let mut m: *mut DqManifest = ptr::null_mut();
    assert_eq!(unsafe { dq_manifest_from_toml(text.as_ptr(), &mut m) }, DqStatus::Ok);
    assert_eq!(unsafe { dq_manifest_validate(m) }, DqStatus::Ok);
    let mut out: *mut std::ffi::c_char = ptr::null_mut();
    assert_eq!(unsafe { dq_manifest_run(m, false, &mut out) }, DqStatus::Ok);
    let rendered = unsafe { CStr::from_ptr(out) }.to_str().unwrap().to_owned();
    assert!(rendered.contains("# columns: dE_V_per_m dq_exact_MHz dq_approx_MHz"));
    assert_eq!(rendered.lines().filter(|l| !l.starts_with('#')).count(), 5);
    unsafe {
        dq_string_free(out);
        dq_manifest_free(m);
    }
}

#[test]
fn invalid_manifest_is_rejected() {
    let text = CString::new("kind = \"nope\"\noutput = \"x\"").unwrap();
    let mut m: *mut DqManifest = ptr::null_mut();
    assert_eq!(
        unsafe { dq_manifest_from_toml(text.as_ptr(), &mut m) },
        DqStatus::InvalidArgument
    );
    assert!(m.is_null());
    let path = CString::new("/definitely/not/here.toml").unwrap();
    assert_eq!(unsafe { dq_manifest_load(path.as_ptr(), &mut m) }, DqStatus::Io);
}

/// The generated header must be valid C. Skipped when no C compiler is
/// installed.
#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/donor_qubit.h");
    assert!(std::path::Path::new(header).exists(), "header not generated");
    let dir = std::env::temp_dir().join(format!("dq-header-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let src = dir.join("probe.c");
    std::fs::write(
        &src,
        format!(
            "#include \"{header}\"\nint main(void) {{ DqParams *p = dq_params_new(); double x; \
             DqStatus s = dq_dephasing_sensitivity(p, 1e4, &x); dq_params_free(p); return s == DQ_STATUS_OK ? 0 : 1; }}\n"
        ),
    )
    .unwrap();
    match std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only"])
        .arg(&src)
        .output()
    {
        Ok(out) => assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr)),
        Err(_) => eprintln!("cc not available; header syntax check skipped"),
    }
    let _ = std::fs::remove_dir_all(&dir);
}
