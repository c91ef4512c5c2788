use std::ffi::CStr;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use vanish_damp_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(vd_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn bessel_round_trip() {
    let mut v = 0.0;
    assert_eq!(unsafe { vd_bessel_j(0.0, 0.0, &mut v) }, VdStatus::VdOk);
    assert_eq!(v, 1.0);
    assert_eq!(unsafe { vd_bessel_j(7.0, 1.0, &mut v) }, VdStatus::VdDomain);
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { vd_bessel_j(0.0, 1.0, ptr::null_mut()) }, VdStatus::VdNullPointer);
    assert!(last_error().contains("null"));
}

#[test]
fn integrate_quadratic_matches_j0() {
    unsafe {
        let mut s = ptr::null_mut();
        let mut p = ptr::null_mut();
        assert_eq!(vd_schedule_power_law(1.0, 1.0, 0.0, &mut s), VdStatus::VdOk);
        assert_eq!(vd_potential_quadratic(1, &mut p), VdStatus::VdOk);
        let mut tr = ptr::null_mut();
        let st = vd_integrate(s, p, &1.0, &0.0, 1, 0.0, 20.0, 1e-10, 1e-12, &mut tr);
        assert_eq!(st, VdStatus::VdOk, "{}", last_error());
        let (mut len, mut dim, mut events) = (0usize, 0usize, 0usize);
        assert_eq!(vd_trajectory_len(tr, &mut len), VdStatus::VdOk);
        assert_eq!(vd_trajectory_dim(tr, &mut dim), VdStatus::VdOk);
        assert_eq!(vd_trajectory_event_count(tr, &mut events), VdStatus::VdOk);
        assert!(len > 10 && dim == 1 && events >= 5);
        let (mut t, mut x, mut v) = (0.0, 0.0, 0.0);
        assert_eq!(vd_trajectory_sample(tr, len - 1, &mut t, &mut x, &mut v), VdStatus::VdOk);
        let mut j = 0.0;
        vd_bessel_j(0.0, t, &mut j);
        assert!((x - j).abs() < 1e-6);
        assert_eq!(vd_trajectory_eval(tr, 7.5, &mut x, &mut v), VdStatus::VdOk);
        vd_bessel_j(0.0, 7.5, &mut j);
        assert!((x - j).abs() < 1e-6);
        let mut te = 0.0;
        assert_eq!(vd_trajectory_event_time(tr, 0, &mut te), VdStatus::VdOk);
        assert!((te - 3.8317059702075125).abs() < 1e-6);
        assert_eq!(vd_trajectory_event_time(tr, events, &mut te), VdStatus::VdInvalidArgument);
        assert_eq!(vd_trajectory_eval(tr, 99.0, &mut x, &mut v), VdStatus::VdDomain);
        vd_trajectory_free(tr);
        vd_schedule_free(s);
        vd_potential_free(p);
    }
}

#[test]
fn invalid_arguments_are_reported() {
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(vd_schedule_power_law(-1.0, 1.0, 1.0, &mut s), VdStatus::VdInvalidArgument);
        assert!(s.is_null());
        assert!(last_error().contains("amplitude"));
        let mut p = ptr::null_mut();
        assert_eq!(vd_potential_double_well(&mut p), VdStatus::VdOk);
        let mut g = [0.0; 2];
        assert_eq!(vd_potential_grad(p, [1.0, 2.0].as_ptr(), 2, g.as_mut_ptr()), VdStatus::VdInvalidArgument);
        assert_eq!(vd_potential_grad(p, [2.0].as_ptr(), 1, g.as_mut_ptr()), VdStatus::VdOk);
        assert_eq!(g[0], 6.0);
        let mut d = 0usize;
        assert_eq!(vd_potential_dim(ptr::null(), &mut d), VdStatus::VdNullPointer);
        vd_potential_free(p);
        vd_potential_free(ptr::null_mut());
        assert_eq!(vd_integrate(ptr::null(), ptr::null(), ptr::null(), ptr::null(), 1, 0.0, 1.0, 0.0, 0.0, ptr::null_mut()), VdStatus::VdNullPointer);
    }
}

#[test]
fn solver_failures_map_to_solver_status() {
    unsafe {
        let mut s = ptr::null_mut();
        let mut p = ptr::null_mut();
        vd_schedule_constant(0.0, &mut s);
        // x' = x^3 style blow-up: negative quartic coefficient
        let coeffs = [0.0, 0.0, 0.0, 0.0, -1.0];
        assert_eq!(vd_potential_polynomial(coeffs.as_ptr(), coeffs.len(), &mut p), VdStatus::VdOk);
        let mut tr = ptr::null_mut();
        let st = vd_integrate(s, p, &1.0, &1.0, 1, 0.0, 100.0, 0.0, 0.0, &mut tr);
        assert_eq!(st, VdStatus::VdSolver, "{}", last_error());
        assert!(tr.is_null());
        vd_schedule_free(s);
        vd_potential_free(p);
    }
}

fn header() -> String {
    std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/vanish_damp.h")).unwrap()
}

#[test]
fn header_declares_the_interface() {
    let h = header();
    for name in [
        "VD_OK = 0",
        "VD_NULL_POINTER = 1",
        "VD_INVALID_ARGUMENT = 2",
        "VD_DOMAIN = 3",
        "VD_SOLVER = 4",
        "VD_PANIC = 5",
        "typedef struct VdSchedule VdSchedule;",
        "typedef struct VdPotential VdPotential;",
        "typedef struct VdTrajectory VdTrajectory;",
        "vd_schedule_power_law(",
        "vd_potential_flat_bottom(",
        "vd_integrate(",
        "vd_trajectory_sample(",
        "vd_trajectory_free(",
        "vd_bessel_j(",
        "vd_last_error(",
    ] {
        assert!(h.contains(name), "missing {name}");
    }
    assert!(h.starts_with("#ifndef VANISH_DAMP_H"));
}

fn target_dir() -> PathBuf {
    // .../target/<profile>/deps/<test binary>
    std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_owned()
}

#[test]
fn c_program_links_against_static_library() {
    let lib = target_dir().join("libvanish_damp_ffi.a");
    assert!(lib.exists(), "{} not built", lib.display());
    let dir = tempfile_dir();
    let src = dir.join("smoke.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include "vanish_damp.h"
int main(void) {
    VdSchedule *s = NULL; VdPotential *p = NULL; VdTrajectory *tr = NULL;
    double x0 = 1.0, v0 = 0.0, x, v, j;
    if (vd_schedule_power_law(1.0, 1.0, 0.0, &s) != VD_OK) return 1;
    if (vd_potential_quadratic(1, &p) != VD_OK) return 2;
    if (vd_integrate(s, p, &x0, &v0, 1, 0.0, 10.0, 1e-10, 1e-12, &tr) != VD_OK) return 3;
    if (vd_trajectory_eval(tr, 5.0, &x, &v) != VD_OK) return 4;
    vd_bessel_j(0.0, 5.0, &j);
    printf("%.12f %.12f\n", x, j);
    if (vd_schedule_power_law(-1.0, 1.0, 0.0, &s) != VD_INVALID_ARGUMENT) return 5;
    vd_trajectory_free(tr); vd_potential_free(p); vd_schedule_free(s);
    return (x - j < 1e-6 && j - x < 1e-6) ? 0 : 6;
}
"#,
    )
    .unwrap();
    let exe = dir.join("smoke");
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("a C compiler named cc");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stdout));
}

fn tempfile_dir() -> PathBuf {
    let d = std::env::temp_dir().join(format!("vanish-damp-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}
