use std::ffi::{CStr, CString};
use std::ptr;

use active_recon::fusion::FusedSurface;
use active_recon::geometry::{CameraJson, CameraModel, Intrinsics, Vec3};
use active_recon::ply::PlyFormat;
use active_recon_ffi::*;

fn last_error() -> String {
    let p = ar_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

fn take_string(p: *mut std::ffi::c_char) -> String {
    let s = unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned();
    unsafe { ar_string_free(p) };
    s
}

/// 4 m square in z = 0 as two triangles facing up.
fn square_ply() -> tempfile::NamedTempFile {
    let a = Vec3::new(-2.0, -2.0, 0.0);
    let b = Vec3::new(2.0, -2.0, 0.0);
    let c = Vec3::new(2.0, 2.0, 0.0);
    let d = Vec3::new(-2.0, 2.0, 0.0);
    let s = FusedSurface {
        triangles: vec![[a, b, c], [a, c, d]],
        normal: vec![Vec3::z(); 2],
        source_view: vec![0, 0],
        source_triangle: vec![0, 1],
        confidence: vec![0.0; 2],
        color: vec![[0.5; 3]; 2],
    };
    let mut f = tempfile::NamedTempFile::new().unwrap();
    s.write_ply(f.as_file_mut(), PlyFormat::BinaryLittleEndian).unwrap();
    f
}

fn cameras_json(angle_deg: f64) -> CString {
    let k = Intrinsics::centered(300.0, 640, 480);
    let h = angle_deg.to_radians() / 2.0;
    let cams: Vec<CameraJson> = [-h, h]
        .iter()
        .map(|&a| {
            CameraJson::from(
                &CameraModel::look_at(k, Vec3::new(10.0 * a.sin(), 0.0, 10.0 * a.cos()), Vec3::zeros()).unwrap(),
            )
        })
        .collect();
    CString::new(serde_json::to_string(&cams).unwrap()).unwrap()
}

#[test]
fn version_and_confidence() {
    let v = unsafe { CStr::from_ptr(ar_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
    let g = ar_confidence(0.0, 0.0, 0.0, 2.0, 0.3, 0.3);
    assert!((g - (1.0 - (-1.0f64 / 0.3).exp())).abs() < 1e-12);
}

#[test]
fn null_handles_are_reported() {
    let status = unsafe { ar_config_set_seed(ptr::null_mut(), 1) };
    assert_eq!(status, ArStatus::NullPointer);
    assert!(last_error().contains("config"));
    assert_eq!(unsafe { ar_config_new(ptr::null_mut()) }, ArStatus::NullPointer);
    assert_eq!(unsafe { ar_simulation_iteration_count(ptr::null()) }, 0);
    // Freeing null is a no-op.
    unsafe {
        ar_config_free(ptr::null_mut());
        ar_simulation_free(ptr::null_mut());
        ar_surface_free(ptr::null_mut());
        ar_coverage_free(ptr::null_mut());
        ar_string_free(ptr::null_mut());
    }
}

#[test]
fn config_json_round_trip() {
    let mut cfg = ptr::null_mut();
    let json = CString::new(r#"{"seed": 42, "coverage": {"r_disk": 0.3}}"#).unwrap();
    assert_eq!(unsafe { ar_config_from_json(json.as_ptr(), &mut cfg) }, ArStatus::Ok);
    assert!(ar_last_error().is_null());
    assert_eq!(unsafe { ar_config_set_max_iterations(cfg, 3) }, ArStatus::Ok);
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { ar_config_to_json(cfg, &mut out) }, ArStatus::Ok);
    let v: serde_json::Value = serde_json::from_str(&take_string(out)).unwrap();
    assert_eq!(v["seed"], 42);
    assert_eq!(v["max_iterations"], 3);
    assert_eq!(v["coverage"]["r_disk"], 0.3);
    unsafe { ar_config_free(cfg) };

    let bad = CString::new(r#"{"no_such_field": 1}"#).unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { ar_config_from_json(bad.as_ptr(), &mut cfg) }, ArStatus::Parse);
    assert!(cfg.is_null());
    assert!(last_error().contains("no_such_field"));
}

#[test]
fn coverage_of_a_square() {
    let ply = square_ply();
    let path = CString::new(ply.path().to_str().unwrap()).unwrap();
    let mut surface = ptr::null_mut();
    assert_eq!(unsafe { ar_surface_read_ply(path.as_ptr(), &mut surface) }, ArStatus::Ok);
    assert_eq!(unsafe { ar_surface_triangle_count(surface) }, 2);
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { ar_config_new(&mut cfg) }, ArStatus::Ok);

    for (angle, expect_covered) in [(10.0, true), (45.0, false)] {
        let cams = cameras_json(angle);
        let mut cov = ptr::null_mut();
        assert_eq!(unsafe { ar_coverage_compute(surface, cams.as_ptr(), cfg, &mut cov) }, ArStatus::Ok);
        let mut s = ArCoverageSummary { covered: 0, uncovered: 0, ignored: 0, fraction: 0.0 };
        assert_eq!(unsafe { ar_coverage_summary(cov, &mut s) }, ArStatus::Ok);
        let n = unsafe { ar_coverage_point_count(cov) };
        assert_eq!(s.covered + s.uncovered + s.ignored, n);
        assert!(n > 10);
        let mut p =
            ArIsoPoint { position: [0.0; 3], normal: [0.0; 3], signal: 0.0, label: ArLabel::Ignored, good_views: 0 };
        for i in 0..n {
            assert_eq!(unsafe { ar_coverage_point(cov, i, &mut p) }, ArStatus::Ok);
            assert!(p.position[2].abs() < 1e-12 && p.position[0].abs() <= 2.0);
            assert_eq!(p.normal, [0.0, 0.0, 1.0]);
            assert_eq!(p.good_views, 2);
            let want = if expect_covered { ArLabel::Covered } else { ArLabel::Uncovered };
            assert_eq!(p.label, want, "{angle}°");
        }
        assert_eq!(unsafe { ar_coverage_point(cov, n, &mut p) }, ArStatus::InvalidArgument);
        unsafe { ar_coverage_free(cov) };
    }

    let garbage = CString::new("[{\"fx\": 1}]").unwrap();
    let mut cov = ptr::null_mut();
    assert_eq!(unsafe { ar_coverage_compute(surface, garbage.as_ptr(), cfg, &mut cov) }, ArStatus::Parse);
    let missing = CString::new("/nonexistent/surface.ply").unwrap();
    let mut other = ptr::null_mut();
    assert_eq!(unsafe { ar_surface_read_ply(missing.as_ptr(), &mut other) }, ArStatus::Io);
    unsafe {
        ar_surface_free(surface);
        ar_config_free(cfg);
    }
}

#[test]
fn initial_orbit_only_simulation() {
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { ar_config_new(&mut cfg) }, ArStatus::Ok);
    assert_eq!(unsafe { ar_config_set_max_iterations(cfg, 0) }, ArStatus::Ok);
    let mut sim = ptr::null_mut();
    assert_eq!(unsafe { ar_simulate(cfg, ptr::null(), &mut sim) }, ArStatus::Ok);
    assert_eq!(unsafe { ar_simulation_iteration_count(sim) }, 1);

    let mut s = ArCoverageSummary { covered: 0, uncovered: 0, ignored: 0, fraction: 0.0 };
    assert_eq!(unsafe { ar_simulation_summary(sim, 0, &mut s) }, ArStatus::Ok);
    assert!(s.fraction > 0.5 && s.fraction <= 1.0, "{s:?}");
    assert_eq!(unsafe { ar_simulation_summary(sim, 1, &mut s) }, ArStatus::InvalidArgument);
    let mut term = ArTermination::FullyCovered;
    assert_eq!(unsafe { ar_simulation_termination(sim, &mut term) }, ArStatus::Ok);
    assert_eq!(term, ArTermination::MaxIterations);
    let mut pitch = 0.0;
    assert_eq!(unsafe { ar_simulation_selected_pitch(sim, 0, &mut pitch) }, ArStatus::Ok);
    assert!(pitch.is_nan());

    let mut json = ptr::null_mut();
    assert_eq!(unsafe { ar_simulation_metrics_json(sim, &mut json) }, ArStatus::Ok);
    let v: serde_json::Value = serde_json::from_str(&take_string(json)).unwrap();
    assert_eq!(v["termination"], "max_iterations");
    assert_eq!(v["iterations"][0]["coverage"]["covered"], s.covered);

    let mut surface = ptr::null_mut();
    assert_eq!(unsafe { ar_simulation_surface(sim, 0, &mut surface) }, ArStatus::Ok);
    assert!(unsafe { ar_surface_triangle_count(surface) } > 100);

    let dir = tempfile::tempdir().unwrap();
    let d = CString::new(dir.path().to_str().unwrap()).unwrap();
    assert_eq!(unsafe { ar_simulation_write(sim, d.as_ptr()) }, ArStatus::Ok);
    assert!(dir.path().join("metrics.json").is_file());
    assert!(dir.path().join("iter_00").join("fused.ply").is_file());

    let scene = CString::new("{\"not\": \"a scene\"}").unwrap();
    let mut other = ptr::null_mut();
    assert_eq!(unsafe { ar_simulate(cfg, scene.as_ptr(), &mut other) }, ArStatus::Parse);
    unsafe {
        ar_surface_free(surface);
        ar_simulation_free(sim);
        ar_config_free(cfg);
    }
}
