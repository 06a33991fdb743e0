use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use v2i_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(v2i_last_error_message()) }
        .to_string_lossy()
        .into_owned()
}

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

#[test]
fn fixed_point_single_station() {
    let mut fp = V2iFixedPoint::default();
    let st = unsafe { v2i_fixed_point(1, 32, 7, 1e-10, &mut fp) };
    assert_eq!(st, V2iStatus::Ok);
    assert!((fp.tau - 2.0 / 33.0).abs() < 1e-12);
    assert_eq!(fp.p_c, 0.0);
}

#[test]
fn fixed_point_errors_map_to_codes() {
    let mut fp = V2iFixedPoint::default();
    assert_eq!(unsafe { v2i_fixed_point(0, 32, 7, 1e-10, &mut fp) }, V2iStatus::Domain);
    assert!(last_error().contains("station"));
    assert_eq!(unsafe { v2i_fixed_point(5, 32, 7, 1e-10, ptr::null_mut()) }, V2iStatus::NullPointer);
}

#[test]
fn scenario_lifecycle_and_solve() {
    let mut sc = ptr::null_mut();
    let text = c("[traffic]\nv_kmh = 80\n");
    assert_eq!(unsafe { v2i_scenario_parse(text.as_ptr(), &mut sc) }, V2iStatus::Ok);
    let mut m = V2iMetrics::default();
    assert_eq!(unsafe { v2i_solve(sc, &mut m) }, V2iStatus::Ok);
    assert_eq!(m.stations, 60.0);
    assert!((m.p_c - 0.535_333_380_085_691_4).abs() < 1e-9);

    // rejected updates leave the scenario untouched
    let (k, v) = (c("traffic.v_kmh"), c("500"));
    assert_eq!(unsafe { v2i_scenario_set(sc, k.as_ptr(), v.as_ptr()) }, V2iStatus::UnitViolation);
    let mut again = V2iMetrics::default();
    assert_eq!(unsafe { v2i_solve(sc, &mut again) }, V2iStatus::Ok);
    assert_eq!(again, m);

    let (k, v) = (c("mac.cw_min"), c("64"));
    assert_eq!(unsafe { v2i_scenario_set(sc, k.as_ptr(), v.as_ptr()) }, V2iStatus::Ok);
    let mut echo: *mut c_char = ptr::null_mut();
    assert_eq!(unsafe { v2i_scenario_echo(sc, &mut echo) }, V2iStatus::Ok);
    let text = unsafe { CStr::from_ptr(echo) }.to_str().unwrap().to_owned();
    assert!(text.contains("cw_min = 64"));
    unsafe {
        v2i_string_free(echo);
        v2i_scenario_free(sc);
    }
}

#[test]
fn parse_errors_carry_codes_and_messages() {
    let mut sc = ptr::null_mut();
    let text = c("[mac]\nbogus = 1\n");
    assert_eq!(unsafe { v2i_scenario_parse(text.as_ptr(), &mut sc) }, V2iStatus::UnknownKey);
    assert!(sc.is_null());
    assert!(last_error().contains("bogus"));
    let text = c("[mac]\ncw_min = x\n");
    assert_eq!(unsafe { v2i_scenario_parse(text.as_ptr(), &mut sc) }, V2iStatus::Parse);
    assert_eq!(unsafe { v2i_scenario_parse(ptr::null(), &mut sc) }, V2iStatus::NullPointer);
    let missing = c("/nonexistent/scenario.toml");
    assert_eq!(unsafe { v2i_scenario_load(missing.as_ptr(), &mut sc) }, V2iStatus::Io);
}

#[test]
fn optimization_handle() {
    let sc = v2i_scenario_default();
    let mut opt = ptr::null_mut();
    assert_eq!(unsafe { v2i_optimize(sc, &mut opt) }, V2iStatus::Ok);
    let len = unsafe { v2i_optimization_len(opt) };
    assert_eq!(len, 11);
    let m_star = unsafe { v2i_optimization_m_star(opt) };
    let (mut m, mut feasible, mut metrics) = (0u32, false, V2iMetrics::default());
    let mut best = f64::MIN;
    for i in 0..len {
        assert_eq!(
            unsafe { v2i_optimization_row(opt, i, &mut m, &mut feasible, &mut metrics) },
            V2iStatus::Ok
        );
        assert_eq!(m, i as u32);
        if feasible {
            best = best.max(metrics.throughput);
        }
    }
    assert!(unsafe { v2i_optimization_feasible(opt) });
    unsafe { v2i_optimization_row(opt, m_star as usize, &mut m, &mut feasible, &mut metrics) };
    assert_eq!(metrics.throughput, best);
    assert_eq!(
        unsafe { v2i_optimization_row(opt, len, &mut m, &mut feasible, &mut metrics) },
        V2iStatus::OutOfRange
    );
    unsafe {
        v2i_optimization_free(opt);
        v2i_scenario_free(sc);
    }
}

#[test]
fn version_is_nul_terminated() {
    let v = unsafe { CStr::from_ptr(v2i_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/v2i.h")).unwrap();
    for name in [
        "V2I_STATUS_OK",
        "v2i_scenario_load",
        "v2i_solve",
        "v2i_fixed_point",
        "v2i_optimization_row",
        "v2i_last_error_message",
        "typedef struct V2iScenario V2iScenario",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

/// Compiles the C demo against the header and the static library.
#[test]
fn c_demo_links_and_runs() {
    let Ok(exe) = std::env::current_exe() else { return };
    // the archive built alongside this test sits next to it in deps/
    let lib = exe.with_file_name("libv2i_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: static library or C compiler not available");
        return;
    }
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let bin = std::env::temp_dir().join(format!("v2i_demo_{}", std::process::id()));
    let status = Command::new("cc")
        .arg(root.join("examples/demo.c"))
        .arg("-I")
        .arg(root.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    let _ = std::fs::remove_file(&bin);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("stations=60"), "{stdout}");
}
