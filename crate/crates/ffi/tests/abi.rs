use std::ffi::CStr;
use std::os::raw::c_char;
use std::ptr;

use coneflow_ffi::*;

fn last_error() -> String {
    let mut buf = [0 as c_char; 256];
    unsafe {
        cf_last_error_message(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn grid(n_theta: usize) -> *mut CfGrid {
    let mut g = ptr::null_mut();
    let st = unsafe { cf_grid_new(2, std::f64::consts::FRAC_PI_3, n_theta, 0, CF_MODE_AXISYMMETRIC, &mut g) };
    assert_eq!(st, CfStatus::CfOk);
    g
}

#[test]
fn grid_lifecycle_and_quadrature() {
    let g = grid(201);
    let n = unsafe { cf_grid_node_count(g) };
    assert_eq!(n, 201);
    let ones = vec![1.0; n];
    let mut area = 0.0;
    assert_eq!(unsafe { cf_grid_integrate(g, ones.as_ptr(), n, &mut area) }, CfStatus::CfOk);
    assert!((area - std::f64::consts::PI).abs() / std::f64::consts::PI < 1e-4);
    assert_eq!(unsafe { cf_grid_integrate(g, ones.as_ptr(), n - 1, &mut area) }, CfStatus::CfInvalidArgument);
    assert!(last_error().contains("200 values"));
    unsafe { cf_grid_free(g) };
    unsafe { cf_grid_free(ptr::null_mut()) };
}

#[test]
fn construction_errors_map_to_codes() {
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { cf_grid_new(2, 2.0, 21, 0, CF_MODE_AXISYMMETRIC, &mut g) }, CfStatus::CfConeNotConvex);
    assert!(g.is_null());
    assert!(last_error().contains("cone not convex"));
    assert_eq!(unsafe { cf_grid_new(3, 1.0, 21, 16, CF_MODE_FULL2D, &mut g) }, CfStatus::CfInvalidArgument);
    assert_eq!(unsafe { cf_grid_new(2, 1.0, 21, 16, 7, &mut g) }, CfStatus::CfInvalidArgument);
    assert_eq!(unsafe { cf_grid_new(2, 1.0, 21, 16, CF_MODE_AXISYMMETRIC, ptr::null_mut()) }, CfStatus::CfNullPointer);
    assert_eq!(unsafe { cf_grid_node_count(ptr::null()) }, 0);
    let needed = unsafe { cf_last_error_message(ptr::null_mut(), 0) };
    assert_eq!(needed, "out is null".len());
}

#[test]
fn mean_curvature_of_sphere() {
    let g = grid(21);
    let u = vec![2.0; 21];
    let mut h = vec![0.0; 21];
    assert_eq!(unsafe { cf_graph_mean_curvature(g, u.as_ptr(), 21, h.as_mut_ptr()) }, CfStatus::CfOk);
    assert!(h.iter().all(|x| (x - 1.0).abs() < 1e-12));
    let bad = vec![-1.0; 21];
    assert_eq!(unsafe { cf_graph_mean_curvature(g, bad.as_ptr(), 21, h.as_mut_ptr()) }, CfStatus::CfNotStarShaped);
    assert_eq!(unsafe { cf_graph_mean_curvature(g, ptr::null(), 21, h.as_mut_ptr()) }, CfStatus::CfNullPointer);
    unsafe { cf_grid_free(g) };
}

#[test]
fn flow_run_reproduces_model_solution() {
    let g = grid(21);
    let u0 = vec![1.0; 21];
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { cf_run_flow(g, u0.as_ptr(), 21, 1.0, 4.0, 50, &mut t) }, CfStatus::CfOk);
    assert_eq!(unsafe { cf_traj_completed(t) }, 1);
    let count = unsafe { cf_traj_sample_count(t) };
    assert!(count >= 2);
    let mut row = vec![0.0; cf_traj_sample_width()];
    assert_eq!(unsafe { cf_traj_sample(t, count - 1, row.as_mut_ptr(), row.len()) }, CfStatus::CfOk);
    assert_eq!(row[0], 4.0);
    assert_eq!(unsafe { cf_traj_sample(t, count, row.as_mut_ptr(), row.len()) }, CfStatus::CfInvalidArgument);
    let mut small = [0.0; 3];
    assert_eq!(unsafe { cf_traj_sample(t, 0, small.as_mut_ptr(), 3) }, CfStatus::CfBufferTooSmall);
    let mut u = vec![0.0; 21];
    let mut t_end = 0.0;
    assert_eq!(unsafe { cf_traj_final_u(t, u.as_mut_ptr(), 21, &mut t_end) }, CfStatus::CfOk);
    assert_eq!(t_end, 4.0);
    assert!(u.iter().all(|x| (x - 3.0).abs() / 3.0 < 1e-8));
    unsafe { cf_traj_free(t) };
    unsafe { cf_grid_free(g) };
}

#[test]
fn flow_rejects_concave_data() {
    let g = grid(41);
    let u0: Vec<f64> = (0..41).map(|j| 1.0 + 0.9 * (3.0 * std::f64::consts::PI * j as f64 / 40.0).cos()).collect();
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { cf_run_flow(g, u0.as_ptr(), 41, 1.0, 1.0, 1, &mut t) }, CfStatus::CfNotMeanConvex);
    assert!(t.is_null());
    unsafe { cf_grid_free(g) };
}

/// Compiles a C program against the generated header and the static library.
#[test]
fn c_program_links_against_header() {
    let manifest = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    let header_dir = manifest.join("include");
    assert!(header_dir.join("coneflow.h").exists());
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("libconeflow_ffi.a");
    if !lib.exists() {
        let st = std::process::Command::new(env!("CARGO"))
            .args(["build", "-p", "coneflow-ffi", "--lib"])
            .current_dir(manifest)
            .status()
            .unwrap();
        assert!(st.success());
    }
    assert!(lib.exists(), "{} missing", lib.display());
    let out = std::path::PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("smoke");
    let cc = std::process::Command::new("cc")
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(&header_dir)
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&out)
        .output()
        .expect("a C compiler is required for this test");
    assert!(cc.status.success(), "{}", String::from_utf8_lossy(&cc.stderr));
    let run = std::process::Command::new(&out).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    assert!(String::from_utf8_lossy(&run.stdout).contains("cone not convex"));
}
