use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use forum_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    unsafe {
        forum_last_error_message(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

#[test]
fn synthetic_run_through_the_abi() {
    unsafe {
        let mut problem = ptr::null_mut();
        assert_eq!(forum_problem_synthetic_new(&mut problem), ForumStatus::Ok);
        let (mut n, mut p, mut m) = (0, 0, 0);
        assert_eq!(forum_problem_dims(problem, &mut n, &mut p, &mut m), ForumStatus::Ok);
        assert_eq!((n, p, m), (1, 2, 2));

        let json = cstr(r#"{"iterations": 2000, "ll_steps": 50, "mu": 0.3, "eta": 0.05, "rho": 0.3}"#);
        let mut config = ptr::null_mut();
        assert_eq!(forum_config_from_json(json.as_ptr(), &mut config), ForumStatus::Ok);

        let mut run = ptr::null_mut();
        let status = forum_run_new(
            problem,
            config,
            ForumMethod::Forum,
            [2.0].as_ptr(),
            1,
            [3.0, 3.0].as_ptr(),
            2,
            &mut run,
        );
        assert_eq!(status, ForumStatus::Ok, "{}", last_error());
        assert_eq!(forum_run_len(run), 2000);

        let mut rec = std::mem::zeroed::<ForumRecord>();
        assert_eq!(forum_run_record(run, 1999, &mut rec), ForumStatus::Ok);
        assert!(rec.optimality_gap < 1e-2);
        assert!(rec.kkt_residual < 1e-3);

        let mut f = [0.0; 2];
        assert_eq!(forum_run_f_values(run, 0, f.as_mut_ptr(), 2), ForumStatus::Ok);
        assert!(f.iter().all(|v| v.is_finite()));

        let mut lambda = [0.0; 2];
        assert_eq!(forum_run_final_lambda(run, lambda.as_mut_ptr(), 2), ForumStatus::Ok);
        assert!((lambda[0] + lambda[1] - 1.0).abs() < 1e-10);

        forum_run_free(run);
        forum_config_free(config);
        forum_problem_free(problem);
    }
}

#[test]
fn null_and_range_errors_set_the_message() {
    unsafe {
        assert_eq!(forum_problem_synthetic_new(ptr::null_mut()), ForumStatus::NullPointer);
        assert!(last_error().contains("out"));
        assert_eq!(
            forum_project_simplex(ptr::null(), 3, ptr::null_mut()),
            ForumStatus::NullPointer
        );
        assert_eq!(
            forum_project_simplex([1.0].as_ptr(), 0, ptr::null_mut()),
            ForumStatus::InvalidArgument
        );

        // A success clears the message.
        let mut out = [0.0; 2];
        assert_eq!(
            forum_project_simplex([3.0, 1.0].as_ptr(), 2, out.as_mut_ptr()),
            ForumStatus::Ok
        );
        assert_eq!(out, [1.0, 0.0]);
        assert_eq!(last_error(), "");
        assert_eq!(forum_last_error_message(ptr::null_mut(), 0), 1);
    }
}

#[test]
fn error_codes_follow_the_core_error_kind() {
    unsafe {
        let mut config = ptr::null_mut();
        let bad = cstr(r#"{"mu": -1.0}"#);
        assert_eq!(forum_config_from_json(bad.as_ptr(), &mut config), ForumStatus::Config);
        assert!(config.is_null());
        let unknown = cstr(r#"{"step": 1.0}"#);
        assert_eq!(
            forum_config_from_json(unknown.as_ptr(), &mut config),
            ForumStatus::Config
        );
        assert!(last_error().contains("step"));

        let mut problem = ptr::null_mut();
        let spec = cstr(r#"{"kind": "hyperclean", "train_size": 30, "val_size": 10, "test_size": 10}"#);
        assert_eq!(forum_problem_from_json(spec.as_ptr(), 3, &mut problem), ForumStatus::Ok);
        assert_eq!(forum_config_default(&mut config), ForumStatus::Ok);
        let (mut n, mut p) = (0, 0);
        forum_problem_dims(problem, &mut n, &mut p, ptr::null_mut());
        let (alpha, omega) = (vec![0.0; n], vec![0.0; p]);
        let mut run = ptr::null_mut();
        let status = forum_run_new(
            problem,
            config,
            ForumMethod::MomlExact,
            alpha.as_ptr(),
            n,
            omega.as_ptr(),
            p,
            &mut run,
        );
        assert_eq!(status, ForumStatus::Capability);
        assert!(run.is_null());

        let status = forum_run_new(
            problem,
            config,
            ForumMethod::Forum,
            alpha.as_ptr(),
            n - 1,
            omega.as_ptr(),
            p,
            &mut run,
        );
        assert_eq!(status, ForumStatus::Dimension, "{}", last_error());

        let mut syn = ptr::null_mut();
        forum_problem_synthetic_new(&mut syn);
        let wild = cstr(r#"{"iterations": 50, "mu": 1e300}"#);
        let mut wild_cfg = ptr::null_mut();
        assert_eq!(forum_config_from_json(wild.as_ptr(), &mut wild_cfg), ForumStatus::Ok);
        let status = forum_run_new(
            syn,
            wild_cfg,
            ForumMethod::Forum,
            [0.0].as_ptr(),
            1,
            [0.0, 3.0].as_ptr(),
            2,
            &mut run,
        );
        assert_eq!(status, ForumStatus::Divergence);

        forum_config_free(wild_cfg);
        forum_problem_free(syn);
        forum_config_free(config);
        forum_problem_free(problem);
        forum_problem_free(ptr::null_mut());
    }
}

#[test]
fn qp_and_mgda_entry_points() {
    unsafe {
        let grads = [1.0, 0.0, 0.0, 1.0];
        let mut lambda = [0.0; 2];
        let mut dir = [0.0; 2];
        assert_eq!(
            forum_mgda_direction(grads.as_ptr(), 2, 2, lambda.as_mut_ptr(), dir.as_mut_ptr()),
            ForumStatus::Ok
        );
        assert!((lambda[0] - 0.5).abs() < 1e-12 && (dir[0] + 0.5).abs() < 1e-12);

        let mut obj = f64::NAN;
        let mut converged = false;
        let gq = [1.0, 1.0];
        let status = forum_solve_dual_qp(
            grads.as_ptr(),
            2,
            2,
            gq.as_ptr(),
            0.5,
            lambda.as_mut_ptr(),
            &mut obj,
            &mut converged,
        );
        assert_eq!(status, ForumStatus::Ok);
        assert!(converged && obj.is_finite());
        assert!((lambda[0] + lambda[1] - 1.0).abs() < 1e-12);
        let status = forum_solve_dual_qp(
            grads.as_ptr(),
            2,
            2,
            gq.as_ptr(),
            -1.0,
            lambda.as_mut_ptr(),
            ptr::null_mut(),
            ptr::null_mut(),
        );
        assert_eq!(status, ForumStatus::InvalidArgument);
    }
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(forum_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

/// Compiles `c_smoke.c` against the generated header and the static library.
#[test]
fn c_program_links_against_the_static_library() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header_dir = manifest.join("include");
    assert!(header_dir.join("forum.h").exists());
    // tests run from target/<profile>/deps; the static library sits one level up.
    let deps = std::env::current_exe().unwrap().parent().unwrap().to_path_buf();
    let lib_dir = deps.parent().unwrap();
    let staticlib = lib_dir.join("libforum_ffi.a");
    assert!(staticlib.exists(), "missing {}", staticlib.display());

    let tmp = tempfile::tempdir().unwrap();
    let exe = tmp.path().join("c_smoke");
    let compile = Command::new("cc")
        .args(["-std=c11", "-Wall", "-Werror", "-I"])
        .arg(&header_dir)
        .arg(manifest.join("tests/c_smoke.c"))
        .arg(&staticlib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .expect("cc not available");
    assert!(compile.status.success(), "{}", String::from_utf8_lossy(&compile.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("ok "));
}
