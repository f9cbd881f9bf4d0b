use std::ffi::{CStr, CString};
use std::ptr;

use gaitbc::net::Mlp;
use gaitbc::pipeline::PolicyModel;
use gaitbc::rollout::{Conditioning, ACTION_DIM};
use gaitbc_ffi::*;

fn last_error() -> String {
    let mut buf = [0 as std::ffi::c_char; 256];
    let n = unsafe { gbc_last_error(buf.as_mut_ptr(), buf.len()) };
    let s = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned();
    assert_eq!(s.len(), n.min(255));
    s
}

#[test]
fn null_handles_are_rejected() {
    unsafe {
        assert_eq!(gbc_sim_step_expert(ptr::null_mut(), ptr::null_mut()), GbcStatus::NullPointer);
        assert_eq!(last_error(), "null argument");
        assert_eq!(gbc_model_input_dim(ptr::null()), 0);
        gbc_sim_free(ptr::null_mut());
        gbc_model_free(ptr::null_mut());
        let mut sim = ptr::null_mut();
        assert_eq!(gbc_sim_new(f64::NAN, 0.0, GbcGait::Walk, &mut sim), GbcStatus::InvalidArgument);
        assert!(sim.is_null());
    }
}

#[test]
fn status_strings() {
    let s = unsafe { CStr::from_ptr(gbc_status_string(GbcStatus::DimMismatch)) };
    assert_eq!(s.to_str().unwrap(), "dimension mismatch");
}

#[test]
fn dcm_propagation_matches_closed_form() {
    let (xi, u) = ([0.1, -0.02], [0.0, 0.05]);
    let mut out = [0.0; 2];
    unsafe {
        assert_eq!(gbc_dcm_propagate(xi.as_ptr(), u.as_ptr(), 5.0, 0.2, out.as_mut_ptr()), GbcStatus::Ok);
        let e = (5.0f64 * 0.2).exp();
        assert!((out[0] - 0.1 * e).abs() < 1e-14);
        assert!((out[1] - (0.05 - 0.07 * e)).abs() < 1e-14);
        assert_eq!(gbc_dcm_propagate(xi.as_ptr(), u.as_ptr(), -1.0, 0.2, out.as_mut_ptr()), GbcStatus::InvalidArgument);
    }
}

#[test]
fn expert_walks_through_the_c_api() {
    unsafe {
        let mut sim = ptr::null_mut();
        assert_eq!(gbc_sim_new(0.5, 0.0, GbcGait::Run, &mut sim), GbcStatus::Ok);
        let mut ev = GbcEvents::default();
        let (mut touchdowns, mut takeoffs) = (0, 0);
        for _ in 0..2000 {
            assert_eq!(gbc_sim_step_expert(sim, &mut ev), GbcStatus::Ok);
            assert_eq!(ev.failure, GbcFailure::None);
            touchdowns += ev.touchdown as usize;
            takeoffs += ev.takeoff as usize;
        }
        assert!(touchdowns >= 5 && takeoffs >= 5, "{touchdowns} {takeoffs}");
        let mut st: GbcState = std::mem::zeroed();
        assert_eq!(gbc_sim_state(sim, &mut st), GbcStatus::Ok);
        assert!((st.com_pos[0] - 1.0).abs() < 0.3, "{:?}", st.com_pos);

        assert_eq!(gbc_sim_set_command(sim, 0.0, 0.0, GbcGait::Walk), GbcStatus::Ok);
        let mut plan = GbcPlan::default();
        assert_eq!(gbc_sim_plan(sim, &mut plan), GbcStatus::Ok);
        assert!(plan.t_rem >= 0.0 && plan.step_duration > 0.0);
        let mut a = GbcAction::default();
        assert_eq!(gbc_sim_expert_action(sim, &mut a), GbcStatus::Ok);
        assert_eq!(gbc_sim_step(sim, &a, ptr::null_mut()), GbcStatus::Ok);

        let bad = GbcAction { h_ref: f64::INFINITY, ..a };
        assert_eq!(gbc_sim_step(sim, &bad, ptr::null_mut()), GbcStatus::InvalidArgument);
        assert!(!last_error().is_empty());
        gbc_sim_free(sim);
    }
}

#[test]
fn models_load_evaluate_and_drive() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("vc.bin");
    let c = Conditioning::Vc;
    let net = Mlp::new(&[c.input_dim(), 8, 8, 8, ACTION_DIM], 3);
    PolicyModel::new(c, net).unwrap().save(&path).unwrap();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(gbc_model_load(cpath.as_ptr(), &mut m), GbcStatus::Ok);
        let mut cond = GbcConditioning::Cc;
        assert_eq!(gbc_model_conditioning(m, &mut cond), GbcStatus::Ok);
        assert_eq!(cond, GbcConditioning::Vc);
        let n = gbc_model_input_dim(m);
        assert_eq!(n, c.input_dim());
        let x = vec![0.1; n];
        let mut y = [0.0; ACTION_DIM];
        assert_eq!(gbc_model_forward(m, x.as_ptr(), n, y.as_mut_ptr(), ACTION_DIM), GbcStatus::Ok);
        assert!(y.iter().all(|v| v.is_finite()));
        assert_eq!(gbc_model_forward(m, x.as_ptr(), n - 1, y.as_mut_ptr(), ACTION_DIM), GbcStatus::DimMismatch);

        // An untrained network still produces finite, clamped actions until it falls.
        let mut sim = ptr::null_mut();
        assert_eq!(gbc_sim_new(0.3, 0.0, GbcGait::Walk, &mut sim), GbcStatus::Ok);
        let mut ev = GbcEvents::default();
        let mut status = GbcStatus::Ok;
        for _ in 0..3000 {
            status = gbc_sim_step_model(sim, m, &mut ev);
            if status != GbcStatus::Ok || ev.failure != GbcFailure::None {
                break;
            }
        }
        assert!(matches!(status, GbcStatus::Ok | GbcStatus::NumericalFailure));
        gbc_sim_free(sim);
        gbc_model_free(m);
    }
}

#[test]
fn load_errors_carry_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = CString::new(dir.path().join("none.bin").to_str().unwrap()).unwrap();
    let junk_path = dir.path().join("junk.bin");
    std::fs::write(&junk_path, b"not a model").unwrap();
    let junk = CString::new(junk_path.to_str().unwrap()).unwrap();
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(gbc_model_load(missing.as_ptr(), &mut m), GbcStatus::Io);
        assert!(m.is_null());
        assert_eq!(gbc_model_load(junk.as_ptr(), &mut m), GbcStatus::Format);
        assert!(m.is_null());
    }
}

#[test]
fn header_is_valid_c_and_cpp() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/gaitbc.h");
    let text = std::fs::read_to_string(header).unwrap();
    for f in ["gbc_sim_new", "gbc_model_load", "gbc_last_error", "GBC_STATUS_DIM_MISMATCH"] {
        assert!(text.contains(f), "{f} missing from header");
    }
    for (compiler, lang) in [("cc", "c"), ("c++", "c++")] {
        let Ok(out) = std::process::Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang, header])
            .output()
        else {
            eprintln!("{compiler} not found, skipping");
            continue;
        };
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn c_program_links_against_the_static_library() {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    let profile = if cfg!(debug_assertions) { "debug" } else { "release" };
    let lib = root.join("../../target").join(profile).join("libgaitbc_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built, skipping", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("walk");
    let Ok(out) = std::process::Command::new("cc")
        .arg(root.join("examples/c/walk.c"))
        .arg("-I")
        .arg(root.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
    else {
        eprintln!("cc not found, skipping");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = std::process::Command::new(&exe).output().unwrap();
    assert!(run.status.success());
    let text = String::from_utf8(run.stdout).unwrap();
    let steps: usize = text.split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!(steps >= 8, "{text}");
}
