use std::ffi::{CStr, CString};
use std::ptr;

use rasim_ffi::*;

fn last_error() -> String {
    let p = rasim_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn reduced_config(dir: &std::path::Path) -> *mut RasimConfig {
    let path = dir.join("reduced.toml");
    std::fs::write(&path, rasim::config::REDUCED_CONFIG).unwrap();
    let c = CString::new(path.to_str().unwrap()).unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { rasim_config_from_path(c.as_ptr(), &mut cfg) }, RasimStatus::Ok);
    cfg
}

#[test]
fn evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = reduced_config(dir.path());
    let mut sc = ptr::null_mut();
    unsafe {
        assert_eq!(rasim_scenario_new(cfg, &mut sc), RasimStatus::Ok);
        let (mut b, mut l, mut e) = (0usize, 0usize, 0usize);
        assert_eq!(rasim_scenario_shape(sc, &mut b, &mut l, &mut e), RasimStatus::Ok);
        assert_eq!((b, l, e), (200, 10, 2));

        let mut report = ptr::null_mut();
        assert_eq!(rasim_evaluate(sc, RasimPolicyKind::Uniform, ptr::null(), 3, 7, &mut report), RasimStatus::Ok);
        let mut n = 0usize;
        assert_eq!(rasim_report_episode_count(report, &mut n), RasimStatus::Ok);
        assert_eq!(n, 3);
        let (mut u, mut v) = (0.0f64, 0u64);
        assert_eq!(rasim_report_episode(report, 0, &mut u, &mut v), RasimStatus::Ok);
        assert!(u > 0.0);
        assert_eq!(rasim_report_episode(report, 3, &mut u, &mut v), RasimStatus::OutOfRange);
        assert!(last_error().contains("episode 3"));
        let mut median = 0.0;
        assert_eq!(rasim_report_median_utility(report, &mut median), RasimStatus::Ok);
        assert!(median > 0.0);
        rasim_report_free(report);
        rasim_scenario_free(sc);
        rasim_config_free(cfg);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    unsafe {
        let mut cfg = ptr::null_mut();
        let missing = CString::new("/nonexistent/rasim.toml").unwrap();
        assert_eq!(rasim_config_from_path(missing.as_ptr(), &mut cfg), RasimStatus::Io);
        assert!(last_error().contains("/nonexistent/rasim.toml"));
        assert!(cfg.is_null());
        assert_eq!(rasim_config_from_path(ptr::null(), &mut cfg), RasimStatus::NullPointer);
        assert_eq!(rasim_config_reference(ptr::null_mut()), RasimStatus::NullPointer);

        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad.toml");
        std::fs::write(&bad, "").unwrap();
        let bad = CString::new(bad.to_str().unwrap()).unwrap();
        let status = rasim_config_from_path(bad.as_ptr(), &mut cfg);
        assert!(matches!(status, RasimStatus::Config | RasimStatus::Parse), "{status:?}");

        // agent policy without an agent handle
        let cfg = reduced_config(dir.path());
        let mut sc = ptr::null_mut();
        assert_eq!(rasim_scenario_new(cfg, &mut sc), RasimStatus::Ok);
        let mut report = ptr::null_mut();
        assert_eq!(rasim_evaluate(sc, RasimPolicyKind::Agent, ptr::null(), 1, 0, &mut report), RasimStatus::NullPointer);
        assert!(report.is_null());
        rasim_scenario_free(sc);
        rasim_config_free(cfg);
        // freeing null is a no-op
        rasim_config_free(ptr::null_mut());
    }
}

#[test]
fn train_save_load_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = reduced_config(dir.path());
    unsafe {
        assert_eq!(rasim_config_set_training_episodes(cfg, 2), RasimStatus::Ok);
        let mut sc = ptr::null_mut();
        assert_eq!(rasim_scenario_new(cfg, &mut sc), RasimStatus::Ok);
        let mut agent = ptr::null_mut();
        assert_eq!(rasim_train(cfg, sc, 1, &mut agent), RasimStatus::Ok);
        let path = CString::new(dir.path().join("agent.json").to_str().unwrap()).unwrap();
        assert_eq!(rasim_agent_save(agent, sc, path.as_ptr()), RasimStatus::Ok);
        let mut loaded = ptr::null_mut();
        assert_eq!(rasim_agent_load(path.as_ptr(), sc, &mut loaded), RasimStatus::Ok);

        let (mut a, mut b) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(rasim_evaluate(sc, RasimPolicyKind::Agent, agent, 1, 5, &mut a), RasimStatus::Ok);
        assert_eq!(rasim_evaluate(sc, RasimPolicyKind::Agent, loaded, 1, 5, &mut b), RasimStatus::Ok);
        let (mut ua, mut ub, mut v) = (0.0, 0.0, 0u64);
        rasim_report_episode(a, 0, &mut ua, &mut v);
        rasim_report_episode(b, 0, &mut ub, &mut v);
        assert_eq!(ua, ub);
        for r in [a, b] {
            rasim_report_free(r);
        }
        rasim_agent_free(agent);
        rasim_agent_free(loaded);
        rasim_scenario_free(sc);
        rasim_config_free(cfg);
    }
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(rasim_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
