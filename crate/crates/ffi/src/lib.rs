//! C ABI for the rasim simulator.
//!
//! Every function returns a [`RasimStatus`]; on failure the message is kept
//! per thread and read with [`rasim_last_error_message`]. Handles are opaque
//! and owned by the caller, who releases them with the matching `_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use rasim::engine::{evaluate, EvaluationReport, Scenario};
use rasim::policies::{Policy, ProportionalPolicy, RandomPolicy, UniformPolicy};
use rasim::rl::{self, AgentPolicy};
use rasim::{Error, ExperimentConfig};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RasimStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidString = 2,
    Config = 3,
    Argument = 4,
    Contract = 5,
    TooLarge = 6,
    Diverged = 7,
    Parse = 8,
    Io = 9,
    OutOfRange = 10,
    Panic = 11,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RasimPolicyKind {
    Random = 0,
    Uniform = 1,
    Proportional = 2,
    /// Needs an agent handle.
    Agent = 3,
}

pub struct RasimConfig(ExperimentConfig);
pub struct RasimScenario(Scenario);
pub struct RasimAgent(AgentPolicy);
pub struct RasimReport(EvaluationReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> RasimStatus {
    match e {
        Error::Config(_) => RasimStatus::Config,
        Error::Argument(_) => RasimStatus::Argument,
        Error::Contract(_) => RasimStatus::Contract,
        Error::TooLarge(_) => RasimStatus::TooLarge,
        Error::Diverged(_) => RasimStatus::Diverged,
        Error::Parse { .. } => RasimStatus::Parse,
        Error::Io { .. } => RasimStatus::Io,
    }
}

struct Fail(RasimStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> RasimStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            RasimStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside rasim".into());
            RasimStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| Fail(RasimStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| Fail(RasimStatus::NullPointer, format!("{what} is null")))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(Fail(RasimStatus::NullPointer, "path is null".into()));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| Fail(RasimStatus::InvalidString, "path is not valid UTF-8".into()))
}

/// Message of the last failed call on this thread, or null. Valid until the next call.
#[no_mangle]
pub extern "C" fn rasim_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static, NUL-terminated version string.
#[no_mangle]
pub extern "C" fn rasim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// The bundled reference configuration.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rasim_config_reference(out_config: *mut *mut RasimConfig) -> RasimStatus {
    guard(|| {
        *out(out_config, "out_config")? = Box::into_raw(Box::new(RasimConfig(ExperimentConfig::reference())));
        Ok(())
    })
}

/// Parses a TOML config file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out_config` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rasim_config_from_path(path: *const c_char, out_config: *mut *mut RasimConfig) -> RasimStatus {
    guard(|| {
        let slot = out(out_config, "out_config")?;
        let cfg = ExperimentConfig::from_path(path_arg(path)?)?;
        *slot = Box::into_raw(Box::new(RasimConfig(cfg)));
        Ok(())
    })
}

/// Overrides the number of training episodes per type.
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rasim_config_set_training_episodes(config: *mut RasimConfig, episodes: u32) -> RasimStatus {
    guard(|| {
        out(config, "config")?.0.rl.episodes = episodes;
        Ok(())
    })
}

/// # Safety
/// `config` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn rasim_config_free(config: *mut RasimConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Builds the topology and weights for a config.
///
/// # Safety
/// `config` must be a live handle and `out_scenario` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rasim_scenario_new(config: *const RasimConfig, out_scenario: *mut *mut RasimScenario) -> RasimStatus {
    guard(|| {
        let cfg = borrow(config, "config")?;
        let slot = out(out_scenario, "out_scenario")?;
        *slot = Box::into_raw(Box::new(RasimScenario(Scenario::from_config(&cfg.0)?)));
        Ok(())
    })
}

/// # Safety
/// `scenario` must be a live handle and the out pointers valid.
#[no_mangle]
pub unsafe extern "C" fn rasim_scenario_shape(
    scenario: *const RasimScenario,
    out_servers: *mut usize,
    out_reservations: *mut usize,
    out_types: *mut usize,
) -> RasimStatus {
    guard(|| {
        let topo = &borrow(scenario, "scenario")?.0.topo;
        *out(out_servers, "out_servers")? = topo.num_servers();
        *out(out_reservations, "out_reservations")? = topo.num_reservations();
        *out(out_types, "out_types")? = topo.num_types();
        Ok(())
    })
}

/// # Safety
/// `scenario` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn rasim_scenario_free(scenario: *mut RasimScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Trains agents with the config's learner settings.
///
/// # Safety
/// Handles must be live and `out_agent` valid.
#[no_mangle]
pub unsafe extern "C" fn rasim_train(
    config: *const RasimConfig,
    scenario: *const RasimScenario,
    seed: u64,
    out_agent: *mut *mut RasimAgent,
) -> RasimStatus {
    guard(|| {
        let cfg = borrow(config, "config")?;
        let sc = borrow(scenario, "scenario")?;
        let slot = out(out_agent, "out_agent")?;
        let trained = rl::train(&sc.0, &cfg.0.rl, seed)?;
        *slot = Box::into_raw(Box::new(RasimAgent(trained.policy)));
        Ok(())
    })
}

/// Loads a checkpoint and checks it against the scenario.
///
/// # Safety
/// `path` must be a NUL-terminated string, `scenario` live, `out_agent` valid.
#[no_mangle]
pub unsafe extern "C" fn rasim_agent_load(
    path: *const c_char,
    scenario: *const RasimScenario,
    out_agent: *mut *mut RasimAgent,
) -> RasimStatus {
    guard(|| {
        let sc = borrow(scenario, "scenario")?;
        let slot = out(out_agent, "out_agent")?;
        let agent = AgentPolicy::load(path_arg(path)?, &sc.0.topo)?;
        agent.check_compatible(&sc.0.topo, sc.0.lookahead)?;
        *slot = Box::into_raw(Box::new(RasimAgent(agent)));
        Ok(())
    })
}

/// # Safety
/// Handles must be live and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn rasim_agent_save(
    agent: *const RasimAgent,
    scenario: *const RasimScenario,
    path: *const c_char,
) -> RasimStatus {
    guard(|| {
        let a = borrow(agent, "agent")?;
        let sc = borrow(scenario, "scenario")?;
        a.0.save(path_arg(path)?, &sc.0.topo)?;
        Ok(())
    })
}

/// # Safety
/// `agent` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn rasim_agent_free(agent: *mut RasimAgent) {
    if !agent.is_null() {
        drop(Box::from_raw(agent));
    }
}

/// Runs `episodes` episodes with seeds `seed, seed + 1, ...`.
///
/// # Safety
/// `scenario` must be live; `agent` may be null unless `policy` is agent.
#[no_mangle]
pub unsafe extern "C" fn rasim_evaluate(
    scenario: *const RasimScenario,
    policy: RasimPolicyKind,
    agent: *const RasimAgent,
    episodes: u32,
    seed: u64,
    out_report: *mut *mut RasimReport,
) -> RasimStatus {
    guard(|| {
        let sc = borrow(scenario, "scenario")?;
        let slot = out(out_report, "out_report")?;
        let p: Box<dyn Policy> = match policy {
            RasimPolicyKind::Random => Box::new(RandomPolicy::new(seed)),
            RasimPolicyKind::Uniform => Box::new(UniformPolicy),
            RasimPolicyKind::Proportional => Box::new(ProportionalPolicy),
            RasimPolicyKind::Agent => borrow(agent, "agent")?.0.boxed_clone(),
        };
        let report = evaluate(&sc.0, p.as_ref(), episodes, seed)?;
        *slot = Box::into_raw(Box::new(RasimReport(report)));
        Ok(())
    })
}

/// # Safety
/// `report` must be live and `out_count` valid.
#[no_mangle]
pub unsafe extern "C" fn rasim_report_episode_count(report: *const RasimReport, out_count: *mut usize) -> RasimStatus {
    guard(|| {
        *out(out_count, "out_count")? = borrow(report, "report")?.0.episodes.len();
        Ok(())
    })
}

/// # Safety
/// `report` must be live and `out_median` valid.
#[no_mangle]
pub unsafe extern "C" fn rasim_report_median_utility(report: *const RasimReport, out_median: *mut f64) -> RasimStatus {
    guard(|| {
        *out(out_median, "out_median")? = borrow(report, "report")?.0.median_utility();
        Ok(())
    })
}

/// Total utility and constraint violations (g2 plus g3) of one episode.
///
/// # Safety
/// `report` must be live and the out pointers valid.
#[no_mangle]
pub unsafe extern "C" fn rasim_report_episode(
    report: *const RasimReport,
    index: usize,
    out_utility: *mut f64,
    out_violations: *mut u64,
) -> RasimStatus {
    guard(|| {
        let r = borrow(report, "report")?;
        let ep = r.0.episodes.get(index).ok_or_else(|| {
            Fail(RasimStatus::OutOfRange, format!("episode {index} of {}", r.0.episodes.len()))
        })?;
        *out(out_utility, "out_utility")? = ep.total_utility();
        *out(out_violations, "out_violations")? = ep.totals.violations();
        Ok(())
    })
}

/// # Safety
/// `report` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn rasim_report_free(report: *mut RasimReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}
