//! C ABI for the `victimloc` library.
//!
//! Handles (`VlConfig`, `VlScenario`, `VlResults`) are opaque and owned by
//! the caller once returned; release each with its `_free` function. Strings
//! returned through `char **` out-parameters are released with
//! [`vl_string_free`]. Every fallible call returns a [`VlStatus`]; on failure
//! [`vl_last_error`] describes the most recent error on the calling thread.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use victimloc::channel::{ChannelParams, Topology};
use victimloc::geometry::Rect;
use victimloc::harness::{
    self, ExperimentConfig, ExperimentResult, SweepAxis, SweepSpec, Technique,
};
use victimloc::report;
use victimloc::scenario::{generate_scenario, Scenario};
use victimloc::Error;

/// Status code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Configuration rejected; same class as CLI exit code 2.
    Config = 3,
    /// Unmet precondition or degenerate geometry; CLI exit code 3.
    Precondition = 4,
    /// I/O or serialization failure; CLI exit code 4.
    Runtime = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VlTechnique {
    ToaCoop = 0,
    TdoaNoncoop = 1,
    AoaCoop = 2,
    RssdNoncoop = 3,
    RssCoopGd = 4,
    RssCoopMm = 5,
    ToaNoncoop = 6,
}

impl From<VlTechnique> for Technique {
    fn from(t: VlTechnique) -> Self {
        match t {
            VlTechnique::ToaCoop => Technique::ToaCoop,
            VlTechnique::TdoaNoncoop => Technique::TdoaNoncoop,
            VlTechnique::AoaCoop => Technique::AoaCoop,
            VlTechnique::RssdNoncoop => Technique::RssdNoncoop,
            VlTechnique::RssCoopGd => Technique::RssCoopGd,
            VlTechnique::RssCoopMm => Technique::RssCoopMm,
            VlTechnique::ToaNoncoop => Technique::ToaNoncoop,
        }
    }
}

impl From<Technique> for VlTechnique {
    fn from(t: Technique) -> Self {
        match t {
            Technique::ToaCoop => VlTechnique::ToaCoop,
            Technique::TdoaNoncoop => VlTechnique::TdoaNoncoop,
            Technique::AoaCoop => VlTechnique::AoaCoop,
            Technique::RssdNoncoop => VlTechnique::RssdNoncoop,
            Technique::RssCoopGd => VlTechnique::RssCoopGd,
            Technique::RssCoopMm => VlTechnique::RssCoopMm,
            Technique::ToaNoncoop => VlTechnique::ToaNoncoop,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VlSweepAxis {
    Rescuers = 0,
    Victims = 1,
}

/// Channel model. Angles are in radians.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VlChannelParams {
    pub ple: f64,
    pub sigma_shadow_db: f64,
    pub sigma_range_m: f64,
    pub sigma_angle_rad: f64,
    pub ref_loss_db: f64,
    pub ref_dist_m: f64,
    pub prop_speed_mps: f64,
}

impl From<VlChannelParams> for ChannelParams {
    fn from(p: VlChannelParams) -> Self {
        ChannelParams {
            ple: p.ple,
            sigma_shadow_db: p.sigma_shadow_db,
            sigma_range_m: p.sigma_range_m,
            sigma_angle_rad: p.sigma_angle_rad,
            ref_loss_db: p.ref_loss_db,
            ref_dist_m: p.ref_dist_m,
            prop_speed_mps: p.prop_speed_mps,
        }
    }
}

impl From<ChannelParams> for VlChannelParams {
    fn from(p: ChannelParams) -> Self {
        VlChannelParams {
            ple: p.ple,
            sigma_shadow_db: p.sigma_shadow_db,
            sigma_range_m: p.sigma_range_m,
            sigma_angle_rad: p.sigma_angle_rad,
            ref_loss_db: p.ref_loss_db,
            ref_dist_m: p.ref_dist_m,
            prop_speed_mps: p.prop_speed_mps,
        }
    }
}

/// One row of a results table. `sweep_value` is -1 outside sweeps.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VlResultRow {
    pub technique: VlTechnique,
    pub sweep_value: i64,
    pub nrmse_m: f64,
    pub runtime_mean_s: f64,
    pub runtime_total_s: f64,
    pub convergence_rate: f64,
    pub trials: u64,
    pub excluded_trials: u64,
    pub seed: u64,
}

/// Experiment configuration.
pub struct VlConfig(ExperimentConfig);

/// A drawn scenario with full connectivity.
pub struct VlScenario {
    scenario: Scenario,
    topology: Topology,
}

/// Results of an experiment or a sweep.
pub struct VlResults(Vec<ExperimentResult>);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> VlStatus {
    match e.exit_code() {
        2 => VlStatus::Config,
        3 => VlStatus::Precondition,
        _ => VlStatus::Runtime,
    }
}

fn fail(status: VlStatus, message: impl Into<String>) -> VlStatus {
    set_error(message.into());
    status
}

/// Runs `f`, mapping errors and panics to status codes.
fn guard(f: impl FnOnce() -> Result<(), VlStatus>) -> VlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VlStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => fail(VlStatus::Panic, "internal panic"),
    }
}

fn lib<T>(r: victimloc::Result<T>) -> Result<T, VlStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

unsafe fn arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, VlStatus> {
    p.as_ref()
        .ok_or_else(|| fail(VlStatus::NullPointer, format!("{name} is null")))
}

unsafe fn arg_mut<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, VlStatus> {
    p.as_mut()
        .ok_or_else(|| fail(VlStatus::NullPointer, format!("{name} is null")))
}

unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, VlStatus> {
    if p.is_null() {
        return Err(fail(VlStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(VlStatus::InvalidArgument, format!("{name} is not UTF-8")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), VlStatus> {
    let out = arg_mut(out, "out")?;
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), VlStatus> {
    let out = arg_mut(out, "out")?;
    let c = CString::new(s).map_err(|_| fail(VlStatus::Runtime, "string holds a NUL byte"))?;
    *out = c.into_raw();
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn vl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// CLI name of a technique, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vl_technique_name(technique: VlTechnique) -> *const c_char {
    match technique {
        VlTechnique::ToaCoop => c"toa-coop".as_ptr(),
        VlTechnique::TdoaNoncoop => c"tdoa-noncoop".as_ptr(),
        VlTechnique::AoaCoop => c"aoa-coop".as_ptr(),
        VlTechnique::RssdNoncoop => c"rssd-noncoop".as_ptr(),
        VlTechnique::RssCoopGd => c"rss-coop-gd".as_ptr(),
        VlTechnique::RssCoopMm => c"rss-coop-mm".as_ptr(),
        VlTechnique::ToaNoncoop => c"toa-noncoop".as_ptr(),
    }
}

#[no_mangle]
pub unsafe extern "C" fn vl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[no_mangle]
pub extern "C" fn vl_channel_default() -> VlChannelParams {
    ChannelParams::default().into()
}

#[no_mangle]
pub extern "C" fn vl_channel_noiseless() -> VlChannelParams {
    ChannelParams::noiseless().into()
}

/// Default configuration: 5 victims, 10 rescuers, 100 m square, 3000 trials.
#[no_mangle]
pub unsafe extern "C" fn vl_config_default(out: *mut *mut VlConfig) -> VlStatus {
    guard(|| put(out, VlConfig(ExperimentConfig::default())))
}

/// Parses a TOML document; unspecified keys take their defaults.
#[no_mangle]
pub unsafe extern "C" fn vl_config_from_toml(
    toml: *const c_char,
    out: *mut *mut VlConfig,
) -> VlStatus {
    guard(|| {
        let cfg = lib(report::parse_config_str(text(toml, "toml")?))?;
        put(out, VlConfig(cfg))
    })
}

#[no_mangle]
pub unsafe extern "C" fn vl_config_to_toml(
    cfg: *const VlConfig,
    out: *mut *mut c_char,
) -> VlStatus {
    guard(|| put_string(out, report::config_to_toml(&arg(cfg, "cfg")?.0)))
}

#[no_mangle]
pub unsafe extern "C" fn vl_config_free(cfg: *mut VlConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

#[no_mangle]
pub unsafe extern "C" fn vl_config_set_trials(cfg: *mut VlConfig, trials: u64) -> VlStatus {
    guard(|| {
        let cfg = arg_mut(cfg, "cfg")?;
        if trials < 1 {
            return Err(fail(VlStatus::Config, "run.trials: trials must be ≥ 1"));
        }
        cfg.0.trials = trials as usize;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn vl_config_set_seed(cfg: *mut VlConfig, seed: u64) -> VlStatus {
    guard(|| {
        arg_mut(cfg, "cfg")?.0.scenario.seed = seed;
        Ok(())
    })
}

/// Worker threads; 0 uses every core.
#[no_mangle]
pub unsafe extern "C" fn vl_config_set_parallelism(cfg: *mut VlConfig, workers: u64) -> VlStatus {
    guard(|| {
        arg_mut(cfg, "cfg")?.0.parallelism = workers as usize;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn vl_config_set_counts(
    cfg: *mut VlConfig,
    victims: u64,
    rescuers: u64,
) -> VlStatus {
    guard(|| {
        let cfg = arg_mut(cfg, "cfg")?;
        cfg.0.scenario.victims = victims as usize;
        cfg.0.scenario.rescuers = rescuers as usize;
        lib(cfg.0.validate())
    })
}

#[no_mangle]
pub unsafe extern "C" fn vl_config_set_channel(
    cfg: *mut VlConfig,
    params: *const VlChannelParams,
) -> VlStatus {
    guard(|| {
        let cfg = arg_mut(cfg, "cfg")?;
        let params: ChannelParams = (*arg(params, "params")?).into();
        lib(params.validate())?;
        cfg.0.channel = params;
        Ok(())
    })
}

/// Replaces the technique list.
#[no_mangle]
pub unsafe extern "C" fn vl_config_set_techniques(
    cfg: *mut VlConfig,
    techniques: *const VlTechnique,
    count: usize,
) -> VlStatus {
    guard(|| {
        let cfg = arg_mut(cfg, "cfg")?;
        if count == 0 {
            return Err(fail(
                VlStatus::Config,
                "run.techniques: at least one technique is required",
            ));
        }
        if techniques.is_null() {
            return Err(fail(VlStatus::NullPointer, "techniques is null"));
        }
        let list = std::slice::from_raw_parts(techniques, count);
        let mut next = cfg.0.clone();
        next.techniques = list.iter().map(|&t| t.into()).collect();
        lib(next.validate())?;
        cfg.0 = next;
        Ok(())
    })
}

/// Sets the sweep axis and values (ascending). `count == 0` uses the
/// axis defaults.
#[no_mangle]
pub unsafe extern "C" fn vl_config_set_sweep(
    cfg: *mut VlConfig,
    axis: VlSweepAxis,
    values: *const u64,
    count: usize,
) -> VlStatus {
    guard(|| {
        let cfg = arg_mut(cfg, "cfg")?;
        let axis = match axis {
            VlSweepAxis::Rescuers => SweepAxis::Rescuers,
            VlSweepAxis::Victims => SweepAxis::Victims,
        };
        let values = if count == 0 {
            axis.default_values()
        } else if values.is_null() {
            return Err(fail(VlStatus::NullPointer, "values is null"));
        } else {
            std::slice::from_raw_parts(values, count)
                .iter()
                .map(|&v| v as usize)
                .collect()
        };
        let mut next = cfg.0.clone();
        next.sweep = Some(SweepSpec { axis, values });
        lib(next.validate())?;
        cfg.0 = next;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn vl_run_experiment(
    cfg: *const VlConfig,
    out: *mut *mut VlResults,
) -> VlStatus {
    guard(|| {
        let mut cfg = arg(cfg, "cfg")?.0.clone();
        cfg.sweep = None;
        let result = lib(harness::run_experiment(&cfg))?;
        put(out, VlResults(vec![result]))
    })
}

#[no_mangle]
pub unsafe extern "C" fn vl_run_sweep(cfg: *const VlConfig, out: *mut *mut VlResults) -> VlStatus {
    guard(|| {
        let results = lib(harness::sweep(&arg(cfg, "cfg")?.0))?;
        put(out, VlResults(results))
    })
}

#[no_mangle]
pub unsafe extern "C" fn vl_results_free(results: *mut VlResults) {
    if !results.is_null() {
        drop(Box::from_raw(results));
    }
}

/// Number of rows across every experiment; 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn vl_results_row_count(results: *const VlResults) -> usize {
    results
        .as_ref()
        .map_or(0, |r| r.0.iter().map(|e| e.rows.len()).sum())
}

#[no_mangle]
pub unsafe extern "C" fn vl_results_row(
    results: *const VlResults,
    index: usize,
    out: *mut VlResultRow,
) -> VlStatus {
    guard(|| {
        let results = arg(results, "results")?;
        let out = arg_mut(out, "out")?;
        let row = results
            .0
            .iter()
            .flat_map(|e| &e.rows)
            .nth(index)
            .ok_or_else(|| {
                fail(
                    VlStatus::InvalidArgument,
                    format!("row {index} out of range"),
                )
            })?;
        *out = VlResultRow {
            technique: row.technique.into(),
            sweep_value: row.sweep_value.map_or(-1, |v| v as i64),
            nrmse_m: row.nrmse_m,
            runtime_mean_s: row.runtime_mean_s,
            runtime_total_s: row.runtime_total_s,
            convergence_rate: row.convergence_rate,
            trials: row.trials as u64,
            excluded_trials: row.excluded_trials as u64,
            seed: row.seed,
        };
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn vl_results_to_csv(
    results: *const VlResults,
    out: *mut *mut c_char,
) -> VlStatus {
    guard(|| put_string(out, report::results_csv(&arg(results, "results")?.0)))
}

#[no_mangle]
pub unsafe extern "C" fn vl_results_to_json(
    results: *const VlResults,
    out: *mut *mut c_char,
) -> VlStatus {
    guard(|| {
        let json = lib(report::results_json(&arg(results, "results")?.0))?;
        put_string(out, json)
    })
}

/// Draws a scenario in the `[0, area_m]` square.
#[no_mangle]
pub unsafe extern "C" fn vl_scenario_generate(
    victims: u64,
    rescuers: u64,
    area_m: f64,
    seed: u64,
    out: *mut *mut VlScenario,
) -> VlStatus {
    guard(|| {
        let scenario = lib(generate_scenario(
            victims as usize,
            rescuers as usize,
            Rect::new(0.0, 0.0, area_m, area_m),
            seed,
        ))?;
        let topology = Topology::full(&scenario);
        put(out, VlScenario { scenario, topology })
    })
}

#[no_mangle]
pub unsafe extern "C" fn vl_scenario_free(scenario: *mut VlScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

#[no_mangle]
pub unsafe extern "C" fn vl_scenario_victim_count(scenario: *const VlScenario) -> usize {
    scenario.as_ref().map_or(0, |s| s.scenario.n_victims())
}

#[no_mangle]
pub unsafe extern "C" fn vl_scenario_rescuer_count(scenario: *const VlScenario) -> usize {
    scenario.as_ref().map_or(0, |s| s.scenario.n_rescuers())
}

/// Writes the true position of victim `index`.
#[no_mangle]
pub unsafe extern "C" fn vl_scenario_victim(
    scenario: *const VlScenario,
    index: usize,
    x: *mut f64,
    y: *mut f64,
) -> VlStatus {
    guard(|| {
        let s = arg(scenario, "scenario")?;
        let p = s.scenario.victims().get(index).ok_or_else(|| {
            fail(
                VlStatus::InvalidArgument,
                format!("victim {index} out of range"),
            )
        })?;
        *arg_mut(x, "x")? = p.x;
        *arg_mut(y, "y")? = p.y;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn vl_scenario_rescuer(
    scenario: *const VlScenario,
    index: usize,
    x: *mut f64,
    y: *mut f64,
) -> VlStatus {
    guard(|| {
        let s = arg(scenario, "scenario")?;
        let p = s.scenario.rescuers().get(index).ok_or_else(|| {
            fail(
                VlStatus::InvalidArgument,
                format!("rescuer {index} out of range"),
            )
        })?;
        *arg_mut(x, "x")? = p.x;
        *arg_mut(y, "y")? = p.y;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn vl_scenario_to_json(
    scenario: *const VlScenario,
    out: *mut *mut c_char,
) -> VlStatus {
    guard(|| {
        let json = lib(arg(scenario, "scenario")?.scenario.to_json())?;
        put_string(out, json)
    })
}

/// Synthesizes one trial of `technique` on `scenario` and solves it.
///
/// `xy` receives `2 * victim_count` coordinates (`x0, y0, x1, ...`); a
/// victim whose solve failed gets NaN. `converged` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn vl_solve_trial(
    scenario: *const VlScenario,
    technique: VlTechnique,
    params: *const VlChannelParams,
    trial_index: u64,
    master_seed: u64,
    xy: *mut f64,
    xy_len: usize,
    converged: *mut bool,
) -> VlStatus {
    guard(|| {
        let s = arg(scenario, "scenario")?;
        let params: ChannelParams = (*arg(params, "params")?).into();
        lib(params.validate())?;
        let n = s.scenario.n_victims();
        if xy.is_null() {
            return Err(fail(VlStatus::NullPointer, "xy is null"));
        }
        if xy_len < 2 * n {
            return Err(fail(
                VlStatus::InvalidArgument,
                format!("xy holds {xy_len} values, {} needed", 2 * n),
            ));
        }
        if trial_index >= 1 << 60 {
            return Err(fail(
                VlStatus::InvalidArgument,
                "trial_index must be below 2^60",
            ));
        }
        let outcome = lib(harness::run_trial(
            &s.scenario,
            &s.topology,
            technique.into(),
            &params,
            trial_index,
            master_seed,
        ))?;
        let out = std::slice::from_raw_parts_mut(xy, 2 * n);
        for (i, p) in outcome.estimates.iter().enumerate() {
            out[2 * i] = p.x;
            out[2 * i + 1] = p.y;
        }
        if let Some(c) = converged.as_mut() {
            *c = outcome.converged;
        }
        Ok(())
    })
}
