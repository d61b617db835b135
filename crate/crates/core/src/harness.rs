//! Monte Carlo experiment engine.
//!
//! One scenario is drawn per experiment from the master seed; every trial
//! then regenerates its measurement noise from `(master_seed, trial_index)`
//! so results do not depend on how trials are scheduled across workers.
//! Per-trial outcomes are collected in trial order and reduced sequentially.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{
    derive_rssd, gen_aoa, gen_rss, gen_tdoa, gen_toa_ranges, ChannelParams, MeasurementSet,
    Topology,
};
use crate::error::{Error, Result};
use crate::geometry::{distance, Point, Rect};
use crate::rng::{NoiseStream, StreamTag};
use crate::scenario::{
    draw_tx_powers, generate_scenario, validate_scenario, Scenario, MIN_RESCUERS, TX_POWER_MAX_DBM,
    TX_POWER_MIN_DBM,
};
use crate::solvers::{
    self, SolveResult, SolverOptions, DEFAULT_TOL, LSQ_MAX_ITERS, RSSD_MAX_ITERS, RSS_MAX_ITERS,
};

pub const DEFAULT_TRIALS: usize = 3000;
pub const DEFAULT_VICTIMS: usize = 5;
pub const DEFAULT_RESCUERS: usize = 10;
pub const DEFAULT_AREA_M: f64 = 100.0;
pub const DEFAULT_SEED: u64 = 1;
pub const RESCUER_SWEEP: [usize; 5] = [6, 8, 10, 12, 14];
pub const VICTIM_SWEEP: [usize; 5] = [5, 10, 15, 20, 25];

pub const PRNG_NAME: &str =
    "ChaCha8 (rand_chacha 0.9), seed_from_u64(master_seed), stream (trial << 4) | modality";
pub const NRMSE_DEFINITION: &str =
    "sqrt(sum over trials m and victims i of |x_hat - x|^2 / (M * N)), meters";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Technique {
    ToaCoop,
    TdoaNoncoop,
    AoaCoop,
    RssdNoncoop,
    RssCoopGd,
    RssCoopMm,
    ToaNoncoop,
}

impl Technique {
    /// The six benchmarked techniques in report order.
    pub const DEFAULTS: [Technique; 6] = [
        Technique::ToaCoop,
        Technique::TdoaNoncoop,
        Technique::AoaCoop,
        Technique::RssdNoncoop,
        Technique::RssCoopGd,
        Technique::RssCoopMm,
    ];

    pub const ALL: [Technique; 7] = [
        Technique::ToaCoop,
        Technique::TdoaNoncoop,
        Technique::AoaCoop,
        Technique::RssdNoncoop,
        Technique::RssCoopGd,
        Technique::RssCoopMm,
        Technique::ToaNoncoop,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Technique::ToaCoop => "toa-coop",
            Technique::TdoaNoncoop => "tdoa-noncoop",
            Technique::AoaCoop => "aoa-coop",
            Technique::RssdNoncoop => "rssd-noncoop",
            Technique::RssCoopGd => "rss-coop-gd",
            Technique::RssCoopMm => "rss-coop-mm",
            Technique::ToaNoncoop => "toa-noncoop",
        }
    }

    /// Name of the published method each technique stands in for.
    pub fn alias(&self) -> &'static str {
        match self {
            Technique::ToaCoop => "ToA-Chen",
            Technique::TdoaNoncoop => "P-TDoA",
            Technique::AoaCoop => "EM-POG-AMP",
            Technique::RssdNoncoop => "RLBM",
            Technique::RssCoopGd => "IRDL",
            Technique::RssCoopMm => "FCUP",
            Technique::ToaNoncoop => "multilateration",
        }
    }

    pub fn is_cooperative(&self) -> bool {
        matches!(
            self,
            Technique::ToaCoop | Technique::AoaCoop | Technique::RssCoopGd | Technique::RssCoopMm
        )
    }

    /// Time-of-flight based techniques.
    pub fn is_time_based(&self) -> bool {
        matches!(
            self,
            Technique::ToaCoop | Technique::TdoaNoncoop | Technique::ToaNoncoop
        )
    }

    pub fn is_rss_family(&self) -> bool {
        matches!(
            self,
            Technique::RssdNoncoop | Technique::RssCoopGd | Technique::RssCoopMm
        )
    }

    pub fn default_options(&self) -> SolverOptions {
        match self {
            Technique::ToaCoop | Technique::AoaCoop => SolverOptions::levenberg_marquardt(),
            Technique::TdoaNoncoop | Technique::ToaNoncoop => SolverOptions::gauss_newton(),
            Technique::RssdNoncoop => SolverOptions::rssd(),
            Technique::RssCoopGd | Technique::RssCoopMm => SolverOptions::rss(),
        }
    }

    /// Options used by the harness: the defaults, with the RSS family
    /// searching only the deployment area.
    pub fn options_for(&self, area: Rect) -> SolverOptions {
        let mut opts = self.default_options();
        if self.is_rss_family() {
            opts.region = Some(area);
        }
        opts
    }
}

impl fmt::Display for Technique {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Technique {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Technique::ALL
            .iter()
            .find(|t| t.name() == s)
            .copied()
            .ok_or_else(|| {
                let known: Vec<_> = Technique::ALL.iter().map(|t| t.name()).collect();
                Error::InvalidInput(format!(
                    "unknown technique `{s}` (known: {})",
                    known.join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Rescuers,
    Victims,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Rescuers => "rescuers",
            SweepAxis::Victims => "victims",
        }
    }

    pub fn default_values(&self) -> Vec<usize> {
        match self {
            SweepAxis::Rescuers => RESCUER_SWEEP.to_vec(),
            SweepAxis::Victims => VICTIM_SWEEP.to_vec(),
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rescuers" => Ok(SweepAxis::Rescuers),
            "victims" => Ok(SweepAxis::Victims),
            _ => Err(Error::InvalidInput(format!("unknown sweep axis `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub victims: usize,
    pub rescuers: usize,
    pub area_m: f64,
    pub seed: u64,
    /// Links longer than this do not exist; `None` connects everything.
    pub comm_range_m: Option<f64>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            victims: DEFAULT_VICTIMS,
            rescuers: DEFAULT_RESCUERS,
            area_m: DEFAULT_AREA_M,
            seed: DEFAULT_SEED,
            comm_range_m: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub channel: ChannelParams,
    pub techniques: Vec<Technique>,
    pub trials: usize,
    pub sweep: Option<SweepSpec>,
    /// Worker threads; 0 uses every available core.
    pub parallelism: usize,
    /// Draw fresh transmit powers every trial instead of fixing them with
    /// the scenario.
    pub redraw_powers: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            channel: ChannelParams::default(),
            techniques: Technique::DEFAULTS.to_vec(),
            trials: DEFAULT_TRIALS,
            sweep: None,
            parallelism: 0,
            redraw_powers: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::config("run.trials", "trials must be ≥ 1"));
        }
        if self.techniques.is_empty() {
            return Err(Error::config(
                "run.techniques",
                "at least one technique is required",
            ));
        }
        for (i, t) in self.techniques.iter().enumerate() {
            if self.techniques[..i].contains(t) {
                return Err(Error::config(
                    "run.techniques",
                    format!("`{t}` listed twice"),
                ));
            }
        }
        if self.scenario.victims < 1 {
            return Err(Error::config("scenario.victims", "victims must be ≥ 1"));
        }
        if self.scenario.rescuers < MIN_RESCUERS {
            return Err(Error::config(
                "scenario.rescuers",
                format!("rescuers must be ≥ {MIN_RESCUERS}"),
            ));
        }
        if !(self.scenario.area_m.is_finite() && self.scenario.area_m > 0.0) {
            return Err(Error::config("scenario.area_m", "area_m must be > 0"));
        }
        if let Some(r) = self.scenario.comm_range_m {
            if r.is_nan() || r <= 0.0 {
                return Err(Error::config(
                    "scenario.comm_range_m",
                    "comm_range_m must be > 0",
                ));
            }
        }
        self.channel.validate()?;
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(Error::config("sweep.values", "values must not be empty"));
            }
            if sweep.values.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::config(
                    "sweep.values",
                    "values must be strictly ascending",
                ));
            }
            let min = match sweep.axis {
                SweepAxis::Rescuers => MIN_RESCUERS,
                SweepAxis::Victims => 1,
            };
            if sweep.values[0] < min {
                return Err(Error::config(
                    "sweep.values",
                    format!("values must be ≥ {min}"),
                ));
            }
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form. Worker count is excluded so
    /// the hash identifies the experiment, not the machine it ran on.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.parallelism = 0;
        let json = serde_json::to_vec(&canonical).expect("config serializes");
        Sha256::digest(&json)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn bounds(&self) -> Rect {
        Rect::square(self.scenario.area_m)
    }

    /// Config of one sweep point: the swept count replaced and the seed
    /// xor-ed with the value.
    pub fn at_sweep_value(&self, axis: SweepAxis, value: usize) -> ExperimentConfig {
        let mut cfg = self.clone();
        cfg.sweep = None;
        cfg.scenario.seed = self.scenario.seed ^ value as u64;
        match axis {
            SweepAxis::Rescuers => cfg.scenario.rescuers = value,
            SweepAxis::Victims => {
                cfg.scenario.victims = value;
                cfg.techniques.retain(|t| t.is_cooperative());
            }
        }
        cfg
    }
}

/// Root mean squared position error over every trial and victim, in meters.
pub fn nrmse(estimates: &[Vec<Point>], truths: &[Vec<Point>]) -> Result<f64> {
    if estimates.len() != truths.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} estimate trials vs {} truth trials",
            estimates.len(),
            truths.len()
        )));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (m, (est, truth)) in estimates.iter().zip(truths).enumerate() {
        if est.len() != truth.len() {
            return Err(Error::ShapeMismatch(format!(
                "trial {m}: {} estimates vs {} victims",
                est.len(),
                truth.len()
            )));
        }
        for (e, t) in est.iter().zip(truth) {
            sum += distance(e, t).powi(2);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::ShapeMismatch("no victims to score".into()));
    }
    Ok((sum / count as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub estimates: Vec<Point>,
    /// Wall time of the solver calls only.
    pub wall_time_s: f64,
    pub converged: bool,
}

impl TrialOutcome {
    pub fn is_finite(&self) -> bool {
        self.estimates.iter().all(Point::is_finite)
    }
}

/// Checks the topology a technique needs before any noise is drawn.
pub fn check_preconditions(technique: Technique, topology: &Topology) -> Result<()> {
    for v in 0..topology.n_victims() {
        let reach = topology.reachable(v).len();
        if !technique.is_cooperative() && reach < MIN_RESCUERS {
            return Err(Error::Precondition(format!(
                "{technique} needs every victim to reach {MIN_RESCUERS} rescuers; victim {v} reaches {reach}"
            )));
        }
        if technique.is_cooperative() && topology.degree(v) == 0 {
            return Err(Error::Precondition(format!("victim {v} has no links")));
        }
    }
    Ok(())
}

/// Synthesizes one trial's measurements and runs the technique's solver.
///
/// Solver failures are returned as a non-converged outcome with NaN
/// positions for the affected victims; only unmet preconditions and
/// measurement-synthesis failures are errors.
pub fn run_trial(
    scenario: &Scenario,
    topology: &Topology,
    technique: Technique,
    params: &ChannelParams,
    trial_index: u64,
    master_seed: u64,
) -> Result<TrialOutcome> {
    run_trial_with_options(
        scenario,
        topology,
        technique,
        params,
        &technique.options_for(scenario.bounds()),
        trial_index,
        master_seed,
    )
}

pub fn run_trial_with_options(
    scenario: &Scenario,
    topology: &Topology,
    technique: Technique,
    params: &ChannelParams,
    opts: &SolverOptions,
    trial_index: u64,
    master_seed: u64,
) -> Result<TrialOutcome> {
    check_preconditions(technique, topology)?;
    if topology.n_victims() != scenario.n_victims() {
        return Err(Error::ShapeMismatch(
            "topology and scenario disagree on victim count".into(),
        ));
    }
    let n = scenario.n_victims();
    let rescuers = scenario.rescuers();
    let stream = |tag| NoiseStream::new(master_seed, trial_index, tag);

    match technique {
        Technique::ToaCoop => {
            let meas = gen_toa_ranges(
                scenario,
                &topology.all_links(),
                params,
                &mut stream(StreamTag::Toa),
            )?;
            Ok(joint(n, || {
                solvers::solve_toa_coop(&meas, rescuers, n, opts)
            }))
        }
        Technique::AoaCoop => {
            let mut s = stream(StreamTag::Aoa);
            let bearings = gen_aoa(scenario, &topology.rescuer_links(), params, &mut s)?;
            let pairs = topology.victim_links();
            let ranges = if pairs.is_empty() {
                None
            } else {
                Some(gen_toa_ranges(scenario, &pairs, params, &mut s)?)
            };
            Ok(joint(n, || {
                solvers::solve_aoa(&bearings, ranges.as_ref(), rescuers, n, params, opts)
            }))
        }
        Technique::RssCoopGd | Technique::RssCoopMm | Technique::RssdNoncoop => {
            let rss = gen_rss(
                scenario,
                &topology.all_links(),
                params,
                &mut stream(StreamTag::Rss),
            )?;
            match technique {
                Technique::RssCoopGd => Ok(joint(n, || {
                    solvers::solve_rss_coop_gd(&rss, rescuers, n, params, opts)
                })),
                Technique::RssCoopMm => Ok(joint(n, || {
                    solvers::solve_rss_coop_mm(&rss, rescuers, n, params, opts)
                })),
                _ => {
                    let rssd = derive_rssd(&rss)?;
                    Ok(per_victim(n, |v| {
                        solvers::solve_rssd_noncoop(&rssd.for_victim(v), rescuers, params, opts)
                    }))
                }
            }
        }
        Technique::TdoaNoncoop => {
            let mut s = stream(StreamTag::Tdoa);
            let sets = (0..n)
                .map(|v| gen_tdoa(scenario, v, topology.reachable(v), params, &mut s))
                .collect::<Result<Vec<MeasurementSet>>>()?;
            Ok(per_victim(n, |v| {
                solvers::solve_tdoa_noncoop(&sets[v], rescuers, opts)
            }))
        }
        Technique::ToaNoncoop => {
            let meas = gen_toa_ranges(
                scenario,
                &topology.rescuer_links(),
                params,
                &mut stream(StreamTag::Toa),
            )?;
            Ok(per_victim(n, |v| {
                solvers::solve_toa_noncoop(&meas.for_victim(v), rescuers, opts)
            }))
        }
    }
}

fn nan_points(n: usize) -> Vec<Point> {
    vec![Point::new(f64::NAN, f64::NAN); n]
}

fn joint(n: usize, solve: impl FnOnce() -> Result<SolveResult>) -> TrialOutcome {
    let start = Instant::now();
    let result = solve();
    let wall_time_s = start.elapsed().as_secs_f64();
    match result {
        Ok(r) if r.positions.len() == n => TrialOutcome {
            estimates: r.positions,
            wall_time_s,
            converged: r.converged,
        },
        _ => TrialOutcome {
            estimates: nan_points(n),
            wall_time_s,
            converged: false,
        },
    }
}

fn per_victim(n: usize, mut solve: impl FnMut(usize) -> Result<SolveResult>) -> TrialOutcome {
    let mut estimates = Vec::with_capacity(n);
    let mut wall_time_s = 0.0;
    let mut converged = true;
    for v in 0..n {
        let start = Instant::now();
        let result = solve(v);
        wall_time_s += start.elapsed().as_secs_f64();
        match result {
            Ok(r) if r.positions.len() == 1 => {
                converged &= r.converged;
                estimates.push(r.positions[0]);
            }
            _ => {
                converged = false;
                estimates.push(Point::new(f64::NAN, f64::NAN));
            }
        }
    }
    TrialOutcome {
        estimates,
        wall_time_s,
        converged,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub technique: Technique,
    pub sweep_axis: Option<SweepAxis>,
    pub sweep_value: Option<usize>,
    /// NaN (`null` in JSON) when every trial was excluded.
    #[serde(deserialize_with = "nan_if_null")]
    pub nrmse_m: f64,
    pub runtime_mean_s: f64,
    pub runtime_total_s: f64,
    pub convergence_rate: f64,
    pub trials: usize,
    /// Trials left out of the NRMSE because an estimate was not finite.
    pub excluded_trials: usize,
    pub seed: u64,
}

fn nan_if_null<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub master_seed: u64,
    pub software_version: String,
    pub prng: String,
    pub nrmse_definition: String,
    pub trials: usize,
    pub victims: usize,
    pub rescuers: usize,
    pub area_m: f64,
    pub ple: f64,
    pub sigma_shadow_db: f64,
    pub sigma_range_m: f64,
    pub sigma_angle_deg: f64,
    pub ref_loss_db: f64,
    pub ref_dist_m: f64,
    pub tx_power_min_dbm: f64,
    pub tx_power_max_dbm: f64,
    pub redraw_powers: bool,
    pub tol: f64,
    pub rssd_max_iters: usize,
    pub rss_max_iters: usize,
    pub lsq_max_iters: usize,
}

impl Provenance {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        let c = &cfg.channel;
        Self {
            config_hash: cfg.hash(),
            master_seed: cfg.scenario.seed,
            software_version: env!("CARGO_PKG_VERSION").to_string(),
            prng: PRNG_NAME.to_string(),
            nrmse_definition: NRMSE_DEFINITION.to_string(),
            trials: cfg.trials,
            victims: cfg.scenario.victims,
            rescuers: cfg.scenario.rescuers,
            area_m: cfg.scenario.area_m,
            ple: c.ple,
            sigma_shadow_db: c.sigma_shadow_db,
            sigma_range_m: c.sigma_range_m,
            sigma_angle_deg: c.sigma_angle_rad.to_degrees(),
            ref_loss_db: c.ref_loss_db,
            ref_dist_m: c.ref_dist_m,
            tx_power_min_dbm: TX_POWER_MIN_DBM,
            tx_power_max_dbm: TX_POWER_MAX_DBM,
            redraw_powers: cfg.redraw_powers,
            tol: DEFAULT_TOL,
            rssd_max_iters: RSSD_MAX_ITERS,
            rss_max_iters: RSS_MAX_ITERS,
            lsq_max_iters: LSQ_MAX_ITERS,
        }
    }

    /// `key: value` pairs in a fixed order, for text formats.
    pub fn fields(&self) -> Vec<(&'static str, String)> {
        vec![
            ("config_hash", self.config_hash.clone()),
            ("master_seed", self.master_seed.to_string()),
            ("software_version", self.software_version.clone()),
            ("prng", self.prng.clone()),
            ("nrmse", self.nrmse_definition.clone()),
            ("trials", self.trials.to_string()),
            ("victims", self.victims.to_string()),
            ("rescuers", self.rescuers.to_string()),
            ("area_m", self.area_m.to_string()),
            ("ple", self.ple.to_string()),
            ("sigma_shadow_db", self.sigma_shadow_db.to_string()),
            ("sigma_range_m", self.sigma_range_m.to_string()),
            ("sigma_angle_deg", self.sigma_angle_deg.to_string()),
            ("ref_loss_db", self.ref_loss_db.to_string()),
            ("ref_dist_m", self.ref_dist_m.to_string()),
            (
                "tx_power_dbm",
                format!("U[{}, {}]", self.tx_power_min_dbm, self.tx_power_max_dbm),
            ),
            ("redraw_powers", self.redraw_powers.to_string()),
            ("tol", self.tol.to_string()),
            ("rssd_max_iters", self.rssd_max_iters.to_string()),
            ("rss_max_iters", self.rss_max_iters.to_string()),
            ("lsq_max_iters", self.lsq_max_iters.to_string()),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub provenance: Provenance,
    pub rows: Vec<ResultRow>,
}

impl ExperimentResult {
    pub fn row(&self, technique: Technique) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.technique == technique)
    }
}

/// Scenario and topology of a config, with scenario-level degeneracies
/// reported as errors.
pub fn build_scenario(cfg: &ExperimentConfig) -> Result<(Scenario, Topology)> {
    let s = &cfg.scenario;
    let scenario = generate_scenario(s.victims, s.rescuers, cfg.bounds(), s.seed)?;
    let report = validate_scenario(&scenario);
    if !report.is_pass() {
        return Err(Error::Precondition(format!(
            "scenario failed validation: {report}"
        )));
    }
    if report.has_collinear_rescuers() {
        return Err(Error::DegenerateGeometry("rescuers are collinear".into()));
    }
    let topology = match s.comm_range_m {
        Some(r) => Topology::within_range(&scenario, r),
        None => Topology::full(&scenario),
    };
    Ok((scenario, topology))
}

fn pool(parallelism: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start worker pool: {e}")))
}

/// Runs every technique of `cfg` on one scenario.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let (scenario, topology) = build_scenario(cfg)?;
    for &t in &cfg.techniques {
        check_preconditions(t, &topology)?;
    }
    let pool = pool(cfg.parallelism)?;
    let seed = cfg.scenario.seed;
    let truths = scenario.victims().to_vec();

    let mut rows = Vec::with_capacity(cfg.techniques.len());
    for &technique in &cfg.techniques {
        let opts = technique.options_for(scenario.bounds());
        let outcomes: Vec<TrialOutcome> = pool.install(|| {
            (0..cfg.trials as u64)
                .into_par_iter()
                .map(|m| {
                    let trial_scenario;
                    let s = if cfg.redraw_powers && technique.is_rss_family() {
                        let mut stream = NoiseStream::new(seed, m, StreamTag::TxPower);
                        trial_scenario = scenario
                            .with_tx_powers(draw_tx_powers(scenario.n_victims(), &mut stream));
                        &trial_scenario
                    } else {
                        &scenario
                    };
                    run_trial_with_options(s, &topology, technique, &cfg.channel, &opts, m, seed)
                })
                .collect::<Result<Vec<_>>>()
        })?;
        rows.push(summarize(technique, &outcomes, &truths, seed)?);
    }
    Ok(ExperimentResult {
        provenance: Provenance::new(cfg),
        rows,
    })
}

fn summarize(
    technique: Technique,
    outcomes: &[TrialOutcome],
    truths: &[Point],
    seed: u64,
) -> Result<ResultRow> {
    let finite: Vec<Vec<Point>> = outcomes
        .iter()
        .filter(|o| o.is_finite())
        .map(|o| o.estimates.clone())
        .collect();
    let excluded_trials = outcomes.len() - finite.len();
    let nrmse_m = if finite.is_empty() {
        f64::NAN
    } else {
        nrmse(&finite, &vec![truths.to_vec(); finite.len()])?
    };
    let runtime_total_s: f64 = outcomes.iter().map(|o| o.wall_time_s).sum();
    let converged = outcomes.iter().filter(|o| o.converged).count();
    Ok(ResultRow {
        technique,
        sweep_axis: None,
        sweep_value: None,
        nrmse_m,
        runtime_mean_s: runtime_total_s / outcomes.len() as f64,
        runtime_total_s,
        convergence_rate: converged as f64 / outcomes.len() as f64,
        trials: outcomes.len(),
        excluded_trials,
        seed,
    })
}

/// One experiment per sweep value, each on a freshly drawn scenario.
pub fn sweep(cfg: &ExperimentConfig) -> Result<Vec<ExperimentResult>> {
    cfg.validate()?;
    let spec = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::config("sweep.axis", "no sweep configured"))?;
    if spec.axis == SweepAxis::Victims && !cfg.techniques.iter().any(|t| t.is_cooperative()) {
        return Err(Error::config(
            "run.techniques",
            "the victims sweep only runs cooperative techniques",
        ));
    }
    let mut results = Vec::with_capacity(spec.values.len());
    for &value in &spec.values {
        let mut result = run_experiment(&cfg.at_sweep_value(spec.axis, value))?;
        for row in &mut result.rows {
            row.sweep_axis = Some(spec.axis);
            row.sweep_value = Some(value);
        }
        results.push(result);
    }
    Ok(results)
}
