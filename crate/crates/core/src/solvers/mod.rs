//! One canonical estimator per (measurement, manner) category.
//!
//! | function                | measurement | manner          | benchmark row |
//! |-------------------------|-------------|-----------------|---------------|
//! | [`solve_toa_noncoop`]   | ToA         | non-cooperative | (baseline)    |
//! | [`solve_toa_coop`]      | ToA         | cooperative     | ToA-Chen      |
//! | [`solve_tdoa_noncoop`]  | TDoA        | non-cooperative | P-TDoA        |
//! | [`solve_aoa`]           | AoA         | cooperative     | EM-POG-AMP    |
//! | [`solve_rssd_noncoop`]  | RSSD        | non-cooperative | RLBM          |
//! | [`solve_rss_coop_gd`]   | RSS         | cooperative     | IRDL          |
//! | [`solve_rss_coop_mm`]   | RSS         | cooperative     | FCUP          |
//!
//! The row names are aliases for the category; these are standard
//! estimators, not reproductions of the named published algorithms.
//!
//! Every iterative solver stops when the absolute change of its objective
//! between successive iterations drops below [`SolverOptions::tol`], or at
//! [`SolverOptions::max_iters`].

mod aoa;
mod lsq;
mod rss;
mod rssd;
mod tdoa;
mod toa;

use serde::{Deserialize, Serialize};

use crate::channel::{LinkKind, MeasurementSet, Modality};
use crate::error::{Error, Result};
use crate::geometry::{Point, Rect};

pub use aoa::{aoa_init, solve_aoa};
pub use rss::{
    rss_objective_and_gradient, solve_rss_coop_gd, solve_rss_coop_gd_from, solve_rss_coop_mm,
    solve_rss_coop_mm_from,
};
pub use rssd::{rssd_linear_fix, solve_rssd_noncoop};
pub use tdoa::solve_tdoa_noncoop;
pub use toa::{multilaterate, solve_toa_coop, solve_toa_noncoop};

/// Objective-change threshold shared by every iterative solver.
pub const DEFAULT_TOL: f64 = 1e-3;
/// Outer-iteration cap of the RSSD estimator.
pub const RSSD_MAX_ITERS: usize = 10;
/// Iteration cap of both cooperative RSS estimators.
pub const RSS_MAX_ITERS: usize = 2000;
/// Iteration cap of the Gauss-Newton / Levenberg-Marquardt solvers.
pub const LSQ_MAX_ITERS: usize = 100;
/// Angular tolerance (rad) under which anchors count as collinear.
pub const DEGENERATE_TOL_RAD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitStrategy {
    /// Centroid of the anchors each victim is connected to.
    Centroid,
    /// Closed-form algebraic linearisation of the measurement model.
    LinearLs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iters: usize,
    pub init: InitStrategy,
    /// Initial Levenberg-Marquardt damping; 0 starts as plain Gauss-Newton.
    pub damping: f64,
    /// Search region of the RSS-family estimators, whose likelihood does not
    /// vanish far from the anchors. `None` uses the anchors' bounding box
    /// grown by its diagonal.
    #[serde(default)]
    pub region: Option<Rect>,
}

impl SolverOptions {
    pub const fn gauss_newton() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iters: LSQ_MAX_ITERS,
            init: InitStrategy::LinearLs,
            damping: 0.0,
            region: None,
        }
    }

    pub const fn levenberg_marquardt() -> Self {
        Self {
            damping: 1e-3,
            ..Self::gauss_newton()
        }
    }

    pub const fn rssd() -> Self {
        Self {
            max_iters: RSSD_MAX_ITERS,
            ..Self::gauss_newton()
        }
    }

    pub const fn rss() -> Self {
        Self {
            max_iters: RSS_MAX_ITERS,
            ..Self::levenberg_marquardt()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::InvalidInput("tol must be > 0".into()));
        }
        if self.max_iters < 1 {
            return Err(Error::InvalidInput("max_iters must be >= 1".into()));
        }
        if !(self.damping.is_finite() && self.damping >= 0.0) {
            return Err(Error::InvalidInput("damping must be >= 0".into()));
        }
        if self.region.is_some_and(|r| r.is_degenerate()) {
            return Err(Error::InvalidInput("search region is degenerate".into()));
        }
        Ok(())
    }
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self::gauss_newton()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    /// One estimate per target victim, in victim order.
    pub positions: Vec<Point>,
    /// Estimated transmit powers (dBm) when the solver estimates them.
    pub power_estimates: Option<Vec<f64>>,
    pub iterations: usize,
    /// Objective value at the start and after every iteration.
    pub objective_trace: Vec<f64>,
    pub wall_time_s: f64,
    pub converged: bool,
    /// Set when the geometry admitted two fixes and one was chosen by
    /// objective value.
    #[serde(default)]
    pub ambiguous: bool,
}

impl SolveResult {
    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().unwrap_or(&f64::NAN)
    }
}

/// `(rescuer position, value)` pairs of a single-victim set.
pub(crate) fn single_victim_obs(
    meas: &MeasurementSet,
    modality: Modality,
    rescuers: &[Point],
) -> Result<(usize, Vec<(Point, f64)>)> {
    if meas.modality != modality {
        return Err(Error::InvalidInput(format!(
            "expected {modality:?} measurements, got {:?}",
            meas.modality
        )));
    }
    let victims = meas.victims();
    if victims.len() > 1 {
        return Err(Error::InvalidInput(
            "non-cooperative solvers take one victim at a time".into(),
        ));
    }
    let victim = victims.first().copied().unwrap_or(0);
    let mut obs = Vec::with_capacity(meas.len());
    for e in &meas.entries {
        if e.link.kind != LinkKind::VictimRescuer {
            return Err(Error::InvalidInput(
                "non-cooperative solvers use rescuer links only".into(),
            ));
        }
        obs.push((anchor(rescuers, e.link.dst)?, e.value));
    }
    Ok((victim, obs))
}

pub(crate) fn anchor(rescuers: &[Point], index: usize) -> Result<Point> {
    rescuers
        .get(index)
        .copied()
        .ok_or_else(|| Error::InvalidInput(format!("no rescuer {index}")))
}

pub(crate) fn check_victim(index: usize, n_victims: usize) -> Result<()> {
    if index < n_victims {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "victim {index} out of range for {n_victims} victims"
        )))
    }
}

/// `opts.region`, or the anchors' bounding box grown by its diagonal.
pub(crate) fn search_region(opts: &SolverOptions, anchors: &[Point]) -> Rect {
    opts.region.unwrap_or_else(|| {
        let bbox = Rect::bounding(anchors).unwrap_or(Rect::new(0.0, 0.0, 0.0, 0.0));
        bbox.expand(bbox.width().hypot(bbox.height()).max(1.0))
    })
}

/// Coarse and fine lattice spacing of the exhaustive initial searches.
const INIT_COARSE_M: f64 = 5.0;
const INIT_FINE_M: f64 = 1.0;

/// Lattice point of `area` with the lowest first component of `eval`; the
/// first one in row-major order wins ties.
fn lattice_argmin<T>(
    area: Rect,
    step: f64,
    eval: &impl Fn(Point) -> (f64, T),
) -> Option<(Point, (f64, T))> {
    let nx = (area.width() / step + 1e-9).floor() as usize + 1;
    let ny = (area.height() / step + 1e-9).floor() as usize + 1;
    let mut best: Option<(Point, (f64, T))> = None;
    for iy in 0..ny {
        for ix in 0..nx {
            let p = Point::new(area.x_min + ix as f64 * step, area.y_min + iy as f64 * step);
            let terms = eval(p);
            if best
                .as_ref()
                .map_or(terms.0.is_finite(), |b| terms.0 < b.1 .0)
            {
                best = Some((p, terms));
            }
        }
    }
    best
}

/// Exhaustive search of `region`: a coarse lattice, then a fine one around
/// the coarse winner, clipped to the region.
pub(crate) fn lattice_search<T>(
    region: Rect,
    eval: &impl Fn(Point) -> (f64, T),
) -> Option<(Point, (f64, T))> {
    let coarse = lattice_argmin(region, INIT_COARSE_M, eval)?;
    let c = coarse.0;
    let window = Rect::new(
        (c.x - INIT_COARSE_M).max(region.x_min),
        (c.y - INIT_COARSE_M).max(region.y_min),
        (c.x + INIT_COARSE_M).min(region.x_max),
        (c.y + INIT_COARSE_M).min(region.y_max),
    );
    match lattice_argmin(window, INIT_FINE_M, eval) {
        Some(fine) if fine.1 .0 < coarse.1 .0 => Some(fine),
        _ => Some(coarse),
    }
}

pub(crate) fn centroid(points: &[Point]) -> Option<Point> {
    if points.is_empty() {
        return None;
    }
    let n = points.len() as f64;
    let (sx, sy) = points
        .iter()
        .fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
    Some(Point::new(sx / n, sy / n))
}

/// Nudges coincident initial positions apart so pairwise distances are
/// non-zero. Deterministic in the victim index.
pub(crate) fn separate_coincident(points: &mut [Point]) {
    for i in 1..points.len() {
        for _ in 0..8 {
            if !points[..i]
                .iter()
                .any(|q| crate::geometry::distance(&points[i], q) < 1e-6)
            {
                break;
            }
            let angle = i as f64 * 2.399_963_229_728_653;
            points[i].x += 0.5 * angle.cos();
            points[i].y += 0.5 * angle.sin();
        }
    }
}
