//! Exhaustive grid-search reference estimator for single-victim problems.
//!
//! The objectives here are written independently of the solvers so the two
//! can certify each other.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelParams, LinkKind, MeasurementSet, Modality};
use crate::error::{Error, Result};
use crate::geometry::{Point, Rect};

/// Upper bound on evaluated grid points.
pub const MAX_GRID_CELLS: u64 = 10_000_000;
pub const DEFAULT_RESOLUTION_M: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub bounds: Rect,
    pub resolution: f64,
}

impl GridSpec {
    pub fn new(bounds: Rect, resolution: f64) -> Self {
        Self { bounds, resolution }
    }

    /// Grid points per axis; both bounds are included when they fall on the
    /// lattice.
    pub fn shape(&self) -> Result<(usize, usize)> {
        if !(self.resolution.is_finite() && self.resolution > 0.0) || self.bounds.is_degenerate() {
            return Err(Error::InvalidInput(
                "grid needs resolution > 0 and non-degenerate bounds".into(),
            ));
        }
        let nx = (self.bounds.width() / self.resolution + 1e-9).floor() + 1.0;
        let ny = (self.bounds.height() / self.resolution + 1e-9).floor() + 1.0;
        let cells = nx * ny;
        if cells > MAX_GRID_CELLS as f64 {
            return Err(Error::GridTooLarge {
                cells: cells.min(u64::MAX as f64) as u64,
                limit: MAX_GRID_CELLS,
            });
        }
        Ok((nx as usize, ny as usize))
    }

    pub fn point(&self, ix: usize, iy: usize) -> Point {
        Point::new(
            self.bounds.x_min + ix as f64 * self.resolution,
            self.bounds.y_min + iy as f64 * self.resolution,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleResult {
    pub point: Point,
    pub objective: f64,
}

/// Residual-norm objective of one victim's measurements.
#[derive(Debug, Clone)]
pub struct Objective {
    modality: Modality,
    obs: Vec<(Point, f64)>,
    reference: Option<Point>,
    params: ChannelParams,
}

impl Objective {
    pub fn new(meas: &MeasurementSet, rescuers: &[Point], params: &ChannelParams) -> Result<Self> {
        let mut victims = meas.victims();
        victims.dedup();
        if victims.len() > 1 {
            return Err(Error::InvalidInput(
                "the oracle covers one victim at a time".into(),
            ));
        }
        let lookup = |j: usize| {
            rescuers
                .get(j)
                .copied()
                .ok_or_else(|| Error::InvalidInput(format!("no rescuer {j}")))
        };
        let mut obs = Vec::with_capacity(meas.len());
        for e in &meas.entries {
            if e.link.kind != LinkKind::VictimRescuer {
                return Err(Error::InvalidInput(
                    "the oracle uses rescuer links only".into(),
                ));
            }
            obs.push((lookup(e.link.dst)?, e.value));
        }
        let reference = match meas.modality {
            Modality::Tdoa => {
                Some(lookup(meas.tdoa_reference.ok_or_else(|| {
                    Error::InvalidInput("TDoA set without reference".into())
                })?)?)
            }
            Modality::Rssd => {
                let v = victims.first().copied().unwrap_or(0);
                Some(lookup(*meas.rssd_reference.get(&v).ok_or_else(|| {
                    Error::InvalidInput("RSSD set without reference".into())
                })?)?)
            }
            _ => None,
        };
        if obs.is_empty() {
            return Err(Error::InvalidInput("empty measurement set".into()));
        }
        Ok(Self {
            modality: meas.modality,
            obs,
            reference,
            params: *params,
        })
    }

    pub fn eval(&self, p: Point) -> f64 {
        let dist = |a: &Point| ((p.x - a.x).powi(2) + (p.y - a.y).powi(2)).sqrt();
        let value: f64 = match self.modality {
            Modality::Toa => self.obs.iter().map(|(a, r)| (r - dist(a)).powi(2)).sum(),
            Modality::Tdoa => {
                let r0 = dist(&self.reference.expect("reference"));
                self.obs
                    .iter()
                    .map(|(a, dr)| (dr - (dist(a) - r0)).powi(2))
                    .sum()
            }
            Modality::Aoa => self
                .obs
                .iter()
                .map(|(a, theta)| {
                    let mut e = theta - (p.y - a.y).atan2(p.x - a.x);
                    e -= 2.0 * PI * (e / (2.0 * PI)).round();
                    e * e
                })
                .sum(),
            Modality::Rssd => {
                let r0 = dist(&self.reference.expect("reference"));
                let slope = 10.0 * self.params.ple;
                self.obs
                    .iter()
                    .map(|(a, diff)| (diff - slope * (dist(a) / r0).log10()).powi(2))
                    .sum()
            }
            Modality::Rss => {
                // Power is profiled out: residuals are P_j + L(d_j) minus their mean.
                let slope = 10.0 * self.params.ple;
                let shifted: Vec<f64> = self
                    .obs
                    .iter()
                    .map(|(a, rss)| {
                        rss + self.params.ref_loss_db
                            + slope * (dist(a) / self.params.ref_dist_m).log10()
                    })
                    .collect();
                let mean = shifted.iter().sum::<f64>() / shifted.len() as f64;
                shifted.iter().map(|s| (s - mean).powi(2)).sum()
            }
        };
        if value.is_nan() {
            f64::INFINITY
        } else {
            value
        }
    }
}

/// Global minimiser of the measurement objective over the grid. Ties go to
/// the lowest `y`, then the lowest `x`; the result does not depend on how
/// rows are scheduled.
pub fn grid_oracle(
    meas: &MeasurementSet,
    rescuers: &[Point],
    grid: &GridSpec,
    params: &ChannelParams,
) -> Result<OracleResult> {
    let (nx, ny) = grid.shape()?;
    let objective = Objective::new(meas, rescuers, params)?;
    let rows: Vec<(f64, usize)> = (0..ny)
        .into_par_iter()
        .map(|iy| {
            let mut best = (f64::INFINITY, 0);
            for ix in 0..nx {
                let v = objective.eval(grid.point(ix, iy));
                if v < best.0 {
                    best = (v, ix);
                }
            }
            best
        })
        .collect();
    let mut best = (f64::INFINITY, 0, 0);
    for (iy, &(v, ix)) in rows.iter().enumerate() {
        if v < best.0 {
            best = (v, ix, iy);
        }
    }
    Ok(OracleResult {
        point: grid.point(best.1, best.2),
        objective: best.0,
    })
}
