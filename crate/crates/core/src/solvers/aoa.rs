use std::time::Instant;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use super::lsq::{full_column_rank, levenberg_marquardt, LeastSquares};
use super::toa::{pack, range_links, unpack, CoopRanges, Peer, RangeLink};
use super::{anchor, centroid, check_victim, separate_coincident, SolveResult, SolverOptions};
use crate::channel::{wrap_angle, ChannelParams, LinkKind, MeasurementSet, Modality};
use crate::error::{Error, Result};
use crate::geometry::Point;

/// Bearings are treated as parallel below this angular separation (rad).
pub const PARALLEL_TOL_RAD: f64 = 1e-6;
/// Noise floor applied to the fusion weights when a sigma is zero.
const SIGMA_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
struct Bearing {
    victim: usize,
    anchor: Point,
    theta: f64,
}

struct BearingsAndRanges<'a> {
    bearings: &'a [Bearing],
    ranges: CoopRanges<'a>,
    inv_sigma_angle: f64,
}

impl LeastSquares for BearingsAndRanges<'_> {
    fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        let angular = self.bearings.iter().map(|b| {
            let predicted = (x[2 * b.victim + 1] - b.anchor.y).atan2(x[2 * b.victim] - b.anchor.x);
            wrap_angle(predicted - b.theta) * self.inv_sigma_angle
        });
        let ranges = self.ranges.links.iter().map(|l| self.ranges.residual(x, l));
        DVector::from_iterator(
            self.bearings.len() + self.ranges.links.len(),
            angular.chain(ranges),
        )
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let rows = self.bearings.len() + self.ranges.links.len();
        let mut j = DMatrix::zeros(rows, 2 * self.ranges.n_victims);
        for (row, b) in self.bearings.iter().enumerate() {
            let (dx, dy) = (
                x[2 * b.victim] - b.anchor.x,
                x[2 * b.victim + 1] - b.anchor.y,
            );
            let d2 = (dx * dx + dy * dy).max(1e-24);
            j[(row, 2 * b.victim)] = -dy / d2 * self.inv_sigma_angle;
            j[(row, 2 * b.victim + 1)] = dx / d2 * self.inv_sigma_angle;
        }
        for (k, l) in self.ranges.links.iter().enumerate() {
            self.ranges
                .fill_jacobian_row(x, l, self.bearings.len() + k, &mut j);
        }
        j
    }
}

/// Least-squares intersection of bearing lines through their anchors.
/// `None` when every pair of lines is parallel.
fn intersect_lines(lines: &[(Point, f64)]) -> Option<Point> {
    let any_crossing = lines.iter().enumerate().any(|(i, a)| {
        lines[i + 1..]
            .iter()
            .any(|b| (a.1 - b.1).sin().abs() > PARALLEL_TOL_RAD)
    });
    if !any_crossing {
        return None;
    }
    let mut m = Matrix2::zeros();
    let mut rhs = Vector2::zeros();
    for (a, theta) in lines {
        let n = Vector2::new(-theta.sin(), theta.cos());
        let nnt = n * n.transpose();
        m += nnt;
        rhs += nnt * Vector2::new(a.x, a.y);
    }
    let p = m.try_inverse()? * rhs;
    Some(Point::new(p.x, p.y))
}

/// Point on the bearing ray from `a` at distance `range` from `peer`; among
/// admissible intersections the one nearest the anchor wins.
fn ray_circle(a: Point, theta: f64, peer: Point, range: f64) -> Point {
    let e = (theta.cos(), theta.sin());
    let w = (a.x - peer.x, a.y - peer.y);
    let b = e.0 * w.0 + e.1 * w.1;
    let c = w.0 * w.0 + w.1 * w.1 - range * range;
    let disc = b * b - c;
    let t = if disc >= 0.0 {
        let s = disc.sqrt();
        [-b - s, -b + s]
            .into_iter()
            .find(|t| *t > 0.0)
            .unwrap_or((-b).max(0.0))
    } else {
        (-b).max(0.0)
    };
    Point::new(a.x + t * e.0, a.y + t * e.1)
}

fn collect_bearings(
    bearings: &MeasurementSet,
    rescuers: &[Point],
    n_victims: usize,
) -> Result<Vec<Bearing>> {
    if bearings.modality != Modality::Aoa {
        return Err(Error::InvalidInput(format!(
            "expected AoA measurements, got {:?}",
            bearings.modality
        )));
    }
    bearings
        .entries
        .iter()
        .map(|e| {
            if e.link.kind != LinkKind::VictimRescuer {
                return Err(Error::InvalidInput(
                    "bearings are measured at rescuers only".into(),
                ));
            }
            check_victim(e.link.src, n_victims)?;
            Ok(Bearing {
                victim: e.link.src,
                anchor: anchor(rescuers, e.link.dst)?,
                theta: e.value,
            })
        })
        .collect()
}

fn victim_ranges(
    ranges: Option<&MeasurementSet>,
    rescuers: &[Point],
    n_victims: usize,
) -> Result<Vec<RangeLink>> {
    match ranges {
        None => Ok(Vec::new()),
        Some(m) if m.is_empty() => Ok(Vec::new()),
        Some(m) => {
            let links = range_links(m, rescuers, n_victims)?;
            if links.iter().any(|l| matches!(l.peer, Peer::Anchor(_))) {
                return Err(Error::InvalidInput(
                    "AoA fusion takes victim-to-victim ranges only".into(),
                ));
            }
            Ok(links)
        }
    }
}

/// Initial positions: bearing-line intersection for every victim with two
/// crossing bearings; the others are placed from cooperative ranges to
/// victims placed earlier.
pub fn aoa_init(
    bearings: &MeasurementSet,
    ranges: Option<&MeasurementSet>,
    rescuers: &[Point],
    n_victims: usize,
) -> Result<Vec<Point>> {
    let bearings = collect_bearings(bearings, rescuers, n_victims)?;
    let ranges = victim_ranges(ranges, rescuers, n_victims)?;
    initial_positions(&bearings, &ranges, rescuers, n_victims)
}

fn initial_positions(
    bearings: &[Bearing],
    ranges: &[RangeLink],
    rescuers: &[Point],
    n_victims: usize,
) -> Result<Vec<Point>> {
    let lines_of = |v: usize| -> Vec<(Point, f64)> {
        bearings
            .iter()
            .filter(|b| b.victim == v)
            .map(|b| (b.anchor, b.theta))
            .collect()
    };
    let neighbours_of = |v: usize| -> Vec<(usize, f64)> {
        ranges
            .iter()
            .filter_map(|l| match l.peer {
                Peer::Victim(u) if l.src == v => Some((u, l.value)),
                Peer::Victim(u) if u == v => Some((l.src, l.value)),
                _ => None,
            })
            .collect()
    };

    let mut placed: Vec<Option<Point>> = vec![None; n_victims];
    for (v, slot) in placed.iter_mut().enumerate() {
        let lines = lines_of(v);
        match intersect_lines(&lines) {
            Some(p) => *slot = Some(p),
            None if neighbours_of(v).is_empty() => {
                return Err(if lines.len() >= 2 {
                    Error::ParallelBearings { victim: v }
                } else {
                    Error::Underdetermined(format!(
                        "victim {v} has {} bearing(s) and no cooperative links",
                        lines.len()
                    ))
                });
            }
            None => {}
        }
    }

    loop {
        let mut progress = false;
        for v in 0..n_victims {
            if placed[v].is_some() {
                continue;
            }
            let known: Vec<(Point, f64)> = neighbours_of(v)
                .into_iter()
                .filter_map(|(u, r)| placed[u].map(|p| (p, r)))
                .collect();
            let Some(&(peer, range)) = known.first() else {
                continue;
            };
            let p = match lines_of(v).first() {
                Some(&(a, theta)) => ray_circle(a, theta, peer, range),
                None => match super::multilaterate(
                    &known.iter().map(|k| k.0).collect::<Vec<_>>(),
                    &known.iter().map(|k| k.1).collect::<Vec<_>>(),
                ) {
                    Some(p) => p,
                    None => continue,
                },
            };
            placed[v] = Some(p);
            progress = true;
        }
        if !progress {
            break;
        }
    }

    let fallback = centroid(rescuers).unwrap_or(Point::new(0.0, 0.0));
    let mut out: Vec<Point> = placed.into_iter().map(|p| p.unwrap_or(fallback)).collect();
    separate_coincident(&mut out);
    Ok(out)
}

/// Cooperative AoA: bearing intersection for initialisation, then joint
/// Gauss-Newton on wrapped angular residuals plus victim-victim range
/// residuals, each weighted by the inverse noise variance of its modality.
pub fn solve_aoa(
    bearings: &MeasurementSet,
    ranges: Option<&MeasurementSet>,
    rescuers: &[Point],
    n_victims: usize,
    params: &ChannelParams,
    opts: &SolverOptions,
) -> Result<SolveResult> {
    opts.validate()?;
    let start = Instant::now();
    let bearing_list = collect_bearings(bearings, rescuers, n_victims)?;
    let range_list = victim_ranges(ranges, rescuers, n_victims)?;
    let init = initial_positions(&bearing_list, &range_list, rescuers, n_victims)?;

    let problem = BearingsAndRanges {
        bearings: &bearing_list,
        ranges: CoopRanges {
            links: &range_list,
            n_victims,
            inv_sigma: 1.0 / params.sigma_range_m.max(SIGMA_FLOOR),
        },
        inv_sigma_angle: 1.0 / params.sigma_angle_rad.max(SIGMA_FLOOR),
    };
    let x0 = pack(&init);
    if !full_column_rank(&problem.jacobian(&x0)) {
        return Err(Error::Unlocalizable(
            "rank-deficient bearing/range Jacobian at initialisation".into(),
        ));
    }
    let out = levenberg_marquardt(&problem, x0, opts);
    Ok(SolveResult {
        positions: unpack(&out.x, n_victims),
        power_estimates: None,
        iterations: out.iterations,
        objective_trace: out.trace,
        wall_time_s: start.elapsed().as_secs_f64(),
        converged: out.converged,
        ambiguous: false,
    })
}
