use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::lsq::{full_column_rank, levenberg_marquardt, solve_full_rank, LeastSquares};
use super::{
    anchor, centroid, check_victim, separate_coincident, single_victim_obs, InitStrategy,
    SolveResult, SolverOptions, DEGENERATE_TOL_RAD,
};
use crate::channel::{LinkKind, MeasurementSet, Modality};
use crate::error::{Error, Result};
use crate::geometry::{collinear, Point};

/// Linear multilateration: subtracting the first range equation from the
/// others removes the quadratic term, leaving
/// `2 (a_j - a_0) . x = r_0^2 - r_j^2 + |a_j|^2 - |a_0|^2`.
pub fn multilaterate(anchors: &[Point], ranges: &[f64]) -> Option<Point> {
    if anchors.len() < 3 || anchors.len() != ranges.len() {
        return None;
    }
    let a0 = anchors[0];
    let n = anchors.len() - 1;
    let mut a = DMatrix::zeros(n, 2);
    let mut b = DVector::zeros(n);
    for j in 1..anchors.len() {
        let aj = anchors[j];
        a[(j - 1, 0)] = 2.0 * (aj.x - a0.x);
        a[(j - 1, 1)] = 2.0 * (aj.y - a0.y);
        b[j - 1] = ranges[0] * ranges[0] - ranges[j] * ranges[j] + aj.norm_sq() - a0.norm_sq();
    }
    let x = solve_full_rank(&a, &b)?;
    Some(Point::new(x[0], x[1]))
}

/// Residuals `|x - a_j| - r_j` of one position against fixed anchors.
struct SingleRange<'a> {
    obs: &'a [(Point, f64)],
}

impl LeastSquares for SingleRange<'_> {
    fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.obs.len(),
            self.obs
                .iter()
                .map(|(a, r)| (x[0] - a.x).hypot(x[1] - a.y) - r),
        )
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.obs.len(), 2);
        for (k, (a, _)) in self.obs.iter().enumerate() {
            let (dx, dy) = (x[0] - a.x, x[1] - a.y);
            let d = dx.hypot(dy).max(1e-12);
            j[(k, 0)] = dx / d;
            j[(k, 1)] = dy / d;
        }
        j
    }
}

/// Single-victim ToA: linear multilateration then Gauss-Newton on
/// `sum_j (r_j - |x - a_j|)^2`.
pub fn solve_toa_noncoop(
    meas: &MeasurementSet,
    rescuers: &[Point],
    opts: &SolverOptions,
) -> Result<SolveResult> {
    opts.validate()?;
    let start = Instant::now();
    let (_, obs) = single_victim_obs(meas, Modality::Toa, rescuers)?;
    if obs.len() < 3 {
        return Err(Error::Underdetermined(format!(
            "ToA needs 3 ranges, got {}",
            obs.len()
        )));
    }
    let anchors: Vec<Point> = obs.iter().map(|o| o.0).collect();
    if collinear(&anchors, DEGENERATE_TOL_RAD) {
        return Err(Error::DegenerateGeometry("collinear anchors".into()));
    }
    let ranges: Vec<f64> = obs.iter().map(|o| o.1).collect();
    let init = match opts.init {
        InitStrategy::LinearLs => multilaterate(&anchors, &ranges)
            .ok_or_else(|| Error::DegenerateGeometry("singular multilateration".into()))?,
        InitStrategy::Centroid => centroid(&anchors).expect("non-empty"),
    };
    let out = levenberg_marquardt(
        &SingleRange { obs: &obs },
        DVector::from_vec(vec![init.x, init.y]),
        opts,
    );
    Ok(SolveResult {
        positions: vec![Point::new(out.x[0], out.x[1])],
        power_estimates: None,
        iterations: out.iterations,
        objective_trace: out.trace,
        wall_time_s: start.elapsed().as_secs_f64(),
        converged: out.converged,
        ambiguous: false,
    })
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Peer {
    Anchor(Point),
    Victim(usize),
}

/// One range between victim `src` and `peer`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RangeLink {
    pub src: usize,
    pub peer: Peer,
    pub value: f64,
}

pub(crate) fn range_links(
    meas: &MeasurementSet,
    rescuers: &[Point],
    n_victims: usize,
) -> Result<Vec<RangeLink>> {
    if meas.modality != Modality::Toa {
        return Err(Error::InvalidInput(format!(
            "expected ToA measurements, got {:?}",
            meas.modality
        )));
    }
    meas.entries
        .iter()
        .map(|e| {
            check_victim(e.link.src, n_victims)?;
            let peer = match e.link.kind {
                LinkKind::VictimRescuer => Peer::Anchor(anchor(rescuers, e.link.dst)?),
                LinkKind::VictimVictim => {
                    check_victim(e.link.dst, n_victims)?;
                    if e.link.dst == e.link.src {
                        return Err(Error::InvalidInput("self-loop victim link".into()));
                    }
                    Peer::Victim(e.link.dst)
                }
            };
            Ok(RangeLink {
                src: e.link.src,
                peer,
                value: e.value,
            })
        })
        .collect()
}

/// Ranges are scaled by `1 / sigma` in the residual.
pub(crate) struct CoopRanges<'a> {
    pub links: &'a [RangeLink],
    pub n_victims: usize,
    pub inv_sigma: f64,
}

fn victim_xy(x: &DVector<f64>, i: usize) -> (f64, f64) {
    (x[2 * i], x[2 * i + 1])
}

impl CoopRanges<'_> {
    pub(crate) fn residual(&self, x: &DVector<f64>, l: &RangeLink) -> f64 {
        let (sx, sy) = victim_xy(x, l.src);
        let (px, py) = match l.peer {
            Peer::Anchor(a) => (a.x, a.y),
            Peer::Victim(v) => victim_xy(x, v),
        };
        ((sx - px).hypot(sy - py) - l.value) * self.inv_sigma
    }

    pub(crate) fn fill_jacobian_row(
        &self,
        x: &DVector<f64>,
        l: &RangeLink,
        row: usize,
        j: &mut DMatrix<f64>,
    ) {
        let (sx, sy) = victim_xy(x, l.src);
        let (px, py) = match l.peer {
            Peer::Anchor(a) => (a.x, a.y),
            Peer::Victim(v) => victim_xy(x, v),
        };
        let (dx, dy) = (sx - px, sy - py);
        let d = dx.hypot(dy).max(1e-12);
        let (ux, uy) = (dx / d * self.inv_sigma, dy / d * self.inv_sigma);
        j[(row, 2 * l.src)] += ux;
        j[(row, 2 * l.src + 1)] += uy;
        if let Peer::Victim(v) = l.peer {
            j[(row, 2 * v)] -= ux;
            j[(row, 2 * v + 1)] -= uy;
        }
    }
}

impl LeastSquares for CoopRanges<'_> {
    fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.links.len(),
            self.links.iter().map(|l| self.residual(x, l)),
        )
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.links.len(), 2 * self.n_victims);
        for (row, l) in self.links.iter().enumerate() {
            self.fill_jacobian_row(x, l, row, &mut j);
        }
        j
    }
}

/// Sequential multilateration: victims with three ranges to known nodes
/// (rescuers or victims placed earlier) are placed first, and then serve as
/// anchors for the rest. Anything left goes to the centroid of its known
/// neighbours, or of all rescuers.
pub(crate) fn cooperative_range_init(
    links: &[RangeLink],
    rescuers: &[Point],
    n_victims: usize,
    init: InitStrategy,
) -> Vec<Point> {
    let mut placed: Vec<Option<Point>> = vec![None; n_victims];
    let known_obs = |v: usize, placed: &[Option<Point>]| -> Vec<(Point, f64)> {
        links
            .iter()
            .filter_map(|l| {
                let other = if l.src == v {
                    match l.peer {
                        Peer::Anchor(a) => Some(a),
                        Peer::Victim(u) => placed[u],
                    }
                } else if matches!(l.peer, Peer::Victim(u) if u == v) {
                    placed[l.src]
                } else {
                    return None;
                };
                other.map(|p| (p, l.value))
            })
            .collect()
    };

    if init == InitStrategy::LinearLs {
        loop {
            let mut progress = false;
            for v in 0..n_victims {
                if placed[v].is_some() {
                    continue;
                }
                let obs = known_obs(v, &placed);
                let anchors: Vec<Point> = obs.iter().map(|o| o.0).collect();
                if anchors.len() >= 3 && !collinear(&anchors, DEGENERATE_TOL_RAD) {
                    let ranges: Vec<f64> = obs.iter().map(|o| o.1).collect();
                    if let Some(p) = multilaterate(&anchors, &ranges) {
                        placed[v] = Some(p);
                        progress = true;
                    }
                }
            }
            if !progress {
                break;
            }
        }
    }

    let fallback = centroid(rescuers).unwrap_or(Point::new(0.0, 0.0));
    for v in 0..n_victims {
        if placed[v].is_none() {
            let neighbours: Vec<Point> = known_obs(v, &placed).into_iter().map(|o| o.0).collect();
            placed[v] = Some(centroid(&neighbours).unwrap_or(fallback));
        }
    }
    let mut out: Vec<Point> = placed.into_iter().map(|p| p.expect("placed")).collect();
    separate_coincident(&mut out);
    out
}

pub(crate) fn pack(points: &[Point]) -> DVector<f64> {
    DVector::from_iterator(2 * points.len(), points.iter().flat_map(|p| [p.x, p.y]))
}

pub(crate) fn unpack(x: &DVector<f64>, n: usize) -> Vec<Point> {
    (0..n).map(|i| Point::new(x[2 * i], x[2 * i + 1])).collect()
}

pub(crate) fn check_degrees(links: &[RangeLink], n_victims: usize) -> Result<()> {
    let mut degree = vec![0usize; n_victims];
    for l in links {
        degree[l.src] += 1;
        if let Peer::Victim(v) = l.peer {
            degree[v] += 1;
        }
    }
    if let Some((v, d)) = degree.iter().enumerate().find(|(_, &d)| d < 3) {
        return Err(Error::Unlocalizable(format!(
            "victim {v} has {d} link(s), at least 3 required"
        )));
    }
    Ok(())
}

/// Joint Levenberg-Marquardt over all victim coordinates on
/// `sum_links (r - |x_src - x_dst|)^2`, victim pairs counted once.
pub fn solve_toa_coop(
    meas: &MeasurementSet,
    rescuers: &[Point],
    n_victims: usize,
    opts: &SolverOptions,
) -> Result<SolveResult> {
    opts.validate()?;
    let start = Instant::now();
    let links = range_links(meas, rescuers, n_victims)?;
    check_degrees(&links, n_victims)?;
    let init = cooperative_range_init(&links, rescuers, n_victims, opts.init);
    let problem = CoopRanges {
        links: &links,
        n_victims,
        inv_sigma: 1.0,
    };
    let x0 = pack(&init);
    if !full_column_rank(&problem.jacobian(&x0)) {
        return Err(Error::Unlocalizable(
            "rank-deficient range Jacobian at initialisation".into(),
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{Entry, Link};
    use crate::geometry::distance;

    fn ranges_to(victim: Point, anchors: &[Point]) -> MeasurementSet {
        MeasurementSet::new(
            Modality::Toa,
            anchors
                .iter()
                .enumerate()
                .map(|(j, a)| Entry {
                    link: Link::rescuer(0, j),
                    value: distance(&victim, a),
                })
                .collect(),
        )
    }

    #[test]
    fn exact_ranges_recover_position() {
        let anchors = [
            Point::new(0.0, 0.0),
            Point::new(100.0, 0.0),
            Point::new(0.0, 100.0),
        ];
        let truth = Point::new(30.0, 40.0);
        let r = solve_toa_noncoop(
            &ranges_to(truth, &anchors),
            &anchors,
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(distance(&r.positions[0], &truth) < 1e-6);
        assert!(r.converged);
    }

    #[test]
    fn collinear_anchors_are_degenerate() {
        let anchors = [
            Point::new(0.0, 0.0),
            Point::new(50.0, 0.0),
            Point::new(100.0, 0.0),
        ];
        let err = solve_toa_noncoop(
            &ranges_to(Point::new(30.0, 40.0), &anchors),
            &anchors,
            &SolverOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::DegenerateGeometry(_)));
    }

    #[test]
    fn two_ranges_underdetermined() {
        let anchors = [Point::new(0.0, 0.0), Point::new(100.0, 0.0)];
        let err = solve_toa_noncoop(
            &ranges_to(Point::new(30.0, 40.0), &anchors),
            &anchors,
            &SolverOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Underdetermined(_)));
    }

    #[test]
    fn centroid_init_also_converges() {
        let anchors = [
            Point::new(0.0, 0.0),
            Point::new(100.0, 0.0),
            Point::new(0.0, 100.0),
            Point::new(100.0, 100.0),
        ];
        let truth = Point::new(20.0, 70.0);
        let opts = SolverOptions {
            init: InitStrategy::Centroid,
            ..SolverOptions::default()
        };
        let r = solve_toa_noncoop(&ranges_to(truth, &anchors), &anchors, &opts).unwrap();
        assert!(distance(&r.positions[0], &truth) < 1e-3);
    }
}
