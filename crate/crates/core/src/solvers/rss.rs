//! Cooperative RSS localisation with unknown per-victim transmit power.
//!
//! Both estimators minimise
//! `F = sum_links (P_meas - (P_src - L0 - 10 ple log10(d / d0)))^2`
//! over every victim position and transmit power. Parameter vectors are laid
//! out as `[x_0, y_0, .., x_{n-1}, y_{n-1}, P_0, .., P_{n-1}]`.

use std::f64::consts::LN_10;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::lsq::full_column_rank;
use super::rssd::rssd_linear_fix;
use super::{
    anchor, centroid, check_victim, lattice_search, search_region, separate_coincident,
    InitStrategy, SolveResult, SolverOptions,
};
use crate::channel::{ChannelParams, LinkKind, MeasurementSet, Modality};
use crate::error::{Error, Result};
use crate::geometry::{Point, Rect};

const MIN_DIST: f64 = 1e-9;
const ARMIJO_C: f64 = 1e-4;
/// Line-search failure threshold on the step length.
const MIN_STEP: f64 = 1e-12;
const STATIONARY_GRAD: f64 = 1e-9;
const INIT_SWEEPS: usize = 3;

#[derive(Debug, Clone, Copy)]
enum Peer {
    Anchor(Point),
    Victim(usize),
}

#[derive(Debug, Clone, Copy)]
struct RssLink {
    src: usize,
    peer: Peer,
    value: f64,
}

struct RssProblem {
    links: Vec<RssLink>,
    n: usize,
    ref_loss: f64,
    ref_dist: f64,
    /// `10 ple`.
    slope: f64,
    region: Rect,
}

impl RssProblem {
    fn new(
        meas: &MeasurementSet,
        rescuers: &[Point],
        n: usize,
        params: &ChannelParams,
        region: Rect,
    ) -> Result<Self> {
        if meas.modality != Modality::Rss {
            return Err(Error::InvalidInput(format!(
                "expected RSS measurements, got {:?}",
                meas.modality
            )));
        }
        let links = meas
            .entries
            .iter()
            .map(|e| {
                check_victim(e.link.src, n)?;
                let peer = match e.link.kind {
                    LinkKind::VictimRescuer => Peer::Anchor(anchor(rescuers, e.link.dst)?),
                    LinkKind::VictimVictim => {
                        check_victim(e.link.dst, n)?;
                        if e.link.dst == e.link.src {
                            return Err(Error::InvalidInput("self-loop victim link".into()));
                        }
                        Peer::Victim(e.link.dst)
                    }
                };
                Ok(RssLink {
                    src: e.link.src,
                    peer,
                    value: e.value,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            links,
            n,
            ref_loss: params.ref_loss_db,
            ref_dist: params.ref_dist_m,
            slope: 10.0 * params.ple,
            region,
        })
    }

    /// Clamps every position into the search region.
    fn project(&self, theta: &mut [f64]) {
        for v in 0..self.n {
            let p = self
                .region
                .clamp(Point::new(theta[2 * v], theta[2 * v + 1]));
            theta[2 * v] = p.x;
            theta[2 * v + 1] = p.y;
        }
    }

    fn dim(&self) -> usize {
        3 * self.n
    }

    fn peer_xy(&self, theta: &[f64], peer: Peer) -> (f64, f64) {
        match peer {
            Peer::Anchor(a) => (a.x, a.y),
            Peer::Victim(v) => (theta[2 * v], theta[2 * v + 1]),
        }
    }

    /// `(dx, dy, d^2)` from peer to source.
    fn offset(&self, theta: &[f64], l: &RssLink) -> (f64, f64, f64) {
        let (px, py) = self.peer_xy(theta, l.peer);
        let (dx, dy) = (theta[2 * l.src] - px, theta[2 * l.src + 1] - py);
        (dx, dy, (dx * dx + dy * dy).max(MIN_DIST * MIN_DIST))
    }

    fn path_loss(&self, d2: f64) -> f64 {
        self.ref_loss + 0.5 * self.slope * (d2 / (self.ref_dist * self.ref_dist)).log10()
    }

    fn residual(&self, theta: &[f64], l: &RssLink) -> f64 {
        let (_, _, d2) = self.offset(theta, l);
        l.value - theta[2 * self.n + l.src] + self.path_loss(d2)
    }

    fn objective(&self, theta: &[f64]) -> f64 {
        let f: f64 = self
            .links
            .iter()
            .map(|l| self.residual(theta, l).powi(2))
            .sum();
        if f.is_finite() {
            f
        } else {
            f64::INFINITY
        }
    }

    fn objective_and_gradient(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let c = self.slope / LN_10;
        let mut grad = vec![0.0; self.dim()];
        let mut f = 0.0;
        for l in &self.links {
            let (dx, dy, d2) = self.offset(theta, l);
            let e = l.value - theta[2 * self.n + l.src] + self.path_loss(d2);
            f += e * e;
            let (gx, gy) = (2.0 * e * c * dx / d2, 2.0 * e * c * dy / d2);
            grad[2 * l.src] += gx;
            grad[2 * l.src + 1] += gy;
            if let Peer::Victim(v) = l.peer {
                grad[2 * v] -= gx;
                grad[2 * v + 1] -= gy;
            }
            grad[2 * self.n + l.src] -= 2.0 * e;
        }
        (f, grad)
    }

    /// Residual Jacobian over all parameters.
    fn jacobian(&self, theta: &[f64]) -> DMatrix<f64> {
        let c = self.slope / LN_10;
        let mut j = DMatrix::zeros(self.links.len(), self.dim());
        for (row, l) in self.links.iter().enumerate() {
            let (dx, dy, d2) = self.offset(theta, l);
            j[(row, 2 * l.src)] += c * dx / d2;
            j[(row, 2 * l.src + 1)] += c * dy / d2;
            if let Peer::Victim(v) = l.peer {
                j[(row, 2 * v)] -= c * dx / d2;
                j[(row, 2 * v + 1)] -= c * dy / d2;
            }
            j[(row, 2 * self.n + l.src)] = -1.0;
        }
        j
    }

    /// Overwrites the power block with its least-squares optimum given the
    /// positions: the mean of `P_meas + L(d)` over each victim's outgoing
    /// links. Victims without outgoing links keep their value.
    fn fit_powers(&self, theta: &mut [f64]) {
        let mut sum = vec![0.0; self.n];
        let mut count = vec![0usize; self.n];
        for l in &self.links {
            let (_, _, d2) = self.offset(theta, l);
            sum[l.src] += l.value + self.path_loss(d2);
            count[l.src] += 1;
        }
        for v in 0..self.n {
            if count[v] > 0 {
                theta[2 * self.n + v] = sum[v] / count[v] as f64;
            }
        }
    }

    /// Part of `F` that depends on victim `v` placed at `p`, with `P_v`
    /// refitted for that placement. Returns the value and the refitted power.
    fn victim_terms(
        &self,
        theta: &[f64],
        v: usize,
        p: Point,
        outgoing: &[usize],
        incoming: &[usize],
    ) -> (f64, f64) {
        let dist2 =
            |q: (f64, f64)| ((p.x - q.0).powi(2) + (p.y - q.1).powi(2)).max(MIN_DIST * MIN_DIST);
        let mut power = theta[2 * self.n + v];
        let mut f = 0.0;
        if !outgoing.is_empty() {
            let (mut sum, mut sum_sq) = (0.0, 0.0);
            for &k in outgoing {
                let l = &self.links[k];
                let s = l.value + self.path_loss(dist2(self.peer_xy(theta, l.peer)));
                sum += s;
                sum_sq += s * s;
            }
            let k = outgoing.len() as f64;
            power = sum / k;
            f += (sum_sq - sum * power).max(0.0);
        }
        for &k in incoming {
            let l = &self.links[k];
            let src = (theta[2 * l.src], theta[2 * l.src + 1]);
            f += (l.value - theta[2 * self.n + l.src] + self.path_loss(dist2(src))).powi(2);
        }
        (f, power)
    }

    /// Gauss-Seidel sweeps of exhaustive search: each victim in turn moves
    /// to the lattice point of the search region that minimises its terms of
    /// `F` with everything else held, if that beats its current spot.
    fn coordinate_search(&self, theta: &mut [f64]) {
        let mut outgoing = vec![Vec::new(); self.n];
        let mut incoming = vec![Vec::new(); self.n];
        for (k, l) in self.links.iter().enumerate() {
            outgoing[l.src].push(k);
            if let Peer::Victim(v) = l.peer {
                incoming[v].push(k);
            }
        }
        for _ in 0..INIT_SWEEPS {
            let mut moved = false;
            for v in 0..self.n {
                let current = Point::new(theta[2 * v], theta[2 * v + 1]);
                let eval = |p: Point| self.victim_terms(theta, v, p, &outgoing[v], &incoming[v]);
                let mut best = (current, eval(current));
                if let Some(candidate) = lattice_search(self.region, &eval) {
                    if candidate.1 .0 < best.1 .0 {
                        best = candidate;
                    }
                }
                if best.0 != current {
                    theta[2 * v] = best.0.x;
                    theta[2 * v + 1] = best.0.y;
                    theta[2 * self.n + v] = best.1 .1;
                    moved = true;
                }
            }
            if !moved {
                break;
            }
        }
    }

    fn initial_positions(&self, rescuers: &[Point], init: InitStrategy, ple: f64) -> Vec<Point> {
        let fallback = centroid(rescuers).unwrap_or(Point::new(0.0, 0.0));
        let mut out = Vec::with_capacity(self.n);
        for v in 0..self.n {
            let obs: Vec<(Point, f64)> = self
                .links
                .iter()
                .filter(|l| l.src == v)
                .filter_map(|l| match l.peer {
                    Peer::Anchor(a) => Some((a, l.value)),
                    Peer::Victim(_) => None,
                })
                .collect();
            out.push(if obs.is_empty() {
                fallback
            } else {
                let linear = (init == InitStrategy::LinearLs && obs.len() >= 4)
                    .then(|| linear_rss_fix(&obs, ple))
                    .flatten()
                    .filter(|p| self.region.contains(p));
                linear.unwrap_or_else(|| weighted_centroid(&obs, ple))
            });
        }
        separate_coincident(&mut out);
        out
    }
}

/// RSSD linear fix computed from raw RSS: the strongest reading is the
/// reference.
fn linear_rss_fix(obs: &[(Point, f64)], ple: f64) -> Option<Point> {
    let mut best = 0;
    for (k, o) in obs.iter().enumerate() {
        if o.1 > obs[best].1 {
            best = k;
        }
    }
    let reference = obs[best];
    let diffs: Vec<(Point, f64)> = obs
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != best)
        .map(|(_, o)| (o.0, reference.1 - o.1))
        .collect();
    rssd_linear_fix(reference.0, &diffs, ple, None)
}

/// Anchor centroid weighted by `10^(P / (10 ple))`, which scales as `1 / d`.
fn weighted_centroid(obs: &[(Point, f64)], ple: f64) -> Point {
    let top = obs.iter().map(|o| o.1).fold(f64::MIN, f64::max);
    let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
    for (a, p) in obs {
        let w = 10f64.powf((p - top) / (10.0 * ple));
        sx += w * a.x;
        sy += w * a.y;
        sw += w;
    }
    Point::new(sx / sw, sy / sw)
}

fn pack(positions: &[Point], powers: &[f64]) -> Vec<f64> {
    positions
        .iter()
        .flat_map(|p| [p.x, p.y])
        .chain(powers.iter().copied())
        .collect()
}

fn unpack(theta: &[f64], n: usize) -> (Vec<Point>, Vec<f64>) {
    (
        (0..n)
            .map(|i| Point::new(theta[2 * i], theta[2 * i + 1]))
            .collect(),
        theta[2 * n..].to_vec(),
    )
}

/// `F` and its gradient at the given positions and powers. The gradient
/// follows the parameter layout of this module.
pub fn rss_objective_and_gradient(
    positions: &[Point],
    powers: &[f64],
    rescuers: &[Point],
    meas: &MeasurementSet,
    params: &ChannelParams,
) -> Result<(f64, Vec<f64>)> {
    if positions.len() != powers.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} positions vs {} powers",
            positions.len(),
            powers.len()
        )));
    }
    let region = search_region(&SolverOptions::rss(), rescuers);
    let problem = RssProblem::new(meas, rescuers, positions.len(), params, region)?;
    Ok(problem.objective_and_gradient(&pack(positions, powers)))
}

fn prepare(
    meas: &MeasurementSet,
    rescuers: &[Point],
    n_victims: usize,
    params: &ChannelParams,
    opts: &SolverOptions,
    init: Option<(&[Point], Option<&[f64]>)>,
) -> Result<(RssProblem, Vec<f64>)> {
    opts.validate()?;
    let problem = RssProblem::new(
        meas,
        rescuers,
        n_victims,
        params,
        search_region(opts, rescuers),
    )?;
    let positions = match init {
        Some((p, _)) if p.len() != n_victims => {
            return Err(Error::ShapeMismatch(format!(
                "{} initial positions for {n_victims} victims",
                p.len()
            )))
        }
        Some((p, _)) => p.to_vec(),
        None => problem.initial_positions(rescuers, opts.init, params.ple),
    };
    let mut theta = pack(&positions, &vec![0.0; n_victims]);
    problem.project(&mut theta);
    match init.and_then(|i| i.1) {
        Some(powers) if powers.len() == n_victims => theta[2 * n_victims..].copy_from_slice(powers),
        Some(_) => return Err(Error::ShapeMismatch("initial power count".into())),
        None => problem.fit_powers(&mut theta),
    }
    if init.is_none() && opts.init == InitStrategy::LinearLs {
        problem.coordinate_search(&mut theta);
    }
    if !full_column_rank(&problem.jacobian(&theta)) {
        return Err(Error::Unlocalizable(
            "positions and transmit powers are not jointly identifiable".into(),
        ));
    }
    Ok((problem, theta))
}

fn result(
    theta: &[f64],
    n: usize,
    iterations: usize,
    trace: Vec<f64>,
    converged: bool,
    start: Instant,
) -> SolveResult {
    let (positions, powers) = unpack(theta, n);
    SolveResult {
        positions,
        power_estimates: Some(powers),
        iterations,
        objective_trace: trace,
        wall_time_s: start.elapsed().as_secs_f64(),
        converged,
        ambiguous: false,
    }
}

/// Projected gradient descent with Armijo backtracking on `F`, jointly over
/// all positions and powers; positions are kept inside the search region.
/// Trial steps use the Barzilai-Borwein length and are halved until the
/// sufficient-decrease condition holds. A trial step shorter than 1e-12 ends
/// the run with `converged = false`.
pub fn solve_rss_coop_gd(
    meas: &MeasurementSet,
    rescuers: &[Point],
    n_victims: usize,
    params: &ChannelParams,
    opts: &SolverOptions,
) -> Result<SolveResult> {
    let start = Instant::now();
    let (problem, theta) = prepare(meas, rescuers, n_victims, params, opts, None)?;
    Ok(gradient_descent(&problem, theta, opts, start))
}

/// [`solve_rss_coop_gd`] from a caller-supplied starting point. Powers are
/// fitted in closed form when not given.
pub fn solve_rss_coop_gd_from(
    meas: &MeasurementSet,
    rescuers: &[Point],
    params: &ChannelParams,
    opts: &SolverOptions,
    positions: &[Point],
    powers: Option<&[f64]>,
) -> Result<SolveResult> {
    let start = Instant::now();
    let (problem, theta) = prepare(
        meas,
        rescuers,
        positions.len(),
        params,
        opts,
        Some((positions, powers)),
    )?;
    Ok(gradient_descent(&problem, theta, opts, start))
}

fn gradient_descent(
    problem: &RssProblem,
    mut theta: Vec<f64>,
    opts: &SolverOptions,
    start: Instant,
) -> SolveResult {
    let (mut f, mut grad) = problem.objective_and_gradient(&theta);
    let mut trace = vec![f];
    let mut iterations = 0;
    let mut converged = false;
    let mut alpha: Option<f64> = None;

    while iterations < opts.max_iters {
        let gnorm2: f64 = grad.iter().map(|g| g * g).sum();
        let gnorm = gnorm2.sqrt();
        if gnorm <= STATIONARY_GRAD {
            converged = true;
            break;
        }
        let mut step = alpha.unwrap_or(1.0 / gnorm);
        let accepted = loop {
            if step * gnorm < MIN_STEP {
                break None;
            }
            let mut candidate: Vec<f64> =
                theta.iter().zip(&grad).map(|(t, g)| t - step * g).collect();
            problem.project(&mut candidate);
            let moved: f64 = candidate
                .iter()
                .zip(&theta)
                .map(|(c, t)| (c - t).powi(2))
                .sum();
            if moved == 0.0 {
                // Every descent direction leaves the region.
                break Some((candidate, f));
            }
            let fc = problem.objective(&candidate);
            if fc <= f - ARMIJO_C * moved / step {
                break Some((candidate, fc));
            }
            step *= 0.5;
        };
        let Some((candidate, fc)) = accepted else {
            break;
        };
        if fc == f && candidate == theta {
            trace.push(f);
            converged = true;
            break;
        }
        iterations += 1;
        let (_, gc) = problem.objective_and_gradient(&candidate);
        let (mut ss, mut sy) = (0.0, 0.0);
        for k in 0..theta.len() {
            let s = candidate[k] - theta[k];
            ss += s * s;
            sy += s * (gc[k] - grad[k]);
        }
        alpha = Some(if sy > 0.0 {
            (ss / sy).min(1e6)
        } else {
            2.0 * step
        });
        let change = f - fc;
        theta = candidate;
        grad = gc;
        f = fc;
        trace.push(f);
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    result(&theta, problem.n, iterations, trace, converged, start)
}

/// Alternating minimisation: the powers are refitted in closed form for the
/// current positions, then the position block takes a damped Gauss-Newton
/// step. The step uses the position Jacobian with each victim's power
/// direction projected out (the derivative of the power-refitted residual),
/// is clamped into the search region, and is accepted only when `F` with
/// refitted powers decreases.
pub fn solve_rss_coop_mm(
    meas: &MeasurementSet,
    rescuers: &[Point],
    n_victims: usize,
    params: &ChannelParams,
    opts: &SolverOptions,
) -> Result<SolveResult> {
    let start = Instant::now();
    let (problem, theta) = prepare(meas, rescuers, n_victims, params, opts, None)?;
    Ok(alternating(&problem, theta, opts, start))
}

/// [`solve_rss_coop_mm`] from caller-supplied positions.
pub fn solve_rss_coop_mm_from(
    meas: &MeasurementSet,
    rescuers: &[Point],
    params: &ChannelParams,
    opts: &SolverOptions,
    positions: &[Point],
) -> Result<SolveResult> {
    let start = Instant::now();
    let (problem, theta) = prepare(
        meas,
        rescuers,
        positions.len(),
        params,
        opts,
        Some((positions, None)),
    )?;
    Ok(alternating(&problem, theta, opts, start))
}

fn alternating(
    problem: &RssProblem,
    mut theta: Vec<f64>,
    opts: &SolverOptions,
    start: Instant,
) -> SolveResult {
    let n = problem.n;
    let m = problem.links.len();
    let c = problem.slope / LN_10;
    problem.fit_powers(&mut theta);
    let mut f = problem.objective(&theta);
    let mut trace = vec![f];
    let mut iterations = 0;
    let mut converged = f == 0.0;
    let mut lambda = opts.damping;

    while !converged && iterations < opts.max_iters {
        iterations += 1;
        // Position Jacobian and residuals at the fitted powers.
        let mut j = DMatrix::zeros(m, 2 * n);
        let mut e = DVector::zeros(m);
        let mut group_sum = DMatrix::zeros(n, 2 * n);
        let mut group_count = vec![0usize; n];
        for (row, l) in problem.links.iter().enumerate() {
            let (dx, dy, d2) = problem.offset(&theta, l);
            j[(row, 2 * l.src)] += c * dx / d2;
            j[(row, 2 * l.src + 1)] += c * dy / d2;
            if let Peer::Victim(v) = l.peer {
                j[(row, 2 * v)] -= c * dx / d2;
                j[(row, 2 * v + 1)] -= c * dy / d2;
            }
            e[row] = problem.residual(&theta, l);
            let jr = j.row(row).into_owned();
            let mut gs = group_sum.row_mut(l.src);
            gs += jr;
            group_count[l.src] += 1;
        }
        for (row, l) in problem.links.iter().enumerate() {
            let mean = group_sum.row(l.src) / group_count[l.src] as f64;
            let mut jr = j.row_mut(row);
            jr -= mean;
        }
        let g = j.tr_mul(&e);
        if g.amax() == 0.0 {
            trace.push(f);
            converged = true;
            break;
        }
        let a = j.tr_mul(&j);
        let floor = a.diagonal().amax().max(1.0) * 1e-12;

        let mut damping = lambda;
        let mut accepted = None;
        while damping <= 1e12 {
            let mut mat = a.clone();
            for i in 0..2 * n {
                mat[(i, i)] += damping * a[(i, i)].max(floor);
            }
            if let Some(chol) = mat.cholesky() {
                let delta = chol.solve(&(-&g));
                let mut candidate = theta.clone();
                for k in 0..2 * n {
                    candidate[k] += delta[k];
                }
                problem.project(&mut candidate);
                problem.fit_powers(&mut candidate);
                let fc = problem.objective(&candidate);
                if fc <= f {
                    accepted = Some((candidate, fc));
                    break;
                }
            }
            damping = (damping * 10.0).max(1e-9);
        }
        match accepted {
            Some((candidate, fc)) => {
                let change = f - fc;
                theta = candidate;
                f = fc;
                trace.push(f);
                lambda = (damping / 10.0).max(1e-15);
                converged = change < opts.tol;
            }
            None => {
                trace.push(f);
                converged = true;
            }
        }
    }
    result(&theta, n, iterations, trace, converged, start)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{Entry, Link};

    #[test]
    fn single_link_value() {
        // Victim 10 m from the rescuer: model = P - 40 - 30 = -70 at P = 0.
        let meas = MeasurementSet::new(
            Modality::Rss,
            vec![Entry {
                link: Link::rescuer(0, 0),
                value: -68.0,
            }],
        );
        let (f, g) = rss_objective_and_gradient(
            &[Point::new(10.0, 0.0)],
            &[0.0],
            &[Point::new(0.0, 0.0)],
            &meas,
            &ChannelParams::noiseless(),
        )
        .unwrap();
        assert!((f - 4.0).abs() < 1e-12);
        assert!((g[2] + 4.0).abs() < 1e-12);
    }
}
