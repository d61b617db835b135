use std::f64::consts::LN_10;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::lsq::solve_full_rank;
use super::{
    anchor, centroid, lattice_search, search_region, single_victim_obs, InitStrategy, SolveResult,
    SolverOptions, DEGENERATE_TOL_RAD,
};
use crate::channel::{ChannelParams, MeasurementSet, Modality};
use crate::error::{Error, Result};
use crate::geometry::{collinear, distance, Point, Rect};

/// Weighted linear fix from RSS differences with known path-loss exponent.
///
/// `D_j = 10 ple log10(d_j / d_ref)` gives `d_j = k_j d_ref` with
/// `k_j = 10^(D_j / (10 ple))`. Squaring and introducing `R = |x|^2` makes
/// every equation linear in `(x, y, R)`:
/// `(1 - k_j^2) R - 2 (a_j - k_j^2 a_ref) . x = k_j^2 |a_ref|^2 - |a_j|^2`.
/// Row `j` is scaled by `row_scale[j]` when given.
pub fn rssd_linear_fix(
    reference: Point,
    obs: &[(Point, f64)],
    ple: f64,
    row_scale: Option<&[f64]>,
) -> Option<Point> {
    if obs.len() < 3 {
        return None;
    }
    let mut a = DMatrix::zeros(obs.len(), 3);
    let mut b = DVector::zeros(obs.len());
    for (row, (aj, diff)) in obs.iter().enumerate() {
        let k2 = 10f64.powf(diff / (5.0 * ple));
        let s = row_scale.map_or(1.0, |w| w[row]);
        a[(row, 0)] = -2.0 * (aj.x - k2 * reference.x) * s;
        a[(row, 1)] = -2.0 * (aj.y - k2 * reference.y) * s;
        a[(row, 2)] = (1.0 - k2) * s;
        b[row] = (k2 * reference.norm_sq() - aj.norm_sq()) * s;
    }
    let sol = solve_full_rank(&a, &b)?;
    let p = Point::new(sol[0], sol[1]);
    p.is_finite().then_some(p)
}

struct RssdModel<'a> {
    reference: Point,
    obs: &'a [(Point, f64)],
    /// `10 ple`.
    slope: f64,
    min_dist: f64,
    region: Rect,
}

impl RssdModel<'_> {
    fn residuals(&self, p: Point) -> Vec<f64> {
        let d_ref = distance(&p, &self.reference).max(self.min_dist);
        self.obs
            .iter()
            .map(|(a, diff)| {
                self.slope * (distance(&p, a).max(self.min_dist) / d_ref).log10() - diff
            })
            .collect()
    }

    fn objective(&self, p: Point) -> f64 {
        let f: f64 = self.residuals(p).iter().map(|e| e * e).sum();
        if f.is_finite() {
            f
        } else {
            f64::INFINITY
        }
    }

    /// Damped Gauss-Newton step from `p`: the undamped step first, then
    /// Levenberg-Marquardt damping raised tenfold until the objective does
    /// not increase. A coordinate on the region boundary whose gradient
    /// points outward is held fixed.
    fn gauss_newton_step(&self, p: Point, f: f64) -> Option<(Point, f64)> {
        let e = self.residuals(p);
        let c = self.slope / LN_10;
        let (rx, ry) = (p.x - self.reference.x, p.y - self.reference.y);
        let r2 = (rx * rx + ry * ry).max(self.min_dist * self.min_dist);
        let mut h = [[0.0; 2]; 2];
        let mut g = [0.0; 2];
        for ((a, _), ej) in self.obs.iter().zip(&e) {
            let (dx, dy) = (p.x - a.x, p.y - a.y);
            let d2 = (dx * dx + dy * dy).max(self.min_dist * self.min_dist);
            let row = [c * (dx / d2 - rx / r2), c * (dy / d2 - ry / r2)];
            for k in 0..2 {
                g[k] += row[k] * ej;
                for l in 0..2 {
                    h[k][l] += row[k] * row[l];
                }
            }
        }
        let r = &self.region;
        let free = [
            !((p.x <= r.x_min && g[0] > 0.0) || (p.x >= r.x_max && g[0] < 0.0)),
            !((p.y <= r.y_min && g[1] > 0.0) || (p.y >= r.y_max && g[1] < 0.0)),
        ];
        for k in 0..2 {
            if !free[k] {
                g[k] = 0.0;
                h[k] = [0.0; 2];
                h[0][k] = 0.0;
                h[1][k] = 0.0;
                h[k][k] = 1.0;
            }
        }
        if g == [0.0; 2] {
            return None;
        }
        let scale = h[0][0].max(h[1][1]);
        let mut lambda = 0.0;
        for _ in 0..30 {
            let a = [
                [h[0][0] * (1.0 + lambda), h[0][1]],
                [h[1][0], h[1][1] * (1.0 + lambda)],
            ];
            let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
            if det.abs() > 1e-12 * scale * scale {
                let dx = (a[1][1] * g[0] - a[0][1] * g[1]) / det;
                let dy = (a[0][0] * g[1] - a[1][0] * g[0]) / det;
                let q = self.region.clamp(Point::new(p.x - dx, p.y - dy));
                let fq = self.objective(q);
                if fq <= f {
                    return Some((q, fq));
                }
            }
            lambda = if lambda == 0.0 { 1e-3 } else { lambda * 10.0 };
        }
        None
    }

    /// IRLS refit of the linear system. Perturbing `D_j` moves row `j` in
    /// proportion to `d_j^2`, so rows are scaled by `1 / d_j^2` at the
    /// current estimate.
    fn reweighted_fix(&self, p: Point) -> Option<(Point, f64)> {
        let scale: Vec<f64> = self
            .obs
            .iter()
            .map(|(a, _)| 1.0 / distance(&p, a).max(self.min_dist).powi(2))
            .collect();
        let max = scale.iter().cloned().fold(0.0, f64::max);
        let scale: Vec<f64> = scale.iter().map(|s| s / max).collect();
        let q = self.region.clamp(rssd_linear_fix(
            self.reference,
            self.obs,
            self.slope / 10.0,
            Some(&scale),
        )?);
        Some((q, self.objective(q)))
    }

    /// Outer iterations from `(p, f)`. Returns the final point, the
    /// iteration count, the objective trace and the converged flag.
    fn descend(&self, mut p: Point, mut f: f64, opts: &SolverOptions) -> Descent {
        let mut trace = vec![f];
        let mut iterations = 0;
        let mut converged = f == 0.0;
        while !converged && iterations < opts.max_iters {
            iterations += 1;
            let best = [self.reweighted_fix(p), self.gauss_newton_step(p, f)]
                .into_iter()
                .flatten()
                .filter(|(_, fq)| *fq <= f)
                .min_by(|a, b| a.1.total_cmp(&b.1));
            match best {
                Some((q, fq)) => {
                    let change = f - fq;
                    p = q;
                    f = fq;
                    trace.push(f);
                    converged = change < opts.tol;
                }
                None => {
                    trace.push(f);
                    converged = true;
                }
            }
        }
        (p, iterations, trace, converged)
    }
}

type Descent = (Point, usize, Vec<f64>, bool);

/// Single-victim RSSD estimator with unknown transmit power.
///
/// Descends from two starts, the linear fix and the best point of an
/// exhaustive lattice search of the region, and keeps the lower final
/// objective. Each descent runs at most `opts.max_iters` outer
/// iterations inside the search region. Each outer iteration builds two
/// candidates, an IRLS refit of the linearised system and a damped
/// Gauss-Newton step on
/// `sum_j (D_j - 10 ple log10(d_j / d_ref))^2`, and keeps the better one.
/// Hitting the cap returns the best iterate with `converged = false`.
pub fn solve_rssd_noncoop(
    meas: &MeasurementSet,
    rescuers: &[Point],
    params: &ChannelParams,
    opts: &SolverOptions,
) -> Result<SolveResult> {
    opts.validate()?;
    let start = Instant::now();
    let (victim, obs) = single_victim_obs(meas, Modality::Rssd, rescuers)?;
    let reference = anchor(
        rescuers,
        *meas
            .rssd_reference
            .get(&victim)
            .ok_or_else(|| Error::InvalidInput(format!("no RSSD reference for victim {victim}")))?,
    )?;
    if obs.len() < 3 {
        return Err(Error::Underdetermined(format!(
            "RSSD needs 3 differences, got {}",
            obs.len()
        )));
    }
    let mut anchors = vec![reference];
    anchors.extend(obs.iter().map(|o| o.0));
    if collinear(&anchors, DEGENERATE_TOL_RAD) {
        return Err(Error::DegenerateGeometry("collinear anchors".into()));
    }

    let model = RssdModel {
        reference,
        obs: &obs,
        slope: 10.0 * params.ple,
        min_dist: 1e-9,
        region: search_region(opts, &anchors),
    };
    let starts = match opts.init {
        InitStrategy::LinearLs => {
            let linear = model.region.clamp(
                rssd_linear_fix(reference, &obs, params.ple, None)
                    .unwrap_or_else(|| centroid(&anchors).expect("non-empty")),
            );
            let mut starts = vec![(linear, model.objective(linear))];
            if let Some((q, (fq, ()))) = lattice_search(model.region, &|q| (model.objective(q), ()))
            {
                if q != linear {
                    starts.push((q, fq));
                }
            }
            starts
        }
        InitStrategy::Centroid => {
            let c = model.region.clamp(centroid(&anchors).expect("non-empty"));
            vec![(c, model.objective(c))]
        }
    };
    let (p, iterations, trace, converged) = starts
        .into_iter()
        .map(|(p, f)| model.descend(p, f, opts))
        .min_by(|a, b| a.2.last().unwrap().total_cmp(b.2.last().unwrap()))
        .expect("at least one start");

    Ok(SolveResult {
        positions: vec![p],
        power_estimates: None,
        iterations,
        objective_trace: trace,
        wall_time_s: start.elapsed().as_secs_f64(),
        converged,
        ambiguous: false,
    })
}
