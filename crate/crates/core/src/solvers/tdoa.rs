use std::time::Instant;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use super::lsq::{levenberg_marquardt, LeastSquares, Outcome};
use super::{
    anchor, centroid, single_victim_obs, InitStrategy, SolveResult, SolverOptions,
    DEGENERATE_TOL_RAD,
};
use crate::channel::{MeasurementSet, Modality};
use crate::error::{Error, Result};
use crate::geometry::{collinear, Point};

/// Residuals `(|x - a_j| - |x - a_0|) - dr_j`.
struct RangeDifferences<'a> {
    reference: Point,
    obs: &'a [(Point, f64)],
}

impl LeastSquares for RangeDifferences<'_> {
    fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        let r0 = (x[0] - self.reference.x).hypot(x[1] - self.reference.y);
        DVector::from_iterator(
            self.obs.len(),
            self.obs
                .iter()
                .map(|(a, dr)| (x[0] - a.x).hypot(x[1] - a.y) - r0 - dr),
        )
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let (rx, ry) = (x[0] - self.reference.x, x[1] - self.reference.y);
        let r0 = rx.hypot(ry).max(1e-12);
        let mut j = DMatrix::zeros(self.obs.len(), 2);
        for (k, (a, _)) in self.obs.iter().enumerate() {
            let (dx, dy) = (x[0] - a.x, x[1] - a.y);
            let d = dx.hypot(dy).max(1e-12);
            j[(k, 0)] = dx / d - rx / r0;
            j[(k, 1)] = dy / d - ry / r0;
        }
        j
    }
}

/// Linearisation with the auxiliary unknown `r0 = |x - a_0|`:
/// `2 (a_j - a_0) . x + 2 dr_j r0 = |a_j|^2 - |a_0|^2 - dr_j^2`.
/// Solved in the minimum-norm sense so a vanishing `r0` column (a victim
/// equidistant from every rescuer) does not break the position part.
fn linear_fix(reference: Point, obs: &[(Point, f64)]) -> Option<Point> {
    let n = obs.len();
    let mut a = DMatrix::zeros(n, 3);
    let mut b = DVector::zeros(n);
    for (k, (aj, dr)) in obs.iter().enumerate() {
        a[(k, 0)] = 2.0 * (aj.x - reference.x);
        a[(k, 1)] = 2.0 * (aj.y - reference.y);
        a[(k, 2)] = 2.0 * dr;
        b[k] = aj.norm_sq() - reference.norm_sq() - dr * dr;
    }
    let svd = a.svd(true, true);
    let eps = svd.singular_values.amax() * 1e-10;
    let sol = svd.solve(&b, eps).ok()?;
    let p = Point::new(sol[0], sol[1]);
    p.is_finite().then_some(p)
}

/// Two difference equations: position is affine in `r0`, and `r0` solves a
/// quadratic. Returns every admissible candidate, smallest `r0` first.
fn two_equation_candidates(reference: Point, obs: &[(Point, f64)]) -> Vec<Point> {
    let m = Matrix2::new(
        2.0 * (obs[0].0.x - reference.x),
        2.0 * (obs[0].0.y - reference.y),
        2.0 * (obs[1].0.x - reference.x),
        2.0 * (obs[1].0.y - reference.y),
    );
    let Some(inv) = m.try_inverse() else {
        return Vec::new();
    };
    let c = Vector2::new(
        obs[0].0.norm_sq() - reference.norm_sq() - obs[0].1 * obs[0].1,
        obs[1].0.norm_sq() - reference.norm_sq() - obs[1].1 * obs[1].1,
    );
    let p = inv * c;
    let q = -(inv * Vector2::new(2.0 * obs[0].1, 2.0 * obs[1].1));
    let w = Vector2::new(p.x - reference.x, p.y - reference.y);
    let qa = q.norm_squared() - 1.0;
    let qb = 2.0 * q.dot(&w);
    let qc = w.norm_squared();

    let mut roots = Vec::new();
    if qa.abs() < 1e-12 {
        if qb != 0.0 {
            roots.push(-qc / qb);
        }
    } else {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc >= 0.0 {
            let s = disc.sqrt();
            roots.push((-qb - s) / (2.0 * qa));
            roots.push((-qb + s) / (2.0 * qa));
        } else {
            roots.push(-qb / (2.0 * qa));
        }
    }
    let mut roots: Vec<f64> = roots.into_iter().filter(|r| *r >= 0.0).collect();
    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    roots
        .into_iter()
        .map(|r0| Point::new(p.x + q.x * r0, p.y + q.y * r0))
        .collect()
}

/// Single-victim TDoA: hyperbolic linearisation, then Gauss-Newton on
/// `sum_j (dr_j - (|x - a_j| - |x - a_0|))^2`. With only two difference
/// equations both roots are refined and the lower objective wins; the
/// result is flagged `ambiguous`.
pub fn solve_tdoa_noncoop(
    meas: &MeasurementSet,
    rescuers: &[Point],
    opts: &SolverOptions,
) -> Result<SolveResult> {
    opts.validate()?;
    let start = Instant::now();
    let (_, obs) = single_victim_obs(meas, Modality::Tdoa, rescuers)?;
    let reference = anchor(
        rescuers,
        meas.tdoa_reference
            .ok_or_else(|| Error::InvalidInput("TDoA set without reference rescuer".into()))?,
    )?;
    if obs.len() < 2 {
        return Err(Error::Underdetermined(format!(
            "TDoA needs at least 2 difference equations, got {}",
            obs.len()
        )));
    }
    let mut anchors: Vec<Point> = vec![reference];
    anchors.extend(obs.iter().map(|o| o.0));
    if collinear(&anchors, DEGENERATE_TOL_RAD) {
        return Err(Error::DegenerateGeometry("collinear anchors".into()));
    }

    let problem = RangeDifferences {
        reference,
        obs: &obs,
    };
    let candidates = match opts.init {
        InitStrategy::Centroid => vec![centroid(&anchors).expect("non-empty")],
        InitStrategy::LinearLs if obs.len() >= 3 => vec![linear_fix(reference, &obs)
            .ok_or_else(|| Error::DegenerateGeometry("singular linearisation".into()))?],
        InitStrategy::LinearLs => {
            let c = two_equation_candidates(reference, &obs);
            if c.is_empty() {
                vec![centroid(&anchors).expect("non-empty")]
            } else {
                c
            }
        }
    };
    let ambiguous = candidates.len() > 1;

    let mut best: Option<Outcome> = None;
    for init in candidates {
        let out = levenberg_marquardt(&problem, DVector::from_vec(vec![init.x, init.y]), opts);
        let better = match &best {
            None => true,
            Some(b) => out.trace.last() < b.trace.last(),
        };
        if better {
            best = Some(out);
        }
    }
    let out = best.expect("at least one candidate");
    Ok(SolveResult {
        positions: vec![Point::new(out.x[0], out.x[1])],
        power_estimates: None,
        iterations: out.iterations,
        objective_trace: out.trace,
        wall_time_s: start.elapsed().as_secs_f64(),
        converged: out.converged,
        ambiguous,
    })
}
