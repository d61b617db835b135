use nalgebra::{DMatrix, DVector};

use super::SolverOptions;

/// Residual model `e(x)`; the solver minimises `sum e_i^2`.
pub(crate) trait LeastSquares {
    fn residuals(&self, x: &DVector<f64>) -> DVector<f64>;
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;
}

pub(crate) struct Outcome {
    pub x: DVector<f64>,
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

const MAX_DAMPING: f64 = 1e12;
const MIN_ESCALATED_DAMPING: f64 = 1e-9;

/// Damped Gauss-Newton with Marquardt diagonal scaling. With
/// `opts.damping == 0` every iteration first tries the undamped step.
pub(crate) fn levenberg_marquardt<P: LeastSquares>(
    problem: &P,
    x0: DVector<f64>,
    opts: &SolverOptions,
) -> Outcome {
    let mut x = x0;
    let mut r = problem.residuals(&x);
    let mut f = r.norm_squared();
    let mut trace = vec![f];
    let mut lambda = opts.damping;
    let mut iterations = 0;
    let mut converged = f == 0.0;

    while !converged && iterations < opts.max_iters {
        iterations += 1;
        let j = problem.jacobian(&x);
        let g = j.tr_mul(&r);
        if g.amax() == 0.0 {
            trace.push(f);
            converged = true;
            break;
        }
        let a = j.tr_mul(&j);
        let diag_floor = a.diagonal().amax().max(1.0) * 1e-12;

        let mut damping = lambda;
        let mut step = None;
        loop {
            let mut m = a.clone();
            for i in 0..m.nrows() {
                m[(i, i)] += damping * a[(i, i)].max(diag_floor);
            }
            if let Some(chol) = m.cholesky() {
                let delta = chol.solve(&(-&g));
                let candidate = &x + &delta;
                let r_new = problem.residuals(&candidate);
                let f_new = r_new.norm_squared();
                if f_new.is_finite() && f_new <= f {
                    step = Some((candidate, r_new, f_new));
                    break;
                }
            }
            damping = (damping * 10.0).max(MIN_ESCALATED_DAMPING);
            if damping > MAX_DAMPING {
                break;
            }
        }

        match step {
            Some((candidate, r_new, f_new)) => {
                let change = f - f_new;
                x = candidate;
                r = r_new;
                f = f_new;
                trace.push(f);
                lambda = if opts.damping == 0.0 {
                    0.0
                } else {
                    (damping / 10.0).max(1e-15)
                };
                if change < opts.tol {
                    converged = true;
                }
            }
            None => {
                // No damping level decreases the objective: numerically stationary.
                trace.push(f);
                converged = true;
            }
        }
    }

    Outcome {
        x,
        trace,
        iterations,
        converged,
    }
}

/// Numerical full-column-rank test via singular values.
pub(crate) fn full_column_rank(j: &DMatrix<f64>) -> bool {
    if j.nrows() < j.ncols() {
        return false;
    }
    let sv = j.clone().svd(false, false).singular_values;
    let max = sv.amax();
    max > 0.0 && sv.iter().all(|&s| s > max * 1e-9)
}

/// Least-squares solution of `a x = b` via SVD; `None` when `a` has rank
/// below its column count.
pub(crate) fn solve_full_rank(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    if !full_column_rank(a) {
        return None;
    }
    a.clone().svd(true, true).solve(b, 0.0).ok()
}
