//! Local minimizers for box-bounded least-squares objectives.
//!
//! Both drivers share one contract: a residual function, an initial point, per-coordinate
//! bounds, a tolerance and an iteration cap. The objective is always `sum(r_i^2)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Residual vector `r(x)` together with its box bounds.
pub struct LeastSquares<'a> {
    pub n_residuals: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub residuals: &'a (dyn Fn(&[f64], &mut [f64]) + Sync),
}

impl LeastSquares<'_> {
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[i], self.upper[i]);
        }
    }

    /// `sum(r^2)`, or `+inf` when any residual is not finite.
    pub fn objective(&self, x: &[f64], scratch: &mut [f64]) -> f64 {
        (self.residuals)(x, scratch);
        let mut s = 0.0;
        for r in scratch.iter() {
            if !r.is_finite() {
                return f64::INFINITY;
            }
            s += r * r;
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimizeOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub trait Minimizer: Sync {
    fn minimize(&self, problem: &LeastSquares<'_>, x0: &[f64], opts: &MinimizeOptions) -> Minimum;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    LevenbergMarquardt,
    NelderMead,
}

impl Method {
    pub fn minimizer(&self) -> &'static dyn Minimizer {
        match self {
            Method::LevenbergMarquardt => &LevenbergMarquardt,
            Method::NelderMead => &NelderMead,
        }
    }
}

/// Levenberg-Marquardt with a central-difference Jacobian and projected steps.
#[derive(Debug, Clone, Copy, Default)]
pub struct LevenbergMarquardt;

impl LevenbergMarquardt {
    fn jacobian(problem: &LeastSquares<'_>, x: &[f64], jac: &mut DMatrix<f64>, buf: &mut [f64], buf2: &mut [f64]) {
        let mut xp = x.to_vec();
        for j in 0..x.len() {
            let h = 1e-7 * (1.0 + x[j].abs());
            xp[j] = x[j] + h;
            (problem.residuals)(&xp, buf);
            xp[j] = x[j] - h;
            (problem.residuals)(&xp, buf2);
            xp[j] = x[j];
            for i in 0..buf.len() {
                jac[(i, j)] = (buf[i] - buf2[i]) / (2.0 * h);
            }
        }
    }
}

impl Minimizer for LevenbergMarquardt {
    fn minimize(&self, problem: &LeastSquares<'_>, x0: &[f64], opts: &MinimizeOptions) -> Minimum {
        let n = problem.dim();
        let m = problem.n_residuals;
        let mut x = x0.to_vec();
        problem.clamp(&mut x);
        let mut r = vec![0.0; m];
        let mut trial_r = vec![0.0; m];
        let mut b1 = vec![0.0; m];
        let mut b2 = vec![0.0; m];
        let mut f = problem.objective(&x, &mut r);
        let mut jac = DMatrix::<f64>::zeros(m, n);
        let mut lambda = 1e-3;
        let tol = opts.tolerance;

        if !f.is_finite() {
            return Minimum { x, objective: f, iterations: 0, converged: false };
        }

        for iter in 1..=opts.max_iterations {
            if f <= f64::MIN_POSITIVE {
                return Minimum { x, objective: f, iterations: iter - 1, converged: true };
            }
            Self::jacobian(problem, &x, &mut jac, &mut b1, &mut b2);
            let rv = DVector::from_column_slice(&r);
            let jtj = jac.transpose() * &jac;
            let grad = jac.transpose() * &rv;
            if grad.amax() <= tol * tol * (1.0 + f) {
                return Minimum { x, objective: f, iterations: iter, converged: true };
            }

            let mut accepted = false;
            while lambda < 1e16 {
                let mut a = jtj.clone();
                for i in 0..n {
                    a[(i, i)] += lambda * (jtj[(i, i)].max(1e-12));
                }
                let step = match a.lu().solve(&(-&grad)) {
                    Some(s) => s,
                    None => {
                        lambda *= 10.0;
                        continue;
                    }
                };
                let mut xt: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
                problem.clamp(&mut xt);
                let ft = problem.objective(&xt, &mut trial_r);
                if ft < f {
                    let dx = x.iter().zip(&xt).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    let xnorm = x.iter().map(|v| v.abs()).fold(0.0, f64::max);
                    let rel_drop = (f - ft) / f;
                    x = xt;
                    std::mem::swap(&mut r, &mut trial_r);
                    f = ft;
                    lambda = (lambda / 3.0).max(1e-12);
                    accepted = true;
                    if dx <= tol * (xnorm + tol) || rel_drop <= tol * 1e-3 {
                        return Minimum { x, objective: f, iterations: iter, converged: true };
                    }
                    break;
                }
                lambda *= 4.0;
            }
            if !accepted {
                // no descent direction left at working precision
                return Minimum { x, objective: f, iterations: iter, converged: true };
            }
        }
        Minimum { x, objective: f, iterations: opts.max_iterations, converged: false }
    }
}

/// Nelder-Mead simplex search on `sum(r^2)`; bounds are enforced by projection.
#[derive(Debug, Clone, Copy, Default)]
pub struct NelderMead;

impl Minimizer for NelderMead {
    fn minimize(&self, problem: &LeastSquares<'_>, x0: &[f64], opts: &MinimizeOptions) -> Minimum {
        let n = problem.dim();
        let mut scratch = vec![0.0; problem.n_residuals];
        let mut eval = |x: &mut Vec<f64>| {
            problem.clamp(x);
            problem.objective(x, &mut scratch)
        };

        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        let mut start = x0.to_vec();
        let f0 = eval(&mut start);
        simplex.push((start.clone(), f0));
        for i in 0..n {
            let mut v = start.clone();
            v[i] += if v[i].abs() > 1e-8 { 0.1 * v[i].abs() } else { 0.05 };
            let fv = eval(&mut v);
            simplex.push((v, fv));
        }

        let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
        for iter in 1..=opts.max_iterations {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let best = simplex[0].1;
            let worst = simplex[n].1;
            let spread = simplex
                .iter()
                .skip(1)
                .map(|(v, _)| v.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
                .fold(0.0, f64::max);
            if (worst - best).abs() <= opts.tolerance * (best.abs() + opts.tolerance) && spread <= opts.tolerance.sqrt()
            {
                let (x, objective) = simplex.swap_remove(0);
                return Minimum { x, objective, iterations: iter, converged: true };
            }

            let mut centroid = vec![0.0; n];
            for (v, _) in simplex.iter().take(n) {
                for (c, vi) in centroid.iter_mut().zip(v) {
                    *c += vi / n as f64;
                }
            }
            let along = |t: f64, from: &[f64]| -> Vec<f64> {
                centroid.iter().zip(from).map(|(c, w)| c + t * (c - w)).collect()
            };

            let mut xr = along(alpha, &simplex[n].0);
            let fr = eval(&mut xr);
            if fr < simplex[0].1 {
                let mut xe = along(gamma, &simplex[n].0);
                let fe = eval(&mut xe);
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            } else if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
            } else {
                let (mut xc, fc) = if fr < simplex[n].1 {
                    let mut xc = along(rho, &simplex[n].0);
                    let fc = eval(&mut xc);
                    (xc, fc)
                } else {
                    let mut xc = along(-rho, &simplex[n].0);
                    let fc = eval(&mut xc);
                    (xc, fc)
                };
                if fc < simplex[n].1.min(fr) {
                    simplex[n] = (std::mem::take(&mut xc), fc);
                } else {
                    let best_x = simplex[0].0.clone();
                    for entry in simplex.iter_mut().skip(1) {
                        let mut v: Vec<f64> =
                            best_x.iter().zip(&entry.0).map(|(b, w)| b + sigma * (w - b)).collect();
                        let fv = eval(&mut v);
                        *entry = (v, fv);
                    }
                }
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (x, objective) = simplex.swap_remove(0);
        Minimum { x, objective, iterations: opts.max_iterations, converged: false }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock_residuals(x: &[f64], r: &mut [f64]) {
        r[0] = 10.0 * (x[1] - x[0] * x[0]);
        r[1] = 1.0 - x[0];
    }

    fn problem() -> LeastSquares<'static> {
        LeastSquares {
            n_residuals: 2,
            lower: vec![f64::NEG_INFINITY; 2],
            upper: vec![f64::INFINITY; 2],
            residuals: &rosenbrock_residuals,
        }
    }

    #[test]
    fn lm_solves_rosenbrock() {
        let opts = MinimizeOptions { max_iterations: 500, tolerance: 1e-12 };
        let m = LevenbergMarquardt.minimize(&problem(), &[-1.2, 1.0], &opts);
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6, "{m:?}");
    }

    #[test]
    fn nelder_mead_solves_rosenbrock() {
        let opts = MinimizeOptions { max_iterations: 5000, tolerance: 1e-14 };
        let m = NelderMead.minimize(&problem(), &[-1.2, 1.0], &opts);
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4, "{m:?}");
    }

    #[test]
    fn bounds_are_respected() {
        let mut p = problem();
        p.upper = vec![0.5, f64::INFINITY];
        let opts = MinimizeOptions { max_iterations: 500, tolerance: 1e-12 };
        for method in [Method::LevenbergMarquardt, Method::NelderMead] {
            let m = method.minimizer().minimize(&p, &[0.0, 0.0], &opts);
            assert!(m.x[0] <= 0.5 + 1e-15);
            assert!((m.x[0] - 0.5).abs() < 1e-3, "{method:?} {m:?}");
        }
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let opts = MinimizeOptions { max_iterations: 2, tolerance: 1e-15 };
        let m = LevenbergMarquardt.minimize(&problem(), &[-1.2, 1.0], &opts);
        assert!(!m.converged);
        assert_eq!(m.iterations, 2);
    }
}
