//! Comparison functional forms and the transition-quality comparison.
//!
//! The full `(m, n)` envelope form is evaluated but never fitted to pruning data; only its
//! density-adapted rewrite takes part in the curve comparison.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::fmt_f64;
use crate::error::{Error, Result};
use crate::fit::{self, fit_single, relative_deviation, CurvePoint, FitOptions, FitStats, LeastSquares};
use crate::law::{eval_single, SingleLawParams};

/// Constants of `eps0 * |t / (t - j eta)|` with `t = a n^-alpha + b m^-beta + c_inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenseErrorParams {
    pub a: f64,
    pub alpha: f64,
    pub b: f64,
    pub beta: f64,
    pub c_inf: f64,
    pub eta: f64,
    pub eps0: f64,
}

impl DenseErrorParams {
    pub fn validate(&self) -> Result<()> {
        if self.alpha < 0.0 || self.beta < 0.0 {
            return Err(Error::invalid("alpha/beta", "exponents must be non-negative"));
        }
        if !(self.eta > 0.0) {
            return Err(Error::invalid("eta", "must be positive"));
        }
        if !(self.eps0 > 0.0 && self.eps0 <= 1.0) {
            return Err(Error::invalid("eps0", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// The additive power-law term `a n^-alpha + b m^-beta + c_inf`.
pub fn eps_tilde(p: &DenseErrorParams, m: f64, n: f64) -> Result<f64> {
    if !(m > 0.0 && n > 0.0) {
        return Err(Error::Domain(format!("m and n must be positive, got m={m}, n={n}")));
    }
    Ok(p.a * n.powf(-p.alpha) + p.b * m.powf(-p.beta) + p.c_inf)
}

pub fn eval_dense_transition(p: &DenseErrorParams, m: f64, n: f64) -> Result<f64> {
    p.validate()?;
    let t = eps_tilde(p, m, n)?;
    Ok(p.eps0 * t.abs() / t.hypot(p.eta))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptedDensityParams {
    pub b_x: f64,
    pub beta_x: f64,
    pub eps_np: f64,
}

/// `b_x d^-beta_x + eps_np - b_x`, written so that `d = 1` returns `eps_np` bit for bit.
pub fn eval_adapted_density(p: &AdaptedDensityParams, density: f64) -> Result<f64> {
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::invalid("density", format!("must lie in (0, 1], got {density}")));
    }
    if !(p.beta_x > 0.0) {
        return Err(Error::invalid("beta_x", "must be positive"));
    }
    Ok(adapted_unchecked(p.b_x, p.beta_x, p.eps_np, density))
}

#[inline]
fn adapted_unchecked(b_x: f64, beta_x: f64, eps_np: f64, d: f64) -> f64 {
    eps_np + b_x * (d.powf(-beta_x) - 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayRow {
    pub density: f64,
    pub actual: f64,
    pub ours: f64,
    pub baseline: f64,
    pub delta_ours: f64,
    pub delta_baseline: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub ours: SingleLawParams,
    pub ours_stats: FitStats,
    pub baseline: AdaptedDensityParams,
    pub baseline_stats: FitStats,
    pub rows: Vec<OverlayRow>,
}

fn fit_adapted(curve: &[CurvePoint], eps_np: f64, opts: &FitOptions) -> Result<AdaptedDensityParams> {
    let d: Vec<f64> = curve.iter().map(|p| p.density).collect();
    let y: Vec<f64> = curve.iter().map(|p| p.error).collect();
    // b_x and beta_x both in log space: error must grow as density shrinks
    let residuals = |theta: &[f64], r: &mut [f64]| {
        let (b, beta) = (theta[0].exp(), theta[1].exp());
        for i in 0..r.len() {
            r[i] = (adapted_unchecked(b, beta, eps_np, d[i]) - y[i]) / y[i];
        }
    };
    let problem = LeastSquares {
        n_residuals: curve.len(),
        lower: vec![-60.0, -20.0],
        upper: vec![20.0, 5.0],
        residuals: &residuals,
    };

    // closed-form b for beta = 1 under the same relative weighting
    let (mut num, mut den) = (0.0, 0.0);
    for (di, yi) in d.iter().zip(&y) {
        let g = (di.recip() - 1.0) / yi;
        num += g * (yi - eps_np) / yi;
        den += g * g;
    }
    let b0 = if den > 0.0 && num > 0.0 { num / den } else { 1e-3 };
    let best = fit::multi_start(&problem, vec![b0.ln(), 0.0], 2, opts);
    if !best.converged {
        return Err(Error::NonConvergence {
            iterations: best.iterations,
            objective: best.objective,
            best: vec![best.x[0].exp(), best.x[1].exp()],
        });
    }
    Ok(AdaptedDensityParams { b_x: best.x[0].exp(), beta_x: best.x[1].exp(), eps_np })
}

/// Fits both the rational law and the density-adapted baseline to one curve.
///
/// Both fits minimize the same squared relative deviation over the same points with the
/// same minimizer and options.
pub fn compare_transition_fits(curve: &[CurvePoint], eps_np: f64, opts: &FitOptions) -> Result<ComparisonReport> {
    if curve.len() < 6 {
        return Err(Error::Precondition(format!("need at least 6 points, got {}", curve.len())));
    }
    let ours = fit_single(curve, eps_np, opts)?;
    let baseline = fit_adapted(curve, eps_np, opts)?;

    let mut rows = Vec::with_capacity(curve.len());
    for p in curve {
        let o = eval_single(&ours.params, p.density)?;
        let b = eval_adapted_density(&baseline, p.density)?;
        rows.push(OverlayRow {
            density: p.density,
            actual: p.error,
            ours: o,
            baseline: b,
            delta_ours: relative_deviation(o, p.error)?,
            delta_baseline: relative_deviation(b, p.error)?,
        });
    }
    let ours_stats = fit::fit_stats(&rows.iter().map(|r| r.delta_ours).collect::<Vec<_>>())?;
    let baseline_stats = fit::fit_stats(&rows.iter().map(|r| r.delta_baseline).collect::<Vec<_>>())?;
    Ok(ComparisonReport { ours: ours.params, ours_stats, baseline, baseline_stats, rows })
}

pub fn write_overlay_csv<W: Write>(rows: &[OverlayRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["density", "actual", "ours", "baseline"])?;
    for r in rows {
        w.write_record([fmt_f64(r.density), fmt_f64(r.actual), fmt_f64(r.ours), fmt_f64(r.baseline)])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rp() -> DenseErrorParams {
        DenseErrorParams { a: 0.0, alpha: 0.5, b: 1.0, beta: 1.0, c_inf: 0.0, eta: 1.0, eps0: 1.0 }
    }

    #[test]
    fn dense_transition_examples() {
        assert!((eval_dense_transition(&rp(), 1.0, 1.0).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        // saturation: t >> eta
        let sat = DenseErrorParams { b: 1e6, eps0: 0.9, ..rp() };
        assert!((eval_dense_transition(&sat, 1.0, 1.0).unwrap() - 0.9).abs() < 1e-9);
        // linear regime: t << eta
        let lin = DenseErrorParams { b: 1e-6, eta: 1.0, eps0: 0.9, ..rp() };
        let v = eval_dense_transition(&lin, 1.0, 1.0).unwrap();
        assert!((v - 0.9 * 1e-6).abs() < 1e-15);
        assert!(eval_dense_transition(&rp(), 0.0, 1.0).is_err());
        assert!(eval_dense_transition(&rp(), 1.0, -1.0).is_err());
    }

    #[test]
    fn adapted_examples() {
        let p = AdaptedDensityParams { b_x: 0.01, beta_x: 1.0, eps_np: 0.1 };
        assert_eq!(eval_adapted_density(&p, 1.0).unwrap(), 0.1);
        assert!((eval_adapted_density(&p, 0.1).unwrap() - 0.19).abs() < 1e-15);
        let flat = AdaptedDensityParams { b_x: 0.0, ..p };
        for d in [1.0, 0.3, 1e-4] {
            assert_eq!(eval_adapted_density(&flat, d).unwrap(), 0.1);
        }
    }

    #[test]
    fn comparison_needs_six_points() {
        let pts: Vec<CurvePoint> =
            (0..5).map(|i| CurvePoint { density: 0.5f64.powi(i), error: 0.1 + 0.05 * i as f64 }).collect();
        assert!(matches!(
            compare_transition_fits(&pts, 0.1, &FitOptions::default()),
            Err(Error::Precondition(_))
        ));
    }
}
