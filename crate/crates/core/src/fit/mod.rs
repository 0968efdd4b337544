//! Least-squares estimation of the law's constants from measured errors.
//!
//! Every fit minimizes the sum of squared relative deviations
//! `delta = (predicted - actual) / actual`. Positive constants (`eps_high`, `gamma`, `p` or
//! `p'`) are optimized in log space; the exponents `phi` and `psi` are unconstrained.
//! `eps_high` is bounded above by 1 and below by the largest conditioning `eps_np`.

pub mod init;
pub mod minimize;

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{fmt_f64, FitRecord, FitSummary, MeasurementSet, UnprunedErrorTable};
use crate::error::{Error, Result};
use crate::law::{self, eval_joint, eval_single, JointLawParams, NetworkConfig, SingleLawParams};

pub use init::{default_contour_levels, estimate_contour_slopes, init_heuristics, CurvePoint};
pub use minimize::{LeastSquares, Method, MinimizeOptions, Minimizer, Minimum};

/// Mean and population standard deviation of a set of relative deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitStats {
    pub mu: f64,
    pub sigma: f64,
    pub n_points: usize,
}

impl From<FitStats> for FitSummary {
    fn from(s: FitStats) -> Self {
        FitSummary { mu: s.mu, sigma: s.sigma, n_points: s.n_points }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub fit_phi: bool,
    pub fit_psi: bool,
    pub restarts: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub rng_seed: u64,
    pub method: Method,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            fit_phi: true,
            fit_psi: true,
            restarts: 4,
            max_iterations: 500,
            tolerance: 1e-12,
            rng_seed: 0,
            method: Method::LevenbergMarquardt,
        }
    }
}

impl FitOptions {
    fn validate(&self) -> Result<()> {
        if self.restarts < 1 {
            return Err(Error::invalid("restarts", "must be at least 1"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid("tolerance", "must be positive"));
        }
        Ok(())
    }

    fn minimize_options(&self) -> MinimizeOptions {
        MinimizeOptions { max_iterations: self.max_iterations, tolerance: self.tolerance }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleFit {
    pub params: SingleLawParams,
    pub stats: FitStats,
    pub objective: f64,
    pub capped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointFit {
    pub params: JointLawParams,
    pub stats: FitStats,
    pub eps_np_table: UnprunedErrorTable,
    pub objective: f64,
    /// `eps_high` ended on its upper bound of 1.
    pub capped: bool,
    pub options: FitOptions,
}

pub fn relative_deviation(predicted: f64, actual: f64) -> Result<f64> {
    if actual == 0.0 {
        return Err(Error::Domain("relative deviation against a zero actual error".into()));
    }
    Ok((predicted - actual) / actual)
}

pub fn fit_stats(deviations: &[f64]) -> Result<FitStats> {
    if deviations.is_empty() {
        return Err(Error::Precondition("fit statistics of an empty set".into()));
    }
    let n = deviations.len() as f64;
    let mu = deviations.iter().sum::<f64>() / n;
    let var = deviations.iter().map(|d| (d - mu).powi(2)).sum::<f64>() / n;
    Ok(FitStats { mu, sigma: var.sqrt(), n_points: deviations.len() })
}

/// Runs `restarts` local minimizations and keeps the best by `(objective, restart index)`.
pub(crate) fn multi_start(
    problem: &LeastSquares<'_>,
    seed: Vec<f64>,
    log_dims: usize,
    opts: &FitOptions,
) -> Minimum {
    let starts: Vec<Vec<f64>> = (0..opts.restarts)
        .map(|i| {
            if i == 0 {
                return seed.clone();
            }
            let mut rng = ChaCha8Rng::seed_from_u64(opts.rng_seed);
            rng.set_stream(i as u64);
            let log_kick = Normal::new(0.0, 0.5).expect("valid normal");
            let lin_kick = Normal::new(0.0, 0.3).expect("valid normal");
            let mut x = seed.clone();
            for (j, v) in x.iter_mut().enumerate() {
                *v += if j < log_dims { log_kick.sample(&mut rng) } else { lin_kick.sample(&mut rng) };
            }
            problem.clamp(&mut x);
            x
        })
        .collect();
    let minimizer = opts.method.minimizer();
    let mopts = opts.minimize_options();
    let results: Vec<Minimum> =
        starts.par_iter().map(|x0| minimizer.minimize(problem, x0, &mopts)).collect();

    let mut best = 0;
    for i in 1..results.len() {
        let cur = results[best].objective;
        let cand = results[i].objective;
        if cand < cur - opts.tolerance * cur.abs().max(f64::MIN_POSITIVE) {
            best = i;
        }
    }
    results.into_iter().nth(best).expect("at least one restart")
}

fn non_convergence(min: &Minimum, natural: Vec<f64>) -> Error {
    Error::NonConvergence { iterations: min.iterations, objective: min.objective, best: natural }
}

/// Fits the per-configuration law to one pruning curve.
pub fn fit_single(points: &[CurvePoint], eps_np: f64, opts: &FitOptions) -> Result<SingleFit> {
    opts.validate()?;
    if points.len() < 4 {
        return Err(Error::Precondition(format!("need at least 4 points, got {}", points.len())));
    }
    if !(eps_np > 0.0 && eps_np < 1.0) {
        return Err(Error::invalid("eps_np", format!("must lie in (0, 1), got {eps_np}")));
    }
    let seed = init_heuristics(points, eps_np)?;
    let d: Vec<f64> = points.iter().map(|p| p.density).collect();
    let y: Vec<f64> = points.iter().map(|p| p.error).collect();
    let residuals = |theta: &[f64], r: &mut [f64]| {
        let (eh, g, p) = (theta[0].exp(), theta[1].exp(), theta[2].exp());
        let a = p * (eh / eps_np).powf(1.0 / g);
        for i in 0..r.len() {
            let pred = eps_np * law::modulus_unchecked(d[i], a, p, g);
            r[i] = (pred - y[i]) / y[i];
        }
    };
    let problem = LeastSquares {
        n_residuals: points.len(),
        lower: vec![eps_np.ln(), -20.0, -60.0],
        upper: vec![0.0, 20.0, 60.0],
        residuals: &residuals,
    };
    let theta0 = vec![seed.eps_high.ln(), seed.gamma.ln(), seed.p.ln()];
    let best = multi_start(&problem, theta0, 3, opts);
    let params = SingleLawParams {
        eps_np,
        eps_high: best.x[0].exp().min(1.0),
        gamma: best.x[1].exp(),
        p: best.x[2].exp(),
    };
    if !best.converged {
        return Err(non_convergence(&best, vec![params.eps_high, params.gamma, params.p]));
    }
    let deltas = points
        .iter()
        .map(|pt| relative_deviation(eval_single(&params, pt.density)?, pt.error))
        .collect::<Result<Vec<f64>>>()?;
    Ok(SingleFit {
        params,
        stats: fit_stats(&deltas)?,
        objective: best.objective,
        capped: params.eps_high >= 1.0 - 1e-9,
    })
}

struct JointData {
    ln_l: Vec<f64>,
    ln_w: Vec<f64>,
    d: Vec<f64>,
    err: Vec<f64>,
    eps_np: Vec<f64>,
}

impl JointData {
    fn new(set: &MeasurementSet, table: &UnprunedErrorTable) -> Result<Self> {
        table.check_covers(set)?;
        let mut data = JointData {
            ln_l: Vec::with_capacity(set.len()),
            ln_w: Vec::with_capacity(set.len()),
            d: Vec::with_capacity(set.len()),
            err: Vec::with_capacity(set.len()),
            eps_np: Vec::with_capacity(set.len()),
        };
        for p in set.points() {
            data.ln_l.push(f64::from(p.cfg.depth).ln());
            data.ln_w.push(p.cfg.width_scale.ln());
            data.d.push(p.cfg.density);
            data.err.push(p.test_error);
            data.eps_np.push(table.get(&p.config_key()).expect("coverage checked"));
        }
        Ok(data)
    }
}

/// Maps the optimizer vector onto the five constants.
#[derive(Debug, Clone, Copy)]
struct Layout {
    fit_phi: bool,
    fit_psi: bool,
}

impl Layout {
    fn unpack(&self, theta: &[f64]) -> JointLawParams {
        let mut i = 3;
        let mut next = |on: bool| {
            if on {
                i += 1;
                theta[i - 1]
            } else {
                0.0
            }
        };
        let phi = next(self.fit_phi);
        let psi = next(self.fit_psi);
        JointLawParams {
            eps_high: theta[0].exp(),
            gamma: theta[1].exp(),
            p_prime: theta[2].exp(),
            phi,
            psi,
        }
    }

    fn pack(&self, p: &JointLawParams) -> Vec<f64> {
        let mut v = vec![p.eps_high.ln(), p.gamma.ln(), p.p_prime.ln()];
        if self.fit_phi {
            v.push(p.phi);
        }
        if self.fit_psi {
            v.push(p.psi);
        }
        v
    }
}

fn distinct_count(values: impl Iterator<Item = f64>) -> usize {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.len()
}

/// Fits the five family-wide constants jointly over every point of `set`.
pub fn fit_joint(set: &MeasurementSet, np_table: &UnprunedErrorTable, opts: &FitOptions) -> Result<JointFit> {
    opts.validate()?;
    if set.is_empty() {
        return Err(Error::Precondition("cannot fit an empty measurement set".into()));
    }
    let data = JointData::new(set, np_table)?;
    let depths = distinct_count(set.points().iter().map(|p| f64::from(p.cfg.depth)));
    let widths = distinct_count(set.points().iter().map(|p| p.cfg.width_scale));
    if !opts.fit_phi && depths > 1 {
        return Err(Error::Inconsistent(format!(
            "phi is fixed at 0 but the set spans {depths} depths"
        )));
    }
    if !opts.fit_psi && widths > 1 {
        return Err(Error::Inconsistent(format!(
            "psi is fixed at 0 but the set spans {widths} widths"
        )));
    }
    if opts.fit_phi && depths < 2 {
        return Err(Error::Degenerate(
            "phi is unidentifiable with a single depth; disable it for a partial fit".into(),
        ));
    }
    if opts.fit_psi && widths < 2 {
        return Err(Error::Degenerate(
            "psi is unidentifiable with a single width; disable it for a partial fit".into(),
        ));
    }
    if distinct_count(data.d.iter().copied()) < 2 {
        return Err(Error::Degenerate("need at least two distinct densities".into()));
    }
    let layout = Layout { fit_phi: opts.fit_phi, fit_psi: opts.fit_psi };
    let n_free = 3 + usize::from(opts.fit_phi) + usize::from(opts.fit_psi);
    if set.len() < n_free {
        return Err(Error::Degenerate(format!(
            "{} points cannot determine {n_free} parameters",
            set.len()
        )));
    }

    // exponents from iso-error contours, remaining constants from the pooled curve
    let levels = default_contour_levels(set);
    let (phi0, psi0) =
        init::contour_regression(set, &levels, opts.fit_phi, opts.fit_psi, 2).unwrap_or((0.0, 0.0));
    let m_star: Vec<f64> = (0..data.d.len())
        .map(|i| (phi0 * data.ln_l[i] + psi0 * data.ln_w[i]).exp() * data.d[i])
        .collect();
    let max_np = data.eps_np.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (eh0, g0, p0) = init::seed_from_samples(&m_star, &data.err, &data.eps_np)?;
    let seed = JointLawParams {
        eps_high: eh0.max(max_np),
        gamma: g0,
        p_prime: p0,
        phi: phi0,
        psi: psi0,
    };

    let residuals = |theta: &[f64], r: &mut [f64]| {
        let p = layout.unpack(theta);
        for i in 0..r.len() {
            let m = (p.phi * data.ln_l[i] + p.psi * data.ln_w[i]).exp() * data.d[i];
            let pred = law::joint_unchecked(p.eps_high, p.gamma, p.p_prime, m, data.eps_np[i]);
            r[i] = (pred - data.err[i]) / data.err[i];
        }
    };
    let mut lower = vec![max_np.ln(), -20.0, -200.0];
    let mut upper = vec![0.0, 20.0, 200.0];
    for _ in 3..n_free {
        lower.push(-50.0);
        upper.push(50.0);
    }
    let problem = LeastSquares { n_residuals: set.len(), lower, upper, residuals: &residuals };
    let best = multi_start(&problem, layout.pack(&seed), 3, opts);
    let mut params = layout.unpack(&best.x);
    params.eps_high = params.eps_high.clamp(max_np, 1.0);
    if !best.converged {
        return Err(non_convergence(
            &best,
            vec![params.eps_high, params.gamma, params.p_prime, params.phi, params.psi],
        ));
    }
    let deltas = joint_deviations(&params, set, np_table)?;
    Ok(JointFit {
        params,
        stats: fit_stats(&deltas.iter().map(|d| d.delta).collect::<Vec<_>>())?,
        eps_np_table: np_table.clone(),
        objective: best.objective,
        capped: params.eps_high >= 1.0 - 1e-9,
        options: *opts,
    })
}

/// One point's measured and predicted error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointDeviation {
    pub family: String,
    pub cfg: NetworkConfig,
    pub actual: f64,
    pub predicted: f64,
    pub delta: f64,
}

fn joint_deviations(
    params: &JointLawParams,
    set: &MeasurementSet,
    table: &UnprunedErrorTable,
) -> Result<Vec<PointDeviation>> {
    table.check_covers(set)?;
    set.points()
        .iter()
        .map(|p| {
            let eps_np = table.get(&p.config_key()).expect("coverage checked");
            let predicted = eval_joint(params, eps_np, &p.cfg)?;
            Ok(PointDeviation {
                family: p.family.clone(),
                cfg: p.cfg,
                actual: p.test_error,
                predicted,
                delta: relative_deviation(predicted, p.test_error)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub value: f64,
    pub stats: FitStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub params: JointLawParams,
    pub stats: FitStats,
    pub by_depth: Vec<GroupStats>,
    pub by_width: Vec<GroupStats>,
    pub by_subsample: Vec<GroupStats>,
    /// Keyed by `floor(log10 d)`.
    pub by_density_decade: Vec<GroupStats>,
    pub deviations: Vec<PointDeviation>,
}

fn grouped(devs: &[PointDeviation], key: impl Fn(&PointDeviation) -> f64) -> Result<Vec<GroupStats>> {
    let mut keyed: Vec<(f64, f64)> = devs.iter().map(|d| (key(d), d.delta)).collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
    keyed
        .chunk_by(|a, b| a.0 == b.0)
        .map(|chunk| {
            let deltas: Vec<f64> = chunk.iter().map(|c| c.1).collect();
            Ok(GroupStats { value: chunk[0].0, stats: fit_stats(&deltas)? })
        })
        .collect()
}

/// Deviations of a joint fit on `set`, with per-dimension breakdowns.
pub fn evaluate_fit(fit: &JointFit, set: &MeasurementSet) -> Result<FitReport> {
    if set.is_empty() {
        return Err(Error::Precondition("cannot evaluate on an empty set".into()));
    }
    let deviations = joint_deviations(&fit.params, set, &fit.eps_np_table)?;
    let all: Vec<f64> = deviations.iter().map(|d| d.delta).collect();
    Ok(FitReport {
        params: fit.params,
        stats: fit_stats(&all)?,
        by_depth: grouped(&deviations, |d| f64::from(d.cfg.depth))?,
        by_width: grouped(&deviations, |d| d.cfg.width_scale)?,
        by_subsample: grouped(&deviations, |d| d.cfg.subsample_size as f64)?,
        by_density_decade: grouped(&deviations, |d| d.cfg.density.log10().floor())?,
        deviations,
    })
}

pub const DEVIATION_HEADER: [&str; 8] =
    ["family", "depth", "width_scale", "subsample_size", "density", "actual", "predicted", "delta"];

pub fn write_deviations_csv<W: Write>(devs: &[PointDeviation], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(DEVIATION_HEADER)?;
    for d in devs {
        w.write_record([
            d.family.clone(),
            d.cfg.depth.to_string(),
            fmt_f64(d.cfg.width_scale),
            d.cfg.subsample_size.to_string(),
            fmt_f64(d.cfg.density),
            fmt_f64(d.actual),
            fmt_f64(d.predicted),
            fmt_f64(d.delta),
        ])?;
    }
    w.flush()?;
    Ok(())
}

impl JointFit {
    pub fn to_record(&self, provenance: &str) -> FitRecord {
        let o = &self.options;
        FitRecord {
            eps_high: self.params.eps_high,
            gamma: self.params.gamma,
            p_prime: self.params.p_prime,
            phi: self.params.phi,
            psi: self.params.psi,
            fit: self.stats.into(),
            provenance: provenance.to_string(),
            meta: Some(serde_json::json!({
                "objective": self.objective,
                "eps_high_capped": self.capped,
                "sigma_kind": "population",
                "optimizer": o.method,
                "restarts": o.restarts,
                "max_iterations": o.max_iterations,
                "tolerance": o.tolerance,
                "rng_seed": o.rng_seed,
                "fit_phi": o.fit_phi,
                "fit_psi": o.fit_psi,
            })),
        }
    }

    /// Rebuilds a fit from its on-disk record and the table it was conditioned on.
    pub fn from_record(record: &FitRecord, table: UnprunedErrorTable) -> Result<Self> {
        let params = JointLawParams {
            eps_high: record.eps_high,
            gamma: record.gamma,
            p_prime: record.p_prime,
            phi: record.phi,
            psi: record.psi,
        };
        params.validate()?;
        Ok(JointFit {
            params,
            stats: FitStats {
                mu: record.fit.mu,
                sigma: record.fit.sigma,
                n_points: record.fit.n_points,
            },
            eps_np_table: table,
            objective: f64::NAN,
            capped: record.eps_high >= 1.0 - 1e-9,
            options: FitOptions::default(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deviation_examples() {
        assert_eq!(relative_deviation(0.3, 0.3).unwrap(), 0.0);
        assert!((relative_deviation(0.098, 0.10).unwrap() + 0.02).abs() < 1e-12);
        assert!((relative_deviation(0.2, 0.1).unwrap() - 1.0).abs() < 1e-12);
        assert!(relative_deviation(0.1, 0.0).is_err());
    }

    #[test]
    fn stats_examples() {
        assert_eq!(fit_stats(&[0.0, 0.0, 0.0]).unwrap(), FitStats { mu: 0.0, sigma: 0.0, n_points: 3 });
        let s = fit_stats(&[-0.02, 0.0, 0.02]).unwrap();
        // brute force population variance
        let var = (0.02f64 * 0.02 * 2.0) / 3.0;
        assert!(s.mu.abs() < 1e-18);
        assert!((s.sigma - var.sqrt()).abs() < 1e-15);
        assert!((s.sigma - (8.0f64 / 3.0).sqrt() * 1e-2).abs() < 1e-15);
        assert_eq!(fit_stats(&[0.7]).unwrap(), FitStats { mu: 0.7, sigma: 0.0, n_points: 1 });
        assert!(fit_stats(&[]).is_err());
    }

    #[test]
    fn three_points_is_a_precondition_error() {
        let pts: Vec<CurvePoint> =
            (0..3).map(|i| CurvePoint { density: 0.5f64.powi(i), error: 0.1 * (i + 1) as f64 }).collect();
        assert!(matches!(fit_single(&pts, 0.1, &FitOptions::default()), Err(Error::Precondition(_))));
    }

    #[test]
    fn layout_round_trip() {
        let p = JointLawParams { eps_high: 0.8, gamma: 1.5, p_prime: 0.3, phi: 0.0, psi: 1.1 };
        let l = Layout { fit_phi: false, fit_psi: true };
        let back = l.unpack(&l.pack(&p));
        assert!((back.eps_high - 0.8).abs() < 1e-15 && back.phi == 0.0 && back.psi == 1.1);
    }

    #[test]
    fn grouping_orders_negative_keys() {
        let mk = |d: f64, delta: f64| PointDeviation {
            family: "f".into(),
            cfg: NetworkConfig { depth: 1, width_scale: 1.0, subsample_size: 1, density: d },
            actual: 0.1,
            predicted: 0.1,
            delta,
        };
        let devs = vec![mk(1.0, 0.1), mk(0.05, 0.2), mk(0.5, 0.3), mk(0.001, 0.0)];
        let g = grouped(&devs, |d| d.cfg.density.log10().floor()).unwrap();
        let keys: Vec<f64> = g.iter().map(|s| s.value).collect();
        assert_eq!(keys, vec![-3.0, -2.0, -1.0, 0.0]);
    }
}
