//! Starting points for the local fits.

use std::collections::BTreeMap;

use crate::dataset::{ConfigKey, MeasurementSet};
use crate::error::{Error, Result};
use crate::law::SingleLawParams;

/// One `(density, error)` sample of a pruning curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub density: f64,
    pub error: f64,
}

/// Seed for the rational law from a (possibly pooled) curve.
///
/// `x` is the abscissa (density, or the invariant for pooled family data) and `eps_np` is
/// the dense error each sample is conditioned on. Returns `(eps_high, gamma, transition)`.
pub(crate) fn seed_from_samples(x: &[f64], err: &[f64], eps_np: &[f64]) -> Result<(f64, f64, f64)> {
    let max_err = err.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_err = err.iter().copied().fold(f64::INFINITY, f64::min);
    if !(max_err - min_err > 1e-12 * max_err) {
        return Err(Error::Degenerate("all errors are equal; the curve carries no shape".into()));
    }
    let max_np = eps_np.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let eps_high = max_err.max(max_np * (1.0 + 1e-6)).min(1.0);

    // position of each sample between its low plateau (0) and the high plateau (1), in log error
    let frac: Vec<f64> = err
        .iter()
        .zip(eps_np)
        .map(|(e, np)| {
            let span = (eps_high / np).ln();
            if span > 0.0 {
                (e / np).ln() / span
            } else {
                0.0
            }
        })
        .collect();

    let mut gamma = None;
    for (lo, hi) in [(1.0 / 3.0, 2.0 / 3.0), (1.0 / 6.0, 5.0 / 6.0), (1e-9, 1.0 - 1e-9)] {
        let (xs, ys): (Vec<f64>, Vec<f64>) = (0..x.len())
            .filter(|&i| frac[i] >= lo && frac[i] <= hi)
            .map(|i| (x[i].ln(), (err[i] / eps_np[i]).ln()))
            .unzip();
        if let Some((slope, _)) = simple_regression(&xs, &ys) {
            gamma = Some((-slope).clamp(0.1, 10.0));
            break;
        }
    }
    let gamma = gamma.unwrap_or(1.0);

    // sample nearest to sqrt(eps_np * eps_high) in log space
    let mid = (0..x.len())
        .min_by(|&i, &j| (frac[i] - 0.5).abs().total_cmp(&(frac[j] - 0.5).abs()))
        .expect("non-empty curve");
    let r = (err[mid] / eps_np[mid]).powf(2.0 / gamma);
    let k2 = (eps_high / eps_np[mid]).powf(2.0 / gamma);
    let transition = if r > 1.0 && k2 > r {
        x[mid] * ((r - 1.0) / (k2 - r)).sqrt()
    } else {
        x[mid]
    };
    Ok((eps_high, gamma, transition))
}

/// Least-squares line through `(x, y)`; `None` without two distinct abscissae.
pub(crate) fn simple_regression(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len();
    if n < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx <= 1e-12 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Seed for the single-configuration law.
///
/// `eps_high` starts at the largest observed error, `gamma` at the negated log-log slope of
/// the samples in the middle third of the (log) error range, clamped to `[0.1, 10]`, and `p`
/// is chosen so that the seed curve passes through the sample closest to `sqrt(eps_np * eps_high)`.
pub fn init_heuristics(points: &[CurvePoint], eps_np: f64) -> Result<SingleLawParams> {
    let mut densities: Vec<f64> = points.iter().map(|p| p.density).collect();
    densities.sort_by(f64::total_cmp);
    densities.dedup();
    if densities.len() < 4 {
        return Err(Error::Precondition(format!(
            "need at least 4 distinct densities, got {}",
            densities.len()
        )));
    }
    let x: Vec<f64> = points.iter().map(|p| p.density).collect();
    let e: Vec<f64> = points.iter().map(|p| p.error).collect();
    let (eps_high, gamma, p) = seed_from_samples(&x, &e, &vec![eps_np; x.len()])?;
    Ok(SingleLawParams { eps_np, eps_high, gamma, p })
}

/// Mean error per density for each configuration, densest first.
fn curves(set: &MeasurementSet) -> BTreeMap<ConfigKey, Vec<CurvePoint>> {
    let mut acc: BTreeMap<ConfigKey, Vec<(f64, f64, usize)>> = BTreeMap::new();
    for p in set.points() {
        let v = acc.entry(p.config_key()).or_default();
        match v.iter_mut().find(|(d, _, _)| *d == p.cfg.density) {
            Some(slot) => {
                slot.1 += p.test_error;
                slot.2 += 1;
            }
            None => v.push((p.cfg.density, p.test_error, 1)),
        }
    }
    acc.into_iter()
        .map(|(k, v)| {
            let mut c: Vec<CurvePoint> = v
                .into_iter()
                .map(|(d, s, n)| CurvePoint { density: d, error: s / n as f64 })
                .collect();
            c.sort_by(|a, b| b.density.total_cmp(&a.density));
            (k, c)
        })
        .collect()
}

/// Density where a densest-first curve first climbs to `level`, interpolated in log-log.
fn crossing_density(curve: &[CurvePoint], level: f64) -> Option<f64> {
    if curve.first()?.error >= level {
        return None;
    }
    curve.windows(2).find_map(|w| {
        let (a, b) = (w[0], w[1]);
        if a.error < level && b.error >= level {
            let t = (level.ln() - a.error.ln()) / (b.error.ln() - a.error.ln());
            Some((a.density.ln() + t * (b.density.ln() - a.density.ln())).exp())
        } else {
            None
        }
    })
}

/// Error levels spread geometrically across the power-law region shared by most configurations.
pub fn default_contour_levels(set: &MeasurementSet) -> Vec<f64> {
    let curves = curves(set);
    let dense_max = curves
        .values()
        .filter_map(|c| c.first().map(|p| p.error))
        .fold(f64::NEG_INFINITY, f64::max);
    let mut tops: Vec<f64> = curves
        .values()
        .map(|c| c.iter().map(|p| p.error).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    tops.sort_by(f64::total_cmp);
    let top = tops.get(tops.len() / 2).copied().unwrap_or(dense_max);
    let lo = dense_max * 1.5;
    let hi = top * 0.85;
    if !(lo < hi) {
        return vec![(dense_max * top).sqrt()];
    }
    (0..5).map(|i| lo * (hi / lo).powf(i as f64 / 4.0)).collect()
}

/// Contour regression `ln d = c - phi ln l - psi ln w` averaged over levels.
///
/// Dimensions that are switched off keep a zero slope. Each used dimension needs at least
/// `min_distinct` distinct values in the set.
pub(crate) fn contour_regression(
    set: &MeasurementSet,
    levels: &[f64],
    use_depth: bool,
    use_width: bool,
    min_distinct: usize,
) -> Result<(f64, f64)> {
    let configs = set.configs();
    let distinct = |f: &dyn Fn(&ConfigKey) -> f64| {
        let mut v: Vec<f64> = configs.iter().map(f).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v.len()
    };
    let depths = distinct(&|k| f64::from(k.depth));
    let widths = distinct(&|k| k.width_scale);
    if (use_depth && depths < min_distinct) || (use_width && widths < min_distinct) {
        return Err(Error::Precondition(format!(
            "contour slopes need at least {min_distinct} depths and widths, got {depths} and {widths}"
        )));
    }
    if !use_depth && !use_width {
        return Ok((0.0, 0.0));
    }

    let curves = curves(set);
    let cols = 1 + usize::from(use_depth) + usize::from(use_width);
    let mut phis = Vec::new();
    let mut psis = Vec::new();
    for &level in levels {
        let mut rows: Vec<f64> = Vec::new();
        let mut rhs: Vec<f64> = Vec::new();
        for (key, curve) in &curves {
            if let Some(d) = crossing_density(curve, level) {
                rows.push(1.0);
                if use_depth {
                    rows.push(f64::from(key.depth).ln());
                }
                if use_width {
                    rows.push(key.width_scale.ln());
                }
                rhs.push(d.ln());
            }
        }
        if rhs.len() < cols + 1 {
            continue;
        }
        let a = nalgebra::DMatrix::from_row_slice(rhs.len(), cols, &rows);
        let b = nalgebra::DVector::from_vec(rhs);
        let Ok(sol) = a.svd(true, true).solve(&b, 1e-12) else {
            continue;
        };
        if sol.iter().any(|v| !v.is_finite()) {
            continue;
        }
        let mut c = 1;
        if use_depth {
            phis.push(-sol[c]);
            c += 1;
        }
        if use_width {
            psis.push(-sol[c]);
        }
    }
    let count = phis.len().max(psis.len());
    if count == 0 {
        return Err(Error::Precondition("no error level is crossed by enough configurations".into()));
    }
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    Ok((mean(&phis), mean(&psis)))
}

/// Depth and width exponents read off iso-error contours.
pub fn estimate_contour_slopes(set: &MeasurementSet, error_levels: &[f64]) -> Result<(f64, f64)> {
    contour_regression(set, error_levels, true, true, 3)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::law::eval_single;

    fn curve(truth: &SingleLawParams, n: usize) -> Vec<CurvePoint> {
        (0..n)
            .map(|i| {
                let d = 0.8f64.powi(i as i32);
                CurvePoint { density: d, error: eval_single(truth, d).unwrap() }
            })
            .collect()
    }

    #[test]
    fn seed_lands_near_truth() {
        let truth = SingleLawParams { eps_np: 0.1, eps_high: 0.9, gamma: 1.0, p: 0.01 };
        let seed = init_heuristics(&curve(&truth, 41), 0.1).unwrap();
        for (got, want) in [(seed.eps_high, 0.9), (seed.gamma, 1.0), (seed.p, 0.01)] {
            assert!((got - want).abs() / want < 0.5, "seed {seed:?}");
        }
    }

    #[test]
    fn flat_curve_is_degenerate() {
        let pts: Vec<CurvePoint> =
            (0..6).map(|i| CurvePoint { density: 0.8f64.powi(i), error: 0.2 }).collect();
        assert!(matches!(init_heuristics(&pts, 0.2), Err(Error::Degenerate(_))));
    }

    #[test]
    fn too_few_densities() {
        let pts: Vec<CurvePoint> =
            (0..3).map(|i| CurvePoint { density: 0.8f64.powi(i), error: 0.2 + 0.1 * i as f64 }).collect();
        assert!(matches!(init_heuristics(&pts, 0.2), Err(Error::Precondition(_))));
    }

    #[test]
    fn unsampled_high_plateau_seeds_from_max() {
        // only the low plateau and the start of the power law are observed
        let truth = SingleLawParams { eps_np: 0.1, eps_high: 0.9, gamma: 1.5, p: 0.001 };
        let pts = curve(&truth, 15);
        let max = pts.iter().map(|p| p.error).fold(0.0, f64::max);
        let seed = init_heuristics(&pts, 0.1).unwrap();
        assert_eq!(seed.eps_high, max);
        assert!(seed.eps_high < 0.9);
    }
}
