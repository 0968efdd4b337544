//! Fit stability under random subsampling, and extrapolation from a subset of configurations.
//!
//! Each trial draws its sample from its own ChaCha stream keyed by `(T, trial)`, fits on the
//! sample and evaluates on the full set. Trials whose sample cannot identify every free
//! parameter are flagged and left out of the aggregates.

use std::io::Write;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{fmt_f64, ConfigKey, MeasurementPoint, MeasurementSet, UnprunedErrorTable};
use crate::error::{Error, Result};
use crate::fit::{evaluate_fit, fit_joint, fit_stats, FitOptions, FitStats};
use crate::law::JointLawParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    RandomPoints,
    RandomConfigs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial: usize,
    /// Stats on the full set; `None` when the trial was flagged.
    pub stats: Option<FitStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub t: usize,
    pub mean_mu: f64,
    pub std_mu: f64,
    pub mean_sigma: f64,
    pub std_sigma: f64,
    pub valid_trials: usize,
    pub flagged_trials: usize,
    pub outcomes: Vec<TrialOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub experiment_kind: ExperimentKind,
    pub trials: usize,
    pub rows: Vec<StabilityRow>,
}

impl StabilityReport {
    pub fn t_values(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.t).collect()
    }
}

/// Errors that mark a sample as uninformative rather than abort the experiment.
fn is_flaggable(e: &Error) -> bool {
    matches!(
        e,
        Error::Degenerate(_) | Error::NonConvergence { .. } | Error::Precondition(_) | Error::Inconsistent(_)
    )
}

fn trial_rng(seed: u64, t: usize, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((t as u64) << 32) | trial as u64);
    rng
}

fn mean_and_sample_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn run_trials(
    kind: ExperimentKind,
    set: &MeasurementSet,
    np_table: &UnprunedErrorTable,
    t: usize,
    trials: usize,
    opts: &FitOptions,
) -> Result<StabilityRow> {
    if trials < 2 {
        return Err(Error::invalid("trials", "need at least 2"));
    }
    let configs = set.configs();
    let population = match kind {
        ExperimentKind::RandomPoints => set.len(),
        ExperimentKind::RandomConfigs => configs.len(),
    };
    if t == 0 || t > population {
        return Err(Error::invalid("T", format!("must lie in 1..={population}, got {t}")));
    }
    np_table.check_covers(set)?;

    let outcomes = (0..trials)
        .into_par_iter()
        .map(|trial| -> Result<TrialOutcome> {
            let mut rng = trial_rng(opts.rng_seed, t, trial);
            let mut picked = index::sample(&mut rng, population, t).into_vec();
            picked.sort_unstable();
            let sample = match kind {
                ExperimentKind::RandomPoints => set.subset(&picked),
                ExperimentKind::RandomConfigs => {
                    let keep: Vec<&ConfigKey> = picked.iter().map(|&i| &configs[i]).collect();
                    set.filter(|p: &MeasurementPoint| keep.binary_search(&&p.config_key()).is_ok())
                }
            };
            let stats = match fit_joint(&sample, np_table, opts) {
                Ok(fit) => Some(evaluate_fit(&fit, set)?.stats),
                Err(e) if is_flaggable(&e) => None,
                Err(e) => return Err(e),
            };
            Ok(TrialOutcome { trial, stats })
        })
        .collect::<Result<Vec<_>>>()?;

    let valid: Vec<FitStats> = outcomes.iter().filter_map(|o| o.stats).collect();
    if valid.len() < 2 {
        return Err(Error::Degenerate(format!(
            "only {} of {trials} trials at T={t} produced an identifiable fit",
            valid.len()
        )));
    }
    let (mean_mu, std_mu) = mean_and_sample_std(&valid.iter().map(|s| s.mu).collect::<Vec<_>>());
    let (mean_sigma, std_sigma) = mean_and_sample_std(&valid.iter().map(|s| s.sigma).collect::<Vec<_>>());
    Ok(StabilityRow {
        t,
        mean_mu,
        std_mu,
        mean_sigma,
        std_sigma,
        valid_trials: valid.len(),
        flagged_trials: trials - valid.len(),
        outcomes,
    })
}

/// Fits on `T` points drawn without replacement, `trials` times.
pub fn experiment_random_points(
    set: &MeasurementSet,
    np_table: &UnprunedErrorTable,
    t: usize,
    trials: usize,
    opts: &FitOptions,
) -> Result<StabilityReport> {
    stability_sweep(ExperimentKind::RandomPoints, set, np_table, &[t], trials, opts)
}

/// Fits on every density of `T` configurations drawn without replacement, `trials` times.
pub fn experiment_random_configs(
    set: &MeasurementSet,
    np_table: &UnprunedErrorTable,
    t: usize,
    trials: usize,
    opts: &FitOptions,
) -> Result<StabilityReport> {
    stability_sweep(ExperimentKind::RandomConfigs, set, np_table, &[t], trials, opts)
}

pub fn stability_sweep(
    kind: ExperimentKind,
    set: &MeasurementSet,
    np_table: &UnprunedErrorTable,
    t_values: &[usize],
    trials: usize,
    opts: &FitOptions,
) -> Result<StabilityReport> {
    let rows = t_values
        .iter()
        .map(|&t| run_trials(kind, set, np_table, t, trials, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(StabilityReport { experiment_kind: kind, trials, rows })
}

pub fn write_stability_csv<W: Write>(report: &StabilityReport, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["T", "mean_mu", "std_mu", "mean_sigma", "std_sigma"])?;
    for r in &report.rows {
        w.write_record([
            r.t.to_string(),
            fmt_f64(r.mean_mu),
            fmt_f64(r.std_mu),
            fmt_f64(r.mean_sigma),
            fmt_f64(r.std_sigma),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationReport {
    pub train_filter: String,
    pub params: JointLawParams,
    pub in_fit: FitStats,
    pub out_of_fit: FitStats,
}

/// Fits on the configurations accepted by `train` and scores held-out points separately.
pub fn extrapolation_eval(
    set: &MeasurementSet,
    np_table: &UnprunedErrorTable,
    train: impl Fn(&ConfigKey) -> bool,
    description: &str,
    opts: &FitOptions,
) -> Result<ExtrapolationReport> {
    let train_set = set.filter(|p| train(&p.config_key()));
    if train_set.is_empty() {
        return Err(Error::Precondition(format!("training filter '{description}' selects no points")));
    }
    if train_set.len() == set.len() {
        return Err(Error::Precondition(format!("training filter '{description}' leaves nothing held out")));
    }
    let fit = fit_joint(&train_set, np_table, opts)?;
    let report = evaluate_fit(&fit, set)?;
    let (mut inside, mut outside) = (Vec::new(), Vec::new());
    for dev in &report.deviations {
        let key = ConfigKey::of(&dev.family, &dev.cfg);
        if train(&key) {
            inside.push(dev.delta);
        } else {
            outside.push(dev.delta);
        }
    }
    Ok(ExtrapolationReport {
        train_filter: description.to_string(),
        params: fit.params,
        in_fit: fit_stats(&inside)?,
        out_of_fit: fit_stats(&outside)?,
    })
}

/// Depths and widths in the lower half (rounded up) of each dimension's distinct values.
///
/// Returns the predicate together with a description of the selected grid.
pub fn smallest_configs_filter(set: &MeasurementSet) -> (impl Fn(&ConfigKey) -> bool + use<>, String) {
    let configs = set.configs();
    let mut depths: Vec<u32> = configs.iter().map(|k| k.depth).collect();
    depths.sort_unstable();
    depths.dedup();
    let mut widths: Vec<f64> = configs.iter().map(|k| k.width_scale).collect();
    widths.sort_by(f64::total_cmp);
    widths.dedup();
    let max_depth = depths[depths.len().div_ceil(2) - 1];
    let max_width = widths[widths.len().div_ceil(2) - 1];
    let description = format!("depth <= {max_depth} and width_scale <= {max_width}");
    (move |k: &ConfigKey| k.depth <= max_depth && k.width_scale <= max_width, description)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_surface, imp_densities, SynthGrid, SynthSpec};

    fn surface(noise: f64) -> (MeasurementSet, UnprunedErrorTable) {
        let truth = JointLawParams { eps_high: 0.9, gamma: 2.0, p_prime: 1.0, phi: 1.2, psi: 0.8 };
        let grid = SynthGrid {
            depths: vec![8, 20, 50],
            widths: vec![0.5, 1.0, 2.0],
            subsample_sizes: vec![1000],
            densities: imp_densities(40),
        };
        generate_surface(&SynthSpec::new(truth, grid, noise, 5).unwrap()).unwrap()
    }

    #[test]
    fn sampling_everything_has_zero_spread() {
        let (set, table) = surface(0.02);
        let opts = FitOptions { restarts: 1, ..FitOptions::default() };
        let r = experiment_random_configs(&set, &table, set.configs().len(), 2, &opts).unwrap();
        assert_eq!(r.rows[0].std_mu, 0.0);
        assert_eq!(r.rows[0].std_sigma, 0.0);
        assert_eq!(r.trials, 2);
    }

    #[test]
    fn single_config_trials_are_flagged() {
        let (set, table) = surface(0.0);
        let opts = FitOptions { restarts: 1, ..FitOptions::default() };
        let err = experiment_random_configs(&set, &table, 1, 3, &opts).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)), "{err:?}");
    }

    #[test]
    fn reruns_are_identical() {
        let (set, table) = surface(0.03);
        let opts = FitOptions { restarts: 2, rng_seed: 11, ..FitOptions::default() };
        let a = experiment_random_points(&set, &table, 60, 3, &opts).unwrap();
        let b = experiment_random_points(&set, &table, 60, 3, &opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn extrapolation_partitions_points() {
        let (set, table) = surface(0.0);
        let (pred, desc) = smallest_configs_filter(&set);
        assert_eq!(desc, "depth <= 20 and width_scale <= 1");
        let r = extrapolation_eval(&set, &table, pred, &desc, &FitOptions::default()).unwrap();
        assert_eq!(r.in_fit.n_points + r.out_of_fit.n_points, set.len());
        assert!(r.out_of_fit.mu.abs() < 1e-6, "{r:?}");
    }

    #[test]
    fn empty_splits_are_rejected() {
        let (set, table) = surface(0.0);
        let opts = FitOptions::default();
        assert!(matches!(extrapolation_eval(&set, &table, |_| false, "none", &opts), Err(Error::Precondition(_))));
        assert!(matches!(extrapolation_eval(&set, &table, |_| true, "all", &opts), Err(Error::Precondition(_))));
    }
}
