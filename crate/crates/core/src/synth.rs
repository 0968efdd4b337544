//! Ground-truth error surfaces generated from known law constants.
//!
//! Noise is multiplicative and lognormal, `err = clean * exp(z * noise_rel_std)`, drawn from
//! a per-point ChaCha stream so the output does not depend on generation order. The optional
//! dip lowers errors on the low-error plateau inside the top `width_decades` of density.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::baseline::{eps_tilde, DenseErrorParams};
use crate::dataset::{ConfigKey, MeasurementPoint, MeasurementSet, UnprunedErrorTable};
use crate::error::{Error, Result};
use crate::law::{eval_joint, JointLawParams, NetworkConfig};

/// Largest error the generator will emit; noise realizations above it are clamped.
pub const MAX_SYNTH_ERROR: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DipSpec {
    pub depth_rel: f64,
    pub width_decades: f64,
}

impl DipSpec {
    /// Smooth unit hump on `-log10(d) / width_decades` in `[0, 1]`, zero at `d = 1`.
    pub fn bump(&self, density: f64) -> f64 {
        let u = -density.log10() / self.width_decades;
        if u > 0.0 && u < 1.0 {
            (PI * u).sin().powi(2)
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthGrid {
    pub depths: Vec<u32>,
    pub widths: Vec<f64>,
    pub subsample_sizes: Vec<u64>,
    pub densities: Vec<f64>,
}

/// `0.8^i` for `i = 0..=max_exponent`.
pub fn imp_densities(max_exponent: u32) -> Vec<f64> {
    (0..=max_exponent).map(|i| 0.8f64.powi(i as i32)).collect()
}

impl SynthGrid {
    /// Six depths, five widths, three subsample sizes and `0.8^i, i <= 40`.
    pub fn standard() -> Self {
        SynthGrid {
            depths: vec![8, 14, 20, 26, 50, 98],
            widths: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            subsample_sizes: vec![50_000, 12_500, 3_125],
            densities: imp_densities(40),
        }
    }

    pub fn n_configs(&self) -> usize {
        self.depths.len() * self.widths.len() * self.subsample_sizes.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub family: String,
    pub truth: JointLawParams,
    pub eps_np: UnprunedErrorTable,
    pub grid: SynthGrid,
    pub noise_rel_std: f64,
    pub dip: Option<DipSpec>,
    pub replicates: u32,
    pub rng_seed: u64,
}

/// Dense-error model `c_inf + b (l w^2)^-beta + a (n / n_max)^-alpha` used to populate
/// synthetic unpruned-error tables.
pub fn unpruned_error_model() -> DenseErrorParams {
    DenseErrorParams {
        a: 0.02,
        alpha: 0.5,
        b: 0.25,
        beta: 0.5,
        c_inf: 0.03,
        eta: 1.0,
        eps0: 1.0,
    }
}

/// Table for every `(l, w, n)` of `grid` from the dense-error model.
pub fn model_eps_np_table(family: &str, grid: &SynthGrid) -> Result<UnprunedErrorTable> {
    let model = unpruned_error_model();
    let n_max = grid.subsample_sizes.iter().copied().max().unwrap_or(1) as f64;
    let mut table = UnprunedErrorTable::new();
    for &l in &grid.depths {
        for &w in &grid.widths {
            for &n in &grid.subsample_sizes {
                let m = f64::from(l) * w * w;
                let eps = eps_tilde(&model, m, n as f64 / n_max)?;
                table.insert(
                    ConfigKey { family: family.into(), depth: l, width_scale: w, subsample_size: n },
                    eps,
                )?;
            }
        }
    }
    Ok(table)
}

impl SynthSpec {
    pub fn new(truth: JointLawParams, grid: SynthGrid, noise_rel_std: f64, rng_seed: u64) -> Result<Self> {
        let family = "synthetic".to_string();
        let eps_np = model_eps_np_table(&family, &grid)?;
        Ok(SynthSpec { family, truth, eps_np, grid, noise_rel_std, dip: None, replicates: 1, rng_seed })
    }

    pub fn validate(&self) -> Result<()> {
        self.truth.validate()?;
        if !(self.noise_rel_std >= 0.0 && self.noise_rel_std.is_finite()) {
            return Err(Error::invalid("noise_rel_std", "must be non-negative"));
        }
        if self.replicates < 1 {
            return Err(Error::invalid("replicates", "must be at least 1"));
        }
        if let Some(dip) = &self.dip {
            if !(dip.depth_rel > 0.0 && dip.width_decades > 0.0) {
                return Err(Error::invalid("dip", "depth and width must be positive"));
            }
        }
        if self.grid.densities.iter().any(|d| !(*d > 0.0 && *d <= 1.0)) {
            return Err(Error::invalid("densities", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Generates the measurement surface and the unpruned-error table it is conditioned on.
pub fn generate_surface(spec: &SynthSpec) -> Result<(MeasurementSet, UnprunedErrorTable)> {
    spec.validate()?;
    let mut points = Vec::new();
    let mut table = UnprunedErrorTable::new();
    let mut counter: u64 = 0;
    for &l in &spec.grid.depths {
        for &w in &spec.grid.widths {
            for &n in &spec.grid.subsample_sizes {
                let key = ConfigKey { family: spec.family.clone(), depth: l, width_scale: w, subsample_size: n };
                let eps_np = spec.eps_np.get(&key).ok_or_else(|| Error::MissingUnpruned(vec![key.to_string()]))?;
                table.insert(key, eps_np)?;
                for &d in &spec.grid.densities {
                    let cfg = NetworkConfig::new(l, w, n, d)?;
                    let clean = eval_joint(&spec.truth, eps_np, &cfg)?;
                    let shaped = match &spec.dip {
                        // plateau weight eps_np / clean fades the dip out along the power law
                        Some(dip) => clean * (1.0 - dip.depth_rel * dip.bump(d) * (eps_np / clean)),
                        None => clean,
                    };
                    for r in 0..spec.replicates {
                        let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
                        rng.set_stream(counter);
                        counter += 1;
                        let z: f64 = StandardNormal.sample(&mut rng);
                        let err = (shaped * (z * spec.noise_rel_std).exp()).min(MAX_SYNTH_ERROR);
                        points.push(MeasurementPoint {
                            family: spec.family.clone(),
                            cfg,
                            test_error: err,
                            seed: spec.rng_seed as i64 + i64::from(r),
                        });
                    }
                }
            }
        }
    }
    let set = MeasurementSet::new(
        points,
        format!(
            "synthetic surface: truth {:?}, noise {}, dip {:?}, seed {}",
            spec.truth, spec.noise_rel_std, spec.dip, spec.rng_seed
        ),
    )?;
    Ok((set, table))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn truth() -> JointLawParams {
        JointLawParams { eps_high: 0.9, gamma: 2.0, p_prime: 1.0, phi: 1.2, psi: 0.8 }
    }

    fn small_grid() -> SynthGrid {
        SynthGrid {
            depths: vec![8, 20],
            widths: vec![0.5, 1.0],
            subsample_sizes: vec![1000],
            densities: imp_densities(20),
        }
    }

    #[test]
    fn noiseless_surface_matches_law() {
        let spec = SynthSpec::new(truth(), small_grid(), 0.0, 3).unwrap();
        let (set, table) = generate_surface(&spec).unwrap();
        assert_eq!(set.len(), 2 * 2 * 21);
        for p in set.points() {
            let eps = table.get(&p.config_key()).unwrap();
            assert_eq!(p.test_error, eval_joint(&truth(), eps, &p.cfg).unwrap());
        }
    }

    #[test]
    fn seeds_are_deterministic_and_distinct() {
        let a = generate_surface(&SynthSpec::new(truth(), small_grid(), 0.03, 7).unwrap()).unwrap().0;
        let b = generate_surface(&SynthSpec::new(truth(), small_grid(), 0.03, 7).unwrap()).unwrap().0;
        let c = generate_surface(&SynthSpec::new(truth(), small_grid(), 0.03, 8).unwrap()).unwrap().0;
        assert_eq!(a.points(), b.points());
        assert_ne!(
            a.points().iter().map(|p| p.test_error).collect::<Vec<_>>(),
            c.points().iter().map(|p| p.test_error).collect::<Vec<_>>()
        );
    }

    #[test]
    fn dip_only_touches_the_top_decade() {
        let mut spec = SynthSpec::new(truth(), small_grid(), 0.0, 1).unwrap();
        spec.dip = Some(DipSpec { depth_rel: 0.03, width_decades: 1.0 });
        let (dipped, table) = generate_surface(&spec).unwrap();
        for p in dipped.points() {
            let clean = eval_joint(&truth(), table.get(&p.config_key()).unwrap(), &p.cfg).unwrap();
            if p.cfg.density == 1.0 || p.cfg.density <= 0.1 {
                assert_eq!(p.test_error, clean);
            } else {
                assert!(p.test_error < clean);
                assert!(p.test_error > clean * (1.0 - 0.03 - 1e-12));
            }
        }
    }

    #[test]
    fn bump_shape() {
        let dip = DipSpec { depth_rel: 0.03, width_decades: 1.0 };
        assert_eq!(dip.bump(1.0), 0.0);
        assert!((dip.bump(10f64.powf(-0.5)) - 1.0).abs() < 1e-12);
        assert_eq!(dip.bump(0.05), 0.0);
    }
}
