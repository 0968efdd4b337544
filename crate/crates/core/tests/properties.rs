use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use prunelaw::baseline::{eps_tilde, eval_adapted_density, AdaptedDensityParams, DenseErrorParams};
use prunelaw::dataset::{parse_measurements, MeasurementSet};
use prunelaw::fit::{fit_joint, FitOptions};
use prunelaw::frontier::{min_params_at_error, pareto_frontier, CatalogEntry, ConfigCatalog, FEASIBILITY_TOL};
use prunelaw::imp::{imp_run_observed, make_toy_dataset, ImpConfig, ImpObserver, Mask, Mlp, ToyFamilySpec, TrainConfig};
use prunelaw::law::{eval_joint, eval_single, invert_joint, JointLawParams, NetworkConfig, SingleLawParams};
use prunelaw::stability::{stability_sweep, ExperimentKind};
use prunelaw::synth::{generate_surface, imp_densities, SynthGrid, SynthSpec};

fn single_params() -> impl Strategy<Value = SingleLawParams> {
    (0.001f64..0.5, 0.0f64..1.0, 0.2f64..6.0, -4.0f64..0.0).prop_map(|(eps_np, frac, gamma, log_p)| SingleLawParams {
        eps_np,
        eps_high: eps_np + frac * (1.0 - eps_np),
        gamma,
        p: 10f64.powf(log_p),
    })
}

fn joint_params() -> impl Strategy<Value = JointLawParams> {
    (0.5f64..1.0, 0.3f64..5.0, -2.0f64..1.0, 0.0f64..2.0, 0.0f64..2.0).prop_map(|(eps_high, gamma, lp, phi, psi)| JointLawParams {
        eps_high,
        gamma,
        p_prime: 10f64.powf(lp),
        phi,
        psi,
    })
}

fn small_grid() -> SynthGrid {
    SynthGrid { depths: vec![8, 20, 50], widths: vec![0.5, 1.0, 2.0], subsample_sizes: vec![1000], densities: imp_densities(24) }
}

fn truth() -> JointLawParams {
    JointLawParams { eps_high: 0.9, gamma: 2.0, p_prime: 1.0, phi: 1.2, psi: 0.8 }
}

proptest! {
    #[test]
    fn single_law_is_bounded_and_nonincreasing_in_density(p in single_params(), d1 in 1e-8f64..1.0, d2 in 1e-8f64..1.0) {
        let (lo, hi) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
        let e_lo = eval_single(&p, lo).unwrap();
        let e_hi = eval_single(&p, hi).unwrap();
        prop_assert!(e_hi <= e_lo * (1.0 + 1e-12));
        for e in [e_lo, e_hi] {
            prop_assert!(e >= p.eps_np * (1.0 - 1e-12) && e <= p.eps_high * (1.0 + 1e-12));
        }
    }

    #[test]
    fn joint_law_nonincreasing_in_depth_and_width(p in joint_params(), d in 1e-6f64..1.0, l in 2u32..100, w in 0.1f64..4.0) {
        let base = eval_joint(&p, 0.05, &NetworkConfig::new(l, w, 1, d).unwrap()).unwrap();
        let deeper = eval_joint(&p, 0.05, &NetworkConfig::new(l + 1, w, 1, d).unwrap()).unwrap();
        let wider = eval_joint(&p, 0.05, &NetworkConfig::new(l, w * 1.5, 1, d).unwrap()).unwrap();
        prop_assert!(deeper <= base * (1.0 + 1e-12));
        prop_assert!(wider <= base * (1.0 + 1e-12));
    }

    #[test]
    fn inversion_round_trips(p in joint_params(), eps_np in 0.01f64..0.3, l in 2u32..100, w in 0.1f64..4.0, frac in 0.001f64..0.999) {
        let dense = eval_joint(&p, eps_np, &NetworkConfig::new(l, w, 1, 1.0).unwrap()).unwrap();
        let target = dense + frac * (p.eps_high - dense);
        let d = invert_joint(&p, eps_np, l, w, target).unwrap();
        prop_assert!(d > 0.0 && d <= 1.0);
        let back = eval_joint(&p, eps_np, &NetworkConfig::new(l, w, 1, d).unwrap()).unwrap();
        prop_assert!((back - target).abs() <= 1e-9 * target);
    }

    #[test]
    fn dense_error_model_decreases_in_size_and_data(m in 0.1f64..1e4, n in 0.01f64..1.0, k in 1.01f64..10.0) {
        let model = DenseErrorParams { a: 0.02, alpha: 0.5, b: 0.25, beta: 0.5, c_inf: 0.03, eta: 1.0, eps0: 1.0 };
        let e = eps_tilde(&model, m, n).unwrap();
        prop_assert!(eps_tilde(&model, m * k, n).unwrap() < e);
        prop_assert!(eps_tilde(&model, m, (n * k).min(1.0)).unwrap() <= e);
    }

    #[test]
    fn adapted_density_is_exact_when_dense(b_x in 1e-6f64..10.0, beta_x in 0.01f64..5.0, eps_np in 0.001f64..0.9) {
        let p = AdaptedDensityParams { b_x, beta_x, eps_np };
        prop_assert_eq!(eval_adapted_density(&p, 1.0).unwrap(), eps_np);
    }

    #[test]
    fn frontier_results_are_feasible_and_monotone(p in joint_params(), eps in prop::collection::vec(0.03f64..0.3, 6)) {
        let depths = [8u32, 20, 50];
        let widths = [0.5, 1.0, 2.0];
        let entries: Vec<CatalogEntry> = depths.iter().zip(&eps).flat_map(|(&l, &e)| {
            widths.iter().map(move |&w| CatalogEntry { depth: l, width_scale: w, eps_np: e })
        }).collect();
        let catalog = ConfigCatalog::new(entries).unwrap();
        let lo = 0.35f64.min(p.eps_high * 0.5);
        let grid: Vec<f64> = (0..8).map(|i| lo + (p.eps_high * 0.99 - lo) * i as f64 / 7.0).collect();
        let rows = pareto_frontier(&p, &catalog, &grid).unwrap();
        let mut last = f64::INFINITY;
        for row in rows {
            if let Some(r) = row.result {
                prop_assert!(r.predicted_error <= r.eps_k + FEASIBILITY_TOL);
                prop_assert!(r.param_count <= last * (1.0 + 1e-12));
                last = r.param_count;
                let direct = min_params_at_error(&p, &catalog, r.eps_k).unwrap();
                prop_assert_eq!(direct, r);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn csv_round_trip_is_lossless(noise in 0.0f64..0.1, seed in 0u64..u64::MAX) {
        let (set, _) = generate_surface(&SynthSpec::new(truth(), small_grid(), noise, seed).unwrap()).unwrap();
        let back = parse_measurements(set.to_csv_string().as_bytes(), "round trip").unwrap();
        prop_assert_eq!(back.points(), set.points());
        prop_assert_eq!(back.to_csv_string(), set.to_csv_string());
    }

    #[test]
    fn synth_is_deterministic(noise in 0.0f64..0.1, seed in 0u64..u64::MAX) {
        let spec = SynthSpec::new(truth(), small_grid(), noise, seed).unwrap();
        let (a, ta) = generate_surface(&spec).unwrap();
        let (b, tb) = generate_surface(&spec).unwrap();
        prop_assert_eq!(a.points(), b.points());
        prop_assert_eq!(ta, tb);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn fit_ignores_input_order(seed in 0u64..1000, shuffle in 0u64..1000) {
        let (set, table) = generate_surface(&SynthSpec::new(truth(), small_grid(), 0.03, seed).unwrap()).unwrap();
        let mut points = set.points().to_vec();
        points.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle));
        let shuffled = MeasurementSet::new(points, "shuffled").unwrap();
        let opts = FitOptions { rng_seed: seed, restarts: 2, ..FitOptions::default() };
        let a = fit_joint(&set, &table, &opts).unwrap();
        let b = fit_joint(&shuffled, &table, &opts).unwrap();
        prop_assert_eq!(a.params, b.params);
        prop_assert_eq!(a.stats, b.stats);
    }

    #[test]
    fn stability_is_deterministic_and_partitions_trials(seed in 0u64..1000) {
        let (set, table) = generate_surface(&SynthSpec::new(truth(), small_grid(), 0.03, seed).unwrap()).unwrap();
        let opts = FitOptions { rng_seed: seed, restarts: 1, ..FitOptions::default() };
        for kind in [ExperimentKind::RandomPoints, ExperimentKind::RandomConfigs] {
            let t = if kind == ExperimentKind::RandomPoints { vec![20, 60] } else { vec![3, 6] };
            let a = stability_sweep(kind, &set, &table, &t, 5, &opts).unwrap();
            let b = stability_sweep(kind, &set, &table, &t, 5, &opts).unwrap();
            prop_assert_eq!(&a, &b);
            for row in &a.rows {
                prop_assert_eq!(row.valid_trials + row.flagged_trials, 5);
                prop_assert_eq!(row.outcomes.iter().filter(|o| o.stats.is_some()).count(), row.valid_trials);
            }
        }
    }

    #[test]
    fn fit_sigma_grows_with_noise(seed in 0u64..1000) {
        let opts = FitOptions { rng_seed: seed, restarts: 2, ..FitOptions::default() };
        let sigma = |noise: f64| {
            let (set, table) = generate_surface(&SynthSpec::new(truth(), small_grid(), noise, seed).unwrap()).unwrap();
            fit_joint(&set, &table, &opts).unwrap().stats.sigma
        };
        let (s0, s1, s2) = (sigma(0.0), sigma(0.02), sigma(0.08));
        prop_assert!(s0 < s1 && s1 < s2);
    }
}

#[derive(Default)]
struct Recorder {
    masks: Vec<Mask>,
    starts: Vec<(Mlp, Mlp)>,
}

impl ImpObserver for Recorder {
    fn iteration_start(&mut self, _iteration: usize, net: &Mlp, mask: &Mask, rewind: &Mlp) {
        self.masks.push(mask.clone());
        self.starts.push((net.clone(), rewind.clone()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn imp_rewinds_nests_masks_and_records_density(seed in 0u64..1000, fraction in 0.1f64..0.5) {
        let data = make_toy_dataset(600, 8, 3, 2.0, seed).unwrap();
        let family = ToyFamilySpec { depth: 3, width_scale: 0.5, input_dim: 8, n_classes: 3 };
        let train = TrainConfig { total_epochs: 4, rewind_epoch: 1, rng_seed: seed, ..TrainConfig::default() };
        let imp = ImpConfig { prune_fraction: fraction, iterations: 5, subsample_size: 300, subsample_seed: seed };
        let mut rec = Recorder::default();
        let run = imp_run_observed(&family, &data, &train, &imp, &mut rec).unwrap();
        prop_assert!(run.failure.is_none());
        prop_assert_eq!(run.records.len(), 5);
        prop_assert_eq!(rec.masks.len(), 5);
        for k in 1..rec.masks.len() {
            prop_assert!(rec.masks[k].is_subset_of(&rec.masks[k - 1]));
            prop_assert!(rec.masks[k].unmasked() < rec.masks[k - 1].unmasked());
            // every later iteration starts from the same early checkpoint, masked
            prop_assert_eq!(&rec.starts[k].1, &rec.starts[1].1);
            let (net, rewind) = &rec.starts[k];
            for (layer, keep) in rec.masks[k].keep.iter().enumerate() {
                for (i, &kept) in keep.iter().enumerate() {
                    let expected = if kept { rewind.weights[layer][i] } else { 0.0 };
                    prop_assert_eq!(net.weights[layer][i], expected);
                }
            }
            prop_assert_eq!(&net.biases, &rewind.biases);
        }
        for (r, m) in run.records.iter().zip(&rec.masks) {
            prop_assert_eq!(r.density, m.density());
        }
        let densities: Vec<f64> = run.records.iter().map(|r| r.density).collect();
        prop_assert_eq!(densities[0], 1.0);
        prop_assert!(densities.windows(2).all(|w| w[1] < w[0]));
    }
}
