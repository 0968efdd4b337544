//! Iterative magnitude pruning with weight rewinding on small fully-connected classifiers.
//!
//! A toy family member with depth `l` has `l - 2` hidden layers of `round(16 w)` ReLU units,
//! so `l - 1` weight matrices. Only connection weights are prunable; biases always train.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{MeasurementPoint, MeasurementSet};
use crate::error::{Error, Result};
use crate::law::NetworkConfig;

pub const BASE_WIDTH: f64 = 16.0;
pub const TOY_FAMILY: &str = "toy-mlp";

/// Labeled Gaussian blobs with a fixed held-out test split.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyDataset {
    pub input_dim: usize,
    pub n_classes: usize,
    pub train_x: Vec<f64>,
    pub train_y: Vec<usize>,
    pub test_x: Vec<f64>,
    pub test_y: Vec<usize>,
}

impl ToyDataset {
    pub fn n_train(&self) -> usize {
        self.train_y.len()
    }

    pub fn n_test(&self) -> usize {
        self.test_y.len()
    }

    fn train_row(&self, i: usize) -> &[f64] {
        &self.train_x[i * self.input_dim..(i + 1) * self.input_dim]
    }

    fn test_row(&self, i: usize) -> &[f64] {
        &self.test_x[i * self.input_dim..(i + 1) * self.input_dim]
    }

    /// Error of always predicting the most frequent test label.
    pub fn chance_error(&self) -> f64 {
        let mut counts = vec![0usize; self.n_classes];
        for &y in &self.test_y {
            counts[y] += 1;
        }
        1.0 - *counts.iter().max().unwrap_or(&0) as f64 / self.n_test().max(1) as f64
    }
}

/// Fraction of generated examples held out for testing.
pub const TEST_FRACTION: f64 = 0.25;

/// Draws `n_total` examples from `n_classes` unit-variance Gaussian blobs.
///
/// Class means are independent `N(0, I) * class_separation / sqrt(input_dim)`, so their
/// norms concentrate around `class_separation`. Labels are uniform over classes.
pub fn make_toy_dataset(
    n_total: usize,
    input_dim: usize,
    n_classes: usize,
    class_separation: f64,
    rng_seed: u64,
) -> Result<ToyDataset> {
    if n_classes < 2 || input_dim < 1 {
        return Err(Error::Degenerate(format!(
            "need at least 2 classes and 1 input dimension, got {n_classes} and {input_dim}"
        )));
    }
    if n_total < 10 * n_classes {
        return Err(Error::Degenerate(format!(
            "need at least {} examples for {n_classes} classes, got {n_total}",
            10 * n_classes
        )));
    }
    if !(class_separation >= 0.0 && class_separation.is_finite()) {
        return Err(Error::invalid("class_separation", "must be non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let scale = class_separation / (input_dim as f64).sqrt();
    let means: Vec<f64> = (0..n_classes * input_dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            scale * z
        })
        .collect();
    let mut xs = Vec::with_capacity(n_total * input_dim);
    let mut ys = Vec::with_capacity(n_total);
    for _ in 0..n_total {
        let y = rng.random_range(0..n_classes);
        for j in 0..input_dim {
            let z: f64 = StandardNormal.sample(&mut rng);
            xs.push(means[y * input_dim + j] + z);
        }
        ys.push(y);
    }
    let n_test = ((n_total as f64) * TEST_FRACTION).round() as usize;
    let split = n_test * input_dim;
    Ok(ToyDataset {
        input_dim,
        n_classes,
        test_x: xs[..split].to_vec(),
        test_y: ys[..n_test].to_vec(),
        train_x: xs[split..].to_vec(),
        train_y: ys[n_test..].to_vec(),
    })
}

/// Training examples seen by every pruning iteration of one chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsampleView {
    pub indices: Vec<usize>,
}

impl SubsampleView {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Uniform sample of `n` training examples without regard to class.
pub fn subsample(dataset: &ToyDataset, n: usize, rng_seed: u64) -> Result<SubsampleView> {
    let total = dataset.n_train();
    if n == 0 || n > total {
        return Err(Error::invalid("subsample_size", format!("must lie in 1..={total}, got {n}")));
    }
    if n == total {
        return Ok(SubsampleView { indices: (0..total).collect() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut indices = index::sample(&mut rng, total, n).into_vec();
    indices.sort_unstable();
    Ok(SubsampleView { indices })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyFamilySpec {
    pub depth: u32,
    pub width_scale: f64,
    pub input_dim: usize,
    pub n_classes: usize,
}

impl ToyFamilySpec {
    pub fn hidden_width(&self) -> usize {
        (BASE_WIDTH * self.width_scale).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth < 2 {
            return Err(Error::invalid("depth", "a toy network needs at least input and output layers"));
        }
        if !(self.width_scale > 0.0) || (self.depth > 2 && self.hidden_width() < 1) {
            return Err(Error::invalid("width_scale", "hidden width must round to at least 1"));
        }
        if self.input_dim < 1 || self.n_classes < 2 {
            return Err(Error::invalid("input_dim/n_classes", "need at least 1 input and 2 classes"));
        }
        Ok(())
    }

    /// Units per layer, input first.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_dim];
        sizes.extend(std::iter::repeat_n(self.hidden_width(), self.depth as usize - 2));
        sizes.push(self.n_classes);
        sizes
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    /// Per layer, `out x in` row-major.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

/// Prunable-weight mask with the same shape as `Mlp::weights`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub keep: Vec<Vec<bool>>,
}

impl Mask {
    pub fn dense(net: &Mlp) -> Self {
        Mask { keep: net.weights.iter().map(|w| vec![true; w.len()]).collect() }
    }

    pub fn unmasked(&self) -> usize {
        self.keep.iter().map(|l| l.iter().filter(|k| **k).count()).sum()
    }

    pub fn total(&self) -> usize {
        self.keep.iter().map(Vec::len).sum()
    }

    pub fn density(&self) -> f64 {
        self.unmasked() as f64 / self.total() as f64
    }

    /// True when every weight kept here is also kept by `other`.
    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.keep
            .iter()
            .zip(&other.keep)
            .all(|(a, b)| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| !x || *y))
    }

    fn matches(&self, net: &Mlp) -> bool {
        self.keep.len() == net.weights.len() && self.keep.iter().zip(&net.weights).all(|(k, w)| k.len() == w.len())
    }
}

impl Mlp {
    /// He-uniform weights, zero biases.
    pub fn init(spec: &ToyFamilySpec, rng_seed: u64) -> Result<Self> {
        spec.validate()?;
        let sizes = spec.layer_sizes();
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let mut weights = Vec::with_capacity(sizes.len() - 1);
        let mut biases = Vec::with_capacity(sizes.len() - 1);
        for pair in sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / fan_in as f64).sqrt();
            weights.push((0..fan_in * fan_out).map(|_| rng.random_range(-limit..limit)).collect());
            biases.push(vec![0.0; fan_out]);
        }
        Ok(Mlp { sizes, weights, biases })
    }

    pub fn apply_mask(&mut self, mask: &Mask) {
        for (w, k) in self.weights.iter_mut().zip(&mask.keep) {
            for (wi, ki) in w.iter_mut().zip(k) {
                if !ki {
                    *wi = 0.0;
                }
            }
        }
    }

    /// Activations of every layer; the last entry holds the logits.
    fn forward(&self, x: &[f64], acts: &mut [Vec<f64>]) {
        acts[0].copy_from_slice(x);
        let n_layers = self.weights.len();
        for l in 0..n_layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let (prev, next) = acts.split_at_mut(l + 1);
            let input = &prev[l];
            let out = &mut next[0];
            let w = &self.weights[l];
            for o in 0..n_out {
                let row = &w[o * n_in..(o + 1) * n_in];
                let mut s = self.biases[l][o];
                for i in 0..n_in {
                    s += row[i] * input[i];
                }
                out[o] = if l + 1 < n_layers { s.max(0.0) } else { s };
            }
        }
    }

    fn predict(&self, x: &[f64], acts: &mut [Vec<f64>]) -> usize {
        self.forward(x, acts);
        let logits = acts.last().expect("output layer");
        let mut best = 0;
        for (i, v) in logits.iter().enumerate() {
            if *v > logits[best] {
                best = i;
            }
        }
        best
    }

    fn activations(&self) -> Vec<Vec<f64>> {
        self.sizes.iter().map(|&n| vec![0.0; n]).collect()
    }

    pub fn test_error(&self, data: &ToyDataset) -> f64 {
        let mut acts = self.activations();
        let wrong = (0..data.n_test()).filter(|&i| self.predict(data.test_row(i), &mut acts) != data.test_y[i]).count();
        wrong as f64 / data.n_test() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub total_epochs: usize,
    pub rewind_epoch: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { total_epochs: 40, rewind_epoch: 3, learning_rate: 0.1, momentum: 0.9, batch_size: 64, rng_seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rewind_epoch > 0 && self.rewind_epoch < self.total_epochs) {
            return Err(Error::invalid("rewind_epoch", "must satisfy 0 < k < total_epochs"));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.momentum) || self.batch_size == 0 {
            return Err(Error::invalid("train_config", "learning rate, momentum or batch size out of range"));
        }
        Ok(())
    }

    /// Step size for `epoch`: one tenfold drop halfway through.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if epoch < self.total_epochs / 2 {
            self.learning_rate
        } else {
            self.learning_rate / 10.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Weights after `rewind_epoch` epochs; only captured when training starts at epoch 0.
    pub checkpoint: Option<Mlp>,
    /// Mean training loss of each epoch run.
    pub epoch_losses: Vec<f64>,
}

/// Minibatch SGD with momentum on softmax cross-entropy, from `start_epoch` to the end.
///
/// Masked weights are zeroed before training and never updated. Each epoch's shuffle is drawn
/// from stream `epoch` of the configured seed, so every chain iteration sees the same batches.
pub fn train(
    net: &mut Mlp,
    mask: &Mask,
    data: &ToyDataset,
    view: &SubsampleView,
    cfg: &TrainConfig,
    start_epoch: usize,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if !mask.matches(net) {
        return Err(Error::invalid("mask", "shape does not match the network"));
    }
    if view.is_empty() || view.indices.iter().any(|&i| i >= data.n_train()) {
        return Err(Error::invalid("view", "indices out of range"));
    }
    net.apply_mask(mask);
    let n_layers = net.weights.len();
    let mut vel_w: Vec<Vec<f64>> = net.weights.iter().map(|w| vec![0.0; w.len()]).collect();
    let mut vel_b: Vec<Vec<f64>> = net.biases.iter().map(|b| vec![0.0; b.len()]).collect();
    let mut grad_w = vel_w.clone();
    let mut grad_b = vel_b.clone();
    let mut acts = net.activations();
    let mut deltas = net.activations();
    let mut checkpoint = None;
    let mut epoch_losses = Vec::new();

    for epoch in start_epoch..cfg.total_epochs {
        if start_epoch == 0 && epoch == cfg.rewind_epoch {
            checkpoint = Some(net.clone());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        rng.set_stream(epoch as u64);
        let order = index::sample(&mut rng, view.len(), view.len()).into_vec();
        let lr = cfg.lr_at(epoch);
        let mut loss_sum = 0.0;

        for batch in order.chunks(cfg.batch_size) {
            grad_w.iter_mut().for_each(|g| g.fill(0.0));
            grad_b.iter_mut().for_each(|g| g.fill(0.0));
            for &pos in batch {
                let idx = view.indices[pos];
                let y = data.train_y[idx];
                net.forward(data.train_row(idx), &mut acts);
                // softmax cross-entropy
                let logits = &acts[n_layers];
                let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let sum: f64 = logits.iter().map(|v| (v - max).exp()).sum();
                loss_sum += sum.ln() + max - logits[y];
                for (k, d) in deltas[n_layers].iter_mut().enumerate() {
                    *d = (logits[k] - max).exp() / sum - if k == y { 1.0 } else { 0.0 };
                }
                for l in (0..n_layers).rev() {
                    let (n_in, n_out) = (net.sizes[l], net.sizes[l + 1]);
                    let (lower, upper) = deltas.split_at_mut(l + 1);
                    let delta_out = &upper[0];
                    let gw = &mut grad_w[l];
                    for o in 0..n_out {
                        let d = delta_out[o];
                        if d == 0.0 {
                            continue;
                        }
                        grad_b[l][o] += d;
                        let row = &mut gw[o * n_in..(o + 1) * n_in];
                        for i in 0..n_in {
                            row[i] += d * acts[l][i];
                        }
                    }
                    if l > 0 {
                        let delta_in = &mut lower[l];
                        delta_in.fill(0.0);
                        let w = &net.weights[l];
                        for o in 0..n_out {
                            let d = delta_out[o];
                            if d == 0.0 {
                                continue;
                            }
                            let row = &w[o * n_in..(o + 1) * n_in];
                            for i in 0..n_in {
                                delta_in[i] += d * row[i];
                            }
                        }
                        for i in 0..n_in {
                            if acts[l][i] <= 0.0 {
                                delta_in[i] = 0.0;
                            }
                        }
                    }
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for l in 0..n_layers {
                let keep = &mask.keep[l];
                for j in 0..net.weights[l].len() {
                    if keep[j] {
                        vel_w[l][j] = cfg.momentum * vel_w[l][j] + grad_w[l][j] * scale;
                        net.weights[l][j] -= lr * vel_w[l][j];
                    }
                }
                for j in 0..net.biases[l].len() {
                    vel_b[l][j] = cfg.momentum * vel_b[l][j] + grad_b[l][j] * scale;
                    net.biases[l][j] -= lr * vel_b[l][j];
                }
            }
        }
        let mean_loss = loss_sum / view.len() as f64;
        if !mean_loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        epoch_losses.push(mean_loss);
    }
    Ok(TrainOutcome { checkpoint, epoch_losses })
}

/// Removes the smallest-magnitude `floor(fraction * unmasked)` weights across all layers.
///
/// Ties in magnitude go to the weight met first in layer, then row-major, order.
pub fn prune_global_magnitude(net: &Mlp, mask: &Mask, fraction: f64) -> Result<Mask> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid("prune_fraction", format!("must lie in (0, 1), got {fraction}")));
    }
    if !mask.matches(net) {
        return Err(Error::invalid("mask", "shape does not match the network"));
    }
    let mut alive: Vec<(f64, usize, usize)> = Vec::with_capacity(mask.unmasked());
    for (l, (w, k)) in net.weights.iter().zip(&mask.keep).enumerate() {
        for (j, (wj, kj)) in w.iter().zip(k).enumerate() {
            if *kj {
                alive.push((wj.abs(), l, j));
            }
        }
    }
    let count = alive.len();
    let cut = (fraction * count as f64).floor() as usize;
    if cut == 0 || cut >= count {
        return Err(Error::NothingLeft);
    }
    alive.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let mut next = mask.clone();
    for &(_, l, j) in &alive[..cut] {
        next.keep[l][j] = false;
    }
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpConfig {
    pub prune_fraction: f64,
    pub iterations: usize,
    pub subsample_size: usize,
    /// Seed of the training subsample, shared by all iterations.
    pub subsample_seed: u64,
}

impl ImpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.prune_fraction > 0.0 && self.prune_fraction < 1.0) {
            return Err(Error::invalid("prune_fraction", "must lie in (0, 1)"));
        }
        if self.iterations < 1 {
            return Err(Error::invalid("iterations", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpRunRecord {
    pub iteration: usize,
    /// Unmasked prunable weights over all prunable weights.
    pub density: f64,
    pub test_error: f64,
    pub final_train_loss: f64,
    pub seed: u64,
}

/// One chain's records, and the error that stopped it early, if any.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpRun {
    pub family: ToyFamilySpec,
    pub train: TrainConfig,
    pub imp: ImpConfig,
    pub records: Vec<ImpRunRecord>,
    pub failure: Option<String>,
}

impl ImpRun {
    pub fn to_measurements(&self) -> Result<Vec<MeasurementPoint>> {
        self.records
            .iter()
            .map(|r| {
                Ok(MeasurementPoint {
                    family: TOY_FAMILY.into(),
                    cfg: NetworkConfig::new(
                        self.family.depth,
                        self.family.width_scale,
                        self.imp.subsample_size as u64,
                        r.density,
                    )?,
                    test_error: r.test_error,
                    seed: self.train.rng_seed as i64,
                })
            })
            .collect()
    }
}

/// Hooks into each iteration of a chain, used to check rewinding and mask bookkeeping.
pub trait ImpObserver {
    fn iteration_start(&mut self, _iteration: usize, _net: &Mlp, _mask: &Mask, _rewind: &Mlp) {}
}

impl ImpObserver for () {}

/// Iterative magnitude pruning with rewinding to the weights after `rewind_epoch` epochs.
pub fn imp_run(
    family: &ToyFamilySpec,
    data: &ToyDataset,
    train_cfg: &TrainConfig,
    imp_cfg: &ImpConfig,
) -> Result<ImpRun> {
    imp_run_observed(family, data, train_cfg, imp_cfg, &mut ())
}

pub fn imp_run_observed(
    family: &ToyFamilySpec,
    data: &ToyDataset,
    train_cfg: &TrainConfig,
    imp_cfg: &ImpConfig,
    observer: &mut dyn ImpObserver,
) -> Result<ImpRun> {
    family.validate()?;
    train_cfg.validate()?;
    imp_cfg.validate()?;
    if family.input_dim != data.input_dim || family.n_classes != data.n_classes {
        return Err(Error::invalid("family", "input_dim and n_classes must match the dataset"));
    }
    let view = subsample(data, imp_cfg.subsample_size, imp_cfg.subsample_seed)?;
    let mut run = ImpRun { family: *family, train: *train_cfg, imp: *imp_cfg, records: Vec::new(), failure: None };

    let mut net = Mlp::init(family, train_cfg.rng_seed)?;
    let mut mask = Mask::dense(&net);
    let mut rewind: Option<Mlp> = None;
    for iteration in 0..imp_cfg.iterations {
        let outcome = match &rewind {
            None => {
                observer.iteration_start(iteration, &net, &mask, &net);
                train(&mut net, &mask, data, &view, train_cfg, 0)
            }
            Some(w_k) => {
                net = w_k.clone();
                net.apply_mask(&mask);
                observer.iteration_start(iteration, &net, &mask, w_k);
                train(&mut net, &mask, data, &view, train_cfg, train_cfg.rewind_epoch)
            }
        };
        let outcome = match outcome {
            Ok(o) => o,
            Err(e) => {
                run.failure = Some(e.to_string());
                return Ok(run);
            }
        };
        if rewind.is_none() {
            rewind = outcome.checkpoint;
        }
        run.records.push(ImpRunRecord {
            iteration,
            density: mask.density(),
            test_error: net.test_error(data),
            final_train_loss: outcome.epoch_losses.last().copied().unwrap_or(f64::NAN),
            seed: train_cfg.rng_seed,
        });
        if iteration + 1 < imp_cfg.iterations {
            match prune_global_magnitude(&net, &mask, imp_cfg.prune_fraction) {
                Ok(m) => mask = m,
                Err(e) => {
                    run.failure = Some(e.to_string());
                    return Ok(run);
                }
            }
        }
    }
    Ok(run)
}

/// Measurement set of several chains; provenance names the chains' seeds.
pub fn runs_to_measurements(runs: &[ImpRun]) -> Result<MeasurementSet> {
    let mut points = Vec::new();
    for r in runs {
        points.extend(r.to_measurements()?);
    }
    let seeds: Vec<String> = runs.iter().map(|r| r.train.rng_seed.to_string()).collect();
    MeasurementSet::new(points, format!("toy IMP chains, training seeds {}", seeds.join(",")))
}

/// Quantitative three-region description of one pruning curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    /// Largest relative change from the dense error over the first five densities.
    pub plateau_rel_change: f64,
    pub plateau_ok: bool,
    /// Densities bounding the power-law window, densest first.
    pub power_window: Option<(f64, f64)>,
    pub power_points: usize,
    pub power_slope: f64,
    pub power_r2: f64,
    pub power_ok: bool,
    /// Log-log slope over the three sparsest points.
    pub tail_slope: f64,
    pub tail_error: f64,
    pub tail_ok: bool,
}

impl RegionReport {
    pub fn all_regions(&self) -> bool {
        self.plateau_ok && self.power_ok && self.tail_ok
    }
}

/// Splits a densest-first curve into its low plateau, power-law region and high plateau.
///
/// The power-law window is the set of points whose log error lies in the middle half of the
/// way from the dense error to the sparsest error. The tail counts as flat when its slope is
/// under half the power-law slope and its error is within 25% of `chance_error`.
pub fn analyze_regions(densities: &[f64], errors: &[f64], chance_error: f64) -> Result<RegionReport> {
    let n = densities.len();
    if n < 8 || errors.len() != n {
        return Err(Error::Precondition(format!("need at least 8 curve points, got {n}")));
    }
    let e0 = errors[0];
    let plateau_rel_change = errors[..5].iter().map(|e| (e - e0).abs() / e0).fold(0.0, f64::max);

    let (lo, hi) = (e0.ln(), errors[n - 1].ln());
    let idx: Vec<usize> = (0..n)
        .filter(|&i| {
            let f = (errors[i].ln() - lo) / (hi - lo);
            (0.25..=0.75).contains(&f)
        })
        .collect();
    let xs: Vec<f64> = idx.iter().map(|&i| densities[i].ln()).collect();
    let ys: Vec<f64> = idx.iter().map(|&i| errors[i].ln()).collect();
    let (power_slope, power_r2) = match crate::fit::init::simple_regression(&xs, &ys) {
        Some((slope, icpt)) if xs.len() >= 3 => {
            let my = ys.iter().sum::<f64>() / ys.len() as f64;
            let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
            let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - slope * x - icpt).powi(2)).sum();
            (slope, if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 0.0 })
        }
        _ => (0.0, 0.0),
    };
    let tail_x: Vec<f64> = densities[n - 3..].iter().map(|d| d.ln()).collect();
    let tail_y: Vec<f64> = errors[n - 3..].iter().map(|e| e.ln()).collect();
    let tail_slope = crate::fit::init::simple_regression(&tail_x, &tail_y).map_or(0.0, |(s, _)| s);
    let tail_error = errors[n - 1];
    Ok(RegionReport {
        plateau_rel_change,
        plateau_ok: plateau_rel_change < 0.1,
        power_window: (!idx.is_empty()).then(|| (densities[idx[0]], densities[idx[idx.len() - 1]])),
        power_points: idx.len(),
        power_slope,
        power_r2,
        power_ok: idx.len() >= 3 && power_slope < 0.0 && power_r2 > 0.9,
        tail_slope,
        tail_error,
        tail_ok: tail_slope.abs() < 0.5 * power_slope.abs() && tail_error >= 0.75 * chance_error,
    })
}
