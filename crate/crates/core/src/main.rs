use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use prunelaw::baseline::{compare_transition_fits, write_overlay_csv};
use prunelaw::dataset::{
    aggregate_replicates, parse_measurements, to_json_string, ConfigKey, FitRecord, MeasurementSet,
    UnprunedErrorTable,
};
use prunelaw::fit::{evaluate_fit, fit_joint, write_deviations_csv, CurvePoint, FitOptions, JointFit, Method};
use prunelaw::frontier::{min_params_at_error, pareto_frontier, write_frontier_csv, ConfigCatalog};
use prunelaw::imp::{analyze_regions, imp_run, make_toy_dataset, runs_to_measurements, ImpConfig, ToyFamilySpec, TrainConfig};
use prunelaw::law::{invert_joint, invert_to_invariant, JointLawParams};
use prunelaw::stability::{extrapolation_eval, smallest_configs_filter, stability_sweep, write_stability_csv, ExperimentKind};
use prunelaw::synth::{generate_surface, imp_densities, DipSpec, SynthGrid, SynthSpec};
use prunelaw::{Error, ErrorClass};

#[derive(Parser, Debug)]
#[command(name = "prunelaw", version, about = "Fit and use error scaling laws of pruned network families")]
struct Cli {
    /// Seed for every randomized step; required by randomized commands
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Format of tabular outputs
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Json,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
enum MethodArg {
    Lm,
    NelderMead,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
enum KindArg {
    Points,
    Configs,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
enum Command {
    /// Fit the joint law to a measurement table
    Fit(FitArgs),
    /// Score a saved fit against measurements
    Eval(EvalArgs),
    /// Density at which one family member reaches a target error
    Invert(InvertArgs),
    /// Smallest parameter count over a catalog meeting an error budget
    Optimize(OptimizeArgs),
    /// Minimal parameter count across a grid of error budgets
    Frontier(FrontierArgs),
    /// Fit stability under random subsampling
    Stability(StabilityArgs),
    /// Fit on small configurations, score on the rest
    Extrapolate(ExtrapolateArgs),
    /// Generate a synthetic measurement surface
    Synth(SynthArgs),
    /// Run toy iterative magnitude pruning chains
    Imp(ImpArgs),
    /// Compare the law with the density-adapted baseline on one curve
    Compare(CompareArgs),
}

#[derive(Args, Debug, Serialize)]
struct DataArgs {
    /// Measurement CSV
    #[arg(long)]
    measurements: PathBuf,
    /// Unpruned-error table JSON; derived from the d = 1 points when absent
    #[arg(long)]
    np_table: Option<PathBuf>,
    /// Average replicate seeds before use
    #[arg(long)]
    aggregate: bool,
}

#[derive(Args, Debug, Serialize)]
struct FitFlags {
    /// Freeze the depth exponent at 0
    #[arg(long)]
    no_phi: bool,
    /// Freeze the width exponent at 0
    #[arg(long)]
    no_psi: bool,
    #[arg(long, default_value_t = 4)]
    restarts: usize,
    #[arg(long, default_value_t = 500)]
    max_iterations: usize,
    #[arg(long, default_value_t = 1e-12)]
    tolerance: f64,
    #[arg(long, value_enum, default_value_t = MethodArg::Lm)]
    method: MethodArg,
}

impl FitFlags {
    fn options(&self, seed: u64) -> FitOptions {
        FitOptions {
            fit_phi: !self.no_phi,
            fit_psi: !self.no_psi,
            restarts: self.restarts,
            max_iterations: self.max_iterations,
            tolerance: self.tolerance,
            rng_seed: seed,
            method: match self.method {
                MethodArg::Lm => Method::LevenbergMarquardt,
                MethodArg::NelderMead => Method::NelderMead,
            },
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    flags: FitFlags,
}

#[derive(Args, Debug, Serialize)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Fit JSON written by `fit`
    #[arg(long)]
    fit: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct InvertArgs {
    #[arg(long)]
    fit: PathBuf,
    #[arg(long)]
    eps_np: f64,
    #[arg(long)]
    depth: u32,
    #[arg(long)]
    width_scale: f64,
    /// Target error
    #[arg(long)]
    target: f64,
}

#[derive(Args, Debug, Serialize)]
struct OptimizeArgs {
    #[arg(long)]
    fit: PathBuf,
    /// Catalog CSV with columns depth,width_scale,eps_np
    #[arg(long)]
    catalog: PathBuf,
    /// Error budget
    #[arg(long)]
    eps_k: f64,
}

#[derive(Args, Debug, Serialize)]
struct FrontierArgs {
    #[arg(long)]
    fit: PathBuf,
    #[arg(long)]
    catalog: PathBuf,
    /// Comma-separated ascending budgets; overrides the geometric grid
    #[arg(long, value_delimiter = ',')]
    eps_grid: Vec<f64>,
    #[arg(long, default_value_t = 0.05)]
    eps_min: f64,
    #[arg(long, default_value_t = 0.8)]
    eps_max: f64,
    #[arg(long, default_value_t = 40)]
    steps: usize,
}

#[derive(Args, Debug, Serialize)]
struct StabilityArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    flags: FitFlags,
    #[arg(long, value_enum, default_value_t = KindArg::Points)]
    kind: KindArg,
    /// Comma-separated sample sizes
    #[arg(long, value_delimiter = ',', required = true)]
    t: Vec<usize>,
    #[arg(long, default_value_t = 30)]
    trials: usize,
    /// Sample individual replicates instead of replicate means
    #[arg(long)]
    raw_replicates: bool,
}

#[derive(Args, Debug, Serialize)]
struct ExtrapolateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    flags: FitFlags,
    /// Largest training depth; defaults to the lower half of the depths
    #[arg(long)]
    max_depth: Option<u32>,
    /// Largest training width scale; defaults to the lower half of the widths
    #[arg(long)]
    max_width: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
struct SynthArgs {
    #[arg(long, default_value_t = 0.9)]
    eps_high: f64,
    #[arg(long, default_value_t = 2.0)]
    gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    p_prime: f64,
    #[arg(long, default_value_t = 1.2)]
    phi: f64,
    #[arg(long, default_value_t = 0.8)]
    psi: f64,
    /// Relative standard deviation of the multiplicative noise
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Relative depth of the high-density error dip; no dip when absent
    #[arg(long)]
    dip_depth: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    dip_decades: f64,
    #[arg(long, default_value_t = 1)]
    replicates: u32,
    #[arg(long, value_delimiter = ',', default_values_t = [8u32, 14, 20, 26, 50, 98])]
    depths: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.25, 0.5, 1.0, 2.0, 4.0])]
    widths: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [50_000u64, 12_500, 3_125])]
    subsamples: Vec<u64>,
    /// Densities are 0.8^i for i up to this exponent
    #[arg(long, default_value_t = 40)]
    max_exponent: u32,
}

#[derive(Args, Debug, Serialize)]
struct ImpArgs {
    #[arg(long, default_value_t = 4)]
    depth: u32,
    #[arg(long, default_value_t = 1.0)]
    width_scale: f64,
    #[arg(long, default_value_t = 16)]
    input_dim: usize,
    #[arg(long, default_value_t = 10)]
    classes: usize,
    #[arg(long, default_value_t = 2.5)]
    separation: f64,
    #[arg(long, default_value_t = 8000)]
    n_total: usize,
    /// Training subsample size shared by all iterations
    #[arg(long, default_value_t = 4000)]
    subsample: usize,
    /// Pruning iterations K
    #[arg(long, default_value_t = 25)]
    iterations: usize,
    #[arg(long, default_value_t = 0.2)]
    prune_fraction: f64,
    #[arg(long, default_value_t = 40)]
    epochs: usize,
    #[arg(long, default_value_t = 3)]
    rewind_epoch: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    /// Independent training seeds, derived from --seed
    #[arg(long, default_value_t = 1)]
    replicates: u64,
}

#[derive(Args, Debug, Serialize)]
struct CompareArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    flags: FitFlags,
    /// Configuration to compare on; optional when the file holds a single one
    #[arg(long)]
    depth: Option<u32>,
    #[arg(long)]
    width_scale: Option<f64>,
    #[arg(long)]
    subsample_size: Option<u64>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a Command,
    format: Format,
    rng_seed: Option<u64>,
    inputs: &'a BTreeMap<String, String>,
    outputs: &'a [String],
}

struct Ctx {
    out: PathBuf,
    format: Format,
    seed: Option<u64>,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
}

impl Ctx {
    fn read(&mut self, path: &Path) -> anyhow::Result<Vec<u8>> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.insert(path.display().to_string(), hex::encode(Sha256::digest(&bytes)));
        Ok(bytes)
    }

    fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> anyhow::Result<()> {
        let path = self.out.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn seed(&self) -> anyhow::Result<u64> {
        self.seed.ok_or_else(|| {
            anyhow!(Error::InvalidParameter { name: "seed", reason: "this command is randomized; pass --seed".into() })
        })
    }

    fn measurements(&mut self, data: &DataArgs) -> anyhow::Result<(MeasurementSet, UnprunedErrorTable)> {
        let bytes = self.read(&data.measurements)?;
        let mut set = parse_measurements(bytes.as_slice(), &data.measurements.display().to_string())?;
        if data.aggregate {
            set = aggregate_replicates(&set);
        }
        let table = match &data.np_table {
            Some(p) => UnprunedErrorTable::from_json(std::str::from_utf8(&self.read(p)?)?)?,
            None => UnprunedErrorTable::from_measurements(&set),
        };
        Ok((set, table))
    }

    fn fit_params(&mut self, path: &Path) -> anyhow::Result<FitRecord> {
        let bytes = self.read(path)?;
        Ok(FitRecord::from_json(std::str::from_utf8(&bytes)?)?)
    }

    fn catalog(&mut self, path: &Path) -> anyhow::Result<ConfigCatalog> {
        let bytes = self.read(path)?;
        Ok(ConfigCatalog::from_csv(bytes.as_slice())?)
    }

    /// Writes a serializable table as `<stem>.json`, or via `csv` as `<stem>.csv`.
    fn table<T: Serialize>(
        &mut self,
        stem: &str,
        value: &T,
        csv: impl FnOnce(&mut Vec<u8>) -> prunelaw::Result<()>,
    ) -> anyhow::Result<()> {
        match self.format {
            Format::Json => self.write(&format!("{stem}.json"), to_json_string(value)),
            Format::Csv => {
                let mut buf = Vec::new();
                csv(&mut buf)?;
                self.write(&format!("{stem}.csv"), buf)
            }
        }
    }
}

fn params_of(r: &FitRecord) -> JointLawParams {
    JointLawParams { eps_high: r.eps_high, gamma: r.gamma, p_prime: r.p_prime, phi: r.phi, psi: r.psi }
}

fn write_csv_rows(buf: &mut Vec<u8>, header: &[&str], rows: &[Vec<String>]) -> prunelaw::Result<()> {
    let mut w = csv::Writer::from_writer(buf);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn f(v: f64) -> String {
    prunelaw::dataset::fmt_f64(v)
}

/// Writes the fit record and its deviations; returns the fit error after writing best-so-far.
fn run_fit(ctx: &mut Ctx, args: &FitArgs) -> anyhow::Result<()> {
    let seed = ctx.seed()?;
    let (set, table) = ctx.measurements(&args.data)?;
    let opts = args.flags.options(seed);
    let (fit, failure) = match fit_joint(&set, &table, &opts) {
        Ok(fit) => (fit, None),
        Err(Error::NonConvergence { iterations, objective, best }) => {
            let params = JointLawParams { eps_high: best[0], gamma: best[1], p_prime: best[2], phi: best[3], psi: best[4] };
            let mut fit = JointFit {
                params,
                stats: prunelaw::fit::FitStats { mu: f64::NAN, sigma: f64::NAN, n_points: set.len() },
                eps_np_table: table.clone(),
                objective,
                capped: params.eps_high >= 1.0 - 1e-9,
                options: opts,
            };
            fit.stats = evaluate_fit(&fit, &set)?.stats;
            (fit, Some(Error::NonConvergence { iterations, objective, best }))
        }
        Err(e) => return Err(e.into()),
    };
    let mut record = fit.to_record(&set.provenance);
    if let Some(serde_json::Value::Object(meta)) = record.meta.as_mut() {
        meta.insert("converged".into(), serde_json::Value::Bool(failure.is_none()));
    }
    ctx.write("fit.json", record.to_json())?;
    let report = evaluate_fit(&fit, &set)?;
    ctx.table("deviations", &report.deviations, |b| write_deviations_csv(&report.deviations, b))?;
    if args.data.np_table.is_none() {
        ctx.write("np_table.json", table.to_json())?;
    }
    match failure {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn run_eval(ctx: &mut Ctx, args: &EvalArgs) -> anyhow::Result<()> {
    let (set, table) = ctx.measurements(&args.data)?;
    let record = ctx.fit_params(&args.fit)?;
    let fit = JointFit::from_record(&record, table)?;
    let report = evaluate_fit(&fit, &set)?;
    #[derive(Serialize)]
    struct Summary<'a> {
        params: &'a JointLawParams,
        stats: &'a prunelaw::fit::FitStats,
        by_depth: &'a [prunelaw::fit::GroupStats],
        by_width: &'a [prunelaw::fit::GroupStats],
        by_subsample: &'a [prunelaw::fit::GroupStats],
        by_density_decade: &'a [prunelaw::fit::GroupStats],
    }
    ctx.write(
        "eval.json",
        to_json_string(&Summary {
            params: &report.params,
            stats: &report.stats,
            by_depth: &report.by_depth,
            by_width: &report.by_width,
            by_subsample: &report.by_subsample,
            by_density_decade: &report.by_density_decade,
        }),
    )?;
    ctx.table("deviations", &report.deviations, |b| write_deviations_csv(&report.deviations, b))
}

fn run_invert(ctx: &mut Ctx, args: &InvertArgs) -> anyhow::Result<()> {
    let params = params_of(&ctx.fit_params(&args.fit)?);
    let density = invert_joint(&params, args.eps_np, args.depth, args.width_scale, args.target)?;
    let m_star = invert_to_invariant(&params, args.eps_np, args.target)?.0;
    #[derive(Serialize)]
    struct Row {
        depth: u32,
        width_scale: f64,
        eps_np: f64,
        target: f64,
        density: f64,
        invariant: f64,
    }
    let row = Row { depth: args.depth, width_scale: args.width_scale, eps_np: args.eps_np, target: args.target, density, invariant: m_star };
    let rows = vec![vec![
        row.depth.to_string(),
        f(row.width_scale),
        f(row.eps_np),
        f(row.target),
        f(row.density),
        f(row.invariant),
    ]];
    ctx.table("invert", &row, |b| {
        write_csv_rows(b, &["depth", "width_scale", "eps_np", "target", "density", "invariant"], &rows)
    })
}

fn run_optimize(ctx: &mut Ctx, args: &OptimizeArgs) -> anyhow::Result<()> {
    let params = params_of(&ctx.fit_params(&args.fit)?);
    let catalog = ctx.catalog(&args.catalog)?;
    let r = min_params_at_error(&params, &catalog, args.eps_k)?;
    let rows = vec![vec![
        f(r.eps_k),
        r.depth.to_string(),
        f(r.width_scale),
        f(r.density),
        f(r.param_count),
        f(r.predicted_error),
        r.binding.as_str().to_string(),
    ]];
    ctx.table("optimize", &r, |b| {
        write_csv_rows(
            b,
            &["eps_k", "depth", "width_scale", "density", "param_count", "predicted_error", "binding"],
            &rows,
        )
    })
}

fn run_frontier(ctx: &mut Ctx, args: &FrontierArgs) -> anyhow::Result<()> {
    let params = params_of(&ctx.fit_params(&args.fit)?);
    let catalog = ctx.catalog(&args.catalog)?;
    let grid: Vec<f64> = if args.eps_grid.is_empty() {
        if !(args.eps_min > 0.0 && args.eps_min < args.eps_max && args.steps >= 2) {
            return Err(Error::InvalidParameter { name: "eps_min/eps_max/steps", reason: "need 0 < min < max and at least 2 steps".into() }.into());
        }
        let ratio = args.eps_max / args.eps_min;
        (0..args.steps).map(|i| args.eps_min * ratio.powf(i as f64 / (args.steps - 1) as f64)).collect()
    } else {
        args.eps_grid.clone()
    };
    let rows = pareto_frontier(&params, &catalog, &grid)?;
    ctx.table("frontier", &rows, |b| write_frontier_csv(&rows, b))
}

fn run_stability(ctx: &mut Ctx, args: &StabilityArgs) -> anyhow::Result<()> {
    let seed = ctx.seed()?;
    let (mut set, table) = ctx.measurements(&args.data)?;
    if !args.raw_replicates {
        set = aggregate_replicates(&set);
    }
    let kind = match args.kind {
        KindArg::Points => ExperimentKind::RandomPoints,
        KindArg::Configs => ExperimentKind::RandomConfigs,
    };
    let report = stability_sweep(kind, &set, &table, &args.t, args.trials, &args.flags.options(seed))?;
    ctx.write("stability.json", to_json_string(&report))?;
    let mut buf = Vec::new();
    write_stability_csv(&report, &mut buf)?;
    ctx.write("stability.csv", buf)
}

fn run_extrapolate(ctx: &mut Ctx, args: &ExtrapolateArgs) -> anyhow::Result<()> {
    let seed = ctx.seed()?;
    let (set, table) = ctx.measurements(&args.data)?;
    let opts = args.flags.options(seed);
    let report = match (args.max_depth, args.max_width) {
        (None, None) => {
            let (pred, desc) = smallest_configs_filter(&set);
            extrapolation_eval(&set, &table, pred, &desc, &opts)?
        }
        (d, w) => {
            let (d, w) = (d.unwrap_or(u32::MAX), w.unwrap_or(f64::INFINITY));
            let desc = format!("depth <= {d} and width_scale <= {w}");
            extrapolation_eval(&set, &table, |k: &ConfigKey| k.depth <= d && k.width_scale <= w, &desc, &opts)?
        }
    };
    ctx.write("extrapolation.json", to_json_string(&report))
}

fn run_synth(ctx: &mut Ctx, args: &SynthArgs) -> anyhow::Result<()> {
    let seed = ctx.seed()?;
    let truth = JointLawParams { eps_high: args.eps_high, gamma: args.gamma, p_prime: args.p_prime, phi: args.phi, psi: args.psi };
    let grid = SynthGrid {
        depths: args.depths.clone(),
        widths: args.widths.clone(),
        subsample_sizes: args.subsamples.clone(),
        densities: imp_densities(args.max_exponent),
    };
    let mut spec = SynthSpec::new(truth, grid, args.noise, seed)?;
    spec.replicates = args.replicates;
    spec.dip = args.dip_depth.map(|depth_rel| DipSpec { depth_rel, width_decades: args.dip_decades });
    let (set, table) = generate_surface(&spec)?;
    ctx.write("measurements.csv", set.to_csv_string())?;
    ctx.write("np_table.json", table.to_json())?;

    // one catalog entry per architecture, conditioned on the largest subsample
    let n_max = args.subsamples.iter().copied().max().unwrap_or(1);
    let mut rows = Vec::new();
    for (key, eps) in table.iter() {
        if key.subsample_size == n_max {
            rows.push(vec![key.depth.to_string(), f(key.width_scale), f(eps)]);
        }
    }
    let mut buf = Vec::new();
    write_csv_rows(&mut buf, &["depth", "width_scale", "eps_np"], &rows)?;
    ctx.write("catalog.csv", buf)?;
    ctx.write("truth.json", to_json_string(&truth))
}

fn run_imp(ctx: &mut Ctx, args: &ImpArgs) -> anyhow::Result<()> {
    let seed = ctx.seed()?;
    let data = make_toy_dataset(args.n_total, args.input_dim, args.classes, args.separation, seed)?;
    let family = ToyFamilySpec { depth: args.depth, width_scale: args.width_scale, input_dim: args.input_dim, n_classes: args.classes };
    let imp = ImpConfig { prune_fraction: args.prune_fraction, iterations: args.iterations, subsample_size: args.subsample, subsample_seed: seed };
    let mut runs = Vec::new();
    for r in 0..args.replicates {
        let train = TrainConfig {
            total_epochs: args.epochs,
            rewind_epoch: args.rewind_epoch,
            learning_rate: args.lr,
            momentum: args.momentum,
            batch_size: args.batch_size,
            rng_seed: seed.wrapping_add(r),
        };
        runs.push(imp_run(&family, &data, &train, &imp)?);
    }
    let set = runs_to_measurements(&runs)?;
    ctx.write("measurements.csv", set.to_csv_string())?;

    #[derive(Serialize)]
    struct Log<'a> {
        chance_error: f64,
        runs: &'a [prunelaw::imp::ImpRun],
        regions: Option<prunelaw::imp::RegionReport>,
    }
    let n = runs.iter().map(|r| r.records.len()).min().unwrap_or(0);
    let regions = if n >= 8 {
        let densities: Vec<f64> = runs[0].records[..n].iter().map(|r| r.density).collect();
        let errors: Vec<f64> = (0..n)
            .map(|i| runs.iter().map(|r| r.records[i].test_error).sum::<f64>() / runs.len() as f64)
            .collect();
        Some(analyze_regions(&densities, &errors, data.chance_error())?)
    } else {
        None
    };
    ctx.write("imp_log.json", to_json_string(&Log { chance_error: data.chance_error(), runs: &runs, regions }))?;
    match runs.iter().find_map(|r| r.failure.clone()) {
        Some(msg) => Err(anyhow!("chain stopped early: {msg}")),
        None => Ok(()),
    }
}

fn run_compare(ctx: &mut Ctx, args: &CompareArgs) -> anyhow::Result<()> {
    let seed = ctx.seed()?;
    let (set, table) = ctx.measurements(&args.data)?;
    let candidates: Vec<ConfigKey> = set
        .configs()
        .into_iter()
        .filter(|k| {
            args.depth.is_none_or(|d| k.depth == d)
                && args.width_scale.is_none_or(|w| k.width_scale == w)
                && args.subsample_size.is_none_or(|n| k.subsample_size == n)
        })
        .collect();
    let [key] = candidates.as_slice() else {
        return Err(Error::Precondition(format!(
            "selection matches {} configurations; narrow it with --depth, --width-scale, --subsample-size",
            candidates.len()
        ))
        .into());
    };
    let eps_np = table.get(key).ok_or_else(|| Error::MissingUnpruned(vec![key.to_string()]))?;
    let curve_set = set.filter(|p| &p.config_key() == key);
    let mut curve: Vec<CurvePoint> = Vec::new();
    for p in curve_set.points() {
        match curve.iter_mut().find(|c| c.density == p.cfg.density) {
            Some(_) => {
                return Err(Error::Precondition("replicates present; pass --aggregate".into()).into());
            }
            None => curve.push(CurvePoint { density: p.cfg.density, error: p.test_error }),
        }
    }
    curve.sort_by(|a, b| b.density.total_cmp(&a.density));
    let report = compare_transition_fits(&curve, eps_np, &args.flags.options(seed))?;
    ctx.write("compare.json", to_json_string(&report))?;
    let mut buf = Vec::new();
    write_overlay_csv(&report.rows, &mut buf)?;
    ctx.write("overlay.csv", buf)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>().map(Error::class) {
        Some(ErrorClass::Numeric) => 2,
        Some(ErrorClass::Infeasible) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut ctx = Ctx { out: cli.out.clone(), format: cli.format, seed: cli.seed, inputs: BTreeMap::new(), outputs: Vec::new() };
    if let Err(e) = fs::create_dir_all(&ctx.out) {
        eprintln!("error: creating {}: {e}", ctx.out.display());
        return ExitCode::from(1);
    }
    let result = match &cli.command {
        Command::Fit(a) => run_fit(&mut ctx, a),
        Command::Eval(a) => run_eval(&mut ctx, a),
        Command::Invert(a) => run_invert(&mut ctx, a),
        Command::Optimize(a) => run_optimize(&mut ctx, a),
        Command::Frontier(a) => run_frontier(&mut ctx, a),
        Command::Stability(a) => run_stability(&mut ctx, a),
        Command::Extrapolate(a) => run_extrapolate(&mut ctx, a),
        Command::Synth(a) => run_synth(&mut ctx, a),
        Command::Imp(a) => run_imp(&mut ctx, a),
        Command::Compare(a) => run_compare(&mut ctx, a),
    };
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: &cli.command,
        format: cli.format,
        rng_seed: cli.seed,
        inputs: &ctx.inputs,
        outputs: &ctx.outputs,
    };
    if !ctx.outputs.is_empty() {
        if let Err(e) = fs::write(ctx.out.join("manifest.json"), to_json_string(&manifest)) {
            eprintln!("error: writing manifest: {e}");
            return ExitCode::from(1);
        }
    }
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
