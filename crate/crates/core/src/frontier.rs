//! Smallest parameter count meeting an error budget, and the frontier over budgets.
//!
//! A catalog entry is feasible for `eps_k` when some density in `(0, 1]` predicts an error of
//! at most `eps_k`. Because the law is decreasing in density, the cheapest admissible density
//! is the inverted one, `d* = invert_joint(eps_k)`. Entries are ranked by `m = d l w^2`, then
//! by smaller depth, then by smaller width.

use std::cmp::Ordering;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::fmt_f64;
use crate::error::{Error, Result};
use crate::law::{self, eval_joint, invert_joint, JointLawParams, NetworkConfig};

/// Slack allowed when checking a prediction against its budget.
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub depth: u32,
    pub width_scale: f64,
    pub eps_np: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigCatalog {
    entries: Vec<CatalogEntry>,
}

impl ConfigCatalog {
    pub fn new(entries: Vec<CatalogEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::invalid("catalog", "must contain at least one entry"));
        }
        for e in &entries {
            if e.depth < 1 || !(e.width_scale > 0.0 && e.width_scale.is_finite()) {
                return Err(Error::invalid("catalog", format!("bad architecture {e:?}")));
            }
            if !(e.eps_np > 0.0 && e.eps_np < 1.0) {
                return Err(Error::invalid("eps_np", format!("must lie in (0, 1), got {}", e.eps_np)));
            }
        }
        Ok(ConfigCatalog { entries })
    }

    pub fn entries(&self) -> &[CatalogEntry] {
        &self.entries
    }

    /// Reads `depth,width_scale,eps_np` rows.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["depth", "width_scale", "eps_np"] {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header depth,width_scale,eps_np, got {}", headers.iter().collect::<Vec<_>>().join(",")),
            });
        }
        let mut entries = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let field = |j: usize, name: &'static str| -> Result<&str> {
                rec.get(j).ok_or(Error::Validation { line, field: name, message: "missing".into() })
            };
            let bad = |name: &'static str, v: &str| Error::Validation {
                line,
                field: name,
                message: format!("cannot parse {v:?}"),
            };
            let depth = field(0, "depth")?;
            let width = field(1, "width_scale")?;
            let eps = field(2, "eps_np")?;
            entries.push(CatalogEntry {
                depth: depth.parse().map_err(|_| bad("depth", depth))?,
                width_scale: width.parse().map_err(|_| bad("width_scale", width))?,
                eps_np: eps.parse().map_err(|_| bad("eps_np", eps))?,
            });
        }
        ConfigCatalog::new(entries)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binding {
    /// The budget is met strictly inside `(0, 1)`.
    Interior,
    /// Only the dense member meets the budget.
    AtDEqualsOne,
    /// No entry meets the budget.
    Infeasible,
    /// The budget is at or above the high-error plateau, so every density meets it.
    Unbounded,
}

impl Binding {
    pub fn as_str(&self) -> &'static str {
        match self {
            Binding::Interior => "interior",
            Binding::AtDEqualsOne => "at_d_equals_1",
            Binding::Infeasible => "infeasible",
            Binding::Unbounded => "unbounded",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub eps_k: f64,
    pub depth: u32,
    pub width_scale: f64,
    pub density: f64,
    pub param_count: f64,
    pub predicted_error: f64,
    pub binding: Binding,
}

fn rank(a: &OptResult, b: &OptResult) -> Ordering {
    a.param_count
        .total_cmp(&b.param_count)
        .then(a.depth.cmp(&b.depth))
        .then(a.width_scale.total_cmp(&b.width_scale))
}

fn check_budget(params: &JointLawParams, eps_k: f64) -> Result<()> {
    params.validate()?;
    if !(eps_k > 0.0 && eps_k < 1.0) {
        return Err(Error::invalid("eps_k", format!("must lie in (0, 1), got {eps_k}")));
    }
    if eps_k >= params.eps_high {
        return Err(Error::invalid(
            "eps_k",
            format!("{eps_k} is not below the high-error plateau {}; every density meets it", params.eps_high),
        ));
    }
    Ok(())
}

/// Cheapest admissible density for one entry, or `None` if the entry cannot reach `eps_k`.
fn entry_optimum(params: &JointLawParams, e: &CatalogEntry, eps_k: f64) -> Result<Option<OptResult>> {
    if e.eps_np >= params.eps_high {
        return Ok(None);
    }
    let dense = NetworkConfig::new(e.depth, e.width_scale, 1, 1.0)?;
    let at_one = eval_joint(params, e.eps_np, &dense)?;
    if at_one > eps_k {
        return Ok(None);
    }
    let (density, binding) = match invert_joint(params, e.eps_np, e.depth, e.width_scale, eps_k) {
        Ok(d) if d < 1.0 => (d, Binding::Interior),
        Ok(_) | Err(Error::OutOfRange { .. }) => (1.0, Binding::AtDEqualsOne),
        Err(err) => return Err(err),
    };
    let cfg = dense.with_density(density);
    Ok(Some(OptResult {
        eps_k,
        depth: e.depth,
        width_scale: e.width_scale,
        density,
        param_count: law::param_count(&cfg).0,
        predicted_error: eval_joint(params, e.eps_np, &cfg)?,
        binding,
    }))
}

/// Smallest `m = d l w^2` over the catalog whose predicted error is at most `eps_k`.
pub fn min_params_at_error(params: &JointLawParams, catalog: &ConfigCatalog, eps_k: f64) -> Result<OptResult> {
    check_budget(params, eps_k)?;
    let per_entry = catalog
        .entries
        .par_iter()
        .map(|e| entry_optimum(params, e, eps_k))
        .collect::<Result<Vec<_>>>()?;
    per_entry
        .into_iter()
        .flatten()
        .min_by(rank)
        .ok_or_else(|| Error::Infeasible(format!("no catalog entry reaches error {eps_k}")))
}

/// One frontier level; `result` is `None` for infeasible and unbounded levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierRow {
    pub eps_k: f64,
    pub binding: Binding,
    pub result: Option<OptResult>,
}

pub fn pareto_frontier(params: &JointLawParams, catalog: &ConfigCatalog, eps_grid: &[f64]) -> Result<Vec<FrontierRow>> {
    if eps_grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid("eps_grid", "must be sorted ascending"));
    }
    eps_grid
        .iter()
        .map(|&eps_k| {
            if eps_k >= params.eps_high && eps_k < 1.0 {
                return Ok(FrontierRow { eps_k, binding: Binding::Unbounded, result: None });
            }
            match min_params_at_error(params, catalog, eps_k) {
                Ok(r) => Ok(FrontierRow { eps_k, binding: r.binding, result: Some(r) }),
                Err(Error::Infeasible(_)) => Ok(FrontierRow { eps_k, binding: Binding::Infeasible, result: None }),
                Err(e) => Err(e),
            }
        })
        .collect()
}

pub const FRONTIER_HEADER: [&str; 6] = ["eps_k", "depth", "width_scale", "density", "param_count", "binding"];

pub fn write_frontier_csv<W: Write>(rows: &[FrontierRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(FRONTIER_HEADER)?;
    for row in rows {
        let mut rec = vec![fmt_f64(row.eps_k)];
        match &row.result {
            Some(r) => rec.extend([
                r.depth.to_string(),
                fmt_f64(r.width_scale),
                fmt_f64(r.density),
                fmt_f64(r.param_count),
            ]),
            None => rec.extend(std::iter::repeat_n(String::new(), 4)),
        }
        rec.push(row.binding.as_str().to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Exhaustive search over `(entry, density)` pairs of a finite grid.
pub fn brute_force_oracle(
    params: &JointLawParams,
    catalog: &ConfigCatalog,
    eps_k: f64,
    density_grid: &[f64],
) -> Result<OptResult> {
    let mut best: Option<OptResult> = None;
    for e in &catalog.entries {
        for &d in density_grid {
            let cfg = NetworkConfig::new(e.depth, e.width_scale, 1, d)?;
            let predicted = eval_joint(params, e.eps_np, &cfg)?;
            if predicted > eps_k {
                continue;
            }
            let cand = OptResult {
                eps_k,
                depth: e.depth,
                width_scale: e.width_scale,
                density: d,
                param_count: law::param_count(&cfg).0,
                predicted_error: predicted,
                binding: if d == 1.0 { Binding::AtDEqualsOne } else { Binding::Interior },
            };
            if best.as_ref().is_none_or(|b| rank(&cand, b) == Ordering::Less) {
                best = Some(cand);
            }
        }
    }
    best.ok_or_else(|| Error::Infeasible(format!("no grid point reaches error {eps_k}")))
}
