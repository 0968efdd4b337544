//! Measurement tables, unpruned-error tables, and the JSON/CSV formats around them.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::law::NetworkConfig;

/// Seed recorded on points produced by [`aggregate_replicates`].
pub const AGGREGATE_SEED: i64 = -1;

pub const MEASUREMENT_HEADER: [&str; 7] = [
    "family",
    "depth",
    "width_scale",
    "subsample_size",
    "density",
    "test_error",
    "seed",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementPoint {
    pub family: String,
    pub cfg: NetworkConfig,
    pub test_error: f64,
    pub seed: i64,
}

impl MeasurementPoint {
    pub fn config_key(&self) -> ConfigKey {
        ConfigKey::of(&self.family, &self.cfg)
    }

    fn sort_cmp(&self, other: &Self) -> Ordering {
        self.config_key()
            .cmp(&other.config_key())
            .then(self.cfg.density.total_cmp(&other.cfg.density))
            .then(self.seed.cmp(&other.seed))
    }
}

/// `(family, l, w, n)`: one unpruned network and the data it was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigKey {
    pub family: String,
    pub depth: u32,
    pub width_scale: f64,
    pub subsample_size: u64,
}

impl ConfigKey {
    pub fn of(family: &str, cfg: &NetworkConfig) -> Self {
        ConfigKey {
            family: family.to_string(),
            depth: cfg.depth,
            width_scale: cfg.width_scale,
            subsample_size: cfg.subsample_size,
        }
    }
}

impl Eq for ConfigKey {}

impl Ord for ConfigKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.family
            .cmp(&other.family)
            .then(self.depth.cmp(&other.depth))
            .then(self.width_scale.total_cmp(&other.width_scale))
            .then(self.subsample_size.cmp(&other.subsample_size))
    }
}

impl PartialOrd for ConfigKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl std::fmt::Display for ConfigKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "({}, l={}, w={}, n={})",
            self.family, self.depth, self.width_scale, self.subsample_size
        )
    }
}

/// Measurements in canonical order `(family, l, w, n, d, seed)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSet {
    points: Vec<MeasurementPoint>,
    pub provenance: String,
}

impl MeasurementSet {
    pub fn new(mut points: Vec<MeasurementPoint>, provenance: impl Into<String>) -> Result<Self> {
        for p in &points {
            validate_point(p, 0)?;
        }
        points.sort_by(MeasurementPoint::sort_cmp);
        for pair in points.windows(2) {
            if pair[0].sort_cmp(&pair[1]) == Ordering::Equal {
                return Err(Error::DuplicateKey(format!(
                    "{} d={} seed={}",
                    pair[0].config_key(),
                    pair[0].cfg.density,
                    pair[0].seed
                )));
            }
        }
        Ok(MeasurementSet {
            points,
            provenance: provenance.into(),
        })
    }

    pub fn points(&self) -> &[MeasurementPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Distinct `(family, l, w, n)` keys in canonical order.
    pub fn configs(&self) -> Vec<ConfigKey> {
        let mut keys: Vec<ConfigKey> = self.points.iter().map(|p| p.config_key()).collect();
        keys.dedup();
        keys
    }

    /// Keeps the points for which `keep` holds, preserving order.
    pub fn filter(&self, mut keep: impl FnMut(&MeasurementPoint) -> bool) -> MeasurementSet {
        MeasurementSet {
            points: self.points.iter().filter(|p| keep(p)).cloned().collect(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn subset(&self, indices: &[usize]) -> MeasurementSet {
        let mut idx = indices.to_vec();
        idx.sort_unstable();
        idx.dedup();
        MeasurementSet {
            points: idx.into_iter().map(|i| self.points[i].clone()).collect(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(MEASUREMENT_HEADER)?;
        for p in &self.points {
            w.write_record([
                p.family.clone(),
                p.cfg.depth.to_string(),
                fmt_f64(p.cfg.width_scale),
                p.cfg.subsample_size.to_string(),
                fmt_f64(p.cfg.density),
                fmt_f64(p.test_error),
                p.seed.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

/// Shortest decimal text that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn validate_point(p: &MeasurementPoint, line: usize) -> Result<()> {
    let field_err = |field: &'static str, message: String| Error::Validation { line, field, message };
    if p.family.is_empty() {
        return Err(field_err("family", "must not be empty".into()));
    }
    if p.cfg.depth < 1 {
        return Err(field_err("depth", "must be at least 1".into()));
    }
    if !(p.cfg.width_scale.is_finite() && p.cfg.width_scale > 0.0) {
        return Err(field_err("width_scale", format!("must be positive, got {}", p.cfg.width_scale)));
    }
    if p.cfg.subsample_size < 1 {
        return Err(field_err("subsample_size", "must be at least 1".into()));
    }
    if !(p.cfg.density > 0.0 && p.cfg.density <= 1.0) {
        return Err(field_err("density", format!("must lie in (0, 1], got {}", p.cfg.density)));
    }
    if !(p.test_error > 0.0 && p.test_error < 1.0) {
        return Err(field_err("test_error", format!("must lie in (0, 1), got {}", p.test_error)));
    }
    Ok(())
}

pub fn parse_measurements<R: Read>(input: R, provenance: &str) -> Result<MeasurementSet> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| csv_parse_error(&e, 1))?,
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "empty input, expected header".into(),
            })
        }
    };
    if header.iter().collect::<Vec<_>>() != MEASUREMENT_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("header must be exactly `{}`", MEASUREMENT_HEADER.join(",")),
        });
    }
    let mut points = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| csv_parse_error(&e, 0))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != MEASUREMENT_HEADER.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", MEASUREMENT_HEADER.len(), rec.len()),
            });
        }
        let point = MeasurementPoint {
            family: rec[0].to_string(),
            cfg: NetworkConfig {
                depth: parse_field(&rec[1], "depth", line)?,
                width_scale: parse_field(&rec[2], "width_scale", line)?,
                subsample_size: parse_field(&rec[3], "subsample_size", line)?,
                density: parse_field(&rec[4], "density", line)?,
            },
            test_error: parse_field(&rec[5], "test_error", line)?,
            seed: parse_field(&rec[6], "seed", line)?,
        };
        validate_point(&point, line)?;
        points.push(point);
    }
    MeasurementSet::new(points, provenance)
}

fn csv_parse_error(e: &csv::Error, fallback: usize) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(fallback);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

fn parse_field<T: std::str::FromStr>(s: &str, field: &'static str, line: usize) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    s.parse::<T>().map_err(|e| Error::Validation {
        line,
        field,
        message: format!("cannot parse `{s}`: {e}"),
    })
}

/// One point per `(family, cfg)` holding the mean error over seeds.
pub fn aggregate_replicates(set: &MeasurementSet) -> MeasurementSet {
    let mut out: Vec<MeasurementPoint> = Vec::new();
    for group in group_by_cfg(&set.points) {
        let mean = group.iter().map(|p| p.test_error).sum::<f64>() / group.len() as f64;
        let first = group[0];
        out.push(MeasurementPoint {
            family: first.family.clone(),
            cfg: first.cfg,
            test_error: mean,
            seed: AGGREGATE_SEED,
        });
    }
    MeasurementSet {
        points: out,
        provenance: format!("{} [replicate means]", set.provenance.trim_end_matches(" [replicate means]")),
    }
}

fn group_by_cfg(points: &[MeasurementPoint]) -> Vec<Vec<&MeasurementPoint>> {
    let mut groups: Vec<Vec<&MeasurementPoint>> = Vec::new();
    for p in points {
        match groups.last_mut() {
            Some(g) if g[0].family == p.family && g[0].cfg == p.cfg => g.push(p),
            _ => groups.push(vec![p]),
        }
    }
    groups
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSpread {
    pub family: String,
    pub cfg: NetworkConfig,
    pub replicates: usize,
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpreadReport {
    pub per_config: Vec<ConfigSpread>,
    /// Pooled sample standard deviation of `(error - mean) / mean`, with one degree
    /// of freedom removed per replicated configuration.
    pub pooled_rel_std: f64,
}

pub fn replicate_spread(set: &MeasurementSet) -> Result<SpreadReport> {
    let mut per_config = Vec::new();
    let mut sum_sq = 0.0;
    let mut dof = 0usize;
    for group in group_by_cfg(&set.points) {
        let n = group.len();
        let errs: Vec<f64> = group.iter().map(|p| p.test_error).collect();
        let mean = errs.iter().sum::<f64>() / n as f64;
        let min = errs.iter().copied().fold(f64::INFINITY, f64::min);
        let max = errs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if n >= 2 {
            sum_sq += errs.iter().map(|e| ((e - mean) / mean).powi(2)).sum::<f64>();
            dof += n - 1;
        }
        per_config.push(ConfigSpread {
            family: group[0].family.clone(),
            cfg: group[0].cfg,
            replicates: n,
            min,
            mean,
            max,
        });
    }
    if dof == 0 {
        return Err(Error::Precondition(
            "replicate spread needs at least one configuration with two or more seeds".into(),
        ));
    }
    Ok(SpreadReport {
        per_config,
        pooled_rel_std: (sum_sq / dof as f64).sqrt(),
    })
}

/// Drops points at or above chance error and, optionally, oversized configurations whose
/// unpruned error is worse than that of a strictly smaller sibling.
pub fn filter_feasible(set: &MeasurementSet, chance_error: f64, monotone_np_filter: bool) -> MeasurementSet {
    let mut dropped: Vec<ConfigKey> = Vec::new();
    if monotone_np_filter {
        let dense = UnprunedErrorTable::from_measurements(set);
        for (key, eps) in dense.iter() {
            let worse_than_smaller = dense.iter().any(|(other, other_eps)| {
                other.family == key.family
                    && other.subsample_size == key.subsample_size
                    && other.depth <= key.depth
                    && other.width_scale <= key.width_scale
                    && other != key
                    && eps > other_eps
            });
            if worse_than_smaller {
                dropped.push(key.clone());
            }
        }
    }
    set.filter(|p| p.test_error < chance_error && !dropped.contains(&p.config_key()))
}

/// Unpruned error `eps_np(l, w, n)` per family.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UnprunedErrorTable {
    map: BTreeMap<ConfigKey, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TableEntry {
    family: String,
    depth: u32,
    width_scale: f64,
    subsample_size: u64,
    eps_np: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TableFile {
    entries: Vec<TableEntry>,
}

impl UnprunedErrorTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: ConfigKey, eps_np: f64) -> Result<()> {
        if !(eps_np > 0.0 && eps_np < 1.0) {
            return Err(Error::invalid("eps_np", format!("{key}: must lie in (0, 1), got {eps_np}")));
        }
        self.map.insert(key, eps_np);
        Ok(())
    }

    pub fn get(&self, key: &ConfigKey) -> Option<f64> {
        self.map.get(key).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ConfigKey, f64)> {
        self.map.iter().map(|(k, v)| (k, *v))
    }

    /// Mean dense (`d = 1`) error per configuration.
    pub fn from_measurements(set: &MeasurementSet) -> Self {
        let mut sums: BTreeMap<ConfigKey, (f64, usize)> = BTreeMap::new();
        for p in set.points().iter().filter(|p| p.cfg.density == 1.0) {
            let e = sums.entry(p.config_key()).or_insert((0.0, 0));
            e.0 += p.test_error;
            e.1 += 1;
        }
        UnprunedErrorTable {
            map: sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect(),
        }
    }

    /// Every key the set references, or the list of missing ones.
    pub fn check_covers(&self, set: &MeasurementSet) -> Result<()> {
        let missing: Vec<String> = set
            .configs()
            .into_iter()
            .filter(|k| !self.map.contains_key(k))
            .map(|k| k.to_string())
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::MissingUnpruned(missing))
        }
    }

    pub fn to_json(&self) -> String {
        let file = TableFile {
            entries: self
                .map
                .iter()
                .map(|(k, v)| TableEntry {
                    family: k.family.clone(),
                    depth: k.depth,
                    width_scale: k.width_scale,
                    subsample_size: k.subsample_size,
                    eps_np: *v,
                })
                .collect(),
        };
        to_json_string(&file)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: TableFile = serde_json::from_str(text)?;
        let mut table = UnprunedErrorTable::new();
        for e in file.entries {
            let key = ConfigKey {
                family: e.family,
                depth: e.depth,
                width_scale: e.width_scale,
                subsample_size: e.subsample_size,
            };
            if table.map.contains_key(&key) {
                return Err(Error::DuplicateKey(key.to_string()));
            }
            table.insert(key, e.eps_np)?;
        }
        Ok(table)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub mu: f64,
    pub sigma: f64,
    pub n_points: usize,
}

/// On-disk form of a joint fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub eps_high: f64,
    pub gamma: f64,
    pub p_prime: f64,
    pub phi: f64,
    pub psi: f64,
    pub fit: FitSummary,
    pub provenance: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<serde_json::Value>,
}

impl FitRecord {
    pub fn to_json(&self) -> String {
        to_json_string(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Pretty JSON with every float written to 17 significant digits.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigDigitsFormatter::default());
    value.serialize(&mut ser).expect("in-memory JSON serialization");
    buf.push(b'\n');
    String::from_utf8(buf).expect("JSON output is utf-8")
}

#[derive(Default)]
struct SigDigitsFormatter {
    inner: serde_json::ser::PrettyFormatter<'static>,
}

impl serde_json::ser::Formatter for SigDigitsFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{value:.16e}")
    }
    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.inner.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.inner.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.end_object_value(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "family,depth,width_scale,subsample_size,density,test_error,seed\n";

    fn pt(family: &str, l: u32, w: f64, n: u64, d: f64, e: f64, seed: i64) -> MeasurementPoint {
        MeasurementPoint {
            family: family.into(),
            cfg: NetworkConfig { depth: l, width_scale: w, subsample_size: n, density: d },
            test_error: e,
            seed,
        }
    }

    #[test]
    fn parses_minimal_input() {
        let text = format!("{HEADER}resnet,20,1,50000,0.8,0.09,1\n");
        let set = parse_measurements(text.as_bytes(), "test").unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.points()[0].cfg.density, 0.8);
    }

    #[test]
    fn scientific_notation_is_accepted() {
        let text = format!("{HEADER}r,2,2.5e-1,100,1.3292279957849158e-4,8.5E-1,0\n");
        let set = parse_measurements(text.as_bytes(), "test").unwrap();
        assert_eq!(set.points()[0].cfg.width_scale, 0.25);
    }

    #[test]
    fn zero_density_names_the_field() {
        let text = format!("{HEADER}r,20,1,100,0.5,0.1,0\nr,20,1,100,0,0.1,0\n");
        match parse_measurements(text.as_bytes(), "test") {
            Err(Error::Validation { line, field, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(field, "density");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_rows_report_line() {
        let text = format!("{HEADER}r,20,1,100,0.5,0.1,0\nr,twenty,1,100,0.5,0.1,0\n");
        assert!(matches!(
            parse_measurements(text.as_bytes(), "t"),
            Err(Error::Validation { line: 3, field: "depth", .. })
        ));
        let short = format!("{HEADER}r,20,1\n");
        assert!(matches!(parse_measurements(short.as_bytes(), "t"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(
            parse_measurements("a,b\n".as_bytes(), "t"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn duplicates_are_rejected() {
        let text = format!("{HEADER}r,20,1,100,0.5,0.1,0\nr,20,1,100,0.5,0.2,0\n");
        assert!(matches!(parse_measurements(text.as_bytes(), "t"), Err(Error::DuplicateKey(_))));
    }

    fn replicates() -> MeasurementSet {
        MeasurementSet::new(
            vec![
                pt("r", 20, 1.0, 100, 0.5, 0.10, 0),
                pt("r", 20, 1.0, 100, 0.5, 0.12, 1),
                pt("r", 20, 1.0, 100, 0.5, 0.14, 2),
            ],
            "fixture",
        )
        .unwrap()
    }

    #[test]
    fn replicate_fixture_has_distinct_seeds() {
        let text = replicates().to_csv_string();
        let set = parse_measurements(text.as_bytes(), "t").unwrap();
        assert_eq!(set.len(), 3);
        let seeds: Vec<i64> = set.points().iter().map(|p| p.seed).collect();
        assert_eq!(seeds, vec![0, 1, 2]);
    }

    #[test]
    fn aggregation_takes_mean() {
        let agg = aggregate_replicates(&replicates());
        assert_eq!(agg.len(), 1);
        assert!((agg.points()[0].test_error - 0.12).abs() < 1e-15);
        assert_eq!(agg.points()[0].seed, AGGREGATE_SEED);
        let again = aggregate_replicates(&agg);
        assert_eq!(again.points(), agg.points());

        let single = MeasurementSet::new(vec![pt("r", 8, 0.5, 10, 1.0, 0.3, 4)], "x").unwrap();
        assert_eq!(aggregate_replicates(&single).points()[0].test_error, 0.3);
    }

    #[test]
    fn spread_statistics() {
        let s = replicate_spread(&replicates()).unwrap();
        assert_eq!(s.per_config[0].min, 0.10);
        assert_eq!(s.per_config[0].max, 0.14);
        // brute force: deviations -1/6, 0, 1/6, sample variance with n - 1 = 2
        let devs = [0.10f64, 0.12, 0.14].map(|e| (e - 0.12) / 0.12);
        let var = devs.iter().map(|d| d * d).sum::<f64>() / 2.0;
        assert!((s.pooled_rel_std - var.sqrt()).abs() < 1e-12);
        assert!((s.pooled_rel_std - 1.0 / 6.0).abs() < 1e-9);

        let same = MeasurementSet::new(
            vec![pt("r", 2, 1.0, 1, 1.0, 0.2, 0), pt("r", 2, 1.0, 1, 1.0, 0.2, 1)],
            "x",
        )
        .unwrap();
        assert_eq!(replicate_spread(&same).unwrap().pooled_rel_std, 0.0);

        let mut two = replicates().points().to_vec();
        two.extend([
            pt("r", 20, 1.0, 100, 0.25, 0.20, 0),
            pt("r", 20, 1.0, 100, 0.25, 0.24, 1),
            pt("r", 20, 1.0, 100, 0.25, 0.28, 2),
        ]);
        let pooled = replicate_spread(&MeasurementSet::new(two, "x").unwrap()).unwrap();
        assert!((pooled.pooled_rel_std - s.pooled_rel_std).abs() < 1e-12);

        let lone = MeasurementSet::new(vec![pt("r", 2, 1.0, 1, 1.0, 0.2, 0)], "x").unwrap();
        assert!(matches!(replicate_spread(&lone), Err(Error::Precondition(_))));
    }

    #[test]
    fn chance_filter() {
        let set = MeasurementSet::new(
            vec![pt("c", 20, 1.0, 100, 1.0, 0.08, 0), pt("c", 20, 1.0, 100, 0.01, 0.9, 0)],
            "x",
        )
        .unwrap();
        let f = filter_feasible(&set, 0.9, false);
        assert_eq!(f.len(), 1);
        assert_eq!(f.points()[0].test_error, 0.08);
        let all = filter_feasible(&set, 0.95, false);
        assert_eq!(all.points(), set.points());
    }

    #[test]
    fn oversized_configs_are_dropped() {
        let set = MeasurementSet::new(
            vec![
                pt("c", 20, 1.0, 100, 1.0, 0.10, 0),
                pt("c", 20, 1.0, 100, 0.5, 0.12, 0),
                pt("c", 20, 2.0, 100, 1.0, 0.11, 0),
                pt("c", 20, 2.0, 100, 0.5, 0.13, 0),
            ],
            "x",
        )
        .unwrap();
        let f = filter_feasible(&set, 0.9, true);
        assert_eq!(f.len(), 2);
        assert!(f.points().iter().all(|p| p.cfg.width_scale == 1.0));
        assert_eq!(filter_feasible(&set, 0.9, false).len(), 4);
    }

    #[test]
    fn table_json_and_coverage() {
        let set = replicates();
        let mut table = UnprunedErrorTable::new();
        assert!(matches!(table.check_covers(&set), Err(Error::MissingUnpruned(ref k)) if k.len() == 1));
        table.insert(set.configs()[0].clone(), 0.1).unwrap();
        table.check_covers(&set).unwrap();
        let back = UnprunedErrorTable::from_json(&table.to_json()).unwrap();
        assert_eq!(back, table);
    }

    #[test]
    fn json_floats_have_17_digits() {
        let rec = FitRecord {
            eps_high: 0.9,
            gamma: 2.0,
            p_prime: 1.0 / 3.0,
            phi: -0.5,
            psi: 0.0,
            fit: FitSummary { mu: 0.0, sigma: 1e-7, n_points: 3 },
            provenance: "x".into(),
            meta: None,
        };
        let text = rec.to_json();
        assert!(text.contains("\"eps_high\": 9.0000000000000002e-1"), "{text}");
        assert!(text.contains("\"n_points\": 3"));
        assert_eq!(FitRecord::from_json(&text).unwrap(), rec);
    }
}
