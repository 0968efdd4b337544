use std::path::Path;
use std::process::{Command, Output};

fn prunelaw(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prunelaw")).current_dir(dir).args(args).output().unwrap()
}

fn synth_and_fit(dir: &Path) {
    let out = prunelaw(
        dir,
        &["--seed", "3", "--out", "data", "synth", "--depths", "8,20,98", "--widths", "0.5,1,2", "--subsamples", "1000", "--max-exponent", "30"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = prunelaw(dir, &["--seed", "3", "--out", "data", "fit", "--measurements", "data/measurements.csv", "--np-table", "data/np_table.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect()
}

#[test]
fn optimize_prefers_pruned_larger_network() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth_and_fit(dir);
    std::fs::write(dir.join("pair.csv"), "depth,width_scale,eps_np\n8,1.0,0.10\n98,1.0,0.05\n").unwrap();
    let out = prunelaw(dir, &["--out", "opt", "optimize", "--fit", "data/fit.json", "--catalog", "pair.csv", "--eps-k", "0.12"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&dir.join("opt/optimize.csv"));
    assert_eq!(rows.len(), 1);
    let header = csv::Reader::from_path(dir.join("opt/optimize.csv")).unwrap().headers().unwrap().clone();
    let depth_col = header.iter().position(|h| h == "depth").unwrap();
    assert_eq!(rows[0][depth_col], "98");
}

#[test]
fn frontier_param_counts_do_not_increase() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth_and_fit(dir);
    let out = prunelaw(dir, &["--out", "fr", "frontier", "--fit", "data/fit.json", "--catalog", "data/catalog.csv", "--steps", "12"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&dir.join("fr/frontier.csv"));
    assert_eq!(rows.len(), 12);
    let eps: Vec<f64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert!(eps.windows(2).all(|w| w[0] < w[1]));
    let m: Vec<f64> = rows.iter().filter_map(|r| r[4].parse().ok()).collect();
    assert!(!m.is_empty());
    assert!(m.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn infeasible_budget_exits_with_infeasible_code() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth_and_fit(dir);
    let out = prunelaw(dir, &["--out", "opt", "optimize", "--fit", "data/fit.json", "--catalog", "data/catalog.csv", "--eps-k", "0.001"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn imp_with_one_iteration_writes_dense_row_only() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = prunelaw(
        dir,
        &["--seed", "1", "--out", "imp", "imp", "--iterations", "1", "--epochs", "4", "--n-total", "400", "--subsample", "200", "--replicates", "1"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&dir.join("imp/measurements.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][4].parse::<f64>().unwrap(), 1.0);
}

#[test]
fn missing_unpruned_entry_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth_and_fit(dir);
    let table = std::fs::read_to_string(dir.join("data/np_table.json")).unwrap();
    let mut json: serde_json::Value = serde_json::from_str(&table).unwrap();
    json["entries"].as_array_mut().unwrap().retain(|e| e["depth"] != 98);
    std::fs::write(dir.join("partial.json"), json.to_string()).unwrap();
    let out = prunelaw(dir, &["--seed", "3", "--out", "f", "fit", "--measurements", "data/measurements.csv", "--np-table", "partial.json"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("98"), "{err}");
}

#[test]
fn disabling_a_varying_exponent_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth_and_fit(dir);
    let out = prunelaw(dir, &["--seed", "3", "--out", "f", "fit", "--measurements", "data/measurements.csv", "--np-table", "data/np_table.json", "--no-psi"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn randomized_commands_require_a_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let out = prunelaw(tmp.path(), &["synth"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = prunelaw(tmp.path(), &["fit", "--bogus"]);
    assert!(!out.status.success());
}

#[test]
fn help_lists_fit_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let out = prunelaw(tmp.path(), &["fit", "--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for flag in ["--measurements", "--np-table", "--no-phi", "--no-psi", "--restarts", "--method", "--seed"] {
        assert!(text.contains(flag), "missing {flag}");
    }
}

#[test]
fn manifest_records_input_hashes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth_and_fit(dir);
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("data/manifest.json")).unwrap()).unwrap();
    let inputs = manifest["inputs"].as_object().unwrap();
    assert!(inputs.keys().any(|k| k.ends_with("measurements.csv")));
    assert!(inputs.values().all(|v| v.as_str().unwrap().len() == 64));
}
