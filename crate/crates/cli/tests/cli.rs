use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn sample_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn carbon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_carbon")).args(args).output().expect("binary runs")
}

fn run_ok(args: &[&str]) -> String {
    let out = carbon(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Relative path to contents of every file under `root`.
fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(dir: &Path, root: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(&path, root, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    rdr.records().map(|r| r.unwrap().iter().map(str::to_string).collect()).collect()
}

/// A copy of the sample panel restricted to `years`.
fn trimmed_panel(years: std::ops::RangeInclusive<i32>) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    for name in ["energy.csv", "economic.csv"] {
        let text = fs::read_to_string(sample_dir().join(name)).unwrap();
        let mut lines = text.lines();
        let mut kept = vec![lines.next().unwrap().to_string()];
        kept.extend(
            lines
                .filter(|l| l.split(',').nth(1).and_then(|y| y.parse().ok()).is_some_and(|y: i32| years.contains(&y)))
                .map(str::to_string),
        );
        fs::write(dir.path().join(name), kept.join("\n") + "\n").unwrap();
    }
    dir
}

#[test]
fn account_writes_province_and_national_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    run_ok(&["account", "--data-dir", p(&sample_dir()), "--out-dir", p(&out)]);
    let provinces = fs::read_dir(out.join("account/province")).unwrap().count();
    assert_eq!(provinces, 30);
    let national = csv_rows(&out.join("account/national.csv"));
    assert_eq!(national.len(), 22);
    assert_eq!(national[0][0], "2000");
    assert!(out.join("manifest.json").exists());
}

#[test]
fn json_output_carries_the_same_values() {
    let tmp = tempfile::tempdir().unwrap();
    let (csv_out, json_out) = (tmp.path().join("c"), tmp.path().join("j"));
    run_ok(&["account", "--data-dir", p(&sample_dir()), "--out-dir", p(&csv_out)]);
    run_ok(&["account", "--data-dir", p(&sample_dir()), "--out-dir", p(&json_out), "--format", "json"]);
    let rows = csv_rows(&csv_out.join("account/national.csv"));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(json_out.join("account/national.json")).unwrap()).unwrap();
    let arr = json.as_array().unwrap();
    assert_eq!(arr.len(), rows.len());
    for (row, obj) in rows.iter().zip(arr) {
        assert_eq!(obj["year"].as_i64().unwrap().to_string(), row[0]);
        assert_eq!(obj["emissions"].as_f64().unwrap(), row[1].parse::<f64>().unwrap());
    }
}

#[test]
fn corrupt_input_fails_without_partial_outputs() {
    let data = tempfile::tempdir().unwrap();
    for name in ["energy.csv", "economic.csv"] {
        fs::copy(sample_dir().join(name), data.path().join(name)).unwrap();
    }
    let energy = fs::read_to_string(data.path().join("energy.csv")).unwrap();
    let mut lines: Vec<String> = energy.lines().map(str::to_string).collect();
    let last = lines[40].rfind(',').unwrap();
    lines[40] = format!("{},-3.5", &lines[40][..last]);
    fs::write(data.path().join("energy.csv"), lines.join("\n") + "\n").unwrap();

    let parent = tempfile::tempdir().unwrap();
    let out = parent.path().join("out");
    for cmd in ["account", "pipeline"] {
        let r = carbon(&[cmd, "--data-dir", p(data.path()), "--out-dir", p(&out)]);
        assert_eq!(r.status.code(), Some(2));
        assert!(String::from_utf8_lossy(&r.stderr).contains("negative consumption"));
        assert_eq!(fs::read_dir(parent.path()).unwrap().count(), 0, "{cmd} left files behind");
    }
}

#[test]
fn existing_outputs_need_force() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    fs::create_dir(&out).unwrap();
    fs::write(out.join("keep.txt"), "mine").unwrap();
    let r = carbon(&["account", "--data-dir", p(&sample_dir()), "--out-dir", p(&out)]);
    assert_eq!(r.status.code(), Some(2));
    assert_eq!(fs::read_to_string(out.join("keep.txt")).unwrap(), "mine");
    run_ok(&["account", "--data-dir", p(&sample_dir()), "--out-dir", p(&out), "--force"]);
    assert!(!out.join("keep.txt").exists());
    assert!(out.join("account/national.csv").exists());
}

#[test]
fn forecasting_to_the_last_observed_year_has_nothing_to_do() {
    let tmp = tempfile::tempdir().unwrap();
    let r = carbon(&["forecast", "--data-dir", p(&sample_dir()), "--out-dir", p(&tmp.path().join("o")), "--to-year", "2021"]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("nothing to forecast"));
    let r = carbon(&["forecast", "--data-dir", p(&sample_dir()), "--out-dir", p(&tmp.path().join("o")), "--to-year", "2019"]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn forecast_reruns_are_identical_and_series_do_not_interfere() {
    let tmp = tempfile::tempdir().unwrap();
    let dirs: Vec<PathBuf> = (0..3).map(|i| tmp.path().join(format!("f{i}"))).collect();
    let sd = sample_dir();
    let base = ["forecast", "--data-dir", p(&sd), "--to-year", "2030"];
    for (d, series) in dirs.iter().zip(["national,Beijing", "national,Beijing", "Beijing"]) {
        let mut args = base.to_vec();
        args.extend(["--out-dir", p(d), "--series", series]);
        run_ok(&args);
    }
    assert_eq!(snapshot(&dirs[0]), snapshot(&dirs[1]));
    let read = |d: &Path| fs::read(d.join("forecast/beijing.csv")).unwrap();
    assert_eq!(read(&dirs[0]), read(&dirs[2]));

    let rows = csv_rows(&dirs[0].join("forecast/national.csv"));
    assert_eq!(rows.last().unwrap()[0], "2030");
    assert_eq!(rows.last().unwrap()[4], "forecast");
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(dirs[0].join("manifest.json")).unwrap()).unwrap();
    let order = manifest["per_series"]["national"]["order"].as_str().unwrap();
    assert!(order.starts_with('(') && order.ends_with(')'), "{order}");
    assert!(manifest["per_series"]["Beijing"]["metrics"]["test"]["rmse"].is_number());
}

#[test]
fn unknown_series_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let r = carbon(&["forecast", "--data-dir", p(&sample_dir()), "--out-dir", p(&tmp.path().join("o")), "--series", "Atlantis"]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("Atlantis"));
}

#[test]
fn fixed_order_is_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    run_ok(&[
        "forecast", "--data-dir", p(&sample_dir()), "--out-dir", p(&out), "--series", "Hebei", "--order", "0,1,1",
    ]);
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["per_series"]["Hebei"]["order"], "(0,1,1)");
    let r = carbon(&["forecast", "--order", "4,1,1"]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn decomposition_rows_add_up() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    run_ok(&["decompose", "--data-dir", p(&sample_dir()), "--out-dir", p(&out)]);
    let rows = csv_rows(&out.join("decompose/effects.csv"));
    assert_eq!(rows.len(), 22);
    assert_eq!(rows.last().unwrap()[0], "cumulative");
    for r in &rows {
        let v: Vec<f64> = r[1..].iter().map(|x| x.parse().unwrap()).collect();
        assert_eq!(v[1], 0.0);
        let sum: f64 = v[..6].iter().sum();
        // six significant digits per cell
        let slack = 1e-5 * v.iter().map(|x| x.abs()).fold(0.0, f64::max);
        assert!((sum - v[6]).abs() <= slack, "{r:?}");
    }
}

#[test]
fn single_year_cannot_be_decomposed() {
    let data = trimmed_panel(2005..=2005);
    let tmp = tempfile::tempdir().unwrap();
    let r = carbon(&["decompose", "--data-dir", p(data.path()), "--out-dir", p(&tmp.path().join("o"))]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("need ≥ 2 years"));
}

#[test]
fn fixture_verification_reports_every_row() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let r = carbon(&["decompose", "--verify-fixture", "--out-dir", p(&out)]);
    let stdout = String::from_utf8(r.stdout).unwrap();
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 12);
    assert!(lines[0].starts_with("PASS 2024: effects sum to -1100.36"), "{}", lines[0]);
    let any_fail = lines.iter().any(|l| l.starts_with("FAIL"));
    assert!(lines.iter().all(|l| l.starts_with("PASS") || l.starts_with("FAIL")));
    assert_eq!(r.status.code(), Some(if any_fail { 2 } else { 0 }));
    assert_eq!(out.exists(), !any_fail);
}

#[test]
fn group_test_replays_the_reference_statistic() {
    let tmp = tempfile::tempdir().unwrap();
    let stdout = run_ok(&["group-test", "--fixture", "--out-dir", p(&tmp.path().join("o"))]);
    assert!(stdout.lines().next().unwrap().contains("F=3.997"), "{stdout}");
    let report = csv_rows(&tmp.path().join("o/group_test/report.csv"));
    assert_eq!(report.len(), 4);
}

#[test]
fn uniform_weights_do_not_drift() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let stdout = run_ok(&["spatial", "--weights", "uniform", "--data-dir", p(&sample_dir()), "--out-dir", p(&out)]);
    assert!(stdout.starts_with("zero drift"), "{stdout}");
    for r in csv_rows(&out.join("spatial/ellipses.csv")) {
        assert_eq!((r[7].as_str(), r[8].as_str()), ("0", "0"));
    }
}

#[test]
fn pipeline_reports_the_failing_stage() {
    // six years leave too few points to split for a forecast
    let data = trimmed_panel(2000..=2005);
    let tmp = tempfile::tempdir().unwrap();
    let r = carbon(&["pipeline", "--data-dir", p(data.path()), "--out-dir", p(&tmp.path().join("o"))]);
    assert_eq!(r.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&r.stderr);
    assert!(stderr.contains("error: forecast: series `national`"), "{stderr}");
    assert!(!tmp.path().join("o").exists());
}

#[test]
fn pipeline_leaves_inputs_untouched_and_is_worker_independent() {
    let before = snapshot(&sample_dir());
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_ok(&["pipeline", "--data-dir", p(&sample_dir()), "--out-dir", p(&a), "--workers", "1"]);
    run_ok(&["pipeline", "--data-dir", p(&sample_dir()), "--out-dir", p(&b), "--workers", "4"]);
    assert_eq!(snapshot(&a), snapshot(&b));
    assert_eq!(snapshot(&sample_dir()), before);
    assert!(fs::read_to_string(a.join("summary.txt")).unwrap().contains("LMDI decomposition"));
}

#[test]
fn pipeline_matches_golden_directory() {
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/pipeline");
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    run_ok(&["pipeline", "--data-dir", p(&sample_dir()), "--out-dir", p(&out)]);
    let got = snapshot(&out);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        let _ = fs::remove_dir_all(&golden);
        for (rel, bytes) in &got {
            let path = golden.join(rel);
            fs::create_dir_all(path.parent().unwrap()).unwrap();
            fs::write(path, bytes).unwrap();
        }
    }
    let want = snapshot(&golden);
    assert_eq!(got.keys().collect::<Vec<_>>(), want.keys().collect::<Vec<_>>());
    for (rel, bytes) in &want {
        assert!(got[rel] == *bytes, "{rel} differs from the golden copy");
    }
}
