use std::path::Path;
use std::process::Command;

use cqed_pairs::ModelParams;

struct Run {
    code: i32,
    stderr: String,
}

fn cli(args: &[&str], out: &Path) -> Run {
    let output = Command::new(env!("CARGO_BIN_EXE_cqed-pairs"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs");
    Run { code: output.status.code().unwrap_or(-1), stderr: String::from_utf8_lossy(&output.stderr).into() }
}

fn ok(args: &[&str], out: &Path) {
    let run = cli(args, out);
    assert_eq!(run.code, 0, "{args:?} failed: {}", run.stderr);
}

/// Header and rows of a CSV file, skipping the provenance comments.
fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    assert!(text.starts_with("# cqed-pairs "));
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn column(header: &[String], rows: &[Vec<String>], name: &str) -> Vec<f64> {
    let k = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rows.iter().map(|r| r[k].parse().unwrap()).collect()
}

fn without_timestamp(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.contains("generated_unix"))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn coherent_writes_eight_columns_ending_in_eplus() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["coherent", "--preset", "fig4-calibrated"], dir.path());
    let (header, rows) = read_csv(&dir.path().join("coherent.csv"));
    assert_eq!(
        header,
        ["g_t", "pop_I", "pop_B", "pop_D", "pop_Eplus", "pop_Eminus", "g1_of_t", "g2_of_t"]
    );
    assert!(rows.iter().all(|r| r.len() == 8));
    assert!(*column(&header, &rows, "pop_Eplus").last().unwrap() >= 0.999);
    for name in ["pop_I", "pop_B", "pop_D", "pop_Eplus", "pop_Eminus"] {
        assert!(column(&header, &rows, name).iter().all(|p| (0.0..=1.0 + 1e-12).contains(p)));
    }
}

#[test]
fn uncoupled_atom_stays_in_the_initial_state() {
    let dir = tempfile::tempdir().unwrap();
    let params = ModelParams { g: 0.0, ..ModelParams::default() };
    let config = dir.path().join("g0.json");
    std::fs::write(&config, serde_json::json!({ "params": params }).to_string()).unwrap();
    ok(&["coherent", "--config", config.to_str().unwrap()], dir.path());
    let (header, rows) = read_csv(&dir.path().join("coherent.csv"));
    assert!(column(&header, &rows, "pop_I").iter().all(|&p| p == 1.0));
}

#[test]
fn trajectories_are_deterministic_across_runs_and_workers() {
    let dir = tempfile::tempdir().unwrap();
    let base = ["trajectories", "--preset", "optical", "--n-traj", "200", "--seed", "5"];
    let mut snapshots = Vec::new();
    for workers in ["1", "1", "4"] {
        let mut args = base.to_vec();
        args.extend(["--workers", workers]);
        ok(&args, dir.path());
        snapshots.push(
            ["merit.json", "trajectories.csv"].map(|name| without_timestamp(&dir.path().join(name))),
        );
    }
    assert_eq!(snapshots[0], snapshots[1]);
    assert_eq!(snapshots[0], snapshots[2]);

    let (header, rows) = read_csv(&dir.path().join("trajectories.csv"));
    let total: Vec<f64> = ["xi2", "xi1_plus", "xi1_minus", "xi0"]
        .iter()
        .map(|c| column(&header, &rows, c))
        .fold(vec![0.0; rows.len()], |acc, c| acc.iter().zip(c).map(|(a, b)| a + b).collect());
    assert!(total.iter().all(|t| (t - 1.0).abs() < 1e-9));

    let merit: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("merit.json")).unwrap()).unwrap();
    for field in ["P", "p2ph", "alpha", "F_model", "F_direct", "S_fixed", "S_opt", "se_P", "se_S_opt"] {
        assert!(merit["merit"][field].is_number(), "missing {field}");
    }
    assert_eq!(merit["provenance"]["window"], "exit");
    assert!(merit["events"].is_null());
}

#[test]
fn leak_out_window_reports_event_classes_and_dump() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &["trajectories", "--preset", "optical", "--n-traj", "100", "--window", "leak-out", "--dump"],
        dir.path(),
    );
    let merit: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("merit.json")).unwrap()).unwrap();
    let events = merit["events"].as_array().unwrap();
    assert_eq!(events.len(), 5);
    let total: f64 = events.iter().map(|e| e["probability"].as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9);
    assert_eq!(merit["provenance"]["window"], "leak-out");
    let dump = std::fs::read_to_string(dir.path().join("trajectories.ndjson")).unwrap();
    assert_eq!(dump.lines().count(), 100);
}

#[test]
fn decay_sweep_covers_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &["sweep-decay", "--n-traj", "50", "--kappa-grid", "0,0.1,0.2", "--gamma-grid", "0,0.1"],
        dir.path(),
    );
    let (header, rows) = read_csv(&dir.path().join("sweep_decay.csv"));
    assert_eq!(
        header,
        ["kappa_over_g", "gamma_over_g", "P", "F_model", "F_direct", "S_fixed", "S_opt", "se_P"]
    );
    assert_eq!(rows.len(), 6);
    let p = column(&header, &rows, "P");
    assert!(p[0] >= 0.999);
    assert!(p.iter().all(|x| (0.0..=1.0).contains(x)));
    assert!(dir.path().join("sweep_decay.json").exists());
}

#[test]
fn two_photon_detuning_costs_more_than_single_photon_detuning() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["sweep-detuning", "--single-grid", "0,0.5", "--two-grid", "0,0.5"], dir.path());
    let (header, rows) = read_csv(&dir.path().join("sweep_detuning.csv"));
    assert!(!header.contains(&"B_tesla".to_string()));
    let single = column(&header, &rows, "single_photon_detuning");
    let two = column(&header, &rows, "two_photon_detuning");
    let p = column(&header, &rows, "P");
    let at = |s: f64, t: f64| p[(0..p.len()).find(|&k| single[k] == s && two[k] == t).unwrap()];
    assert!(at(0.0, 0.0) >= 0.999);
    assert!(at(0.0, 0.5) < at(0.5, 0.0));

    ok(&["sweep-detuning", "--b-grid", "0,1e-4"], dir.path());
    let (header, rows) = read_csv(&dir.path().join("sweep_detuning.csv"));
    assert_eq!(header[0], "B_tesla");
    let dp = column(&header, &rows, "delta_plus");
    let dm = column(&header, &rows, "delta_minus");
    assert!(dp[1] > 0.0 && (dp[1] + dm[1]).abs() < 1e-15);
}

#[test]
fn oracle_check_passes_and_rejects_coarse_steps() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["oracle-check", "--preset", "fig4-calibrated", "--n-traj", "20"], dir.path());
    let (header, rows) = read_csv(&dir.path().join("oracle_check.csv"));
    assert_eq!(rows.len(), 15);
    assert!(column(&header, &rows, "z").iter().all(|z| z.abs() < 1e-6));

    ok(&["oracle-check", "--preset", "fig6a", "--n-traj", "2000", "--seed", "3"], dir.path());

    // Statistically visible integration error of the trajectories.
    let coarse = cli(&["oracle-check", "--preset", "fig6a", "--n-traj", "1000", "--dt", "1.0"], dir.path());
    assert_eq!(coarse.code, 2, "{}", coarse.stderr);
    // Steps beyond the jump-probability bound.
    let guard = cli(&["oracle-check", "--preset", "optical", "--n-traj", "10", "--dt", "5.4"], dir.path());
    assert_eq!(guard.code, 2, "{}", guard.stderr);
}

#[test]
fn calibration_reaches_pi_or_fails_numerically() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["calibrate", "--preset", "fig4"], dir.path());
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("calibrated_params.json")).unwrap(),
    )
    .unwrap();
    for key in ["area_cavity1", "area_cavity2"] {
        assert!((report[key].as_f64().unwrap() - std::f64::consts::PI).abs() < 1e-9);
    }
    let width = cli(&["calibrate", "--preset", "fig4", "--mode", "width"], dir.path());
    assert_eq!(width.code, 2);
    assert!(width.stderr.contains("calibration"));
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cli(&["bogus"], dir.path()).code, 1);
    assert_eq!(cli(&["coherent", "--preset", "nope"], dir.path()).code, 1);
    assert_eq!(cli(&["coherent", "--dt", "-1"], dir.path()).code, 1);
    let config = dir.path().join("bad.json");
    std::fs::write(&config, r#"{"n_trajectories": 3}"#).unwrap();
    let bad = cli(&["coherent", "--config", config.to_str().unwrap()], dir.path());
    assert_eq!(bad.code, 1);
    assert!(bad.stderr.contains("invalid config"));
    let missing = cli(&["coherent", "--config", "/nonexistent/config.json"], dir.path());
    assert_eq!(missing.code, 1);
}

#[test]
fn echoed_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["trajectories", "--preset", "fig6b", "--n-traj", "60", "--seed", "9"], dir.path());
    let first = without_timestamp(&dir.path().join("merit.json"));
    let merit: serde_json::Value = serde_json::from_str(&first).unwrap();
    let config = dir.path().join("echo.json");
    std::fs::write(&config, merit["provenance"]["config"].to_string()).unwrap();
    let again = dir.path().join("again");
    ok(&["trajectories", "--config", config.to_str().unwrap()], &again);
    let second: serde_json::Value =
        serde_json::from_str(&without_timestamp(&again.join("merit.json"))).unwrap();
    assert_eq!(second["merit"], merit["merit"]);
}

#[test]
fn shipped_configs_are_valid() {
    let dir = tempfile::tempdir().unwrap();
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut count = 0;
    for entry in std::fs::read_dir(configs).unwrap() {
        let path = entry.unwrap().path();
        let run = cli(&["calibrate", "--config", path.to_str().unwrap()], dir.path());
        assert_eq!(run.code, 0, "{}: {}", path.display(), run.stderr);
        count += 1;
    }
    assert!(count >= 6);
}
