//! End-to-end smoke tests: every subcommand runs against a small synthetic
//! dataset and leaves well-formed files behind.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_chargesim"))
}

fn run(dir: &Path, args: &[&str]) -> String {
    let output = bin()
        .args(["--seed", "3", "--out-dir", dir.to_str().unwrap()])
        .args(args)
        .output()
        .expect("spawning chargesim");
    assert!(
        output.status.success(),
        "chargesim {args:?} failed:\n{}",
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8(output.stdout).unwrap()
}

fn workdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("chargesim-cli-test-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// synth -> extract -> plan once, in a shared scratch dir.
fn pipeline(dir: &Path) {
    run(dir, &["synth", "--vehicles", "40", "--days", "2"]);
    run(dir, &["extract", "--input", dir.join("records.csv").to_str().unwrap()]);
    run(
        dir,
        &[
            "plan",
            "--demands",
            dir.join("demands.csv").to_str().unwrap(),
            "-p",
            "4",
            "--candidates",
            "200",
        ],
    );
}

fn csv_lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path).unwrap().lines().map(str::to_string).collect()
}

#[test]
fn full_pipeline_produces_expected_files() {
    let dir = workdir("pipeline");
    pipeline(&dir);

    let records = csv_lines(&dir.join("records.csv"));
    assert_eq!(records[0].split(',').count(), 4); // vehicle, timestamp, lon, lat
    assert!(records.len() > 1000);

    let demands = csv_lines(&dir.join("demands.csv"));
    assert_eq!(demands[0], "lon,lat,weight_kwh,arrival_iso8601,charge_hours,vehicle_id");
    assert!(demands.len() > 10);

    let plan: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("plan.json")).unwrap()).unwrap();
    assert_eq!(plan["p"], 4);
    assert_eq!(plan["open_sites"].as_array().unwrap().len(), 4);
    assert_eq!(plan["candidates"].as_array().unwrap().len(), 200);
    assert_eq!(plan["assignment"].as_array().unwrap().len(), demands.len() - 1);
    assert!(plan["objective"].as_f64().unwrap() > 0.0);
    assert!(plan["wall_time_s"].as_f64().unwrap() >= 0.0);

    // every stage leaves a manifest recording its parameters and seed
    for cmd in ["synth", "extract", "plan"] {
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.join(format!("manifest_{cmd}.json"))).unwrap())
                .unwrap();
        assert_eq!(manifest["command"], cmd);
        assert_eq!(manifest["seed"], 3);
    }
}

#[test]
fn analyze_emits_station_table() {
    let dir = workdir("analyze");
    pipeline(&dir);
    run(
        &dir,
        &[
            "analyze",
            "--demands",
            dir.join("demands.csv").to_str().unwrap(),
            "--plan",
            dir.join("plan.json").to_str().unwrap(),
            "--chargers",
            "24",
        ],
    );
    let rows = csv_lines(&dir.join("stations.csv"));
    assert!(rows[0].starts_with("site_index,lon,lat,demands,total_kwh,peak_hour"));
    assert_eq!(rows.len(), 5); // header + 4 stations
    let chargers: usize = rows[1..]
        .iter()
        .map(|r| r.split(',').nth(9).unwrap().parse::<usize>().unwrap())
        .sum();
    assert_eq!(chargers, 24);
}

#[test]
fn sweep_emits_monotone_budget_table_and_histograms() {
    let dir = workdir("sweep");
    pipeline(&dir);
    run(
        &dir,
        &[
            "sweep",
            "--demands",
            dir.join("demands.csv").to_str().unwrap(),
            "--plan",
            dir.join("plan.json").to_str().unwrap(),
            "--s-min",
            "14",
            "--s-max",
            "24",
            "--hist-at",
            "18",
            "--bins",
            "6",
        ],
    );
    let rows = csv_lines(&dir.join("sweep.csv"));
    assert_eq!(rows[0], "total_chargers,feasible,mean_wait_h,p_wait,mean_wait_h_unweighted,p_wait_unweighted");
    assert_eq!(rows.len(), 12);
    let mut last = f64::INFINITY;
    for row in &rows[1..] {
        let cols: Vec<&str> = row.split(',').collect();
        if cols[1] == "true" {
            let wait: f64 = cols[2].parse().unwrap();
            assert!(wait <= last);
            last = wait;
        }
    }
    for name in ["hist_wait.csv", "hist_pwait.csv"] {
        let hist = csv_lines(&dir.join(name));
        assert_eq!(hist[0], "bin_low,bin_high,count");
        assert_eq!(hist.len(), 7);
        let count: usize =
            hist[1..].iter().map(|r| r.split(',').nth(2).unwrap().parse::<usize>().unwrap()).sum();
        assert!(count <= 4); // overloaded stations are left out
    }
}

#[test]
fn simulate_reports_confidence_interval() {
    let dir = workdir("simulate");
    run(
        &dir,
        &[
            "simulate", "--lambda", "0.8", "--service", "erlang2", "--mean", "1.0", "--servers",
            "1", "--arrivals", "40000", "--replications", "5",
        ],
    );
    let sim: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("sim.json")).unwrap()).unwrap();
    assert!(sim["mean_wait"].as_f64().unwrap() > 0.0);
    assert!(sim["mean_wait_half_width"].as_f64().unwrap() > 0.0);
    assert_eq!(sim["replications"].as_array().unwrap().len(), 5);
}

#[test]
fn tradeoff_lists_best_station_count_per_budget() {
    let dir = workdir("tradeoff");
    pipeline(&dir);
    run(
        &dir,
        &[
            "tradeoff",
            "--demands",
            dir.join("demands.csv").to_str().unwrap(),
            "--p-values",
            "2,4",
            "--candidates",
            "200",
            "--s-min",
            "14",
            "--s-max",
            "18",
        ],
    );
    let rows = csv_lines(&dir.join("tradeoff.csv"));
    assert_eq!(rows[0], "p,total_chargers,feasible,mean_wait_min,mean_drive_min,total_cost_min");
    assert_eq!(rows.iter().filter(|r| r.starts_with("2,") || r.starts_with("4,")).count(), 10);
    assert!(rows.iter().any(|r| *r == "# best_p_per_budget"));
}

#[test]
fn config_file_overrides_defaults() {
    let dir = workdir("config");
    let config = dir.join("config.toml");
    std::fs::write(&config, "n_vehicles = 5\nn_days = 1\n").unwrap();
    let output = bin()
        .args(["--config", config.to_str().unwrap(), "--seed", "3"])
        .args(["--out-dir", dir.to_str().unwrap(), "synth"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let records = std::fs::read_to_string(dir.join("records.csv")).unwrap();
    let vehicles: std::collections::BTreeSet<&str> =
        records.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(vehicles.len(), 5);
}

#[test]
fn rejects_unknown_config_keys_and_missing_files() {
    let dir = workdir("errors");
    let config = dir.join("bad.toml");
    std::fs::write(&config, "no_such_knob = 1\n").unwrap();
    let output = bin()
        .args(["--config", config.to_str().unwrap(), "--out-dir", dir.to_str().unwrap(), "synth"])
        .output()
        .unwrap();
    assert!(!output.status.success());

    let output = bin()
        .args(["--out-dir", dir.to_str().unwrap(), "extract", "--input", "/no/such/file.csv"])
        .output()
        .unwrap();
    assert!(!output.status.success());
}
