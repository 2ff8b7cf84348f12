mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cwhfmt::planner::{chain_waypoints, PlanningContext, PrecomputedGraphData};
use cwhfmt::scenario::Scenario;

use common::workspace_root;

fn toy_path() -> PathBuf {
    workspace_root().join("scenarios/toy.toml")
}

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cwhfmt"))
        .args(args)
        .env("CWHFMT_THREADS", "1")
        .output()
        .expect("cli runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_variant(dir: &Path, name: &str, from: &str, to: &str) -> PathBuf {
    let text = std::fs::read_to_string(toy_path()).unwrap();
    assert!(text.contains(from), "toy scenario lacks `{from}`");
    let path = dir.join(name);
    std::fs::write(&path, text.replace(from, to)).unwrap();
    path
}

fn parse_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn help_documents_every_flag() {
    let top = String::from_utf8(cli(&["--help"]).stdout).unwrap();
    for word in ["precompute", "plan", "bench", "CWHFMT_THREADS"] {
        assert!(top.contains(word), "top-level help lacks {word}");
    }
    let cases: [(&str, &[&str]); 3] = [
        ("precompute", &["--scenario", "--out", "--json"]),
        ("plan", &["--scenario", "--data", "--no-smooth", "--strict-safety", "--out"]),
        ("bench", &["--scenario", "--sweep", "--out"]),
    ];
    for (cmd, flags) in cases {
        let out = cli(&[cmd, "--help"]);
        assert!(out.status.success());
        let text = String::from_utf8(out.stdout).unwrap();
        for flag in flags {
            assert!(text.contains(flag), "{cmd} help lacks {flag}");
        }
    }
}

#[test]
fn invalid_scenario_exits_2_and_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_variant(dir.path(), "bad.toml", "semi_axes_m = [35.0", "semi_axes_m = [-35.0");
    let out = cli(&["precompute", "--scenario", s(&bad), "--out", s(&dir.path().join("d.bin"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("koz.semi_axes"));
}

#[test]
fn unparsable_scenario_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_variant(dir.path(), "bad.toml", "[koz]", "[koz]\nshape = \"box\"");
    let out = cli(&["precompute", "--scenario", s(&bad), "--out", s(&dir.path().join("d.bin"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn exhausted_sampling_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_variant(
        dir.path(),
        "huge_koz.toml",
        "semi_axes_m = [35.0, 50.0, 15.0]",
        "semi_axes_m = [5000.0, 5000.0, 5000.0]",
    );
    let out = cli(&["precompute", "--scenario", s(&bad), "--out", s(&dir.path().join("d.bin"))]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn planner_failure_exits_4_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let tight = write_variant(dir.path(), "tight.toml", "j_bar_mps = 0.3", "j_bar_mps = 0.01");
    let data = dir.path().join("d.bin");
    assert!(cli(&["precompute", "--scenario", s(&tight), "--out", s(&data)]).status.success());
    let prefix = dir.path().join("run");
    let out = cli(&["plan", "--scenario", s(&tight), "--data", s(&data), "--out", s(&prefix)]);
    assert_eq!(out.status.code(), Some(4));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("run.report.json")).unwrap()).unwrap();
    assert_eq!(report["outcome"], "failure");
    assert_eq!(report["failed_leg"], 0);
    assert!(!dir.path().join("run.burns.csv").exists());
}

#[test]
fn mismatched_data_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.bin");
    assert!(cli(&["precompute", "--scenario", s(&toy_path()), "--out", s(&data)]).status.success());
    let other = write_variant(dir.path(), "other.toml", "radius_m = 20.0", "radius_m = 25.0");
    let out = cli(&["plan", "--scenario", s(&other), "--data", s(&data), "--out", s(&dir.path().join("p"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn plan_outputs_are_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.bin");
    let json = dir.path().join("d.json");
    let out = cli(&["precompute", "--scenario", s(&toy_path()), "--out", s(&data), "--json", s(&json)]);
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().contains("samples 52"));
    let twin = PrecomputedGraphData::from_json(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(twin.to_bytes(), std::fs::read(&data).unwrap());

    let toy = toy_path();
    for (name, extra) in [("smooth", &[][..]), ("raw", &["--no-smooth"][..]), ("strict", &["--strict-safety"][..])] {
        let prefix = dir.path().join(name);
        let mut args = vec!["plan", "--scenario", s(&toy), "--data", s(&data), "--out", s(&prefix)];
        args.extend_from_slice(extra);
        let out = cli(&args);
        assert!(out.status.success(), "{name}: {}", String::from_utf8_lossy(&out.stderr));
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join(format!("{name}.report.json"))).unwrap())
                .unwrap();
        assert_eq!(report["outcome"], "success");
        assert_eq!(report["end_state_error"]["within_tolerance"], true);
        let (header, rows) = parse_csv(&dir.path().join(format!("{name}.burns.csv")));
        assert_eq!(header, ["tau", "dvx", "dvy", "dvz", "norm", "fuel_allocated"]);
        let sum: f64 = rows.iter().map(|r| r[4].parse::<f64>().unwrap()).sum();
        assert!((report["total_cost_mps"].as_f64().unwrap() - sum).abs() <= 1e-9);
        let (theader, trows) = parse_csv(&dir.path().join(format!("{name}.traj.csv")));
        assert_eq!(theader, ["t", "dx", "dy", "dz", "dvx_state", "dvy_state", "dvz_state"]);
        assert!(trows.len() > 10);
        assert!(dir.path().join(format!("{name}.cam.json")).exists());
        let timing: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join(format!("{name}.timing.json"))).unwrap())
                .unwrap();
        assert!(timing["online_seconds"].as_f64().unwrap() >= 0.0);
    }

    // Without smoothing the burns file is the planner's schedule.
    let scenario = Scenario::from_path(&toy_path()).unwrap();
    let loaded = PrecomputedGraphData::load_for(&data, &scenario).unwrap();
    let plan = chain_waypoints(&PlanningContext::from_scenario(&scenario), &loaded, &scenario.initial_state()).unwrap();
    let (_, rows) = parse_csv(&dir.path().join("raw.burns.csv"));
    assert_eq!(rows.len(), plan.schedule.len());
    for (row, imp) in rows.iter().zip(plan.schedule.impulses()) {
        let v: Vec<f64> = row.iter().map(|x| x.parse().unwrap()).collect();
        assert_eq!(v[0], imp.tau);
        assert_eq!([v[1], v[2], v[3]], [imp.dv.x, imp.dv.y, imp.dv.z]);
    }
}

#[test]
fn bench_writes_one_row_per_cell_and_mode() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bench.csv");
    let out = cli(&["bench", "--scenario", s(&toy_path()), "--sweep", "n=30:50:3", "jbar=0.2:0.3:2", "--out", s(&csv)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = parse_csv(&csv);
    assert_eq!(header, ["n", "j_bar", "smoothed", "cost", "online_seconds", "outcome"]);
    assert_eq!(rows.len(), 12);
    let ns: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(ns, ["30", "30", "30", "30", "40", "40", "40", "40", "50", "50", "50", "50"]);
    assert_eq!(rows[0][1], "0.2");
    assert_eq!(rows[2][1], "0.3");
    for pair in rows.chunks(2) {
        assert_eq!(pair[0][2], "false");
        assert_eq!(pair[1][2], "true");
        if pair[0][5] == "success" {
            let raw: f64 = pair[0][3].parse().unwrap();
            let smooth: f64 = pair[1][3].parse().unwrap();
            assert!(smooth <= raw);
        } else {
            assert_eq!(pair[0][3], "");
        }
    }
}

#[test]
fn bad_sweep_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&["bench", "--scenario", s(&toy_path()), "--sweep", "m=1:2:3", "--out", s(&dir.path().join("b.csv"))]);
    assert_eq!(out.status.code(), Some(2));
}
