use std::path::{Path, PathBuf};

use maxent::cli::{self, ModelFile, EXIT_CONFIG, EXIT_LEFT_HULL, EXIT_OK, EXIT_OUTSIDE_HULL};
use maxent::dynamics::eval_field;
use maxent::formats::{read_table, read_trajectory, write_table};

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn run(args: &[&str]) -> Run {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv: Vec<String> = std::iter::once("maxent").chain(args.iter().copied()).map(String::from).collect();
    let code = cli::run(argv, toml::Table::new(), &mut out, &mut err);
    Run {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) {
    let header: Vec<String> = header.iter().map(|h| h.to_string()).collect();
    write_table(path, &header, rows).unwrap();
}

/// Rotation field `(−y, x)` sampled on a grid over `[−1.5, 1.5]²`.
fn rotation_model(dir: &Path) -> PathBuf {
    let data = dir.join("rot.csv");
    let rows: Vec<Vec<f64>> = (0..9)
        .flat_map(|i| (0..9).map(move |j| (-1.5 + 0.375 * i as f64, -1.5 + 0.375 * j as f64)))
        .map(|(x, y)| vec![x, y, -y, x])
        .collect();
    write_csv(&data, &["x1", "x2", "dx1", "dx2"], &rows);
    let model = dir.join("rot.json");
    let r = run(&["fit", "--data", s(&data), "--out", s(&model), "--set", "beta=2", "--set", "nodes.padding=0"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    model
}

#[test]
fn fit_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let bench_dir = dir.path().join("sine");
    let r = run(&["bench", "--experiment", "sine", "--out-dir", s(&bench_dir)]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    assert!(r.stdout.starts_with("sine"));

    let model = dir.path().join("m.json");
    let train = bench_dir.join("train.csv");
    let r = run(&[
        "fit", "--data", s(&train), "--out", s(&model),
        "--set", "beta=100", "--set", "nodes.counts=[10]", "--set", "nodes.bounds=[[0.0, 1.0]]",
    ]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let loaded = ModelFile::load(&model).unwrap();
    assert!(loaded.model.fit_reports[0].training_rms < 1e-3);

    let preds = dir.path().join("p.csv");
    let points = bench_dir.join("test_predictions.csv");
    assert_eq!(run(&["eval", "--model", s(&model), "--points", s(&points), "--out", s(&preds)]).code, EXIT_OK);
    let table = read_table(&preds).unwrap();
    assert_eq!(table.header, vec!["x1", "f"]);
    for row in &table.rows {
        let direct = eval_field(&loaded.model, &row[..1]).unwrap()[0];
        assert!((row[1] - direct).abs() <= 1e-15);
    }
    // the stored model reproduces the in-memory fit exactly
    let again = ModelFile::load(&model).unwrap();
    assert_eq!(again, loaded);
}

#[test]
fn interpolating_model_reproduces_training_values() {
    let dir = tempfile::tempdir().unwrap();
    let bench_dir = dir.path().join("b");
    assert_eq!(run(&["bench", "--experiment", "sine", "--out-dir", s(&bench_dir)]).code, EXIT_OK);
    let train = bench_dir.join("train.csv");
    let model = dir.path().join("bd.json");
    let r = run(&["fit", "--data", s(&train), "--out", s(&model), "--set", "beta=100", "--set", "nodes.from_data=true"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let preds = dir.path().join("p.csv");
    assert_eq!(run(&["eval", "--model", s(&model), "--points", s(&train), "--out", s(&preds)]).code, EXIT_OK);
    let truth = read_table(&train).unwrap();
    let got = read_table(&preds).unwrap();
    for (a, b) in truth.rows.iter().zip(&got.rows) {
        assert!((a[1] - b[1]).abs() <= 1e-10);
    }
    // at a hull vertex the prediction is that node's coefficient
    let file = ModelFile::load(&model).unwrap();
    let nodes = &file.model.nodes;
    let left = (0..nodes.len()).min_by(|&a, &b| nodes.node(a)[0].total_cmp(&nodes.node(b)[0])).unwrap();
    let v = eval_field(&file.model, nodes.node(left)).unwrap()[0];
    assert!((v - file.model.coefficients[0][left]).abs() <= 1e-8, "{v} vs {}", file.model.coefficients[0][left]);
}

#[test]
fn failures_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "x1,f\n").unwrap();
    assert_eq!(run(&["fit", "--data", s(&empty), "--out", "unused.json"]).code, EXIT_CONFIG);

    let model = rotation_model(dir.path());
    let outside = dir.path().join("out.csv");
    write_csv(&outside, &["x1", "x2"], &[vec![0.0, 0.0], vec![0.1, 0.2], vec![3.0, 0.0]]);
    let r = run(&["eval", "--model", s(&model), "--points", s(&outside), "--out", s(&dir.path().join("o.csv"))]);
    assert_eq!(r.code, EXIT_OUTSIDE_HULL);
    assert!(r.stderr.contains("row 3"), "{}", r.stderr);
    assert!(r.stderr.contains("out.csv"), "{}", r.stderr);

    let traj = dir.path().join("t.csv");
    let sim = |x0: &str, dt: &str| run(&["simulate", "--model", s(&model), "--x0", x0, "--t1", "1", "--dt", dt, "--out", s(&traj)]).code;
    assert_eq!(sim("0.5,0", "0"), EXIT_CONFIG);
    assert_eq!(sim("0.5,0", "-0.1"), EXIT_CONFIG);
    assert_eq!(sim("2.0,0", "0.01"), EXIT_OUTSIDE_HULL);
    assert_eq!(sim("0.5,abc", "0.01"), EXIT_CONFIG);

    assert_eq!(run(&["bench", "--experiment", "nope"]).code, EXIT_CONFIG);
    assert_eq!(run(&["fit", "--data", s(&empty), "--out", "x", "--set", "bogus=1"]).code, EXIT_CONFIG);
    assert_eq!(run(&["frobnicate"]).code, EXIT_CONFIG);
}

#[test]
fn simulate_follows_the_rotation_and_reports_exits() {
    let dir = tempfile::tempdir().unwrap();
    let model = rotation_model(dir.path());
    let out = dir.path().join("circle.csv");
    let r = run(&["simulate", "--model", s(&model), "--x0", "1,0", "--t1", "3", "--dt", "0.01", "--out", s(&out)]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let traj = read_trajectory(&out).unwrap();
    let last = traj.last_state().unwrap();
    assert!((last[0] - 3f64.cos()).abs() < 1e-6 && (last[1] - 3f64.sin()).abs() < 1e-6);

    // circles of radius below 1.5 stay in the square, larger ones cross its edge
    let exit = dir.path().join("exit.csv");
    let r = run(&["simulate", "--model", s(&model), "--x0", "1.45,0", "--t1", "3", "--dt", "0.01", "--out", s(&exit)]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let spiral = dir.path().join("spiral.csv");
    let r = run(&["simulate", "--model", s(&model), "--x0", "1.5,0.6", "--t1", "3", "--dt", "0.01", "--out", s(&spiral)]);
    assert_eq!(r.code, EXIT_LEFT_HULL, "{}", r.stderr);
    assert!(r.stderr.contains("last valid time"));
    let partial = read_trajectory(&spiral).unwrap();
    assert!(partial.len() > 1 && *partial.times.last().unwrap() < 3.0);
}

#[test]
fn printed_bench_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let r = run(&["bench", "--experiment", "gauss2d", "--baseline", "--set", "beta=8", "--print-config"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let config = dir.path().join("c.toml");
    std::fs::write(&config, &r.stdout).unwrap();
    let again = run(&["bench", "--experiment", "gauss2d", "--config", s(&config), "--print-config"]);
    assert_eq!(again.stdout, r.stdout);

    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(run(&["bench", "--experiment", "gauss2d", "--config", s(&config), "--out-dir", s(&a)]).code, EXIT_OK);
    assert_eq!(
        run(&["bench", "--experiment", "gauss2d", "--baseline", "--set", "beta=8", "--out-dir", s(&b)]).code,
        EXIT_OK
    );
    for name in ["report.json", "train.csv", "train_predictions.csv", "test_predictions.csv"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["beta"], 8.0);
    assert!(report["baseline"].is_object());
}

#[test]
fn global_basis_override() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g");
    let r = run(&["bench", "--experiment", "sine", "--set", "beta=0", "--out-dir", s(&out)]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["beta"], 0.0);
}

#[test]
fn version_flag() {
    let r = run(&["--version"]);
    assert_eq!(r.code, EXIT_OK);
    assert!(r.stdout.contains(env!("CARGO_PKG_VERSION")));
}
