use std::path::Path;
use std::process::{Command, Output};

fn vrclt(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vrclt"))
        .args(args)
        .arg("--out-dir")
        .arg(dir)
        .env_remove("VRCLT_SEED")
        .output()
        .expect("binary runs")
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    (header, rows)
}

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap()
}

#[test]
fn config_errors_exit_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    for sets in [
        vec!["--set", "trajectories=0"],
        vec!["--set", "no_such_key=1"],
        vec!["--set", "problem.eigenvalues=[1, -2, 3, 4, 5]"],
        vec!["--set", "coverage.n=[3]"],
    ] {
        let experiment = if sets[1].starts_with("coverage") { "coverage" } else { "rates" };
        let mut args = vec![experiment];
        args.extend(&sets);
        let o = vrclt(&args, &out);
        assert_eq!(o.status.code(), Some(2), "{sets:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!out.exists(), "{sets:?} produced output");
    }
    let o = vrclt(&["rates", "--set", "no_such_key=1"], &out);
    assert!(String::from_utf8_lossy(&o.stderr).contains("no_such_key"));
}

#[test]
fn malformed_config_file_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, "{\n  \"steps\": 3,\n  oops\n}\n").unwrap();
    let o = vrclt(&["rates", "--config", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

#[test]
fn noise_free_rates_are_deterministic_and_bounded() {
    let dir = tempfile::tempdir().unwrap();
    let o = vrclt(&["rates", "--quiet", "--set", "problem.noise=0", "--set", "trajectories=5"], dir.path());
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    for alg in ["vr-sgd", "vr-accelerated", "vr-heavy-ball"] {
        let (h, rows) = read_csv(&dir.path().join(format!("rates_{alg}.csv")));
        assert_eq!(h, ["k", "N_k", "cum_oracle", "mean_err", "mse", "theory_bound"]);
        assert_eq!(rows.len(), 31);
        for r in &rows {
            let e: f64 = r[column(&h, "mean_err")].parse().unwrap();
            let mse: f64 = r[column(&h, "mse")].parse().unwrap();
            let bound: f64 = r[column(&h, "theory_bound")].parse().unwrap();
            // identical paths: no spread around the mean error
            assert!((mse - e * e).abs() <= 1e-12 * mse.max(1e-300), "{alg}: {r:?}");
            assert!(bound > 0.0 && mse <= bound * (1.0 + 1e-12), "{alg}: {r:?}");
        }
    }
}

#[test]
fn rates_bounds_dominate_on_default_quadratic() {
    let dir = tempfile::tempdir().unwrap();
    let o = vrclt(&["rates", "--quiet", "--set", "trajectories=400"], dir.path());
    assert!(o.status.success());
    for alg in ["vr-sgd", "vr-accelerated", "vr-heavy-ball"] {
        let (h, rows) = read_csv(&dir.path().join(format!("rates_{alg}.csv")));
        for r in rows {
            let mse: f64 = r[column(&h, "mse")].parse().unwrap();
            let bound: f64 = r[column(&h, "theory_bound")].parse().unwrap();
            assert!(mse <= bound, "{alg}: {r:?}");
        }
    }
}

#[test]
fn golden_rates_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = vrclt(&["rates", "--seed", "7", "--set", "trajectories=20", "--set", "steps=8"], dir.path());
    assert!(o.status.success());
    let golden = include_str!("golden/rates_summary.txt");
    assert_eq!(String::from_utf8(o.stdout).unwrap(), golden);
}

#[test]
fn seed_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_vrclt"))
        .args(["rates", "--set", "trajectories=2", "--set", "steps=2", "--out-dir"])
        .arg(dir.path())
        .env("VRCLT_SEED", "41")
        .output()
        .unwrap();
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("rates (seed 41)\n"));
}

#[test]
fn coverage_grid_shape() {
    let dir = tempfile::tempdir().unwrap();
    let o = vrclt(
        &[
            "coverage",
            "--seed",
            "3",
            "--set",
            "coverage.n_max=[100000, 1000, 10000]",
            "--set",
            "coverage.meta_reps=200",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (h, rows) = read_csv(&dir.path().join("coverage.csv"));
    assert_eq!(h[..2], ["N_max", "n"]);
    assert_eq!(h.len(), 2 + 2 * 3);
    assert_eq!(rows.len(), 12);
    let keys: Vec<(u64, u64)> = rows.iter().map(|r| (r[0].parse().unwrap(), r[1].parse().unwrap())).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    for r in &rows {
        for alg in ["vr-sgd", "vr-accelerated", "vr-heavy-ball"] {
            let c: f64 = r[column(&h, &format!("{alg}_coverage"))].parse().unwrap();
            assert!((0.0..=1.0).contains(&c));
        }
    }
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("coverage.json")).unwrap()).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 36);
    let summary = String::from_utf8(o.stdout).unwrap();
    assert_eq!(summary.lines().count(), 2 + 12);
}

#[test]
fn outputs_identical_across_worker_counts() {
    for (exp, sets) in [
        ("rates", vec!["--set", "trajectories=50"]),
        ("clt", vec!["--set", "trajectories=200", "--set", "steps=20"]),
        ("compare", vec!["--set", "trajectories=20", "--set", "compare.n_max=2000"]),
    ] {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let mut args = vec![exp, "--quiet", "--seed", "5"];
        args.extend(&sets);
        let mut one = args.clone();
        one.extend(["--workers", "1"]);
        let mut many = args.clone();
        many.extend(["--workers", "6"]);
        assert!(vrclt(&one, a.path()).status.success());
        assert!(vrclt(&many, b.path()).status.success());
        let mut names: Vec<_> = std::fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        assert!(!names.is_empty());
        for n in names {
            assert_eq!(
                std::fs::read(a.path().join(&n)).unwrap(),
                std::fs::read(b.path().join(&n)).unwrap(),
                "{exp}: {n:?}"
            );
        }
    }
}

#[test]
fn clt_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = vrclt(
        &["clt", "--quiet", "--set", "trajectories=300", "--set", "algorithms=[\"vr-heavy-ball\"]"],
        dir.path(),
    );
    assert!(o.status.success());
    let (h, rows) = read_csv(&dir.path().join("clt_vr-heavy-ball_samples.csv"));
    // stacked (x_k, x_{k−1}) rescaled errors
    assert_eq!(h.len(), 1 + 10);
    assert_eq!(rows.len(), 300);
    let (h, rows) = read_csv(&dir.path().join("clt_vr-heavy-ball_hist.csv"));
    assert_eq!(h, ["coordinate", "bin_lo", "bin_hi", "count", "density"]);
    let total: u64 = rows.iter().filter(|r| r[0] == "1").map(|r| r[3].parse::<u64>().unwrap()).sum();
    assert_eq!(total, 300);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("clt_vr-heavy-ball.json")).unwrap()).unwrap();
    assert_eq!(json["sigma"].as_array().unwrap().len(), 10);
}

#[test]
fn compare_includes_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let o = vrclt(
        &["compare", "--quiet", "--set", "trajectories=10", "--set", "compare.n_max=5000"],
        dir.path(),
    );
    assert!(o.status.success());
    let (h, rows) = read_csv(&dir.path().join("compare.csv"));
    assert_eq!(h, ["algorithm", "k", "cum_oracle", "mean_err", "mse"]);
    assert!(rows.iter().any(|r| r[0] == "baseline-sgd"));
    let last = rows.iter().rfind(|r| r[0] == "baseline-sgd").unwrap();
    assert!(last[2].parse::<u64>().unwrap() <= 5000);
}
