use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pcurl(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcurl"))
        .args(args)
        .current_dir(cwd)
        .env_remove("PCURL_OUTPUT_ROOT")
        .output()
        .unwrap()
}

fn column(csv_text: &str, name: &str) -> Vec<String> {
    let mut r = csv::Reader::from_reader(csv_text.as_bytes());
    let idx = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records().map(|rec| rec.unwrap()[idx].to_string()).collect()
}

fn floats(csv_text: &str, name: &str) -> Vec<f64> {
    column(csv_text, name).iter().map(|s| s.parse().unwrap()).collect()
}

#[test]
fn solve_p2_sine_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.cfg"),
        "# p = 2 manufactured case\ncase = p2_sine\np = 2\ndivisions = 4\noutput_dir = out\n",
    )
    .unwrap();
    let o = pcurl(&["solve", "--config", "run.cfg"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    for f in ["solution.vtk", "history.csv", "summary.txt", "config.txt"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let history = fs::read_to_string(out.join("history.csv")).unwrap();
    assert!(history.starts_with("stage,p,eps,newton_iter,residual,energy,constraint\n"));
    let residual = floats(&history, "residual");
    assert!(*residual.last().unwrap() <= 1e-9);
    assert_eq!(column(&history, "newton_iter").last().unwrap(), "1");
    let vtk = fs::read_to_string(out.join("solution.vtk")).unwrap();
    assert!(vtk.contains("CELLS 384 1920\n") && vtk.contains("VECTORS curl double"));
    assert!(fs::read_to_string(out.join("summary.txt")).unwrap().contains("status: OK"));
}

#[test]
fn rerun_gives_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let o = pcurl(
            &["solve", "--p", "6", "--divisions", "3", "--threads", "1", "--output_dir", name],
            dir.path(),
        );
        assert_eq!(o.status.code(), Some(0));
        fs::read(dir.path().join(name).join("history.csv")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn echoed_config_reproduces_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = pcurl(&["solve", "--p", "4", "--divisions", "3", "--output_dir", "first"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let first = dir.path().join("first");
    let o = pcurl(
        &["solve", "--config", first.join("config.txt").to_str().unwrap(), "--output_dir", "second"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        fs::read(first.join("history.csv")).unwrap(),
        fs::read(dir.path().join("second/history.csv")).unwrap()
    );
}

#[test]
fn low_exponent_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = pcurl(&["solve", "--p", "1.5", "--output_dir", "out"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("p >= 2"));
    assert!(!dir.path().join("out").exists());
    let o = pcurl(&["solve", "--nonsense", "1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn solver_failure_flags_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = pcurl(
        &["solve", "--p", "4", "--divisions", "3", "--max_newton", "1", "--output_dir", "out"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    let out = dir.path().join("out");
    assert!(fs::read_to_string(out.join("summary.txt")).unwrap().contains("FAILED (outputs are partial)"));
    assert!(fs::read_to_string(out.join("solution.vtk")).unwrap().lines().nth(1).unwrap().contains("PARTIAL"));
}

#[test]
fn missing_output_dir_is_created() {
    let dir = tempfile::tempdir().unwrap();
    let o = pcurl(&["friedrich", "--levels", "2", "--output_dir", "a/b/c"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("a/b/c/friedrich.csv").is_file());
}

#[test]
fn output_root_env_applies_to_relative_dirs() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("root");
    let o = Command::new(env!("CARGO_BIN_EXE_pcurl"))
        .args(["friedrich", "--levels", "2", "--output_dir", "rel"])
        .current_dir(dir.path())
        .env("PCURL_OUTPUT_ROOT", &root)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(root.join("rel/friedrich.csv").is_file());
    assert!(!dir.path().join("rel").exists());
}

#[test]
fn converge_errors_decrease() {
    let dir = tempfile::tempdir().unwrap();
    let o = pcurl(&["converge", "--p", "4", "--levels", "2,4,8", "--output_dir", "out"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let table = fs::read_to_string(dir.path().join("out/converge.csv")).unwrap();
    for col in ["l2_error", "curl_error"] {
        let e = floats(&table, col);
        assert_eq!(e.len(), 3);
        assert!(e.windows(2).all(|w| w[1] < w[0]), "{col}: {e:?}");
    }
}

#[test]
fn friedrich_table_approaches_cavity_value() {
    let dir = tempfile::tempdir().unwrap();
    let o = pcurl(&["friedrich", "--levels", "4,8", "--output_dir", "out"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let table = fs::read_to_string(dir.path().join("out/friedrich.csv")).unwrap();
    let c = floats(&table, "c_h");
    let target = 0.5f64.sqrt();
    assert!((c.last().unwrap() - target).abs() <= 0.05 * target, "{c:?}");
}

#[test]
fn verify_reports_analytic_constants() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let o = pcurl(&["verify", "--samples", "5000", "--seed", "7", "--output_dir", name], dir.path());
        assert_eq!(o.status.code(), Some(0));
        fs::read_to_string(dir.path().join(name).join("inequalities.csv")).unwrap()
    };
    let table = run("a");
    assert_eq!(table, run("b"));
    let which = column(&table, "inequality");
    let p = floats(&table, "p");
    let delta = floats(&table, "delta");
    let constant = floats(&table, "constant");
    for kind in ["ineq1", "ineq2"] {
        let row = (0..p.len()).find(|&i| which[i] == kind && p[i] == 2.0 && delta[i] == 0.0).unwrap();
        assert!((constant[row] - 1.0).abs() <= 1e-12, "{kind}: {}", constant[row]);
    }
    assert!(column(&table, "violations").iter().all(|v| v == "0"));
    let ps: Vec<f64> = {
        let mut v = p.clone();
        v.dedup();
        v
    };
    assert_eq!(ps, vec![2.0, 3.0, 4.0, 6.0, 10.0]);
    for f in ["green.csv", "potential.csv", "summary.txt", "config.txt"] {
        assert!(dir.path().join("a").join(f).is_file());
    }
}
