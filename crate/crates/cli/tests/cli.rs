use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn lambda1(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lambda1"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("run.cfg");
    fs::write(&p, body).unwrap();
    p.display().to_string()
}

const DISK: &str = "# unit disk\nn = 1\ngrid.h = 0.0625\nrhs.f = 1\nboundary.phi = 0\nsolve.exact = t - 1\n";

#[test]
fn solve_disk_matches_exact_solution() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), DISK);
    let out = tmp.path().join("out");
    let o = lambda1(&["solve", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["converged"], true);
    assert!(r["linf_error"].as_f64().unwrap() <= 1e-8);
    let csv = fs::read_to_string(out.join("solution.csv")).unwrap();
    assert!(csv.starts_with("# lambda1 "));
    assert!(csv.lines().any(|l| l == "x1,y1,u,residual"));
}

#[test]
fn ball_quadratic_via_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let o = lambda1(&[
        "solve", "--set", "n=2", "--set", "grid.h=0.25", "--set", "rhs.f=1", "--set", "boundary.phi=t",
        "--set", "solve.exact=t", "--out", out,
    ]);
    assert_eq!(code(&o), 0);
    assert!(report(tmp.path())["linf_error"].as_f64().unwrap() <= 1e-8);
}

#[test]
fn config_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let missing = lambda1(&["solve", "--set", "rhs.f=1", "--out", out]);
    assert_eq!(code(&missing), 1);
    assert!(String::from_utf8_lossy(&missing.stderr).contains("boundary.phi"));

    let zero_f = lambda1(&["solve", "--set", "n=1", "--set", "rhs.f=0", "--set", "boundary.phi=t", "--out", out]);
    assert_eq!(code(&zero_f), 1);
    assert!(String::from_utf8_lossy(&zero_f.stderr).contains("node"));

    let unknown = lambda1(&["solve", "--set", "grid.spacing=1", "--out", out]);
    assert_eq!(code(&unknown), 1);
    let bad_kind = lambda1(&[
        "solve", "--set", "n=1", "--set", "rhs.f=1", "--set", "boundary.phi=t", "--set", "operator.kind=bogus",
        "--out", out,
    ]);
    assert_eq!(code(&bad_kind), 1);
    assert_eq!(code(&lambda1(&["frobnicate"])), 1);
}

#[test]
fn sweep_cap_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), DISK);
    let o = lambda1(&["solve", "--config", &cfg, "--set", "solver.max_sweeps=3", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert_eq!(report(tmp.path())["converged"], false);
    assert!(tmp.path().join("solution.csv").exists());
}

#[test]
fn identical_config_gives_identical_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), DISK);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for d in [&a, &b] {
        assert_eq!(code(&lambda1(&["solve", "--config", &cfg, "--out", d.to_str().unwrap()])), 0);
    }
    assert_eq!(fs::read(a.join("solution.csv")).unwrap(), fs::read(b.join("solution.csv")).unwrap());
}

#[test]
fn csv_round_trip_reproduces_residuals() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &format!("{DISK}rhs.f = 2 - t\nboundary.phi = 2*t - t^2/4 - 1.75\n"));
    let s = tmp.path().join("s");
    let v = tmp.path().join("v");
    assert_eq!(code(&lambda1(&["solve", "--config", &cfg, "--out", s.to_str().unwrap()])), 0);
    let field = s.join("solution.csv");
    let o = lambda1(&["verify", field.to_str().unwrap(), "--config", &cfg, "--out", v.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (rs, rv) = (report(&s), report(&v));
    assert_eq!(rs["max_abs_wide"], rv["max_abs_wide"]);
    assert_eq!(rs["mean_abs_wide"], rv["mean_abs_wide"]);
    assert_eq!(rv["subsolution"], true);
    assert_eq!(rv["supersolution"], true);
}

#[test]
fn verify_barrier_and_corrupted_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &format!("{DISK}solve.write_bounds = true\n"));
    let s = tmp.path().join("s");
    assert_eq!(code(&lambda1(&["solve", "--config", &cfg, "--out", s.to_str().unwrap()])), 0);

    let v = tmp.path().join("v");
    let barrier = s.join("barrier.csv");
    assert_eq!(code(&lambda1(&["verify", barrier.to_str().unwrap(), "--config", &cfg, "--out", v.to_str().unwrap()])), 0);
    assert_eq!(report(&v)["subsolution"], true);
    assert_eq!(report(&v)["supersolution"], false);

    // Bump the value at the 40th unknown.
    let text = fs::read_to_string(s.join("solution.csv")).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let header = lines.iter().position(|l| l.starts_with("x1,")).unwrap();
    let mut cells: Vec<String> = lines[header + 40].split(',').map(String::from).collect();
    cells[2] = format!("{:.16e}", cells[2].parse::<f64>().unwrap() + 1.0);
    lines[header + 40] = cells.join(",");
    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, lines.join("\n")).unwrap();
    assert_eq!(code(&lambda1(&["verify", bad.to_str().unwrap(), "--config", &cfg, "--out", v.to_str().unwrap()])), 0);
    let r = report(&v);
    // In n = 1 the operator is the Laplacian: the node and its four neighbours.
    let rows: Vec<u64> = r["failure_rows"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    assert!(rows.contains(&40) && rows.len() <= 5, "{rows:?}");
    assert_eq!(r["supersolution"], false);

    // A field from another grid is rejected.
    let o = lambda1(&["verify", bad.to_str().unwrap(), "--config", &cfg, "--set", "grid.h=0.125", "--out", v.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("row 1"));
}

#[test]
fn compare_orderings() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &format!("{DISK}solve.write_bounds = true\n"));
    let s = tmp.path().join("s");
    assert_eq!(code(&lambda1(&["solve", "--config", &cfg, "--out", s.to_str().unwrap()])), 0);
    let path = |name: &str| s.join(name).to_str().unwrap().to_string();
    let c = tmp.path().join("c");
    let out = c.to_str().unwrap();

    let o = lambda1(&["compare", &path("barrier.csv"), &path("harmonic.csv"), "--config", &cfg, "--out", out]);
    assert_eq!(code(&o), 0);
    assert_eq!(report(&c)["pass"], true);
    assert_eq!(report(&c)["shift_probe_ok"], true);

    // solution + 0.1 against the solution.
    let text = fs::read_to_string(path("solution.csv")).unwrap();
    let shifted: Vec<String> = text
        .lines()
        .map(|l| {
            if l.starts_with('#') || l.starts_with("x1,") {
                return l.to_string();
            }
            let mut cells: Vec<String> = l.split(',').map(String::from).collect();
            cells[2] = format!("{:.16e}", cells[2].parse::<f64>().unwrap() + 0.1);
            cells.join(",")
        })
        .collect();
    let plus = tmp.path().join("plus.csv");
    fs::write(&plus, shifted.join("\n")).unwrap();
    let plus = plus.to_str().unwrap();
    assert_eq!(code(&lambda1(&["compare", &path("solution.csv"), plus, "--config", &cfg, "--out", out])), 0);

    let o = lambda1(&["compare", plus, &path("solution.csv"), "--config", &cfg, "--set", "compare.claimed_gap=0", "--out", out]);
    assert_eq!(code(&o), 1);
    let r = report(&c);
    assert_eq!(r["pass"], false);
    assert!((r["interior_violation"].as_f64().unwrap() - 0.1).abs() < 1e-12);

    // The harmonic field is not a subsolution.
    let o = lambda1(&["compare", &path("harmonic.csv"), &path("barrier.csv"), "--config", &cfg, "--out", out]);
    assert_eq!(code(&o), 1);
    assert_eq!(report(&c)["failed_verdict"], "subsolution");
}

#[test]
fn operators_table() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let o = lambda1(&[
        "operators", "--set", "operators.list=lambda1; monge_ampere; lambda_k(2)", "--set", "operators.samples=200",
        "--set", "operators.trials=100", "--seed", "4", "--out", out,
    ]);
    assert_eq!(code(&o), 0);
    let table = fs::read_to_string(tmp.path().join("table.csv")).unwrap();
    let rows: Vec<&str> = table.lines().filter(|l| l.starts_with('"')).collect();
    assert_eq!(rows.len(), 3);
    let first: Vec<&str> = rows[0].split(',').collect();
    assert!(first[3].parse::<f64>().unwrap() >= 1.0 - 1e-9);
    assert!(rows[1].starts_with("\"monge_ampere\",2,200,") && rows[1].contains(",200,"));
    assert!(rows[2].contains("A=[") && rows[2].contains("G(mid)=5.000000e-1"));
}

#[test]
fn oracle_outputs_and_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let o = lambda1(&["oracle", "--set", "n=1", "--set", "grid.h=0.125", "--set", "oracle.profile=2 - t", "--out", a.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let r = report(&a);
    assert_eq!(r["admissible"], true);
    assert!(r["roundtrip_defect"].as_f64().unwrap() <= 1e-8);
    assert!(a.join("oracle.csv").exists());

    let q = tmp.path().join("q");
    let o = lambda1(&[
        "oracle", "--set", "oracle.kind=quadratic", "--set", "oracle.hessian=1,0,0,4", "--set", "operator.kind=monge_ampere",
        "--set", "grid.h=0.25", "--out", q.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    assert!((report(&q)["f_value"].as_f64().unwrap() - 2.0).abs() < 1e-12);

    let b = tmp.path().join("b");
    let o = lambda1(&["oracle", "--set", "n=1", "--set", "oracle.profile=1 + t", "--out", b.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert_eq!(report(&b)["flagged"], true);
}
