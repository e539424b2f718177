use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ocpkit"))
}

fn problem(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/problems").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn bryson_lgr_matches_the_analytic_cost() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let p = problem("bryson.ocp");
    let o = run(&["solve", p.to_str().unwrap(), "--method", "lgr", "--N", "30", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let j = summary(&out)["objective"].as_f64().unwrap();
    assert!((j - 16.0 / 3.0).abs() / (16.0 / 3.0) < 1e-3, "{j}");
    for f in ["trajectory.csv", "manifest.json", "x1.svg", "x2.svg", "u1.svg"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn moon_lander_final_time() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let p = problem("moonlander.ocp");
    let o = run(&[
        "solve",
        p.to_str().unwrap(),
        "--method",
        "lgr",
        "--intervals",
        "4",
        "--N",
        "10",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let tf = summary(&out)["tf"].as_f64().unwrap();
    assert!((tf - 4.164).abs() < 0.01, "{tf}");
}

#[test]
fn malformed_problem_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.ocp");
    fs::write(&bad, "[problem] states=1 controls=1\n[dynamics]\nx1' = u1 +\n").unwrap();
    let out = dir.path().join("o");
    let o = run(&["solve", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
    assert!(!out.exists());
}

#[test]
fn iteration_limit_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let p = problem("moonlander.ocp");
    let o = run(&["solve", p.to_str().unwrap(), "--max-iter", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(summary(&out)["status"], "iter_limit");
}

#[test]
fn single_mpc_step() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("mpc.toml");
    let p = problem("moonlander_mpc.ocp");
    fs::write(&cfg, format!("problem = {:?}\nt_ex = 0.2\nmax_iterations = 1\ngoal_tol = 0.1\n", p)).unwrap();
    let out = dir.path().join("o");
    let o = run(&["mpc", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let log = fs::read_to_string(out.join("plant_log.csv")).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines[0], "step,t0,solve_time,status,x1,x2,x1p,x2p");
    assert_eq!(lines.len(), 2);
    assert!(out.join("x1.svg").exists() && out.join("solve_time.svg").exists());
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("mpc.toml");
    fs::write(&cfg, "problem = \"x.ocp\"\nt_ex = 0.2\nspeed = 3\n").unwrap();
    let o = run(&["mpc", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn profile_of_a_two_solver_table() {
    let dir = tempfile::tempdir().unwrap();
    let results = dir.path().join("results.csv");
    fs::write(
        &results,
        "solver,p,rep,solve_time,status,collision\n\
         s1,1,0,2.0,optimal,false\ns1,2,0,1.0,optimal,false\n\
         s2,1,0,2.0,optimal,false\ns2,2,0,2.0,optimal,false\n",
    )
    .unwrap();
    let out = dir.path().join("o");
    let o = run(&["profile", results.to_str().unwrap(), "--window", "1:2", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("profile_w0.csv")).unwrap();
    assert_eq!(csv, "gamma,P_s1,P_s2\n1,1,0.5\n2,1,1\n");
    assert!(out.join("profile_w0.svg").exists());
}

#[test]
fn bench_then_profile_gives_nondecreasing_curves() {
    let dir = tempfile::tempdir().unwrap();
    let suite = dir.path().join("suite.toml");
    let p = problem("moonlander.ocp");
    fs::write(&suite, format!("problem = {:?}\nsolvers = [\"trapezoid\", \"lgr-2\"]\np_min = 4\np_max = 7\nreps = 1\n", p))
        .unwrap();
    let bench_out = dir.path().join("b");
    let o = run(&["bench", suite.to_str().unwrap(), "--out", bench_out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let results = fs::read_to_string(bench_out.join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 1 + 2 * 4);

    let prof_out = dir.path().join("p");
    let o = run(&["profile", bench_out.join("results.csv").to_str().unwrap(), "--out", prof_out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(prof_out.join("profile.csv")).unwrap();
    let rows: Vec<Vec<f64>> = csv.lines().skip(1).map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    for col in 1..rows[0].len() {
        for w in rows.windows(2) {
            assert!(w[1][col] >= w[0][col]);
            assert!((0.0..=1.0).contains(&w[1][col]));
        }
    }
}
