//! Browser bindings: an LGR grid viewer, a problem-file solver and a
//! performance-profile plotter. Every export returns a JSON string.

use ocpkit::bench::{perf_profile, perf_ratios, BenchmarkResult};
use ocpkit::colloc::{barycentric_eval, barycentric_weights, lgr_nodes};
use ocpkit::nlp::{InteriorPoint, SolveOptions};
use ocpkit::ocp::parse_problem;
use ocpkit::plot::{Plot, Series};
use ocpkit::problems;
use ocpkit::transcribe::{Scheme, Transcription};
use serde_json::json;
use wasm_bindgen::prelude::*;

type JsResult = Result<String, JsValue>;

fn fail(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

/// Bundled problem text by name (`bryson`, `moonlander`, `bicycle`).
#[wasm_bindgen]
pub fn preset(name: &str) -> JsResult {
    match name {
        "bryson" => Ok(problems::BRYSON.into()),
        "moonlander" => Ok(problems::MOON_LANDER.into()),
        "bicycle" => Ok(problems::BICYCLE.into()),
        _ => Err(fail(format!("no preset named `{name}`"))),
    }
}

/// LGR nodes and weights for `n` points, with a plot of the interpolant of
/// `1/(1 + 25x²)` through the nodes and `+1`.
#[wasm_bindgen]
pub fn lgr_view(n: usize) -> JsResult {
    if !(1..=200).contains(&n) {
        return Err(fail("n must be between 1 and 200"));
    }
    let (tau, w) = lgr_nodes(n).map_err(fail)?;
    let f = |x: f64| 1.0 / (1.0 + 25.0 * x * x);
    let mut nodes = tau.clone();
    nodes.push(1.0);
    let lambda = barycentric_weights(&nodes).map_err(fail)?;
    let vals: Vec<f64> = nodes.iter().map(|&x| f(x)).collect();
    let xs: Vec<f64> = (0..=400).map(|i| -1.0 + 2.0 * i as f64 / 400.0).collect();
    let exact = xs.iter().map(|&x| (x, f(x))).collect();
    let interp: Vec<(f64, f64)> = xs.iter().map(|&x| (x, barycentric_eval(&nodes, &lambda, &vals, x))).collect();
    let max_err = interp.iter().map(|&(x, y)| (y - f(x)).abs()).fold(0.0, f64::max);
    let svg = Plot::new(format!("LGR interpolation, N = {n}"), "τ", "f(τ)")
        .with(Series::new("1/(1+25τ²)", exact))
        .with(Series::new("interpolant", interp))
        .with(Series::new("nodes", nodes.iter().map(|&x| (x, f(x))).collect()))
        .to_svg();
    Ok(json!({
        "nodes": tau,
        "weights": w,
        "weight_sum": w.iter().sum::<f64>(),
        "max_error": max_err,
        "svg": svg,
    })
    .to_string())
}

/// Solves a problem file. `method` is `euler`, `trapezoid` or `lgr`.
#[wasm_bindgen]
pub fn solve(text: &str, method: &str, n: usize, intervals: usize) -> JsResult {
    if !(2..=400).contains(&n) {
        return Err(fail("N must be between 2 and 400"));
    }
    let scheme = match method {
        "euler" => Scheme::Euler { n },
        "trapezoid" => Scheme::Trapezoid { n },
        "lgr" => Scheme::lgr(intervals, n).map_err(fail)?,
        _ => return Err(fail(format!("unknown method `{method}`"))),
    };
    let ocp = parse_problem(text).and_then(|m| m.freeze()).map_err(fail)?;
    let tr = Transcription::assemble(&ocp, &scheme).map_err(fail)?;
    let solved = tr.solve(&InteriorPoint, None, None, &SolveOptions::default());
    let traj = &solved.trajectory;
    let mut states = Plot::new("states", "t (s)", "x");
    for d in 0..traj.n_st() {
        states.series.push(Series::new(format!("x{}", d + 1), traj.t.iter().zip(&traj.x).map(|(t, x)| (*t, x[d])).collect()));
    }
    let mut controls = Plot::new("controls", "t (s)", "u");
    for c in 0..traj.n_ctr() {
        controls.series.push(Series::new(format!("u{}", c + 1), traj.t.iter().zip(&traj.u).map(|(t, u)| (*t, u[c])).collect()));
    }
    let mut csv = Vec::new();
    traj.write_csv(&mut csv).map_err(fail)?;
    let s = &solved.solution;
    Ok(json!({
        "grid": scheme.to_string(),
        "status": s.status.to_string(),
        "objective": s.objective,
        "tf": traj.tf,
        "iterations": s.iterations,
        "solve_time": s.solve_time,
        "states_svg": states.to_svg(),
        "controls_svg": controls.to_svg(),
        "csv": String::from_utf8_lossy(&csv),
    })
    .to_string())
}

/// Performance profile of a benchmark results CSV over `[lo, hi]`.
#[wasm_bindgen]
pub fn profile(results_csv: &str, lo: f64, hi: f64) -> JsResult {
    if !(lo >= 1.0 && hi > lo) {
        return Err(fail("need 1 <= lo < hi"));
    }
    let runs = BenchmarkResult::read_csv(results_csv.as_bytes()).map_err(fail)?;
    if runs.is_empty() {
        return Err(fail("no rows"));
    }
    let result = BenchmarkResult::from_runs(runs);
    let ratios = perf_ratios(&result);
    let mut gammas: Vec<f64> = ratios.iter().flatten().copied().filter(|&r| r > lo && r < hi).collect();
    gammas.extend([lo, hi]);
    gammas.sort_by(f64::total_cmp);
    gammas.dedup();
    let prof = perf_profile(&ratios, &gammas);
    let mut plot = Plot::new("performance profile", "Γ", "P(r <= Γ)");
    plot.x_range = Some((lo, hi));
    plot.y_range = Some((0.0, 1.05));
    for (s, p) in result.solvers.iter().zip(&prof) {
        plot.series.push(Series::new(s, gammas.iter().copied().zip(p.iter().copied()).collect()).steps());
    }
    Ok(json!({ "solvers": result.solvers, "gamma": gammas, "profile": prof, "svg": plot.to_svg() }).to_string())
}
