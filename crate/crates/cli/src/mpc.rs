use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ocpkit::mpc::{run_closed_loop, Goal, ModelPlant, MpcConfig};
use ocpkit::nlp::{InteriorPoint, SolveOptions, Status};
use ocpkit::plot::{Plot, Series};
use serde::{Deserialize, Serialize};

use crate::manifest::{create_dir, read_problem, relative_to, RunManifest};
use crate::solve::scheme;
use crate::Outcome;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MpcFile {
    /// Problem file, relative to the config file.
    problem: PathBuf,
    /// Initial plant state; the model's initial state when omitted.
    plant_x0: Option<Vec<f64>>,
    #[serde(default = "default_method")]
    method: String,
    #[serde(default = "default_n")]
    n: usize,
    #[serde(default = "one")]
    intervals: usize,
    t_ex: f64,
    #[serde(default = "yes")]
    predict_x0: bool,
    #[serde(default = "default_max_iterations")]
    max_iterations: usize,
    /// Half-width of the goal box around the model's fixed final state.
    goal_tol: Option<f64>,
    #[serde(default = "yes")]
    warm_multipliers: bool,
    #[serde(default)]
    options: SolveOptions,
}

fn default_method() -> String {
    "trapezoid".into()
}
fn default_n() -> usize {
    30
}
fn one() -> usize {
    1
}
fn yes() -> bool {
    true
}
fn default_max_iterations() -> usize {
    200
}

pub fn run(config: &Path, out: &Path) -> Result<Outcome> {
    let text = fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let file: MpcFile = toml::from_str(&text).with_context(|| format!("{}", config.display()))?;
    let problem = relative_to(config, &file.problem);
    let ocp = read_problem(&problem)?;
    let x_plant = match &file.plant_x0 {
        Some(x) => x.clone(),
        None => ocp
            .x0
            .iter()
            .map(|b| b.value())
            .collect::<Option<Vec<f64>>>()
            .context("the model has a free initial state; set plant_x0")?,
    };
    if file.t_ex <= 0.0 {
        bail!("t_ex must be positive");
    }
    let cfg = MpcConfig {
        t_ex: file.t_ex,
        predict_x0: file.predict_x0,
        max_iterations: file.max_iterations,
        goal: file.goal_tol.map(|tol| Goal::from_final_state(&ocp, tol)),
        scheme: scheme(&file.method, file.n, file.intervals)?,
        options: file.options,
        warm_multipliers: file.warm_multipliers,
    };
    let plant = ModelPlant::new(&ocp)?;
    let log = run_closed_loop(&ocp, &cfg, &InteriorPoint, &plant, &x_plant)?;

    create_dir(out)?;
    log.write_csv(BufWriter::new(File::create(out.join("plant_log.csv"))?))?;
    log.write_trace_csv(BufWriter::new(File::create(out.join("plant_trace.csv"))?))?;
    for d in 0..ocp.n_st {
        let name = format!("x{}", d + 1);
        let trace = log.trace.iter().map(|(t, x)| (*t, x[d])).collect();
        let starts = log.steps.iter().map(|s| (s.t0, s.x0_predicted[d])).collect();
        let svg = Plot::new(format!("closed loop {name}"), "t (s)", &name)
            .with(Series::new("plant", trace))
            .with(Series::new("solve start", starts))
            .to_svg();
        fs::write(out.join(format!("{name}.svg")), svg)?;
    }
    let times = log.steps.iter().map(|s| (s.t0, s.solve_time)).collect();
    let limit = vec![(0.0, cfg.t_ex), (log.trace.last().map_or(0.0, |p| p.0), cfg.t_ex)];
    let svg = Plot::new("solve time", "t (s)", "s")
        .with(Series::new("solve time", times))
        .with(Series::new("t_ex", limit))
        .to_svg();
    fs::write(out.join("solve_time.svg"), svg)?;
    let mut m = RunManifest::new("mpc", vec![config.to_path_buf(), problem], &cfg, out);
    m.method = Some(cfg.scheme.method_name().into());
    m.grid = Some(cfg.scheme.to_string());
    m.write()?;

    for w in &log.warnings {
        eprintln!("warning: {w}");
    }
    let x = log.final_state().unwrap_or(&x_plant);
    println!(
        "{} solves, goal {}, final state {:?}",
        log.steps.len(),
        if log.goal_reached { "reached" } else { "not reached" },
        x
    );
    let failed = log.initial_status.is_some_and(|s| s != Status::Optimal) || log.failed();
    Ok(if failed { Outcome::NotOptimal } else { Outcome::Done })
}
