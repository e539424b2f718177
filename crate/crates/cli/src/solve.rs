use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use ocpkit::nlp::{InteriorPoint, SolveOptions, Status};
use ocpkit::plot::{Plot, Series};
use ocpkit::transcribe::{Scheme, Trajectory, Transcription};
use serde::Serialize;

use crate::manifest::{create_dir, read_problem, write_json, RunManifest};
use crate::Outcome;

#[derive(clap::Args)]
pub struct Args {
    /// Problem file.
    problem: PathBuf,
    #[arg(long, default_value = "trapezoid", value_parser = ["euler", "trapezoid", "lgr"])]
    method: String,
    /// Grid points (euler, trapezoid) or points per interval (lgr).
    #[arg(long = "N", short = 'n', default_value_t = 50)]
    n: usize,
    /// Mesh intervals for lgr.
    #[arg(long, default_value_t = 1)]
    intervals: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = SolveOptions::default().kkt_tol)]
    tol: f64,
    #[arg(long, default_value_t = SolveOptions::default().max_iter)]
    max_iter: usize,
}

#[derive(Serialize)]
struct Summary {
    status: Status,
    objective: f64,
    tf: f64,
    iterations: usize,
    solve_time: f64,
    kkt: f64,
    message: String,
}

pub fn scheme(method: &str, n: usize, intervals: usize) -> Result<Scheme> {
    Ok(match method {
        "euler" => Scheme::Euler { n },
        "trapezoid" => Scheme::Trapezoid { n },
        "lgr" => Scheme::lgr(intervals, n)?,
        other => bail!("unknown method `{other}`"),
    })
}

/// One SVG per state and control channel.
pub fn channel_plots(traj: &Trajectory, dir: &std::path::Path) -> Result<()> {
    for d in 0..traj.n_st() {
        let pts = traj.t.iter().zip(&traj.x).map(|(t, x)| (*t, x[d])).collect();
        let name = format!("x{}", d + 1);
        let svg = Plot::new(&name, "t (s)", &name).with(Series::new("", pts)).to_svg();
        fs::write(dir.join(format!("{name}.svg")), svg)?;
    }
    for c in 0..traj.n_ctr() {
        let pts = traj.t.iter().zip(&traj.u).map(|(t, u)| (*t, u[c])).collect();
        let name = format!("u{}", c + 1);
        let svg = Plot::new(&name, "t (s)", &name).with(Series::new("", pts)).to_svg();
        fs::write(dir.join(format!("{name}.svg")), svg)?;
    }
    Ok(())
}

pub fn run(a: Args) -> Result<Outcome> {
    if a.n < 2 {
        bail!("--N must be at least 2");
    }
    let ocp = read_problem(&a.problem)?;
    let scheme = scheme(&a.method, a.n, a.intervals)?;
    let tr = Transcription::assemble(&ocp, &scheme).context("transcription")?;
    let opts = SolveOptions { kkt_tol: a.tol, max_iter: a.max_iter, ..SolveOptions::default() };
    let solved = tr.solve(&InteriorPoint, None, None, &opts);
    let s = &solved.solution;

    create_dir(&a.out)?;
    solved.trajectory.write_csv(BufWriter::new(File::create(a.out.join("trajectory.csv"))?))?;
    let summary = Summary {
        status: s.status,
        objective: s.objective,
        tf: solved.trajectory.tf,
        iterations: s.iterations,
        solve_time: s.solve_time,
        kkt: s.kkt,
        message: s.message.clone(),
    };
    write_json(&a.out.join("summary.json"), &summary)?;
    channel_plots(&solved.trajectory, &a.out)?;
    let mut m = RunManifest::new("solve", vec![a.problem.clone()], opts, &a.out);
    m.method = Some(scheme.method_name().to_string());
    m.grid = Some(scheme.to_string());
    m.write()?;

    println!(
        "{}: {} objective {:.6} tf {:.4} iterations {} solve time {:.3} s",
        scheme, s.status, s.objective, summary.tf, s.iterations, s.solve_time
    );
    Ok(if s.status == Status::Optimal { Outcome::Done } else { Outcome::NotOptimal })
}
