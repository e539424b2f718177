//! Solver-by-fidelity timing matrices and Dolan-Moré performance profiles.

use std::io::{self, BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nlp::{NlpSolver, SolveOptions, Status};
use crate::ocp::Ocp;
use crate::transcribe::{Scheme, Trajectory, Transcription};

/// Ratio assigned to cells a solver did not solve.
pub const R_M: f64 = 1e6;

/// Number of uniform samples used by [`collision_check`].
pub const COLLISION_SAMPLES: usize = 200;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("trajectory has {n_st} states, obstacle needs indices {x} and {y}")]
    MissingStates { n_st: usize, x: usize, y: usize },
    #[error("unknown solver id `{0}` (expected euler, trapezoid or lgr-K)")]
    UnknownSolver(String),
    #[error("results line {line}: {msg}")]
    Csv { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Elliptic keep-out zone with a safety margin around it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub center: [f64; 2],
    pub semi_axes: [f64; 2],
    pub margin: f64,
    /// State indices holding the planar position.
    #[serde(default = "default_xy")]
    pub states: [usize; 2],
}

fn default_xy() -> [usize; 2] {
    [0, 1]
}

impl Obstacle {
    /// The obstacle of the bundled bicycle problem.
    pub fn bicycle() -> Self {
        Obstacle { center: [0.0, 50.0], semi_axes: [5.0, 5.0], margin: 2.5, states: [0, 1] }
    }

    /// Normalized squared distance; `<= 1` is inside or on the margin.
    pub fn level(&self, x: f64, y: f64) -> f64 {
        let a = self.semi_axes[0] + self.margin;
        let b = self.semi_axes[1] + self.margin;
        ((x - self.center[0]) / a).powi(2) + ((y - self.center[1]) / b).powi(2)
    }
}

/// Samples the interpolated path at [`COLLISION_SAMPLES`] uniform times and
/// reports whether any sample lies inside the obstacle or on its boundary.
pub fn collision_check(traj: &Trajectory, obs: &Obstacle) -> Result<bool, BenchError> {
    let [ix, iy] = obs.states;
    if traj.n_st() <= ix.max(iy) {
        return Err(BenchError::MissingStates { n_st: traj.n_st(), x: ix, y: iy });
    }
    let (t0, t1) = (traj.t[0], *traj.t.last().unwrap());
    Ok((0..COLLISION_SAMPLES).any(|k| {
        let t = t0 + (t1 - t0) * k as f64 / (COLLISION_SAMPLES - 1) as f64;
        let s = traj.state_at(t);
        obs.level(s[ix], s[iy]) <= 1.0
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    /// Solver ids: `euler`, `trapezoid` or `lgr-K` for K intervals.
    pub solvers: Vec<String>,
    /// Points (h-methods) or points per interval (LGR).
    pub fidelities: Vec<usize>,
    pub reps: usize,
    pub options: SolveOptions,
    pub parallel: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            solvers: ["euler", "trapezoid", "lgr-1", "lgr-2", "lgr-4"].map(String::from).to_vec(),
            fidelities: (2..=32).collect(),
            reps: 2,
            options: SolveOptions::default(),
            parallel: false,
        }
    }
}

impl BenchConfig {
    /// The full-scale matrix: 101 fidelities, three repetitions.
    pub fn full() -> Self {
        BenchConfig { fidelities: (2..=102).collect(), reps: 3, ..Self::default() }
    }
}

/// One repetition of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Run {
    pub solver: String,
    pub p: usize,
    pub rep: usize,
    pub solve_time: f64,
    pub status: Status,
    pub collision: bool,
}

impl Run {
    pub fn ok(&self) -> bool {
        self.status == Status::Optimal && !self.collision
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub solvers: Vec<String>,
    pub fidelities: Vec<usize>,
    /// Mean solve time per `[solver][fidelity]`; NaN marks a failed cell.
    pub times: Vec<Vec<f64>>,
    pub runs: Vec<Run>,
}

impl BenchmarkResult {
    /// Aggregates repetitions: a cell fails if any repetition failed.
    pub fn from_runs(runs: Vec<Run>) -> Self {
        let mut solvers: Vec<String> = Vec::new();
        let mut fidelities: Vec<usize> = Vec::new();
        for r in &runs {
            if !solvers.contains(&r.solver) {
                solvers.push(r.solver.clone());
            }
            if !fidelities.contains(&r.p) {
                fidelities.push(r.p);
            }
        }
        fidelities.sort_unstable();
        let times = solvers
            .iter()
            .map(|s| {
                fidelities
                    .iter()
                    .map(|&p| {
                        let cell: Vec<&Run> = runs.iter().filter(|r| &r.solver == s && r.p == p).collect();
                        if cell.is_empty() || cell.iter().any(|r| !r.ok()) {
                            f64::NAN
                        } else {
                            cell.iter().map(|r| r.solve_time).sum::<f64>() / cell.len() as f64
                        }
                    })
                    .collect()
            })
            .collect();
        BenchmarkResult { solvers, fidelities, times, runs }
    }

    pub fn failed(&self, s: usize, p: usize) -> bool {
        self.times[s][p].is_nan()
    }

    pub fn write_csv(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "solver,p,rep,solve_time,status,collision")?;
        for r in &self.runs {
            writeln!(w, "{},{},{},{},{},{}", r.solver, r.p, r.rep, r.solve_time, r.status, r.collision)?;
        }
        Ok(())
    }

    /// Reads the format written by [`write_csv`](Self::write_csv).
    pub fn read_csv(r: impl BufRead) -> Result<Vec<Run>, BenchError> {
        let mut runs = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if i == 0 || line.is_empty() {
                continue;
            }
            let bad = |msg: &str| BenchError::Csv { line: i + 1, msg: msg.to_string() };
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(bad("expected 6 fields"));
            }
            let status = match f[4] {
                "optimal" => Status::Optimal,
                "iter_limit" => Status::IterLimit,
                "time_limit" => Status::TimeLimit,
                "infeasible" => Status::Infeasible,
                _ => return Err(bad("unknown status")),
            };
            runs.push(Run {
                solver: f[0].to_string(),
                p: f[1].parse().map_err(|_| bad("bad p"))?,
                rep: f[2].parse().map_err(|_| bad("bad rep"))?,
                solve_time: f[3].parse().map_err(|_| bad("bad solve_time"))?,
                status,
                collision: f[5].parse().map_err(|_| bad("bad collision flag"))?,
            });
        }
        Ok(runs)
    }
}

/// Solves one repetition; model assembly is not timed.
pub fn run_cell(
    ocp: &Ocp,
    obstacle: Option<&Obstacle>,
    solver: &dyn NlpSolver,
    id: &str,
    p: usize,
    rep: usize,
    opts: &SolveOptions,
) -> Result<(Run, Option<Trajectory>), BenchError> {
    let scheme = Scheme::from_id(id, p).ok_or_else(|| BenchError::UnknownSolver(id.to_string()))?;
    let failed = |status| Run { solver: id.to_string(), p, rep, solve_time: f64::NAN, status, collision: false };
    let tr = match Transcription::assemble(ocp, &scheme) {
        Ok(tr) => tr,
        Err(_) => return Ok((failed(Status::Infeasible), None)),
    };
    let s = tr.solve(solver, None, None, opts);
    let collision = match obstacle {
        Some(o) if s.solution.status == Status::Optimal => collision_check(&s.trajectory, o)?,
        _ => false,
    };
    let run = Run {
        solver: id.to_string(),
        p,
        rep,
        solve_time: s.solution.solve_time,
        status: s.solution.status,
        collision,
    };
    Ok((run, Some(s.trajectory)))
}

/// Runs every solver at every fidelity `reps` times.
pub fn run_matrix(
    ocp: &Ocp,
    obstacle: Option<&Obstacle>,
    solver: &dyn NlpSolver,
    cfg: &BenchConfig,
) -> Result<BenchmarkResult, BenchError> {
    for id in &cfg.solvers {
        if Scheme::from_id(id, 2).is_none() {
            return Err(BenchError::UnknownSolver(id.clone()));
        }
    }
    let cells: Vec<(&str, usize)> =
        cfg.solvers.iter().flat_map(|s| cfg.fidelities.iter().map(move |&p| (s.as_str(), p))).collect();
    let cell = |&(id, p): &(&str, usize)| -> Result<Vec<Run>, BenchError> {
        (0..cfg.reps).map(|rep| run_cell(ocp, obstacle, solver, id, p, rep, &cfg.options).map(|r| r.0)).collect()
    };
    let runs: Vec<Vec<Run>> = if cfg.parallel {
        cells.par_iter().map(cell).collect::<Result<_, _>>()?
    } else {
        cells.iter().map(cell).collect::<Result<_, _>>()?
    };
    Ok(BenchmarkResult::from_runs(runs.into_iter().flatten().collect()))
}

/// `r[s][p] = t[s][p] / min_s t[s][p]`, with [`R_M`] for failed cells.
pub fn perf_ratios(r: &BenchmarkResult) -> Vec<Vec<f64>> {
    let np = r.fidelities.len();
    let best: Vec<f64> = (0..np)
        .map(|p| r.times.iter().map(|row| row[p]).filter(|t| !t.is_nan()).fold(f64::INFINITY, f64::min))
        .collect();
    r.times
        .iter()
        .map(|row| {
            row.iter()
                .zip(&best)
                .map(|(&t, &b)| {
                    if t.is_nan() {
                        R_M
                    } else if b > 0.0 {
                        t / b
                    } else {
                        1.0
                    }
                })
                .collect()
        })
        .collect()
}

/// Fraction of problems each solver solved within a factor `Γ` of the
/// best, evaluated on `gammas`. Returns `[solver][gamma]`.
pub fn perf_profile(ratios: &[Vec<f64>], gammas: &[f64]) -> Vec<Vec<f64>> {
    ratios
        .iter()
        .map(|row| {
            let n = row.len().max(1) as f64;
            gammas.iter().map(|&g| row.iter().filter(|&&r| r <= g).count() as f64 / n).collect()
        })
        .collect()
}

/// `n` evenly spaced values from `lo` to `hi`.
pub fn gamma_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

pub fn write_profile_csv(mut w: impl Write, solvers: &[String], gammas: &[f64], profile: &[Vec<f64>]) -> io::Result<()> {
    let mut header = vec!["gamma".to_string()];
    header.extend(solvers.iter().map(|s| format!("P_{s}")));
    writeln!(w, "{}", header.join(","))?;
    for (j, g) in gammas.iter().enumerate() {
        let row: Vec<String> = std::iter::once(*g).chain(profile.iter().map(|p| p[j])).map(|v| v.to_string()).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transcribe::Interpolation;

    fn path(points: &[(f64, f64)]) -> Trajectory {
        Trajectory {
            t: (0..points.len()).map(|i| i as f64).collect(),
            x: points.iter().map(|&(x, y)| vec![x, y]).collect(),
            u: vec![],
            tf: (points.len() - 1) as f64,
            slack_x0: vec![],
            slack_xf: vec![],
            interpolation: Interpolation::Linear,
        }
    }

    fn run(solver: &str, p: usize, t: f64, ok: bool) -> Run {
        let status = if ok { Status::Optimal } else { Status::Infeasible };
        Run { solver: solver.into(), p, rep: 0, solve_time: t, status, collision: false }
    }

    #[test]
    fn collisions() {
        let obs = Obstacle::bicycle();
        assert!(collision_check(&path(&[(0.0, 50.0), (0.0, 50.0)]), &obs).unwrap());
        assert!(!collision_check(&path(&[(20.0, 0.0), (20.0, 100.0)]), &obs).unwrap());
        assert!(collision_check(&path(&[(7.5, 50.0), (7.5, 50.0)]), &obs).unwrap());
        let short = Trajectory { x: vec![vec![0.0]; 2], ..path(&[(0.0, 0.0), (1.0, 1.0)]) };
        assert!(matches!(collision_check(&short, &obs), Err(BenchError::MissingStates { .. })));
    }

    #[test]
    fn ratios_and_profile() {
        let r = BenchmarkResult::from_runs(vec![run("s1", 1, 2.0, true), run("s2", 1, 4.0, true)]);
        assert_eq!(perf_ratios(&r), vec![vec![1.0], vec![2.0]]);

        let r = BenchmarkResult::from_runs(vec![
            run("s1", 1, 2.0, true),
            run("s1", 2, 1.0, true),
            run("s2", 1, 2.0, true),
            run("s2", 2, 2.0, true),
        ]);
        let prof = perf_profile(&perf_ratios(&r), &[1.0, 2.0]);
        assert_eq!(prof[1], vec![0.5, 1.0]);
        assert_eq!(prof[0], vec![1.0, 1.0]);
    }

    #[test]
    fn failed_cells_get_the_sentinel() {
        let mut bad = run("s1", 1, 1.0, true);
        bad.collision = true;
        let r = BenchmarkResult::from_runs(vec![bad, run("s2", 1, 3.0, true), run("s1", 2, 1.0, false), run("s2", 2, 1.0, false)]);
        assert!(r.failed(0, 0));
        assert_eq!(perf_ratios(&r), vec![vec![R_M, R_M], vec![1.0, R_M]]);
    }

    #[test]
    fn repetitions_are_averaged() {
        let mut second = run("s", 3, 3.0, true);
        second.rep = 1;
        let r = BenchmarkResult::from_runs(vec![run("s", 3, 1.0, true), second]);
        assert_eq!(r.times, vec![vec![2.0]]);
    }

    #[test]
    fn csv_round_trip() {
        let mut c = run("lgr-2", 7, 0.25, true);
        c.collision = true;
        let r = BenchmarkResult::from_runs(vec![c, run("euler", 7, 0.5, false)]);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert_eq!(BenchmarkResult::read_csv(buf.as_slice()).unwrap(), r.runs);
        assert!(BenchmarkResult::read_csv("h\nx,1,0,0.1,optimal\n".as_bytes()).is_err());
    }

    #[test]
    fn grid() {
        assert_eq!(gamma_grid(1.0, 3.0, 3), vec![1.0, 2.0, 3.0]);
    }
}
