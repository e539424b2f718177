//! Receding-horizon control around a simulated plant.
//!
//! Every `t_ex` seconds the loop predicts where the plant will be once the
//! next solve finishes, re-solves the model from that state, and hands the
//! new control plan to the plant. The plant keeps following the previous
//! plan while a solve is in progress.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{eval, DomainError, EvalEnv, Expr};
use crate::nlp::{Multipliers, NlpSolver, SolveOptions, Status};
use crate::ocp::{Bound, Ocp, OcpError};
use crate::transcribe::{Scheme, Trajectory, TranscribeError, Transcription};

#[derive(Debug, Error)]
pub enum MpcError {
    #[error("model has no dynamics")]
    MissingDynamics,
    #[error("plant state has {got} entries, model has {want} states")]
    StateSize { got: usize, want: usize },
    #[error("invalid execution horizon {0}")]
    Horizon(f64),
    #[error(transparent)]
    Ocp(#[from] OcpError),
    #[error(transparent)]
    Transcribe(#[from] TranscribeError),
    #[error("plant simulation: {0}")]
    Plant(#[from] DomainError),
}

/// Right-hand side `ẋ = F(x, u, t)` of a plant.
pub trait Dynamics {
    fn rhs(&self, x: &[f64], u: &[f64], t: f64) -> Result<Vec<f64>, DomainError>;
}

impl<F> Dynamics for F
where
    F: Fn(&[f64], &[f64], f64) -> Result<Vec<f64>, DomainError>,
{
    fn rhs(&self, x: &[f64], u: &[f64], t: f64) -> Result<Vec<f64>, DomainError> {
        self(x, u, t)
    }
}

/// A model's own dynamics used as the plant.
#[derive(Debug, Clone)]
pub struct ModelPlant {
    f: Vec<Expr>,
    tf: f64,
}

impl ModelPlant {
    pub fn new(ocp: &Ocp) -> Result<Self, MpcError> {
        let f = ocp.dynamics.clone().ok_or(MpcError::MissingDynamics)?;
        Ok(ModelPlant { f, tf: ocp.tf_max() })
    }
}

impl Dynamics for ModelPlant {
    fn rhs(&self, x: &[f64], u: &[f64], t: f64) -> Result<Vec<f64>, DomainError> {
        let env = EvalEnv::new(x.to_vec(), u.to_vec(), t, self.tf);
        self.f.iter().map(|e| eval(e, &env)).collect()
    }
}

/// Control samples at the first `u.len()` grid times of `traj`, linearly
/// interpolated and held constant outside their range.
pub fn control_linear(traj: &Trajectory, t: f64) -> Vec<f64> {
    let ts = &traj.t[..traj.u.len()];
    match ts.len() {
        0 => Vec::new(),
        1 => traj.u[0].clone(),
        n => {
            if t <= ts[0] {
                return traj.u[0].clone();
            }
            if t >= ts[n - 1] {
                return traj.u[n - 1].clone();
            }
            let i = ts.partition_point(|&s| s <= t) - 1;
            let w = (t - ts[i]) / (ts[i + 1] - ts[i]);
            traj.u[i].iter().zip(&traj.u[i + 1]).map(|(a, b)| a + w * (b - a)).collect()
        }
    }
}

fn rk4_steps(t0: f64, tf: f64) -> usize {
    ((tf - t0) / 0.01).ceil().max(20.0) as usize
}

/// Integrates the plant from `t0` to `tf` with classical fixed-step RK4,
/// returning every step as `(t, x)` starting with `(t0, x0)`.
pub fn simulate_trace(
    plant: &dyn Dynamics,
    x0: &[f64],
    controls: &Trajectory,
    t0: f64,
    tf: f64,
) -> Result<Vec<(f64, Vec<f64>)>, DomainError> {
    let mut out = vec![(t0, x0.to_vec())];
    if !(tf > t0) {
        return Ok(out);
    }
    let steps = rk4_steps(t0, tf);
    let h = (tf - t0) / steps as f64;
    let mut x = x0.to_vec();
    let f = |x: &[f64], t: f64| plant.rhs(x, &control_linear(controls, t), t);
    let axpy = |x: &[f64], k: &[f64], a: f64| -> Vec<f64> { x.iter().zip(k).map(|(x, k)| x + a * k).collect() };
    for s in 0..steps {
        let t = t0 + s as f64 * h;
        let k1 = f(&x, t)?;
        let k2 = f(&axpy(&x, &k1, 0.5 * h), t + 0.5 * h)?;
        let k3 = f(&axpy(&x, &k2, 0.5 * h), t + 0.5 * h)?;
        let k4 = f(&axpy(&x, &k3, h), t + h)?;
        for i in 0..x.len() {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out.push((if s + 1 == steps { tf } else { t + h }, x.clone()));
    }
    Ok(out)
}

/// Plant state at `tf` starting from `x0` at `t0`.
pub fn simulate_plant(
    plant: &dyn Dynamics,
    x0: &[f64],
    controls: &Trajectory,
    t0: f64,
    tf: f64,
) -> Result<Vec<f64>, DomainError> {
    Ok(simulate_trace(plant, x0, controls, t0, tf)?.pop().expect("trace is never empty").1)
}

/// Where the plant will be after `t_ex` more seconds under `last`.
pub fn predict_x0(
    plant: &dyn Dynamics,
    x_now: &[f64],
    last: &Trajectory,
    t_now: f64,
    t_ex: f64,
) -> Result<Vec<f64>, DomainError> {
    if t_ex == 0.0 {
        return Ok(x_now.to_vec());
    }
    simulate_plant(plant, x_now, last, t_now, t_now + t_ex)
}

/// Plant states accepted as "done": `|x_i - target_i| <= tol_i` wherever
/// a tolerance is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Goal {
    pub target: Vec<f64>,
    pub tol: Vec<f64>,
}

impl Goal {
    pub fn reached(&self, x: &[f64]) -> bool {
        x.iter().zip(&self.target).zip(&self.tol).all(|((x, t), tol)| (x - t).abs() <= *tol)
    }

    /// Box of half-width `tol` around the model's fixed final state.
    pub fn from_final_state(ocp: &Ocp, tol: f64) -> Self {
        let (target, tol) = ocp
            .xf
            .iter()
            .map(|b| match b.value() {
                Some(v) => (v, tol),
                None => (0.0, f64::INFINITY),
            })
            .unzip();
        Goal { target, tol }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcConfig {
    /// Execution horizon in seconds.
    pub t_ex: f64,
    pub predict_x0: bool,
    /// Upper bound on on-line solves.
    pub max_iterations: usize,
    pub goal: Option<Goal>,
    pub scheme: Scheme,
    pub options: SolveOptions,
    /// Seed each solve with the previous multipliers.
    pub warm_multipliers: bool,
}

impl Default for MpcConfig {
    fn default() -> Self {
        MpcConfig {
            t_ex: 0.2,
            predict_x0: true,
            max_iterations: 200,
            goal: None,
            scheme: Scheme::Trapezoid { n: 30 },
            options: SolveOptions::default(),
            warm_multipliers: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    /// Time at which the solve started.
    pub t0: f64,
    pub x0_actual: Vec<f64>,
    /// State the solve started from (equal to `x0_actual` without prediction).
    pub x0_predicted: Vec<f64>,
    /// The plan returned by the solve.
    pub plan: Trajectory,
    /// Interval over which the plan is handed to the plant.
    pub applied: (f64, f64),
    pub solve_time: f64,
    pub iterations: usize,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PlantLog {
    /// The off-line solve that seeded the loop, if it ran.
    pub initial_status: Option<Status>,
    pub initial_iterations: usize,
    pub steps: Vec<StepRecord>,
    /// Plant state at every integration step.
    pub trace: Vec<(f64, Vec<f64>)>,
    pub goal_reached: bool,
    pub warnings: Vec<String>,
}

impl PlantLog {
    pub fn final_state(&self) -> Option<&[f64]> {
        self.trace.last().map(|(_, x)| x.as_slice())
    }

    pub fn failed(&self) -> bool {
        self.steps.last().is_some_and(|s| s.status != Status::Optimal)
    }

    pub fn write_csv(&self, mut w: impl Write) -> io::Result<()> {
        let n = self.steps.first().map_or(0, |s| s.x0_actual.len());
        let mut header = vec!["step".to_string(), "t0".into(), "solve_time".into(), "status".into()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.extend((1..=n).map(|i| format!("x{i}p")));
        writeln!(w, "{}", header.join(","))?;
        for s in &self.steps {
            let mut row = vec![s.step.to_string(), s.t0.to_string(), s.solve_time.to_string(), s.status.to_string()];
            row.extend(s.x0_actual.iter().chain(&s.x0_predicted).map(f64::to_string));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn write_trace_csv(&self, mut w: impl Write) -> io::Result<()> {
        let n = self.trace.first().map_or(0, |(_, x)| x.len());
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        writeln!(w, "{}", header.join(","))?;
        for (t, x) in &self.trace {
            let row: Vec<String> = std::iter::once(*t).chain(x.iter().copied()).map(|v| v.to_string()).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// `ocp` restarted at time `t0` from state `x0`.
fn reanchor(ocp: &Ocp, t0: f64, x0: &[f64]) -> Result<Ocp, OcpError> {
    let mut m = ocp.to_model();
    m.t0 = t0;
    m.x0 = x0.iter().map(|&v| Bound::Value(v)).collect();
    m.freeze()
}

/// Solves the model once from its own initial state with the default
/// guess. Returns the plan and multipliers to seed the loop.
pub fn warm_start(
    ocp: &Ocp,
    solver: &dyn NlpSolver,
    scheme: &Scheme,
    opts: &SolveOptions,
) -> Result<(Trajectory, Multipliers, Status, usize), MpcError> {
    let tr = Transcription::assemble(ocp, scheme)?;
    let s = tr.solve(solver, None, None, opts);
    Ok((s.trajectory, s.solution.multipliers, s.solution.status, s.solution.iterations))
}

/// Runs the loop from plant state `x_plant` until the goal is reached,
/// `max_iterations` solves have run, a solve fails, or the plan ends.
pub fn run_closed_loop(
    ocp: &Ocp,
    cfg: &MpcConfig,
    solver: &dyn NlpSolver,
    plant: &dyn Dynamics,
    x_plant: &[f64],
) -> Result<PlantLog, MpcError> {
    if x_plant.len() != ocp.n_st {
        return Err(MpcError::StateSize { got: x_plant.len(), want: ocp.n_st });
    }
    if !(cfg.t_ex >= 0.0 && cfg.t_ex.is_finite()) {
        return Err(MpcError::Horizon(cfg.t_ex));
    }
    let mut log = PlantLog::default();
    let mut t = ocp.t0;
    let mut x = x_plant.to_vec();
    log.trace.push((t, x.clone()));
    let reached = |x: &[f64]| cfg.goal.as_ref().is_some_and(|g| g.reached(x));
    if reached(&x) {
        log.goal_reached = true;
        return Ok(log);
    }

    let first = reanchor(ocp, t, &x)?;
    let (mut plan, mut mult, status, iters) = warm_start(&first, solver, &cfg.scheme, &cfg.options)?;
    log.initial_status = Some(status);
    log.initial_iterations = iters;
    if status != Status::Optimal {
        log.warnings.push(format!("off-line solve ended with status {status}; starting from the default guess"));
        let tr = Transcription::assemble(&first, &cfg.scheme)?;
        plan = tr.extract(&tr.default_guess());
        mult = Multipliers::default();
    }

    let mut applied_from = t;
    for step in 0..cfg.max_iterations {
        if plan.tf - t <= cfg.t_ex {
            // The plan finishes before the next solve would: follow it out.
            let tail = simulate_trace(plant, &x, &plan, t, plan.tf)?;
            log.trace.extend(tail.into_iter().skip(1));
            x = log.final_state().unwrap().to_vec();
            log.goal_reached = reached(&x);
            return Ok(log);
        }
        let x0p = if cfg.predict_x0 { predict_x0(plant, &x, &plan, t, cfg.t_ex)? } else { x.clone() };
        let t0 = if cfg.predict_x0 { t + cfg.t_ex } else { t };
        let model = reanchor(ocp, t0, &x0p)?;
        let tr = Transcription::assemble(&model, &cfg.scheme)?;
        let guess = tr.guess_from(&plan)?;
        let warm = (cfg.warm_multipliers && mult.lower.len() == guess.len()).then_some(&mult);
        let solved = tr.solve(solver, Some(&guess), warm, &cfg.options);

        // The plant runs on the old plan while the solver works.
        let seg = simulate_trace(plant, &x, &plan, t, t + cfg.t_ex)?;
        log.trace.extend(seg.into_iter().skip(1));
        let status = solved.solution.status;
        log.steps.push(StepRecord {
            step,
            t0: t,
            x0_actual: x.clone(),
            x0_predicted: x0p,
            plan: solved.trajectory.clone(),
            applied: (applied_from, t + cfg.t_ex),
            solve_time: solved.solution.solve_time,
            iterations: solved.solution.iterations,
            status,
        });
        t += cfg.t_ex;
        applied_from = t;
        x = log.final_state().unwrap().to_vec();
        if status != Status::Optimal {
            log.warnings.push(format!("solve {step} ended with status {status}; stopping"));
            return Ok(log);
        }
        plan = solved.trajectory;
        mult = solved.solution.multipliers;
        if reached(&x) {
            log.goal_reached = true;
            return Ok(log);
        }
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transcribe::Interpolation;

    fn constant_controls(u: f64, t0: f64, tf: f64) -> Trajectory {
        Trajectory {
            t: vec![t0, tf],
            x: vec![vec![0.0], vec![0.0]],
            u: vec![vec![u], vec![u]],
            tf,
            slack_x0: vec![],
            slack_xf: vec![],
            interpolation: Interpolation::Linear,
        }
    }

    fn decay(x: &[f64], _: &[f64], _: f64) -> Result<Vec<f64>, DomainError> {
        Ok(vec![-x[0]])
    }

    #[test]
    fn exponential_decay() {
        let x = simulate_plant(&decay, &[1.0], &constant_controls(0.0, 0.0, 1.0), 0.0, 1.0).unwrap();
        assert!((x[0] - (-1f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn static_plant_and_zero_horizon() {
        let still = |_: &[f64], _: &[f64], _: f64| Ok(vec![0.0, 0.0]);
        let u = constant_controls(1.0, 0.0, 5.0);
        assert_eq!(simulate_plant(&still, &[3.0, -1.0], &u, 0.0, 2.0).unwrap(), vec![3.0, -1.0]);
        assert_eq!(predict_x0(&decay, &[2.0], &u, 1.0, 0.0).unwrap(), vec![2.0]);
        assert_eq!(predict_x0(&still, &[3.0, -1.0], &u, 1.0, 0.7).unwrap(), vec![3.0, -1.0]);
    }

    #[test]
    fn hover_keeps_speed() {
        let ocp = crate::problems::moon_lander();
        let plant = ModelPlant::new(&ocp).unwrap();
        let x = simulate_plant(&plant, &[10.0, -2.0], &constant_controls(1.5, 0.0, 3.0), 0.0, 3.0).unwrap();
        assert!((x[1] + 2.0).abs() < 1e-12);
        assert!((x[0] - 4.0).abs() < 1e-9);
    }

    #[test]
    fn controls_are_linear_and_clamped() {
        let mut u = constant_controls(0.0, 0.0, 2.0);
        u.u[1] = vec![4.0];
        assert_eq!(control_linear(&u, 0.5), vec![1.0]);
        assert_eq!(control_linear(&u, -1.0), vec![0.0]);
        assert_eq!(control_linear(&u, 9.0), vec![4.0]);
    }

    #[test]
    fn step_count_follows_cadence() {
        assert_eq!(rk4_steps(0.0, 0.05), 20);
        assert_eq!(rk4_steps(0.0, 1.0), 100);
        assert_eq!(rk4_steps(0.0, 1.005), 101);
    }

    #[test]
    fn goal_box() {
        let g = Goal { target: vec![0.0, 0.0], tol: vec![0.1, 0.1] };
        assert!(g.reached(&[0.05, -0.1]));
        assert!(!g.reached(&[0.2, 0.0]));
        let ocp = crate::problems::bicycle();
        assert!(Goal::from_final_state(&ocp, 0.1).reached(&[1e3, -5.0, 1.0, 7.0]));
    }
}
