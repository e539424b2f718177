//! Nonlinear programs of the form
//!
//! ```text
//! min f(z)  s.t.  g(z) <= 0,  h(z) = 0,  lo <= z <= hi
//! ```
//!
//! and a primal-dual interior-point solver for them. Anything implementing
//! [`Nlp`] can be handed to any [`NlpSolver`].

mod ip;
mod resto;
pub mod ldl;

use serde::{Deserialize, Serialize};

use crate::expr::DomainError;

pub use ip::InteriorPoint;

/// Callbacks describing a smooth NLP. Constraint vectors stack the `num_ineq`
/// inequality rows `g(z) <= 0` first and the `num_eq` equality rows
/// `h(z) = 0` after them.
pub trait Nlp {
    fn num_vars(&self) -> usize;
    fn num_ineq(&self) -> usize;
    fn num_eq(&self) -> usize;
    /// Lower and upper variable bounds, `±inf` where absent.
    fn var_bounds(&self) -> (Vec<f64>, Vec<f64>);
    fn objective(&self, z: &[f64]) -> Result<f64, DomainError>;
    fn gradient(&self, z: &[f64], out: &mut [f64]) -> Result<(), DomainError>;
    fn constraints(&self, z: &[f64], out: &mut [f64]) -> Result<(), DomainError>;
    /// `(row, col)` of every structural Jacobian nonzero.
    fn jacobian_structure(&self) -> Vec<(usize, usize)>;
    fn jacobian_values(&self, z: &[f64], out: &mut [f64]) -> Result<(), DomainError>;
    /// Lower-triangle `(row, col)`, `row >= col`, of the Lagrangian Hessian.
    fn hessian_structure(&self) -> Vec<(usize, usize)>;
    /// Values of `obj_factor·∇²f + Σ λ_i ∇²c_i` aligned with
    /// [`Nlp::hessian_structure`].
    fn hessian_values(&self, z: &[f64], obj_factor: f64, lambda: &[f64], out: &mut [f64])
        -> Result<(), DomainError>;

    fn num_constraints(&self) -> usize {
        self.num_ineq() + self.num_eq()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    pub kkt_tol: f64,
    pub max_iter: usize,
    /// Wall-clock limit in seconds.
    pub max_time: f64,
    pub mu_init: f64,
    pub mu_shrink: f64,
    /// Relative distance an initial point is pushed inside its bounds.
    pub bound_push: f64,
    /// Record one [`IterLog`] entry per iteration.
    pub log: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            kkt_tol: 1e-6,
            max_iter: 500,
            max_time: 300.0,
            mu_init: 0.1,
            mu_shrink: 0.2,
            bound_push: 1e-2,
            log: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Optimal,
    IterLimit,
    TimeLimit,
    /// No acceptable point was found: an evaluation failed, the linear
    /// algebra broke down, or the iteration stalled.
    Infeasible,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Status::Optimal => "optimal",
            Status::IterLimit => "iter_limit",
            Status::TimeLimit => "time_limit",
            Status::Infeasible => "infeasible",
        })
    }
}

/// Lagrange multipliers with the sign convention
/// `∇f + Jgᵀ·ineq + Jhᵀ·eq - lower + upper = 0`, `ineq, lower, upper >= 0`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Multipliers {
    pub ineq: Vec<f64>,
    pub eq: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Multipliers {
    pub fn zeros(n: usize, n_ineq: usize, n_eq: usize) -> Self {
        Multipliers { ineq: vec![0.0; n_ineq], eq: vec![0.0; n_eq], lower: vec![0.0; n], upper: vec![0.0; n] }
    }
}

/// One accepted iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterLog {
    pub iter: usize,
    pub objective: f64,
    pub kkt: f64,
    pub mu: f64,
    pub alpha_primal: f64,
    pub alpha_dual: f64,
    pub regularization: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub status: Status,
    pub z: Vec<f64>,
    pub objective: f64,
    pub multipliers: Multipliers,
    pub iterations: usize,
    /// Wall-clock seconds spent inside the solver.
    pub solve_time: f64,
    pub kkt: f64,
    pub message: String,
    pub log: Vec<IterLog>,
}

pub trait NlpSolver: Send + Sync {
    fn name(&self) -> &str;
    /// Solves from `z0`, optionally seeding the multipliers.
    fn solve_from(&self, p: &dyn Nlp, z0: &[f64], warm: Option<&Multipliers>, opts: &SolveOptions) -> Solution;

    fn solve(&self, p: &dyn Nlp, z0: &[f64], opts: &SolveOptions) -> Solution {
        self.solve_from(p, z0, None, opts)
    }
}

/// Solves with the built-in interior-point method.
pub fn solve(p: &dyn Nlp, z0: &[f64], opts: &SolveOptions) -> Solution {
    InteriorPoint.solve(p, z0, opts)
}

/// The parts of the first-order optimality error.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktParts {
    /// `‖∇f + Jᵀλ - z_L + z_U‖∞ / (1 + ‖∇f‖∞)`
    pub stationarity: f64,
    /// Largest equality residual, inequality violation or bound violation.
    pub primal: f64,
    /// Largest complementarity product or multiplier sign violation.
    pub complementarity: f64,
}

impl KktParts {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.complementarity)
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn kkt_parts(
    z: &[f64],
    lo: &[f64],
    hi: &[f64],
    grad: &[f64],
    c: &[f64],
    n_ineq: usize,
    jac_structure: &[(usize, usize)],
    jac: &[f64],
    m: &Multipliers,
) -> KktParts {
    let mut r: Vec<f64> = grad.iter().zip(&m.lower).zip(&m.upper).map(|((g, l), u)| g - l + u).collect();
    for (&(row, col), &v) in jac_structure.iter().zip(jac) {
        let lam = if row < n_ineq { m.ineq[row] } else { m.eq[row - n_ineq] };
        r[col] += v * lam;
    }
    let gmax = grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
    let stationarity = r.iter().fold(0.0f64, |a, v| a.max(v.abs())) / (1.0 + gmax);

    let mut primal = 0.0f64;
    let mut compl = 0.0f64;
    for (i, &ci) in c.iter().enumerate() {
        if i < n_ineq {
            let y = m.ineq[i];
            primal = primal.max(ci.max(0.0));
            compl = compl.max((y * ci).abs()).max(-y);
        } else {
            primal = primal.max(ci.abs());
        }
    }
    for i in 0..z.len() {
        primal = primal.max(lo[i] - z[i]).max(z[i] - hi[i]);
        let (zl, zu) = (m.lower[i], m.upper[i]);
        compl = compl.max(-zl).max(-zu);
        compl = compl.max(if lo[i].is_finite() { (zl * (z[i] - lo[i])).abs() } else { zl.abs() });
        compl = compl.max(if hi[i].is_finite() { (zu * (hi[i] - z[i])).abs() } else { zu.abs() });
    }
    KktParts { stationarity, primal, complementarity: compl }
}

/// Evaluates the optimality error of `(z, m)` for `p`, broken into parts.
pub fn kkt_parts_of(p: &dyn Nlp, z: &[f64], m: &Multipliers) -> Result<KktParts, DomainError> {
    let n = p.num_vars();
    let (lo, hi) = p.var_bounds();
    let mut grad = vec![0.0; n];
    p.gradient(z, &mut grad)?;
    let mut c = vec![0.0; p.num_constraints()];
    p.constraints(z, &mut c)?;
    let js = p.jacobian_structure();
    let mut jac = vec![0.0; js.len()];
    p.jacobian_values(z, &mut jac)?;
    Ok(kkt_parts(z, &lo, &hi, &grad, &c, p.num_ineq(), &js, &jac, m))
}

/// ∞-norm of the first-order optimality conditions: scaled stationarity,
/// primal feasibility and complementarity. Evaluation failures yield `+inf`.
pub fn kkt_residual(p: &dyn Nlp, z: &[f64], m: &Multipliers) -> f64 {
    kkt_parts_of(p, z, m).map(|k| k.max()).unwrap_or(f64::INFINITY)
}
