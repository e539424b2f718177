//! Direct transcription of an [`Ocp`] into a sparse NLP by backward Euler,
//! trapezoidal or multi-interval Legendre-Gauss-Radau collocation.
//!
//! Design variables are ordered point-major: for every state point `i` the
//! block `[x_i, u_i]` (controls only where the method defines them), then
//! the optional initial and final slack vectors, then `t_f` if it is free.

mod terms;
mod trajectory;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::colloc::{CollocError, LgrGrid, Mesh};
use crate::expr::{DiffExpr, Var, VarKind};
use crate::nlp::{Multipliers, Nlp, NlpSolver, Solution, SolveOptions};
use crate::ocp::{Bound, Ocp, PathConstraint};
use terms::{Builder, FuncId, Span, ZRef};

pub use terms::TermNlp;
pub use trajectory::{Interpolation, Trajectory};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TranscribeError {
    #[error("no dynamics were set")]
    MissingDynamics,
    #[error("free final time needs finite bounds, got [{tf_min}, {tf_max}]")]
    UnboundedFinalTime { tf_min: f64, tf_max: f64 },
    #[error("final time {tf} does not exceed the start time {start}")]
    DegenerateSpan { start: f64, tf: f64 },
    #[error("{which} value of x{index} lies outside the state bounds")]
    InconsistentBoundary { which: &'static str, index: usize },
    #[error("time {t} outside the trajectory range [{lo}, {hi}]")]
    OutOfRange { t: f64, lo: f64, hi: f64 },
    #[error("guess has the wrong dimensions")]
    GuessShape,
    #[error(transparent)]
    Colloc(#[from] CollocError),
}

/// Discretization method and grid size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Scheme {
    Euler { n: usize },
    Trapezoid { n: usize },
    Lgr { mesh: Mesh },
}

impl Scheme {
    /// `k` equal LGR intervals with `n` collocation points each.
    pub fn lgr(k: usize, n: usize) -> Result<Scheme, TranscribeError> {
        Ok(Scheme::Lgr { mesh: Mesh::uniform(k, n)? })
    }

    /// Parses `euler`, `trapezoid` or `lgr-K` with `p` points (per interval).
    pub fn from_id(id: &str, p: usize) -> Option<Scheme> {
        match id {
            "euler" => Some(Scheme::Euler { n: p }),
            "trapezoid" => Some(Scheme::Trapezoid { n: p }),
            _ => {
                let k: usize = id.strip_prefix("lgr-")?.parse().ok()?;
                Scheme::lgr(k, p).ok()
            }
        }
    }

    pub fn method_name(&self) -> &'static str {
        match self {
            Scheme::Euler { .. } => "euler",
            Scheme::Trapezoid { .. } => "trapezoid",
            Scheme::Lgr { .. } => "lgr",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::Euler { n } => write!(f, "euler N={n}"),
            Scheme::Trapezoid { n } => write!(f, "trapezoid N={n}"),
            Scheme::Lgr { mesh } => write!(f, "lgr K={} N={:?}", mesh.intervals(), mesh.ns()),
        }
    }
}

/// Position of every block of design variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub n_st: usize,
    pub n_ctr: usize,
    /// Offset of `x_i` for every state point.
    pub x: Vec<usize>,
    /// Offset of `u_j` for every control point (point `j` carries `u_j`).
    pub u: Vec<usize>,
    pub slack_x0: Option<usize>,
    pub slack_xf: Option<usize>,
    pub tf: Option<usize>,
    /// Design variables.
    pub n: usize,
    /// Inequality rows.
    pub e: usize,
    /// Equality rows (dynamics defects).
    pub q: usize,
    /// Boundary values with zero tolerance, enforced by pinning variable bounds.
    pub pinned: usize,
}

impl Layout {
    fn new(n_st: usize, n_ctr: usize, points: usize, controls: usize, slack0: bool, slackf: bool, free_tf: bool) -> Self {
        let mut off = 0;
        let mut x = Vec::with_capacity(points);
        let mut u = Vec::with_capacity(controls);
        for i in 0..points {
            x.push(off);
            off += n_st;
            if i < controls {
                u.push(off);
                off += n_ctr;
            }
        }
        let mut take = |on: bool, len: usize| {
            on.then(|| {
                off += len;
                off - len
            })
        };
        let slack_x0 = take(slack0, n_st);
        let slack_xf = take(slackf, n_st);
        let tf = take(free_tf, 1);
        Layout { n_st, n_ctr, x, u, slack_x0, slack_xf, tf, n: off, e: 0, q: 0, pinned: 0 }
    }

    pub fn state_points(&self) -> usize {
        self.x.len()
    }

    pub fn control_points(&self) -> usize {
        self.u.len()
    }
}

/// A transcribed problem: layout, grid and the NLP itself.
#[derive(Debug, Clone)]
pub struct Transcription {
    pub ocp: Ocp,
    pub scheme: Scheme,
    pub layout: Layout,
    pub nlp: TermNlp,
    /// Fraction `β_i` of the span at each state point: `t_i = start + β_i·S`.
    beta: Vec<f64>,
    start: f64,
    lgr: Option<LgrGrid>,
}

/// Solver output mapped back to trajectories.
#[derive(Debug, Clone)]
pub struct Solved {
    pub trajectory: Trajectory,
    pub solution: Solution,
}

impl Transcription {
    /// Builds the NLP for `ocp` discretized by `scheme`.
    pub fn assemble(ocp: &Ocp, scheme: &Scheme) -> Result<Self, TranscribeError> {
        let dynamics = ocp.dynamics.as_ref().ok_or(TranscribeError::MissingDynamics)?;
        let (n_st, n_ctr) = (ocp.n_st, ocp.n_ctr);
        let start = ocp.t0 + ocp.t_ex;
        if ocp.final_time_is_dv() && !ocp.tf_max().is_finite() {
            return Err(TranscribeError::UnboundedFinalTime { tf_min: ocp.tf_min(), tf_max: ocp.tf_max() });
        }
        if !(ocp.tf_max() > start) {
            return Err(TranscribeError::DegenerateSpan { start, tf: ocp.tf_max() });
        }

        let (beta, controls, lgr) = match scheme {
            Scheme::Euler { n } | Scheme::Trapezoid { n } => {
                if *n < 2 {
                    return Err(CollocError::EmptyGrid.into());
                }
                let beta: Vec<f64> = (0..*n).map(|i| i as f64 / (*n - 1) as f64).collect();
                (beta, *n, None)
            }
            Scheme::Lgr { mesh } => {
                let grid = LgrGrid::new(mesh.clone())?;
                let beta: Vec<f64> = grid.points().iter().map(|tau| (tau + 1.0) / 2.0).collect();
                let controls = grid.collocation_points();
                (beta, controls, Some(grid))
            }
        };
        let points = beta.len();
        let mut layout = Layout::new(n_st, n_ctr, points, controls, ocp.slack_x0, ocp.slack_xf, ocp.final_time_is_dv());

        // Box bounds.
        let mut lo = vec![f64::NEG_INFINITY; layout.n];
        let mut hi = vec![f64::INFINITY; layout.n];
        for &off in &layout.x {
            lo[off..off + n_st].copy_from_slice(&ocp.x_min);
            hi[off..off + n_st].copy_from_slice(&ocp.x_max);
        }
        for &off in &layout.u {
            lo[off..off + n_ctr].copy_from_slice(&ocp.u_min);
            hi[off..off + n_ctr].copy_from_slice(&ocp.u_max);
        }
        let mut pinned = 0;
        let ends = [
            ("initial", &ocp.x0, &ocp.x0_tol, ocp.slack_x0, layout.x[0], layout.slack_x0),
            ("final", &ocp.xf, &ocp.xf_tol, ocp.slack_xf, layout.x[points - 1], layout.slack_xf),
        ];
        for &(which, target, tol, slack, xoff, soff) in &ends {
            for d in 0..n_st {
                if let Some(s) = soff {
                    lo[s + d] = 0.0;
                    hi[s + d] = if target[d].is_free() { 0.0 } else { f64::INFINITY };
                }
                if slack {
                    continue;
                }
                if let Bound::Value(v) = target[d] {
                    let (l, h) = ((v - tol[d]).max(lo[xoff + d]), (v + tol[d]).min(hi[xoff + d]));
                    if l > h {
                        return Err(TranscribeError::InconsistentBoundary { which, index: d });
                    }
                    lo[xoff + d] = l;
                    hi[xoff + d] = h;
                    if tol[d] == 0.0 {
                        pinned += 1;
                    }
                }
            }
        }
        let tf_ref = match layout.tf {
            Some(i) => {
                let floor = start + 1e-6 * start.abs().max(1.0);
                lo[i] = ocp.tf_min().max(floor);
                hi[i] = ocp.tf_max();
                ZRef::Index(i)
            }
            None => ZRef::Const(ocp.tf_max()),
        };
        let time_ref = |i: usize| match tf_ref {
            ZRef::Index(idx) => ZRef::Affine { idx, a: start * (1.0 - beta[i]), b: beta[i] },
            _ => ZRef::Const(start + beta[i] * (ocp.tf_max() - start)),
        };

        let mut b = Builder::new(lo, hi, Span { start, tf: tf_ref });
        let slots_at = |support: &[Var], i: usize| -> Vec<ZRef> {
            support
                .iter()
                .map(|v| match v.kind {
                    VarKind::State => ZRef::Index(layout.x[i] + v.index),
                    VarKind::Control => ZRef::Index(layout.u[i] + v.index),
                    VarKind::Time => time_ref(i),
                    VarKind::FinalTime => tf_ref,
                    VarKind::InitialState => ZRef::Index(layout.x[0] + v.index),
                    VarKind::FinalState => ZRef::Index(layout.x[points - 1] + v.index),
                })
                .collect()
        };

        // Objective.
        if let Some(m) = &ocp.mayer {
            let id = b.add_expr(DiffExpr::new(m));
            let slots = slots_at(b.support(id), 0);
            b.term(FuncId::Objective, id, 1.0, false, slots);
        }
        if let Some(l) = &ocp.lagrange {
            let id = b.add_expr(DiffExpr::new(l));
            for (i, w) in quadrature_weights(scheme, lgr.as_ref(), points) {
                let slots = slots_at(b.support(id), i);
                b.term(FuncId::Objective, id, w, true, slots);
            }
        }
        for (soff, w) in [(layout.slack_x0, &ocp.w_s0), (layout.slack_xf, &ocp.w_sf)] {
            if let Some(s) = soff {
                for d in 0..n_st {
                    b.linear(FuncId::Objective, s + d, w[d]);
                }
            }
        }

        // Inequalities: path constraints, then slack rows.
        for PathConstraint { expr, lower, upper } in &ocp.path {
            let id = b.add_expr(DiffExpr::new(expr));
            let uses_controls = b.support(id).iter().any(|v| v.kind == VarKind::Control);
            let at = if uses_controls { controls } else { points };
            for i in 0..at {
                let slots = slots_at(b.support(id), i);
                if upper.is_finite() {
                    let r = b.new_ineq();
                    b.term(r, id, 1.0, false, slots.clone());
                    b.constant(r, -upper);
                }
                if lower.is_finite() {
                    let r = b.new_ineq();
                    b.term(r, id, -1.0, false, slots);
                    b.constant(r, *lower);
                }
            }
        }
        for &(_, target, tol, slack, xoff, soff) in &ends {
            let (true, Some(s)) = (slack, soff) else { continue };
            for d in 0..n_st {
                let Bound::Value(v) = target[d] else { continue };
                // |v - x| <= tol + s
                for sign in [1.0, -1.0] {
                    let r = b.new_ineq();
                    b.linear(r, xoff + d, sign);
                    b.linear(r, s + d, -1.0);
                    b.constant(r, -sign * v - tol[d]);
                }
            }
        }

        // Equalities: dynamics defects.
        let f_ids: Vec<usize> = dynamics.iter().map(|f| b.add_expr(DiffExpr::new(f))).collect();
        match (scheme, &lgr) {
            (Scheme::Euler { n }, _) => {
                let c = -1.0 / (*n - 1) as f64;
                for i in 0..n - 1 {
                    for (d, &fid) in f_ids.iter().enumerate() {
                        let r = b.new_eq();
                        b.linear(r, layout.x[i + 1] + d, 1.0);
                        b.linear(r, layout.x[i] + d, -1.0);
                        let slots = slots_at(b.support(fid), i + 1);
                        b.term(r, fid, c, true, slots);
                    }
                }
            }
            (Scheme::Trapezoid { n }, _) => {
                let c = -0.5 / (*n - 1) as f64;
                for i in 0..n - 1 {
                    for (d, &fid) in f_ids.iter().enumerate() {
                        let r = b.new_eq();
                        b.linear(r, layout.x[i + 1] + d, 1.0);
                        b.linear(r, layout.x[i] + d, -1.0);
                        for p in [i, i + 1] {
                            let slots = slots_at(b.support(fid), p);
                            b.term(r, fid, c, true, slots);
                        }
                    }
                }
            }
            (Scheme::Lgr { .. }, Some(grid)) => {
                for (k, iv) in grid.intervals.iter().enumerate() {
                    let off = grid.offset(k);
                    for i in 0..iv.tau.len() {
                        for (d, &fid) in f_ids.iter().enumerate() {
                            let r = b.new_eq();
                            for j in 0..iv.tau_aug.len() {
                                b.linear(r, layout.x[off + j] + d, iv.d[(i, j)]);
                            }
                            let slots = slots_at(b.support(fid), off + i);
                            b.term(r, fid, -0.5, true, slots);
                        }
                    }
                }
            }
            _ => unreachable!("LGR grid is built for LGR schemes"),
        }

        let nlp = b.finish();
        layout.e = nlp.num_ineq();
        layout.q = nlp.num_eq();
        layout.pinned = pinned;
        Ok(Transcription { ocp: ocp.clone(), scheme: scheme.clone(), layout, nlp, beta, start, lgr })
    }

    /// Start of the horizon, `t0 + t_ex`.
    pub fn start(&self) -> f64 {
        self.start
    }

    /// Times of the state points for a given final time.
    pub fn times(&self, tf: f64) -> Vec<f64> {
        let span = tf - self.start;
        self.beta
            .iter()
            .enumerate()
            .map(|(i, b)| if i + 1 == self.beta.len() { tf } else { self.start + b * span })
            .collect()
    }

    fn interpolation(&self) -> Interpolation {
        match &self.lgr {
            None => Interpolation::Linear,
            Some(g) => Interpolation::Lagrange {
                starts: (0..g.mesh.intervals()).map(|k| g.offset(k)).collect(),
                lens: g.mesh.ns().to_vec(),
            },
        }
    }

    /// Linear state interpolation between the boundary targets (a free final
    /// state holds its initial value), controls at mid-range and `t_f` at the
    /// middle of its bounds.
    pub fn default_guess(&self) -> Vec<f64> {
        let ocp = &self.ocp;
        let l = &self.layout;
        let endpoint = |target: Bound, d: usize| match target {
            Bound::Value(v) => v,
            Bound::Free => midpoint(ocp.x_min[d], ocp.x_max[d]),
        };
        let mut z = vec![0.0; l.n];
        let last = self.beta.len() - 1;
        for (i, &off) in l.x.iter().enumerate() {
            let w = self.beta[i];
            for d in 0..l.n_st {
                let a = endpoint(ocp.x0[d], d);
                let b = match ocp.xf[d] {
                    Bound::Free if ocp.x0[d].value().is_some() => a,
                    t => endpoint(t, d),
                };
                z[off + d] = if i == last { b } else { a + w * (b - a) };
            }
        }
        for &off in &l.u {
            for c in 0..l.n_ctr {
                z[off + c] = midpoint(ocp.u_min[c], ocp.u_max[c]);
            }
        }
        if let Some(i) = l.tf {
            z[i] = 0.5 * (ocp.tf_min() + ocp.tf_max());
        }
        z
    }

    /// Samples `traj` at this grid (holding its end values outside its range).
    pub fn guess_from(&self, traj: &Trajectory) -> Result<Vec<f64>, TranscribeError> {
        let l = &self.layout;
        if traj.n_st() != l.n_st || (l.n_ctr > 0 && traj.n_ctr() != l.n_ctr) {
            return Err(TranscribeError::GuessShape);
        }
        let mut z = self.default_guess();
        let tf = match l.tf {
            Some(i) => {
                let (lo, hi) = self.nlp.var_bounds();
                let v = traj.tf.clamp(lo[i], hi[i]);
                z[i] = v;
                v
            }
            None => self.ocp.tf_max(),
        };
        let times = self.times(tf);
        for (i, &off) in l.x.iter().enumerate() {
            z[off..off + l.n_st].copy_from_slice(&traj.state_at(times[i]));
        }
        for (j, &off) in l.u.iter().enumerate() {
            if l.n_ctr > 0 {
                z[off..off + l.n_ctr].copy_from_slice(&traj.control_at(times[j]));
            }
        }
        for (soff, vals) in [(l.slack_x0, &traj.slack_x0), (l.slack_xf, &traj.slack_xf)] {
            if let Some(s) = soff {
                if vals.len() == l.n_st {
                    z[s..s + l.n_st].copy_from_slice(vals);
                }
            }
        }
        Ok(z)
    }

    /// Maps a design vector back to time-stamped trajectories.
    pub fn extract(&self, z: &[f64]) -> Trajectory {
        let l = &self.layout;
        let tf = match l.tf {
            Some(i) => z[i],
            None => self.ocp.tf_max(),
        };
        let slack = |s: Option<usize>| s.map(|s| z[s..s + l.n_st].to_vec()).unwrap_or_default();
        Trajectory {
            t: self.times(tf),
            x: l.x.iter().map(|&o| z[o..o + l.n_st].to_vec()).collect(),
            u: l.u.iter().map(|&o| z[o..o + l.n_ctr].to_vec()).collect(),
            tf,
            slack_x0: slack(l.slack_x0),
            slack_xf: slack(l.slack_xf),
            interpolation: self.interpolation(),
        }
    }

    /// Solves from `z0` (the default guess if `None`).
    pub fn solve(
        &self,
        solver: &dyn NlpSolver,
        z0: Option<&[f64]>,
        warm: Option<&Multipliers>,
        opts: &SolveOptions,
    ) -> Solved {
        let guess;
        let z0 = match z0 {
            Some(z) => z,
            None => {
                guess = self.default_guess();
                &guess
            }
        };
        let solution = solver.solve_from(&self.nlp, z0, warm, opts);
        Solved { trajectory: self.extract(&solution.z), solution }
    }
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => 0.5 * (lo + hi),
        (true, false) => lo,
        (false, true) => hi,
        (false, false) => 0.0,
    }
}

/// `(point, weight)` pairs such that `∫ L dt ≈ S · Σ weight · L(point)`.
fn quadrature_weights(scheme: &Scheme, lgr: Option<&LgrGrid>, points: usize) -> Vec<(usize, f64)> {
    match (scheme, lgr) {
        (Scheme::Euler { n }, _) => (1..*n).map(|i| (i, 1.0 / (*n - 1) as f64)).collect(),
        (Scheme::Trapezoid { n }, _) => {
            let h = 1.0 / (*n - 1) as f64;
            (0..*n).map(|i| (i, if i == 0 || i + 1 == *n { 0.5 * h } else { h })).collect()
        }
        (Scheme::Lgr { .. }, Some(g)) => g
            .intervals
            .iter()
            .enumerate()
            .flat_map(|(k, iv)| {
                let off = g.offset(k);
                iv.scaled_w.iter().enumerate().map(move |(j, w)| (off + j, 0.5 * w))
            })
            .collect(),
        _ => {
            debug_assert!(points > 0);
            Vec::new()
        }
    }
}
