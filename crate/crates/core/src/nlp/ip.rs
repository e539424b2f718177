//! Primal-dual interior-point method with a monotone barrier update,
//! inertia-corrected Newton steps, the fraction-to-boundary rule, a filter
//! line search with second-order corrections and a feasibility restoration
//! phase.

use web_time::Instant;

use super::ldl::{sym_matvec, Inertia, Ldl};
use super::resto::Restoration;
use super::{kkt_parts, IterLog, Multipliers, Nlp, NlpSolver, Solution, SolveOptions, Status};
use crate::expr::DomainError;

/// The built-in solver.
#[derive(Debug, Clone, Copy, Default)]
pub struct InteriorPoint;

impl NlpSolver for InteriorPoint {
    fn name(&self) -> &str {
        "interior-point"
    }

    fn solve_from(&self, p: &dyn Nlp, z0: &[f64], warm: Option<&Multipliers>, opts: &SolveOptions) -> Solution {
        let start = Instant::now();
        let mut sol = match Ip::new(p, z0, warm, opts) {
            Ok(mut ip) => ip.run(start),
            Err(e) => failure(p, z0, format!("evaluation failed at the initial point: {e}")),
        };
        sol.solve_time = start.elapsed().as_secs_f64();
        sol
    }
}

fn failure(p: &dyn Nlp, z0: &[f64], message: String) -> Solution {
    Solution {
        status: Status::Infeasible,
        z: z0.to_vec(),
        objective: f64::NAN,
        multipliers: Multipliers::zeros(p.num_vars(), p.num_ineq(), p.num_eq()),
        iterations: 0,
        solve_time: 0.0,
        kkt: f64::INFINITY,
        message,
        log: Vec::new(),
    }
}

const TAU: f64 = 0.995;
const KAPPA_EPS: f64 = 10.0;
const KAPPA_SIGMA: f64 = 1e10;
const MU_MIN: f64 = 1e-11;
const DELTA_C: f64 = 1e-8;
const DELTA_W_FIRST: f64 = 1e-4;
const DELTA_W_GROWTH: f64 = 8.0;
const DELTA_W_MAX: f64 = 1e40;
const SCALE_MAX_GRAD: f64 = 100.0;
const MAX_INIT_MULT: f64 = 1e3;

// Filter line search.
const ETA_PHI: f64 = 1e-8;
const GAMMA_THETA: f64 = 1e-5;
const GAMMA_PHI: f64 = 1e-8;
const GAMMA_ALPHA: f64 = 0.05;
const DELTA_SWITCH: f64 = 1.0;
const S_THETA: f64 = 1.1;
const S_PHI: f64 = 2.3;
const MAX_SOC: usize = 4;
const KAPPA_SOC: f64 = 0.99;
const KAPPA_RESTO: f64 = 0.9;

struct Ip<'a> {
    p: &'a dyn Nlp,
    opts: SolveOptions,
    n: usize,
    mi: usize,
    m: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    /// Indices of variables with `lo < hi`.
    free: Vec<usize>,
    has_lo: Vec<bool>,
    has_hi: Vec<bool>,
    obj_s: f64,
    con_s: Vec<f64>,
    jac_struct: Vec<(usize, usize)>,
    hess_struct: Vec<(usize, usize)>,
    /// `(k, i, j)`: Hessian value `k` lands on free positions `(i, j)`.
    hess_keep: Vec<(usize, usize, usize)>,
    /// `(k, row, j)`: Jacobian value `k` at constraint `row`, free column `j`.
    jac_keep: Vec<(usize, usize, usize)>,
    kkt_entries: Vec<(usize, usize)>,
    ldl: Ldl,

    // iterate, all in scaled units
    z: Vec<f64>,
    s: Vec<f64>,
    y: Vec<f64>,
    zl: Vec<f64>,
    zu: Vec<f64>,
    v: Vec<f64>,
    f: f64,
    grad: Vec<f64>,
    c: Vec<f64>,
    jac: Vec<f64>,
    mu: f64,
    delta_w_last: f64,

    filter: Vec<(f64, f64)>,
    theta_max: f64,
    theta_min: f64,
    /// Early exit used by the restoration phase.
    stop: Option<&'a dyn Fn(&[f64]) -> bool>,
    may_restore: bool,
}

struct Step {
    dx: Vec<f64>,
    ds: Vec<f64>,
    dy: Vec<f64>,
    dzl: Vec<f64>,
    dzu: Vec<f64>,
    dv: Vec<f64>,
}

/// Factored Newton matrix of the current iterate.
struct Newton {
    kvals: Vec<f64>,
    diag_true: Vec<f64>,
    sigma_s: Vec<f64>,
    rhs: Vec<f64>,
    delta_w: f64,
}

struct Trial {
    z: Vec<f64>,
    s: Vec<f64>,
    f: f64,
    c: Vec<f64>,
    alpha: f64,
}

impl<'a> Ip<'a> {
    fn new(p: &'a dyn Nlp, z0: &[f64], warm: Option<&Multipliers>, opts: &SolveOptions) -> Result<Self, DomainError> {
        let n = p.num_vars();
        let mi = p.num_ineq();
        let m = p.num_constraints();
        assert_eq!(z0.len(), n, "initial point has the wrong length");
        let (lo, hi) = p.var_bounds();
        let free: Vec<usize> = (0..n).filter(|&i| lo[i] < hi[i]).collect();
        let nf = free.len();
        let mut pos = vec![usize::MAX; n];
        for (k, &i) in free.iter().enumerate() {
            pos[i] = k;
        }
        let has_lo: Vec<bool> = free.iter().map(|&i| lo[i].is_finite()).collect();
        let has_hi: Vec<bool> = free.iter().map(|&i| hi[i].is_finite()).collect();

        // Interior starting point.
        let mut z: Vec<f64> = (0..n).map(|i| z0[i].clamp(lo[i], hi[i])).collect();
        for &i in &free {
            let (l, h) = (lo[i], hi[i]);
            let push = |b: f64| opts.bound_push * b.abs().max(1.0);
            let (pl, ph) = if l.is_finite() && h.is_finite() {
                let w = opts.bound_push * (h - l);
                (push(l).min(w), push(h).min(w))
            } else {
                (push(l), push(h))
            };
            if l.is_finite() {
                z[i] = z[i].max(l + pl);
            }
            if h.is_finite() {
                z[i] = z[i].min(h - ph);
            }
        }

        let jac_struct = p.jacobian_structure();
        let hess_struct = p.hessian_structure();
        let hess_keep: Vec<(usize, usize, usize)> = hess_struct
            .iter()
            .enumerate()
            .filter(|(_, &(r, c))| pos[r] != usize::MAX && pos[c] != usize::MAX)
            .map(|(k, &(r, c))| (k, pos[r], pos[c]))
            .collect();
        let jac_keep: Vec<(usize, usize, usize)> = jac_struct
            .iter()
            .enumerate()
            .filter(|(_, &(_, c))| pos[c] != usize::MAX)
            .map(|(k, &(r, c))| (k, r, pos[c]))
            .collect();
        let mut kkt_entries: Vec<(usize, usize)> = hess_keep.iter().map(|&(_, i, j)| (i, j)).collect();
        kkt_entries.extend(jac_keep.iter().map(|&(_, r, j)| (nf + r, j)));
        let ldl = Ldl::new(nf + m, &kkt_entries);

        // Gradient-based scaling at the starting point.
        let mut grad = vec![0.0; n];
        p.gradient(&z, &mut grad)?;
        let mut jac = vec![0.0; jac_struct.len()];
        p.jacobian_values(&z, &mut jac)?;
        let gmax = grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
        let obj_s = if gmax > SCALE_MAX_GRAD { SCALE_MAX_GRAD / gmax } else { 1.0 };
        let mut row_max = vec![0.0f64; m];
        for (&(r, _), &v) in jac_struct.iter().zip(&jac) {
            row_max[r] = row_max[r].max(v.abs());
        }
        let con_s: Vec<f64> =
            row_max.iter().map(|&g| if g > SCALE_MAX_GRAD { SCALE_MAX_GRAD / g } else { 1.0 }).collect();

        let mut ip = Ip {
            p,
            opts: *opts,
            n,
            mi,
            m,
            lo,
            hi,
            free,
            has_lo,
            has_hi,
            obj_s,
            con_s,
            jac_struct,
            hess_struct,
            hess_keep,
            jac_keep,
            kkt_entries,
            ldl,
            z,
            s: vec![0.0; mi],
            y: vec![0.0; m],
            zl: vec![0.0; nf],
            zu: vec![0.0; nf],
            v: vec![0.0; mi],
            f: 0.0,
            grad: vec![0.0; n],
            c: vec![0.0; m],
            jac: vec![0.0; jac.len()],
            mu: opts.mu_init,
            delta_w_last: 0.0,
            filter: Vec::new(),
            theta_max: 0.0,
            theta_min: 0.0,
            stop: None,
            may_restore: true,
        };
        let (f, c) = ip.eval_fc(&ip.z.clone())?;
        ip.f = f;
        ip.c = c;
        ip.eval_derivs()?;

        for i in 0..mi {
            ip.s[i] = (-ip.c[i]).max(opts.bound_push * ip.c[i].abs().max(1.0));
        }
        match warm {
            Some(w) if w.eq.len() + w.ineq.len() == m && w.lower.len() == n => {
                for i in 0..m {
                    let raw = if i < mi { w.ineq[i] } else { w.eq[i - mi] };
                    ip.y[i] = raw * ip.obj_s / ip.con_s[i];
                }
                for (k, &i) in ip.free.iter().enumerate() {
                    ip.zl[k] = if ip.has_lo[k] { (w.lower[i] * ip.obj_s).max(ip.mu) } else { 0.0 };
                    ip.zu[k] = if ip.has_hi[k] { (w.upper[i] * ip.obj_s).max(ip.mu) } else { 0.0 };
                }
                for i in 0..mi {
                    ip.v[i] = ip.y[i].max(ip.mu);
                }
            }
            _ => {
                ip.reset_bound_multipliers();
                ip.y = ip.least_squares_multipliers();
            }
        }
        let theta0 = ip.theta(&ip.s, &ip.c);
        ip.theta_max = 1e4 * theta0.max(1.0);
        ip.theta_min = 1e-4 * theta0.max(1.0);
        Ok(ip)
    }

    fn nf(&self) -> usize {
        self.free.len()
    }

    fn eval_fc(&self, z: &[f64]) -> Result<(f64, Vec<f64>), DomainError> {
        let f = self.p.objective(z)? * self.obj_s;
        let mut c = vec![0.0; self.m];
        self.p.constraints(z, &mut c)?;
        for (ci, s) in c.iter_mut().zip(&self.con_s) {
            *ci *= s;
        }
        if !f.is_finite() || c.iter().any(|v| !v.is_finite()) {
            return Err(DomainError::NonFinite);
        }
        Ok((f, c))
    }

    fn eval_derivs(&mut self) -> Result<(), DomainError> {
        self.p.gradient(&self.z, &mut self.grad)?;
        self.p.jacobian_values(&self.z, &mut self.jac)?;
        for g in &mut self.grad {
            *g *= self.obj_s;
        }
        for (v, &(r, _)) in self.jac.iter_mut().zip(&self.jac_struct) {
            *v *= self.con_s[r];
        }
        if self.grad.iter().chain(&self.jac).any(|v| !v.is_finite()) {
            return Err(DomainError::NonFinite);
        }
        Ok(())
    }

    fn dist_lo(&self, k: usize, z: &[f64]) -> f64 {
        let i = self.free[k];
        z[i] - self.lo[i]
    }

    fn dist_hi(&self, k: usize, z: &[f64]) -> f64 {
        let i = self.free[k];
        self.hi[i] - z[i]
    }

    fn reset_bound_multipliers(&mut self) {
        for k in 0..self.nf() {
            self.zl[k] = if self.has_lo[k] { 1.0 } else { 0.0 };
            self.zu[k] = if self.has_hi[k] { 1.0 } else { 0.0 };
        }
        self.v.iter_mut().for_each(|v| *v = 1.0);
    }

    /// Constraint multipliers minimizing the dual infeasibility for the
    /// current bound multipliers; zero if they come out implausibly large.
    fn least_squares_multipliers(&mut self) -> Vec<f64> {
        let (nf, m, mi) = (self.nf(), self.m, self.mi);
        if m == 0 {
            return Vec::new();
        }
        let mut kvals = vec![0.0; self.kkt_entries.len()];
        let off = self.hess_keep.len();
        for (slot, &(k, _, _)) in kvals[off..].iter_mut().zip(&self.jac_keep) {
            *slot = self.jac[k];
        }
        let mut diag = vec![1.0; nf + m];
        for (i, d) in diag[nf..].iter_mut().enumerate() {
            *d = if i < mi { -1.0 } else { -DELTA_C };
        }
        let inertia = self.ldl.factor(&kvals, &diag, 1e-14);
        if inertia != (Inertia { positive: nf, negative: m, zero: 0 }) {
            return vec![0.0; m];
        }
        let mut rhs = vec![0.0; nf + m];
        for k in 0..nf {
            rhs[k] = self.grad[self.free[k]] - self.zl[k] + self.zu[k];
        }
        for i in 0..mi {
            rhs[nf + i] = self.v[i];
        }
        self.ldl.solve(&mut rhs);
        let y: Vec<f64> = rhs[nf..].iter().map(|v| -v).collect();
        if y.iter().any(|v| !v.is_finite() || v.abs() > MAX_INIT_MULT) {
            vec![0.0; m]
        } else {
            y
        }
    }

    /// `∇f + Jᵀy` over all variables.
    fn lagrangian_gradient(&self) -> Vec<f64> {
        let mut r = self.grad.clone();
        for (&(row, col), &v) in self.jac_struct.iter().zip(&self.jac) {
            r[col] += v * self.y[row];
        }
        r
    }

    fn unscaled_multipliers(&self, lag_grad: &[f64]) -> Multipliers {
        let mut m = Multipliers::zeros(self.n, self.mi, self.m - self.mi);
        for i in 0..self.m {
            let y = self.y[i] * self.con_s[i] / self.obj_s;
            if i < self.mi {
                m.ineq[i] = y;
            } else {
                m.eq[i - self.mi] = y;
            }
        }
        let mut is_free = vec![false; self.n];
        for (k, &i) in self.free.iter().enumerate() {
            m.lower[i] = self.zl[k] / self.obj_s;
            m.upper[i] = self.zu[k] / self.obj_s;
            is_free[i] = true;
        }
        for i in (0..self.n).filter(|&i| !is_free[i]) {
            let r = lag_grad[i] / self.obj_s;
            m.lower[i] = r.max(0.0);
            m.upper[i] = (-r).max(0.0);
        }
        m
    }

    fn unscaled_kkt(&self, lag_grad: &[f64]) -> (f64, Multipliers) {
        let mult = self.unscaled_multipliers(lag_grad);
        let grad: Vec<f64> = self.grad.iter().map(|g| g / self.obj_s).collect();
        let c: Vec<f64> = self.c.iter().zip(&self.con_s).map(|(c, s)| c / s).collect();
        let jac: Vec<f64> = self.jac.iter().zip(&self.jac_struct).map(|(v, &(r, _))| v / self.con_s[r]).collect();
        let parts = kkt_parts(&self.z, &self.lo, &self.hi, &grad, &c, self.mi, &self.jac_struct, &jac, &mult);
        (parts.max(), mult)
    }

    /// Scaled optimality error of the barrier problem for `mu`.
    fn barrier_error(&self, lag_grad: &[f64], mu: f64) -> f64 {
        let nf = self.nf();
        let mut dual = 0.0f64;
        for k in 0..nf {
            dual = dual.max((lag_grad[self.free[k]] - self.zl[k] + self.zu[k]).abs());
        }
        for i in 0..self.mi {
            dual = dual.max((self.y[i] - self.v[i]).abs());
        }
        let mut primal = 0.0f64;
        for i in 0..self.m {
            let r = if i < self.mi { self.c[i] + self.s[i] } else { self.c[i] };
            primal = primal.max(r.abs());
        }
        let mut compl = 0.0f64;
        for k in 0..nf {
            if self.has_lo[k] {
                compl = compl.max((self.dist_lo(k, &self.z) * self.zl[k] - mu).abs());
            }
            if self.has_hi[k] {
                compl = compl.max((self.dist_hi(k, &self.z) * self.zu[k] - mu).abs());
            }
        }
        for i in 0..self.mi {
            compl = compl.max((self.s[i] * self.v[i] - mu).abs());
        }
        let bound_mults: f64 = self.zl.iter().chain(&self.zu).chain(&self.v).map(|v| v.abs()).sum();
        let count_b = (2 * nf + self.mi).max(1) as f64;
        let sd = (((self.y.iter().map(|v| v.abs()).sum::<f64>() + bound_mults) / (count_b + self.m as f64)).max(100.0))
            / 100.0;
        let sc = ((bound_mults / count_b).max(100.0)) / 100.0;
        (dual / sd).max(primal).max(compl / sc)
    }

    /// Barrier objective.
    fn phi(&self, z: &[f64], s: &[f64], f: f64) -> f64 {
        let mut phi = f;
        for k in 0..self.nf() {
            if self.has_lo[k] {
                phi -= self.mu * self.dist_lo(k, z).ln();
            }
            if self.has_hi[k] {
                phi -= self.mu * self.dist_hi(k, z).ln();
            }
        }
        for &si in s {
            phi -= self.mu * si.ln();
        }
        phi
    }

    /// ℓ1 constraint violation.
    fn theta(&self, s: &[f64], c: &[f64]) -> f64 {
        (0..self.m).map(|i| if i < self.mi { (c[i] + s[i]).abs() } else { c[i].abs() }).sum()
    }

    fn acceptable_to_filter(&self, theta: f64, phi: f64) -> bool {
        self.filter.iter().all(|&(ft, fp)| theta < ft || phi < fp)
    }

    fn augment_filter(&mut self, theta: f64, phi: f64) {
        let entry = ((1.0 - GAMMA_THETA) * theta, phi - GAMMA_PHI * theta);
        self.filter.retain(|&(t, p)| t < entry.0 || p < entry.1);
        self.filter.push(entry);
    }

    fn run(&mut self, start: Instant) -> Solution {
        let nf = self.nf();
        let m = self.m;
        let mut log = Vec::new();
        let mut best: Option<(f64, Vec<f64>, Multipliers, f64)> = None;
        let mut iter = 0;
        let mut message = String::new();

        let status = loop {
            if iter > 0 && self.stop.is_some_and(|stop| stop(&self.z)) {
                break Status::Optimal;
            }
            let lag_grad = self.lagrangian_gradient();
            let (kkt, mult) = self.unscaled_kkt(&lag_grad);
            if best.as_ref().is_none_or(|b| kkt < b.0) {
                best = Some((kkt, self.z.clone(), mult, self.f / self.obj_s));
            }
            if kkt <= self.opts.kkt_tol && self.stop.is_none() {
                break Status::Optimal;
            }
            if iter >= self.opts.max_iter {
                break Status::IterLimit;
            }
            if start.elapsed().as_secs_f64() > self.opts.max_time {
                break Status::TimeLimit;
            }

            // Monotone barrier update.
            let mu_before = self.mu;
            while self.mu > MU_MIN && self.barrier_error(&lag_grad, self.mu) <= KAPPA_EPS * self.mu {
                self.mu = MU_MIN.max((self.opts.mu_shrink * self.mu).min(self.mu.powf(1.5)));
            }
            if self.mu != mu_before {
                self.filter.clear();
            }

            let newton = match self.newton_system(&lag_grad) {
                Ok(nt) => nt,
                Err(e) => {
                    message = e;
                    break Status::Infeasible;
                }
            };
            let sol = self.solve_refined(&newton.rhs, &newton.kvals, &newton.diag_true);
            let step = self.recover(&sol, &newton.sigma_s);
            let alpha_d = self.max_dual_step(&step);

            let accepted = match self.line_search(&step, &newton) {
                Some(t) => t,
                None if self.may_restore => match self.restore(start, &mut iter) {
                    Ok(()) => {
                        if self.opts.log {
                            log.push(self.log_entry(iter, 0.0, 0.0, newton.delta_w));
                        }
                        continue;
                    }
                    Err(e) => {
                        message = e;
                        break Status::Infeasible;
                    }
                },
                None => {
                    message = "line search failed".into();
                    break Status::Infeasible;
                }
            };

            // Accept.
            let old_z = std::mem::replace(&mut self.z, accepted.z);
            self.s = accepted.s;
            self.f = accepted.f;
            self.c = accepted.c;
            for i in 0..m {
                self.y[i] += accepted.alpha * step.dy[i];
            }
            for k in 0..nf {
                self.zl[k] += alpha_d * step.dzl[k];
                self.zu[k] += alpha_d * step.dzu[k];
            }
            for i in 0..self.mi {
                self.v[i] += alpha_d * step.dv[i];
            }
            if let Err(e) = self.eval_derivs() {
                self.z = old_z;
                message = format!("derivative evaluation failed: {e}");
                break Status::Infeasible;
            }
            self.safeguard_multipliers();
            iter += 1;
            if self.opts.log {
                log.push(self.log_entry(iter, accepted.alpha, alpha_d, newton.delta_w));
            }
        };

        let lag_grad = self.lagrangian_gradient();
        let (kkt, mult) = self.unscaled_kkt(&lag_grad);
        let (kkt, z, multipliers, objective) = match (status, best) {
            (Status::Optimal, _) | (_, None) => (kkt, self.z.clone(), mult, self.f / self.obj_s),
            (_, Some(b)) => b,
        };
        if message.is_empty() {
            message = match status {
                Status::Optimal => "converged".into(),
                Status::IterLimit => "iteration limit reached".into(),
                Status::TimeLimit => "time limit reached".into(),
                Status::Infeasible => "failed".into(),
            };
        }
        Solution { status, z, objective, multipliers, iterations: iter, solve_time: 0.0, kkt, message, log }
    }

    fn log_entry(&self, iter: usize, alpha_primal: f64, alpha_dual: f64, regularization: f64) -> IterLog {
        let lg = self.lagrangian_gradient();
        IterLog {
            iter,
            objective: self.f / self.obj_s,
            kkt: self.unscaled_kkt(&lg).0,
            mu: self.mu,
            alpha_primal,
            alpha_dual,
            regularization,
        }
    }

    /// Assembles and factors the reduced Newton system, correcting its
    /// inertia by adding a multiple of the identity to the Hessian block.
    fn newton_system(&mut self, lag_grad: &[f64]) -> Result<Newton, String> {
        let (nf, m, mi) = (self.nf(), self.m, self.mi);
        let dim = nf + m;
        let lambda: Vec<f64> = self.y.iter().zip(&self.con_s).map(|(y, s)| y * s).collect();
        let mut hv = vec![0.0; self.hess_struct.len()];
        self.p
            .hessian_values(&self.z, self.obj_s, &lambda, &mut hv)
            .map_err(|e| format!("Hessian evaluation failed: {e}"))?;
        if hv.iter().any(|v| !v.is_finite()) {
            return Err("non-finite Hessian".into());
        }
        let mut kvals = vec![0.0; self.kkt_entries.len()];
        for (slot, &(k, _, _)) in kvals.iter_mut().zip(&self.hess_keep) {
            *slot = hv[k];
        }
        let off = self.hess_keep.len();
        for (slot, &(k, _, _)) in kvals[off..].iter_mut().zip(&self.jac_keep) {
            *slot = self.jac[k];
        }

        let mut sigma_x = vec![0.0; nf];
        for k in 0..nf {
            if self.has_lo[k] {
                sigma_x[k] += self.zl[k] / self.dist_lo(k, &self.z);
            }
            if self.has_hi[k] {
                sigma_x[k] += self.zu[k] / self.dist_hi(k, &self.z);
            }
        }
        let sigma_s: Vec<f64> = (0..mi).map(|i| self.v[i] / self.s[i]).collect();

        let mut diag_true = vec![0.0; dim];
        let mut diag_fact = vec![0.0; dim];
        let mut delta_w = 0.0;
        loop {
            for k in 0..nf {
                diag_true[k] = sigma_x[k] + delta_w;
                diag_fact[k] = diag_true[k];
            }
            for i in 0..m {
                diag_true[nf + i] = if i < mi { -1.0 / sigma_s[i] } else { 0.0 };
                diag_fact[nf + i] = diag_true[nf + i] - DELTA_C;
            }
            let inertia = self.ldl.factor(&kvals, &diag_fact, 1e-14);
            if inertia == (Inertia { positive: nf, negative: m, zero: 0 }) {
                break;
            }
            delta_w = if delta_w == 0.0 {
                if self.delta_w_last == 0.0 {
                    DELTA_W_FIRST
                } else {
                    (self.delta_w_last / 3.0).max(1e-20)
                }
            } else if self.delta_w_last == 0.0 {
                delta_w * 100.0
            } else {
                delta_w * DELTA_W_GROWTH
            };
            if delta_w > DELTA_W_MAX {
                return Err("could not correct the inertia of the Newton system".into());
            }
        }
        if delta_w > 0.0 {
            self.delta_w_last = delta_w;
        }

        let mut rhs = vec![0.0; dim];
        for k in 0..nf {
            let i = self.free[k];
            let mut gb = lag_grad[i];
            if self.has_lo[k] {
                gb -= self.mu / self.dist_lo(k, &self.z);
            }
            if self.has_hi[k] {
                gb += self.mu / self.dist_hi(k, &self.z);
            }
            rhs[k] = -gb;
        }
        for i in 0..m {
            rhs[nf + i] = if i < mi {
                -(self.c[i] + self.s[i]) - (self.mu / self.s[i] - self.y[i]) / sigma_s[i]
            } else {
                -self.c[i]
            };
        }
        Ok(Newton { kvals, diag_true, sigma_s, rhs, delta_w })
    }

    /// Backtracking filter line search. `None` means the step size fell
    /// below its minimum and restoration is needed.
    fn line_search(&mut self, step: &Step, nt: &Newton) -> Option<Trial> {
        let nf = self.nf();
        let theta0 = self.theta(&self.s, &self.c);
        let phi0 = self.phi(&self.z, &self.s, self.f);
        let mut dphi = 0.0;
        for k in 0..nf {
            let mut g = self.grad[self.free[k]];
            if self.has_lo[k] {
                g -= self.mu / self.dist_lo(k, &self.z);
            }
            if self.has_hi[k] {
                g += self.mu / self.dist_hi(k, &self.z);
            }
            dphi += g * step.dx[k];
        }
        for i in 0..self.mi {
            dphi -= self.mu / self.s[i] * step.ds[i];
        }
        let alpha_p = self.max_primal_step(step);

        // Steps that no longer move the iterate are taken as they are.
        let tiny = (0..nf).all(|k| step.dx[k].abs() <= 10.0 * f64::EPSILON * (1.0 + self.z[self.free[k]].abs()))
            && (0..self.mi).all(|i| step.ds[i].abs() <= 10.0 * f64::EPSILON * (1.0 + self.s[i].abs()));
        if tiny {
            let (z, s) = self.trial(&step.dx, &step.ds, alpha_p);
            let (f, c) = self.eval_fc(&z).ok()?;
            return Some(Trial { z, s, f, c, alpha: alpha_p });
        }

        let alpha_min = if dphi < 0.0 {
            let mut a = GAMMA_THETA.min(GAMMA_PHI * theta0 / -dphi);
            if theta0 <= self.theta_min {
                a = a.min(DELTA_SWITCH * theta0.powf(S_THETA) / (-dphi).powf(S_PHI));
            }
            GAMMA_ALPHA * a
        } else {
            GAMMA_ALPHA * GAMMA_THETA
        };

        let mut alpha = alpha_p;
        let mut first = true;
        while alpha >= alpha_min {
            let switching = dphi < 0.0 && alpha * (-dphi).powf(S_PHI) > DELTA_SWITCH * theta0.powf(S_THETA);
            let f_type = switching && theta0 <= self.theta_min;
            let acceptable = |ip: &Self, theta: f64, phi: f64| {
                if theta > ip.theta_max || !ip.acceptable_to_filter(theta, phi) {
                    return false;
                }
                if f_type {
                    phi <= phi0 + ETA_PHI * alpha * dphi
                } else {
                    theta <= (1.0 - GAMMA_THETA) * theta0 || phi <= phi0 - GAMMA_PHI * theta0
                }
            };
            let (z, s) = self.trial(&step.dx, &step.ds, alpha);
            if let Ok((f, c)) = self.eval_fc(&z) {
                let theta = self.theta(&s, &c);
                let phi = self.phi(&z, &s, f);
                if acceptable(self, theta, phi) {
                    if !f_type {
                        self.augment_filter(theta0, phi0);
                    }
                    return Some(Trial { z, s, f, c, alpha });
                }
                if first && theta >= theta0 {
                    if let Some(t) = self.second_order_corrections(nt, alpha, &c, &s, theta, &acceptable) {
                        if !f_type {
                            self.augment_filter(theta0, phi0);
                        }
                        return Some(t);
                    }
                }
            }
            first = false;
            alpha *= 0.5;
        }
        None
    }

    fn second_order_corrections(
        &mut self,
        nt: &Newton,
        alpha: f64,
        c_trial: &[f64],
        s_trial: &[f64],
        theta_trial: f64,
        acceptable: &dyn Fn(&Self, f64, f64) -> bool,
    ) -> Option<Trial> {
        let (nf, mi) = (self.nf(), self.mi);
        let residual = |c: &[f64], s: &[f64], i: usize| if i < mi { c[i] + s[i] } else { c[i] };
        let mut c_soc: Vec<f64> =
            (0..self.m).map(|i| alpha * residual(&self.c, &self.s, i) + residual(c_trial, s_trial, i)).collect();
        let mut theta_old = theta_trial;
        for _ in 0..MAX_SOC {
            let mut rhs = nt.rhs.clone();
            for i in 0..self.m {
                rhs[nf + i] = if i < mi {
                    -c_soc[i] - (self.mu / self.s[i] - self.y[i]) / nt.sigma_s[i]
                } else {
                    -c_soc[i]
                };
            }
            let sol = self.solve_refined(&rhs, &nt.kvals, &nt.diag_true);
            let step = self.recover(&sol, &nt.sigma_s);
            let a = self.max_primal_step(&step);
            let (z, s) = self.trial(&step.dx, &step.ds, a);
            let (f, c) = self.eval_fc(&z).ok()?;
            let theta = self.theta(&s, &c);
            if acceptable(self, theta, self.phi(&z, &s, f)) {
                return Some(Trial { z, s, f, c, alpha });
            }
            if theta > KAPPA_SOC * theta_old {
                return None;
            }
            theta_old = theta;
            for i in 0..self.m {
                c_soc[i] = a * c_soc[i] + residual(&c, &s, i);
            }
        }
        None
    }

    /// Slacks for constraint values `c`: exact where the row is satisfied.
    fn slacks_for(&self, c: &[f64]) -> Vec<f64> {
        let floor = self.mu.min(self.opts.bound_push);
        c[..self.mi].iter().map(|&ci| (-ci).max(floor)).collect()
    }

    /// Reduces the constraint violation by solving the restoration problem
    /// until the filter accepts the point.
    fn restore(&mut self, start: Instant, iter: &mut usize) -> Result<(), String> {
        let theta0 = self.theta(&self.s, &self.c);
        let phi0 = self.phi(&self.z, &self.s, self.f);
        self.augment_filter(theta0, phi0);
        if theta0 <= f64::EPSILON * self.m as f64 {
            return Err("line search failed at a feasible point".into());
        }

        let resto = Restoration::new(self.p, &self.con_s, &self.z, self.mu.sqrt());
        let cmax = self.c.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mu_r = self.mu.max(cmax);
        let z0 = resto.start(&self.c, mu_r);
        let remaining = self.opts.max_time - start.elapsed().as_secs_f64();
        let opts = SolveOptions {
            mu_init: mu_r,
            max_iter: self.opts.max_iter.saturating_sub(*iter).max(1),
            max_time: remaining.max(0.0),
            kkt_tol: 1e-3 * self.opts.kkt_tol,
            log: false,
            ..self.opts
        };

        let n = self.n;
        let this = &*self;
        let target = |zr: &[f64]| -> bool {
            let z = &zr[..n];
            let Ok((f, c)) = this.eval_fc(z) else { return false };
            let s = this.slacks_for(&c);
            let theta = this.theta(&s, &c);
            theta <= KAPPA_RESTO * theta0 && this.acceptable_to_filter(theta, this.phi(z, &s, f))
        };
        let sol = {
            let mut inner = Ip::new(&resto, &z0, None, &opts).map_err(|e| format!("restoration failed: {e}"))?;
            inner.stop = Some(&target);
            inner.may_restore = false;
            inner.run(start)
        };
        *iter += sol.iterations.max(1);
        if !target(&sol.z) {
            return Err(match sol.status {
                Status::Optimal => "converged to a point of local infeasibility".into(),
                Status::TimeLimit => "time limit reached during restoration".into(),
                _ => format!("restoration failed: {}", sol.message),
            });
        }

        self.z.copy_from_slice(&sol.z[..n]);
        let (f, c) = self.eval_fc(&self.z).map_err(|e| e.to_string())?;
        self.s = self.slacks_for(&c);
        self.f = f;
        self.c = c;
        self.eval_derivs().map_err(|e| e.to_string())?;
        self.reset_bound_multipliers();
        self.y = self.least_squares_multipliers();
        self.safeguard_multipliers();
        Ok(())
    }

    /// Solves with the regularized factors, refining against the matrix
    /// without the dual regularization.
    fn solve_refined(&mut self, rhs: &[f64], kvals: &[f64], diag_true: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.ldl.solve(&mut x);
        let norm_b = rhs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut r = vec![0.0; rhs.len()];
        let mut last = f64::INFINITY;
        for _ in 0..10 {
            sym_matvec(&self.kkt_entries, kvals, diag_true, &x, &mut r);
            for (ri, bi) in r.iter_mut().zip(rhs) {
                *ri = bi - *ri;
            }
            let res = r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if res <= 1e-12 * (1.0 + norm_b) || res >= 0.9 * last {
                break;
            }
            last = res;
            self.ldl.solve(&mut r);
            for (xi, di) in x.iter_mut().zip(&r) {
                *xi += di;
            }
        }
        x
    }

    fn recover(&self, sol: &[f64], sigma_s: &[f64]) -> Step {
        let nf = self.nf();
        let (m, mi) = (self.m, self.mi);
        let dx = sol[..nf].to_vec();
        let dy = sol[nf..nf + m].to_vec();
        let ds: Vec<f64> = (0..mi).map(|i| (self.mu / self.s[i] - self.y[i] - dy[i]) / sigma_s[i]).collect();
        let mut dzl = vec![0.0; nf];
        let mut dzu = vec![0.0; nf];
        for k in 0..nf {
            if self.has_lo[k] {
                let d = self.dist_lo(k, &self.z);
                dzl[k] = self.mu / d - self.zl[k] - self.zl[k] / d * dx[k];
            }
            if self.has_hi[k] {
                let d = self.dist_hi(k, &self.z);
                dzu[k] = self.mu / d - self.zu[k] + self.zu[k] / d * dx[k];
            }
        }
        let dv: Vec<f64> = (0..mi).map(|i| self.mu / self.s[i] - self.v[i] - sigma_s[i] * ds[i]).collect();
        Step { dx, ds, dy, dzl, dzu, dv }
    }

    fn max_primal_step(&self, step: &Step) -> f64 {
        let mut a = 1.0f64;
        for k in 0..self.nf() {
            let d = step.dx[k];
            if self.has_lo[k] && d < 0.0 {
                a = a.min(-TAU * self.dist_lo(k, &self.z) / d);
            }
            if self.has_hi[k] && d > 0.0 {
                a = a.min(TAU * self.dist_hi(k, &self.z) / d);
            }
        }
        for i in 0..self.mi {
            if step.ds[i] < 0.0 {
                a = a.min(-TAU * self.s[i] / step.ds[i]);
            }
        }
        a
    }

    fn max_dual_step(&self, step: &Step) -> f64 {
        let mut a = 1.0f64;
        let mut limit = |val: f64, d: f64| {
            if d < 0.0 {
                a = a.min(-TAU * val / d);
            }
        };
        for k in 0..self.nf() {
            if self.has_lo[k] {
                limit(self.zl[k], step.dzl[k]);
            }
            if self.has_hi[k] {
                limit(self.zu[k], step.dzu[k]);
            }
        }
        for i in 0..self.mi {
            limit(self.v[i], step.dv[i]);
        }
        a
    }

    fn trial(&self, dx: &[f64], ds: &[f64], alpha: f64) -> (Vec<f64>, Vec<f64>) {
        let mut z = self.z.clone();
        for (k, &i) in self.free.iter().enumerate() {
            z[i] += alpha * dx[k];
            // guard against rounding onto the bound
            if self.has_lo[k] {
                z[i] = z[i].max(self.lo[i] + f64::EPSILON * self.lo[i].abs().max(1.0) * 1e-2);
            }
            if self.has_hi[k] {
                z[i] = z[i].min(self.hi[i] - f64::EPSILON * self.hi[i].abs().max(1.0) * 1e-2);
            }
        }
        let s = self.s.iter().zip(ds).map(|(s, d)| (s + alpha * d).max(f64::MIN_POSITIVE)).collect();
        (z, s)
    }

    fn safeguard_multipliers(&mut self) {
        for k in 0..self.nf() {
            if self.has_lo[k] {
                let d = self.dist_lo(k, &self.z);
                self.zl[k] = self.zl[k].clamp(self.mu / (KAPPA_SIGMA * d), KAPPA_SIGMA * self.mu / d);
            }
            if self.has_hi[k] {
                let d = self.dist_hi(k, &self.z);
                self.zu[k] = self.zu[k].clamp(self.mu / (KAPPA_SIGMA * d), KAPPA_SIGMA * self.mu / d);
            }
        }
        for i in 0..self.mi {
            self.v[i] = self.v[i].clamp(self.mu / (KAPPA_SIGMA * self.s[i]), KAPPA_SIGMA * self.mu / self.s[i]);
        }
    }
}
