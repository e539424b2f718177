//! Sparse NLP assembled from compiled expression terms.
//!
//! Every objective or constraint function is a constant plus a linear part
//! plus a sum of terms `coef · S^p · e(v)`, where `S = t_f - t0 - t_ex` is
//! the time span (`p` is 0 or 1) and each slot of `e` is bound to a design
//! variable, an affine function of `t_f`, or a constant.

use std::collections::HashMap;

use crate::expr::{Dual, DiffExpr, DomainError};
use crate::nlp::Nlp;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum ZRef {
    Index(usize),
    /// `a + b · z[idx]`
    Affine { idx: usize, a: f64, b: f64 },
    Const(f64),
}

impl ZRef {
    fn value(self, z: &[f64]) -> f64 {
        match self {
            ZRef::Index(i) => z[i],
            ZRef::Affine { idx, a, b } => a + b * z[idx],
            ZRef::Const(c) => c,
        }
    }

    fn dep(self) -> Option<(usize, f64)> {
        match self {
            ZRef::Index(i) => Some((i, 1.0)),
            ZRef::Affine { idx, b, .. } => Some((idx, b)),
            ZRef::Const(_) => None,
        }
    }
}

/// Time span `S = tf - start`, with `tf` a variable or a constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Span {
    pub start: f64,
    pub tf: ZRef,
}

impl Span {
    fn value(&self, z: &[f64]) -> f64 {
        self.tf.value(z) - self.start
    }

    fn var(&self) -> Option<usize> {
        self.tf.dep().map(|(i, _)| i)
    }
}

#[derive(Debug, Clone)]
struct Term {
    expr: usize,
    coef: f64,
    span: bool,
    slots: Vec<ZRef>,
    /// `(slot, position, factor)`
    jac: Vec<(usize, usize, f64)>,
    span_jac: Option<usize>,
    /// `(pattern entry, position, factor)`
    hess: Vec<(usize, usize, f64)>,
    /// `(slot, position, factor)` cross terms between `t_f` and the slots.
    span_hess: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Clone, Default)]
struct Func {
    constant: f64,
    /// `(column, coefficient, position)`
    linear: Vec<(usize, f64, usize)>,
    terms: Vec<Term>,
}

/// Collects a sparsity pattern in insertion order.
#[derive(Debug, Default)]
struct Pattern {
    map: HashMap<(usize, usize), usize>,
    list: Vec<(usize, usize)>,
}

impl Pattern {
    fn pos(&mut self, key: (usize, usize)) -> usize {
        let next = self.list.len();
        let p = *self.map.entry(key).or_insert(next);
        if p == next {
            self.list.push(key);
        }
        p
    }
}

/// Where a function's first derivatives go: the dense objective gradient or
/// one row of the constraint Jacobian.
#[derive(Clone, Copy)]
enum Target {
    Objective,
    Row(usize),
}

pub(crate) struct Builder {
    n: usize,
    span: Span,
    exprs: Vec<DiffExpr>,
    objective: Func,
    ineq: Vec<Func>,
    eq: Vec<Func>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

/// Handle to a function under construction.
#[derive(Clone, Copy, PartialEq, Eq)]
pub(crate) enum FuncId {
    Objective,
    Ineq(usize),
    Eq(usize),
}

impl Builder {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, span: Span) -> Self {
        Builder {
            n: lo.len(),
            span,
            exprs: Vec::new(),
            objective: Func::default(),
            ineq: Vec::new(),
            eq: Vec::new(),
            lo,
            hi,
        }
    }

    pub fn add_expr(&mut self, e: DiffExpr) -> usize {
        self.exprs.push(e);
        self.exprs.len() - 1
    }

    pub fn support(&self, expr: usize) -> &[crate::expr::Var] {
        self.exprs[expr].support()
    }

    pub fn new_ineq(&mut self) -> FuncId {
        self.ineq.push(Func::default());
        FuncId::Ineq(self.ineq.len() - 1)
    }

    pub fn new_eq(&mut self) -> FuncId {
        self.eq.push(Func::default());
        FuncId::Eq(self.eq.len() - 1)
    }

    fn func(&mut self, id: FuncId) -> &mut Func {
        match id {
            FuncId::Objective => &mut self.objective,
            FuncId::Ineq(i) => &mut self.ineq[i],
            FuncId::Eq(i) => &mut self.eq[i],
        }
    }

    pub fn constant(&mut self, id: FuncId, c: f64) {
        self.func(id).constant += c;
    }

    pub fn linear(&mut self, id: FuncId, col: usize, a: f64) {
        self.func(id).linear.push((col, a, 0));
    }

    pub fn term(&mut self, id: FuncId, expr: usize, coef: f64, span: bool, slots: Vec<ZRef>) {
        debug_assert_eq!(slots.len(), self.exprs[expr].support().len());
        let t = Term {
            expr,
            coef,
            span,
            slots,
            jac: Vec::new(),
            span_jac: None,
            hess: Vec::new(),
            span_hess: Vec::new(),
        };
        self.func(id).terms.push(t);
    }

    pub fn finish(self) -> TermNlp {
        let Builder { n, span, exprs, mut objective, mut ineq, mut eq, lo, hi } = self;
        let n_ineq = ineq.len();
        let mut jac = Pattern::default();
        let mut hess = Pattern::default();
        let tf_var = span.var();
        let place = |f: &mut Func, target: Target, jac: &mut Pattern, hess: &mut Pattern| {
            let mut jpos = |col: usize| match target {
                Target::Objective => col,
                Target::Row(r) => jac.pos((r, col)),
            };
            for l in &mut f.linear {
                l.2 = jpos(l.0);
            }
            for t in &mut f.terms {
                let de = &exprs[t.expr];
                for (k, r) in t.slots.iter().enumerate() {
                    if let Some((j, b)) = r.dep() {
                        t.jac.push((k, jpos(j), b));
                    }
                }
                let tf = if t.span { tf_var } else { None };
                if let Some(tf) = tf {
                    t.span_jac = Some(jpos(tf));
                }
                for (pk, &(a, b)) in de.hessian_pattern().iter().enumerate() {
                    if let (Some((ja, fa)), Some((jb, fb))) = (t.slots[a].dep(), t.slots[b].dep()) {
                        let factor = if a != b && ja == jb { 2.0 * fa * fb } else { fa * fb };
                        t.hess.push((pk, hess.pos((ja.max(jb), ja.min(jb))), factor));
                    }
                }
                if let Some(tf) = tf {
                    for (k, r) in t.slots.iter().enumerate() {
                        if let Some((j, f)) = r.dep() {
                            let factor = if j == tf { 2.0 * f } else { f };
                            t.span_hess.push((k, hess.pos((tf.max(j), tf.min(j))), factor));
                        }
                    }
                }
            }
        };
        place(&mut objective, Target::Objective, &mut jac, &mut hess);
        for (r, f) in ineq.iter_mut().enumerate() {
            place(f, Target::Row(r), &mut jac, &mut hess);
        }
        for (r, f) in eq.iter_mut().enumerate() {
            place(f, Target::Row(n_ineq + r), &mut jac, &mut hess);
        }
        let max_support = exprs.iter().map(|e| e.support().len()).max().unwrap_or(0);
        let max_pattern = exprs.iter().map(|e| e.hessian_pattern().len()).max().unwrap_or(0);
        let mut rows = ineq;
        rows.append(&mut eq);
        TermNlp {
            n,
            n_ineq,
            span,
            exprs,
            objective,
            rows,
            jac_structure: jac.list,
            hess_structure: hess.list,
            lo,
            hi,
            max_support,
            max_pattern,
        }
    }
}

/// The assembled program. Evaluation is pure in `z`.
#[derive(Debug, Clone)]
pub struct TermNlp {
    n: usize,
    n_ineq: usize,
    span: Span,
    exprs: Vec<DiffExpr>,
    objective: Func,
    rows: Vec<Func>,
    jac_structure: Vec<(usize, usize)>,
    hess_structure: Vec<(usize, usize)>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    max_support: usize,
    max_pattern: usize,
}

struct Scratch {
    slots: Vec<f64>,
    grad: Vec<f64>,
    hess: Vec<f64>,
    stack: Vec<f64>,
    dual_stack: Vec<Dual>,
}

impl TermNlp {
    fn scratch(&self) -> Scratch {
        Scratch {
            slots: Vec::with_capacity(self.max_support),
            grad: vec![0.0; self.max_support],
            hess: vec![0.0; self.max_pattern],
            stack: Vec::new(),
            dual_stack: Vec::new(),
        }
    }

    fn load(&self, t: &Term, z: &[f64], sc: &mut Scratch) {
        sc.slots.clear();
        sc.slots.extend(t.slots.iter().map(|r| r.value(z)));
    }

    fn func_value(&self, f: &Func, z: &[f64], sc: &mut Scratch) -> Result<f64, DomainError> {
        let s = self.span.value(z);
        let mut v = f.constant;
        for &(col, a, _) in &f.linear {
            v += a * z[col];
        }
        for t in &f.terms {
            self.load(t, z, sc);
            let e = self.exprs[t.expr].value(&sc.slots, &mut sc.stack)?;
            v += t.coef * if t.span { s * e } else { e };
        }
        Ok(v)
    }

    fn func_gradient(&self, f: &Func, z: &[f64], out: &mut [f64], sc: &mut Scratch) -> Result<(), DomainError> {
        let s = self.span.value(z);
        for &(_, a, pos) in &f.linear {
            out[pos] += a;
        }
        for t in &f.terms {
            self.load(t, z, sc);
            let de = &self.exprs[t.expr];
            let k = de.support().len();
            de.gradient(&sc.slots, &mut sc.grad[..k], &mut sc.stack)?;
            let scale = if t.span { t.coef * s } else { t.coef };
            for &(slot, pos, factor) in &t.jac {
                out[pos] += scale * sc.grad[slot] * factor;
            }
            if let Some(pos) = t.span_jac {
                out[pos] += t.coef * de.value(&sc.slots, &mut sc.stack)?;
            }
        }
        Ok(())
    }

    fn func_hessian(&self, f: &Func, w: f64, z: &[f64], out: &mut [f64], sc: &mut Scratch) -> Result<(), DomainError> {
        if w == 0.0 {
            return Ok(());
        }
        let s = self.span.value(z);
        for t in &f.terms {
            if t.hess.is_empty() && t.span_hess.is_empty() {
                continue;
            }
            self.load(t, z, sc);
            let de = &self.exprs[t.expr];
            let scale = w * if t.span { t.coef * s } else { t.coef };
            if !t.hess.is_empty() {
                let np = de.hessian_pattern().len();
                de.hessian(&sc.slots, &mut sc.hess[..np], &mut sc.dual_stack)?;
                for &(pk, pos, factor) in &t.hess {
                    out[pos] += scale * sc.hess[pk] * factor;
                }
            }
            if !t.span_hess.is_empty() {
                let k = de.support().len();
                de.gradient(&sc.slots, &mut sc.grad[..k], &mut sc.stack)?;
                for &(slot, pos, factor) in &t.span_hess {
                    out[pos] += w * t.coef * sc.grad[slot] * factor;
                }
            }
        }
        Ok(())
    }
}

impl Nlp for TermNlp {
    fn num_vars(&self) -> usize {
        self.n
    }

    fn num_ineq(&self) -> usize {
        self.n_ineq
    }

    fn num_eq(&self) -> usize {
        self.rows.len() - self.n_ineq
    }

    fn var_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (self.lo.clone(), self.hi.clone())
    }

    fn objective(&self, z: &[f64]) -> Result<f64, DomainError> {
        self.func_value(&self.objective, z, &mut self.scratch())
    }

    fn gradient(&self, z: &[f64], out: &mut [f64]) -> Result<(), DomainError> {
        out.iter_mut().for_each(|o| *o = 0.0);
        self.func_gradient(&self.objective, z, out, &mut self.scratch())
    }

    fn constraints(&self, z: &[f64], out: &mut [f64]) -> Result<(), DomainError> {
        let mut sc = self.scratch();
        for (o, f) in out.iter_mut().zip(&self.rows) {
            *o = self.func_value(f, z, &mut sc)?;
        }
        Ok(())
    }

    fn jacobian_structure(&self) -> Vec<(usize, usize)> {
        self.jac_structure.clone()
    }

    fn jacobian_values(&self, z: &[f64], out: &mut [f64]) -> Result<(), DomainError> {
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut sc = self.scratch();
        for f in &self.rows {
            self.func_gradient(f, z, out, &mut sc)?;
        }
        Ok(())
    }

    fn hessian_structure(&self) -> Vec<(usize, usize)> {
        self.hess_structure.clone()
    }

    fn hessian_values(&self, z: &[f64], obj_factor: f64, lambda: &[f64], out: &mut [f64]) -> Result<(), DomainError> {
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut sc = self.scratch();
        self.func_hessian(&self.objective, obj_factor, z, out, &mut sc)?;
        for (f, &w) in self.rows.iter().zip(lambda) {
            self.func_hessian(f, w, z, out, &mut sc)?;
        }
        Ok(())
    }
}
