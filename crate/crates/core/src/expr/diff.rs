use std::collections::BTreeMap;

use super::eval::{apply_binary, apply_unary, eval_with, Dual, DomainError};
use super::{BinaryOp, EvalEnv, Expr, Tape, UnaryOp, Var, VarSpace};

fn is_const(e: &Expr, v: f64) -> bool {
    matches!(e, Expr::Constant(c) if *c == v)
}

fn fold_unary(op: UnaryOp, a: Expr) -> Expr {
    if let Expr::Constant(c) = a {
        if let Ok(r) = apply_unary(op, c) {
            if r.is_finite() {
                return Expr::Constant(r);
            }
        }
    }
    if op == UnaryOp::Neg {
        if let Expr::Unary(UnaryOp::Neg, inner) = a {
            return *inner;
        }
    }
    Expr::unary(op, a)
}

fn fold_binary(op: BinaryOp, a: Expr, b: Expr) -> Expr {
    if let (Expr::Constant(x), Expr::Constant(y)) = (&a, &b) {
        if let Ok(r) = apply_binary(op, *x, *y) {
            if r.is_finite() {
                return Expr::Constant(r);
            }
        }
    }
    match op {
        BinaryOp::Add if is_const(&a, 0.0) => b,
        BinaryOp::Add if is_const(&b, 0.0) => a,
        BinaryOp::Sub if is_const(&b, 0.0) => a,
        BinaryOp::Sub if is_const(&a, 0.0) => fold_unary(UnaryOp::Neg, b),
        BinaryOp::Mul if is_const(&a, 0.0) || is_const(&b, 0.0) => Expr::Constant(0.0),
        BinaryOp::Mul if is_const(&a, 1.0) => b,
        BinaryOp::Mul if is_const(&b, 1.0) => a,
        BinaryOp::Div if is_const(&a, 0.0) => Expr::Constant(0.0),
        BinaryOp::Div if is_const(&b, 1.0) => a,
        BinaryOp::Pow if is_const(&b, 1.0) => a,
        BinaryOp::Pow if is_const(&b, 0.0) => Expr::Constant(1.0),
        _ => Expr::binary(op, a, b),
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    fold_binary(BinaryOp::Add, a, b)
}
fn sub(a: Expr, b: Expr) -> Expr {
    fold_binary(BinaryOp::Sub, a, b)
}
fn mul(a: Expr, b: Expr) -> Expr {
    fold_binary(BinaryOp::Mul, a, b)
}
fn div(a: Expr, b: Expr) -> Expr {
    fold_binary(BinaryOp::Div, a, b)
}
fn pow(a: Expr, b: Expr) -> Expr {
    fold_binary(BinaryOp::Pow, a, b)
}
fn un(op: UnaryOp, a: Expr) -> Expr {
    fold_unary(op, a)
}

/// Symbolic partial derivative `∂e/∂v`, simplified by constant folding and
/// 0/1 absorption. `abs` differentiates to `sign` with `sign(0) = 0`.
pub fn diff_symbolic(e: &Expr, v: Var) -> Expr {
    match e {
        Expr::Constant(_) => Expr::Constant(0.0),
        Expr::Var(w) => Expr::Constant(if *w == v { 1.0 } else { 0.0 }),
        Expr::Unary(op, a) => {
            let da = diff_symbolic(a, v);
            if is_const(&da, 0.0) {
                return Expr::Constant(0.0);
            }
            let a = (**a).clone();
            let outer = match op {
                UnaryOp::Neg => return un(UnaryOp::Neg, da),
                UnaryOp::Sin => un(UnaryOp::Cos, a),
                UnaryOp::Cos => un(UnaryOp::Neg, un(UnaryOp::Sin, a)),
                UnaryOp::Tan => add(Expr::Constant(1.0), pow(un(UnaryOp::Tan, a), Expr::Constant(2.0))),
                UnaryOp::Atan => {
                    return div(da, add(Expr::Constant(1.0), pow(a, Expr::Constant(2.0))));
                }
                UnaryOp::Sqrt => return div(da, mul(Expr::Constant(2.0), un(UnaryOp::Sqrt, a))),
                UnaryOp::Exp => un(UnaryOp::Exp, a),
                UnaryOp::Log => return div(da, a),
                UnaryOp::Abs => un(UnaryOp::Sign, a),
                UnaryOp::Tanh => sub(Expr::Constant(1.0), pow(un(UnaryOp::Tanh, a), Expr::Constant(2.0))),
                UnaryOp::Sign => return Expr::Constant(0.0),
            };
            mul(outer, da)
        }
        Expr::Binary(op, a, b) => {
            let da = diff_symbolic(a, v);
            let db = diff_symbolic(b, v);
            let (a, b) = ((**a).clone(), (**b).clone());
            match op {
                BinaryOp::Add => add(da, db),
                BinaryOp::Sub => sub(da, db),
                BinaryOp::Mul => add(mul(da, b), mul(a, db)),
                BinaryOp::Div => {
                    let first = div(da, b.clone());
                    let second = div(mul(a, db), pow(b, Expr::Constant(2.0)));
                    sub(first, second)
                }
                BinaryOp::Pow => {
                    let d_base = if is_const(&da, 0.0) {
                        Expr::Constant(0.0)
                    } else {
                        // b · a^(b-1) · da
                        let reduced = sub(b.clone(), Expr::Constant(1.0));
                        mul(mul(b.clone(), pow(a.clone(), reduced)), da)
                    };
                    let d_exp = if is_const(&db, 0.0) {
                        Expr::Constant(0.0)
                    } else {
                        mul(mul(pow(a.clone(), b), un(UnaryOp::Log, a)), db)
                    };
                    add(d_base, d_exp)
                }
            }
        }
    }
}

/// Gradient of `e` over the flat [`VarSpace`] of `env` (states, controls,
/// `t`, `tf`, initial states, final states). Each structurally present
/// variable is its own seed group for a forward dual-number pass.
pub fn grad(e: &Expr, env: &EvalEnv) -> Result<Vec<f64>, DomainError> {
    let space = VarSpace::new(env.x.len(), env.u.len());
    let mut out = vec![0.0; space.len()];
    for v in e.sparsity() {
        let d = eval_with(e, &|w: Var| Dual::new(env.get(w), if w == v { 1.0 } else { 0.0 }))?;
        if !d.re.is_finite() || !d.eps.is_finite() {
            return Err(DomainError::NonFinite);
        }
        out[space.index(v)] = d.eps;
    }
    Ok(out)
}

/// Sparse symmetric Hessian keyed by variable pairs; each unordered pair is stored once.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SymmetricHessian {
    entries: BTreeMap<(Var, Var), f64>,
}

impl SymmetricHessian {
    fn key(a: Var, b: Var) -> (Var, Var) {
        if a <= b {
            (a, b)
        } else {
            (b, a)
        }
    }

    /// Entry `H[a, b]`; zero when the pair is structurally absent.
    pub fn get(&self, a: Var, b: Var) -> f64 {
        self.entries.get(&Self::key(a, b)).copied().unwrap_or(0.0)
    }

    pub fn contains(&self, a: Var, b: Var) -> bool {
        self.entries.contains_key(&Self::key(a, b))
    }

    /// Stored pairs `(a, b)` with `a <= b`.
    pub fn iter(&self) -> impl Iterator<Item = (Var, Var, f64)> + '_ {
        self.entries.iter().map(|(&(a, b), &v)| (a, b, v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Hessian of `e` by forward-mode differentiation of its symbolic gradient,
/// compressed with a distance-2 coloring of the structural pattern.
pub fn hessian(e: &Expr, env: &EvalEnv) -> Result<SymmetricHessian, DomainError> {
    let d = DiffExpr::new(e);
    let slots: Vec<f64> = d.support().iter().map(|&v| env.get(v)).collect();
    let mut vals = vec![0.0; d.hessian_pattern().len()];
    d.hessian(&slots, &mut vals, &mut Vec::new())?;
    let mut h = SymmetricHessian::default();
    for (&(i, j), &v) in d.hessian_pattern().iter().zip(&vals) {
        h.entries.insert(SymmetricHessian::key(d.support[i], d.support[j]), v);
    }
    Ok(h)
}

#[derive(Debug, Clone, Copy)]
struct HessHit {
    row: usize,
    pos: usize,
    weight: f64,
}

/// An expression compiled for repeated value, gradient and Hessian
/// evaluation. Values are supplied per slot, in [`DiffExpr::support`] order.
#[derive(Debug, Clone)]
pub struct DiffExpr {
    support: Vec<Var>,
    value: Tape,
    partials: Vec<Tape>,
    /// Lower-triangle local pairs `(i, j)`, `i >= j`.
    pattern: Vec<(usize, usize)>,
    colors: Vec<Vec<usize>>,
    hits: Vec<Vec<HessHit>>,
}

impl DiffExpr {
    pub fn new(e: &Expr) -> Self {
        let support: Vec<Var> = e.sparsity().into_iter().collect();
        let slot = |v: Var| support.binary_search(&v).expect("variable outside support");
        let value = Tape::compile(e, &slot);
        let partial_exprs: Vec<Expr> = support.iter().map(|&v| diff_symbolic(e, v)).collect();
        let partials = partial_exprs.iter().map(|p| Tape::compile(p, &slot)).collect();

        let n = support.len();
        let mut full = vec![vec![false; n]; n];
        for (i, p) in partial_exprs.iter().enumerate() {
            for w in p.sparsity() {
                let j = slot(w);
                full[i][j] = true;
                full[j][i] = true;
            }
        }
        let mut pattern = Vec::new();
        for (i, row) in full.iter().enumerate() {
            for (j, &nz) in row.iter().enumerate().take(i + 1) {
                if nz {
                    pattern.push((i, j));
                }
            }
        }

        // Greedy distance-2 column coloring: two columns share a color only
        // if no row has a structural nonzero in both.
        let mut color_of = vec![usize::MAX; n];
        let mut colors: Vec<Vec<usize>> = Vec::new();
        for j in 0..n {
            if !(0..n).any(|i| full[i][j]) {
                continue;
            }
            let c = (0..)
                .find(|&c| {
                    colors.get(c).is_none_or(|cols: &Vec<usize>| {
                        cols.iter().all(|&k| (0..n).all(|i| !(full[i][j] && full[i][k])))
                    })
                })
                .unwrap();
            if c == colors.len() {
                colors.push(Vec::new());
            }
            colors[c].push(j);
            color_of[j] = c;
        }

        let pos_of = |i: usize, j: usize| {
            let key = if i >= j { (i, j) } else { (j, i) };
            pattern.binary_search(&key).expect("pair in pattern")
        };
        let mut hits = vec![Vec::new(); colors.len()];
        for i in 0..n {
            for j in 0..n {
                if full[i][j] {
                    let weight = if i == j { 1.0 } else { 0.5 };
                    hits[color_of[j]].push(HessHit { row: i, pos: pos_of(i, j), weight });
                }
            }
        }

        DiffExpr { support, value, partials, pattern, colors, hits }
    }

    pub fn support(&self) -> &[Var] {
        &self.support
    }

    pub fn hessian_pattern(&self) -> &[(usize, usize)] {
        &self.pattern
    }

    pub fn num_colors(&self) -> usize {
        self.colors.len()
    }

    pub fn value(&self, slots: &[f64], stack: &mut Vec<f64>) -> Result<f64, DomainError> {
        self.value.eval(slots, stack)
    }

    /// Gradient over the support, from the symbolic partial derivatives.
    pub fn gradient(&self, slots: &[f64], out: &mut [f64], stack: &mut Vec<f64>) -> Result<(), DomainError> {
        for (o, p) in out.iter_mut().zip(&self.partials) {
            *o = p.eval(slots, stack)?;
        }
        Ok(())
    }

    /// Hessian entries aligned with [`DiffExpr::hessian_pattern`].
    pub fn hessian(&self, slots: &[f64], out: &mut [f64], stack: &mut Vec<Dual>) -> Result<(), DomainError> {
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut duals: Vec<Dual> = slots.iter().map(|&v| Dual::new(v, 0.0)).collect();
        for (cols, hits) in self.colors.iter().zip(&self.hits) {
            for &j in cols {
                duals[j].eps = 1.0;
            }
            for h in hits {
                let d = self.partials[h.row].eval(&duals, stack)?;
                if !d.eps.is_finite() {
                    return Err(DomainError::NonFinite);
                }
                out[h.pos] += h.weight * d.eps;
            }
            for &j in cols {
                duals[j].eps = 0.0;
            }
        }
        Ok(())
    }
}
