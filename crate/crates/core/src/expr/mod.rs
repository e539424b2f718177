//! Scalar expressions over state, control and time symbols.
//!
//! An [`Expr`] is the unit in which dynamics, cost terms and path
//! constraints are written. Expressions are parsed from text (see
//! [`parse`]), evaluated in an [`EvalEnv`], and differentiated either
//! symbolically ([`diff_symbolic`]) or with forward-mode dual numbers
//! ([`grad`], [`hessian`]).

mod diff;
mod eval;
mod parse;
mod tape;

use std::collections::BTreeSet;
use std::fmt;

pub use diff::{diff_symbolic, grad, hessian, DiffExpr, SymmetricHessian};
pub use eval::{eval, DomainError, Dual, EvalEnv, Scalar};
pub use parse::{parse, ParseError};
pub use tape::Tape;

/// What a variable symbol refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VarKind {
    State,
    Control,
    Time,
    FinalTime,
    /// State value at the first grid point (`x1_0`), only meaningful in Mayer terms.
    InitialState,
    /// State value at the last grid point (`x1_f`), only meaningful in Mayer terms.
    FinalState,
}

/// A variable reference. `index` is 0-based and is always 0 for the time symbols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var {
    pub kind: VarKind,
    pub index: usize,
}

impl Var {
    pub const TIME: Var = Var { kind: VarKind::Time, index: 0 };
    pub const FINAL_TIME: Var = Var { kind: VarKind::FinalTime, index: 0 };

    pub fn state(index: usize) -> Self {
        Var { kind: VarKind::State, index }
    }

    pub fn control(index: usize) -> Self {
        Var { kind: VarKind::Control, index }
    }

    pub fn initial_state(index: usize) -> Self {
        Var { kind: VarKind::InitialState, index }
    }

    pub fn final_state(index: usize) -> Self {
        Var { kind: VarKind::FinalState, index }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            VarKind::State => write!(f, "x{}", self.index + 1),
            VarKind::Control => write!(f, "u{}", self.index + 1),
            VarKind::Time => write!(f, "t"),
            VarKind::FinalTime => write!(f, "tf"),
            VarKind::InitialState => write!(f, "x{}_0", self.index + 1),
            VarKind::FinalState => write!(f, "x{}_f", self.index + 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Tan,
    Atan,
    Sqrt,
    Exp,
    Log,
    Abs,
    Tanh,
    /// Derivative of `abs`, with `sign(0) = 0`.
    Sign,
}

impl UnaryOp {
    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Tan => "tan",
            UnaryOp::Atan => "atan",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
            UnaryOp::Abs => "abs",
            UnaryOp::Tanh => "tanh",
            UnaryOp::Sign => "sign",
        }
    }

    pub(crate) fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => UnaryOp::Sin,
            "cos" => UnaryOp::Cos,
            "tan" => UnaryOp::Tan,
            "atan" => UnaryOp::Atan,
            "sqrt" => UnaryOp::Sqrt,
            "exp" => UnaryOp::Exp,
            "log" => UnaryOp::Log,
            "abs" => UnaryOp::Abs,
            "tanh" => UnaryOp::Tanh,
            "sign" => UnaryOp::Sign,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Pow => "^",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinaryOp::Add | BinaryOp::Sub => 1,
            BinaryOp::Mul | BinaryOp::Div => 2,
            BinaryOp::Pow => 4,
        }
    }
}

/// Expression tree. Immutable once built; cheap to share behind a reference.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Constant(f64),
    Var(Var),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn constant(c: f64) -> Self {
        Expr::Constant(c)
    }

    pub fn var(v: Var) -> Self {
        Expr::Var(v)
    }

    pub fn unary(op: UnaryOp, e: Expr) -> Self {
        Expr::Unary(op, Box::new(e))
    }

    pub fn binary(op: BinaryOp, l: Expr, r: Expr) -> Self {
        Expr::Binary(op, Box::new(l), Box::new(r))
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            Expr::Constant(c) => Some(*c),
            _ => None,
        }
    }

    /// Structural support: every variable that appears in the tree.
    pub fn sparsity(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Expr::Constant(_) => {}
            Expr::Var(v) => {
                out.insert(*v);
            }
            Expr::Unary(_, e) => e.collect_vars(out),
            Expr::Binary(_, l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
        }
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        match self {
            Expr::Constant(_) | Expr::Var(_) => 1,
            Expr::Unary(_, e) => 1 + e.size(),
            Expr::Binary(_, l, r) => 1 + l.size() + r.size(),
        }
    }

    /// Replaces every variable by `f(var)`.
    pub fn map_vars(&self, f: &impl Fn(Var) -> Expr) -> Expr {
        match self {
            Expr::Constant(c) => Expr::Constant(*c),
            Expr::Var(v) => f(*v),
            Expr::Unary(op, e) => Expr::unary(*op, e.map_vars(f)),
            Expr::Binary(op, l, r) => Expr::binary(*op, l.map_vars(f), r.map_vars(f)),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Constant(c) if c.is_sign_negative() => 3,
            Expr::Constant(_) | Expr::Var(_) => 5,
            Expr::Unary(UnaryOp::Neg, _) => 3,
            Expr::Unary(_, _) => 5,
            Expr::Binary(op, _, _) => op.precedence(),
        }
    }
}

impl From<f64> for Expr {
    fn from(c: f64) -> Self {
        Expr::Constant(c)
    }
}

impl From<Var> for Expr {
    fn from(v: Var) -> Self {
        Expr::Var(v)
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, e: &Expr, paren: bool) -> fmt::Result {
    if paren {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

/// Prints in the grammar accepted by [`parse`]; `parse(&e.to_string())`
/// reproduces `e` exactly.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Constant(c) if *c == 0.0 || (1e-4..1e15).contains(&c.abs()) => write!(f, "{c}"),
            Expr::Constant(c) => write!(f, "{c:?}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Unary(UnaryOp::Neg, e) => write!(f, "-({e})"),
            Expr::Unary(op, e) => write!(f, "{}({e})", op.name()),
            Expr::Binary(op, l, r) => {
                let p = op.precedence();
                let (lp, rp) = if *op == BinaryOp::Pow {
                    (l.precedence() <= p, r.precedence() < p)
                } else {
                    (l.precedence() < p, r.precedence() <= p)
                };
                write_child(f, l, lp)?;
                write!(f, " {} ", op.symbol())?;
                write_child(f, r, rp)
            }
        }
    }
}

/// Flat indexing of every variable kind for a model with `n_st` states and
/// `n_ctr` controls: states, controls, `t`, `tf`, initial states, final states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarSpace {
    pub n_st: usize,
    pub n_ctr: usize,
}

impl VarSpace {
    pub fn new(n_st: usize, n_ctr: usize) -> Self {
        VarSpace { n_st, n_ctr }
    }

    pub fn len(&self) -> usize {
        3 * self.n_st + self.n_ctr + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, v: Var) -> bool {
        match v.kind {
            VarKind::State | VarKind::InitialState | VarKind::FinalState => v.index < self.n_st,
            VarKind::Control => v.index < self.n_ctr,
            VarKind::Time | VarKind::FinalTime => v.index == 0,
        }
    }

    pub fn index(&self, v: Var) -> usize {
        let (n, m) = (self.n_st, self.n_ctr);
        match v.kind {
            VarKind::State => v.index,
            VarKind::Control => n + v.index,
            VarKind::Time => n + m,
            VarKind::FinalTime => n + m + 1,
            VarKind::InitialState => n + m + 2 + v.index,
            VarKind::FinalState => 2 * n + m + 2 + v.index,
        }
    }

    pub fn var(&self, i: usize) -> Var {
        let (n, m) = (self.n_st, self.n_ctr);
        if i < n {
            Var::state(i)
        } else if i < n + m {
            Var::control(i - n)
        } else if i == n + m {
            Var::TIME
        } else if i == n + m + 1 {
            Var::FINAL_TIME
        } else if i < 2 * n + m + 2 {
            Var::initial_state(i - n - m - 2)
        } else {
            Var::final_state(i - 2 * n - m - 2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparsity_is_structural() {
        let e = parse("x1 - x1", 2, 1).unwrap();
        assert_eq!(e.sparsity().into_iter().collect::<Vec<_>>(), vec![Var::state(0)]);
        let e = parse("u1-1.5", 2, 1).unwrap();
        assert_eq!(e.sparsity().into_iter().collect::<Vec<_>>(), vec![Var::control(0)]);
        let e = parse("x2", 2, 1).unwrap();
        assert_eq!(e.sparsity().into_iter().collect::<Vec<_>>(), vec![Var::state(1)]);
    }

    #[test]
    fn var_space_roundtrip() {
        let s = VarSpace::new(3, 2);
        for i in 0..s.len() {
            assert_eq!(s.index(s.var(i)), i);
            assert!(s.contains(s.var(i)));
        }
    }

    #[test]
    fn printing_reparses() {
        for text in [
            "-x1^2",
            "(-2.0)^x1",
            "x1 - (x2 - u1)",
            "x1 / (x2 * u1)",
            "x1^x2^u1",
            "(x1^x2)^u1",
            "-(-(x1))",
            "sin(x1) * -1.5",
            "x1_f + tf",
        ] {
            let e = parse(text, 2, 1).unwrap();
            let printed = e.to_string();
            assert_eq!(parse(&printed, 2, 1).unwrap(), e, "{text} -> {printed}");
        }
    }
}
