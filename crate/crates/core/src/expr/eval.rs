use thiserror::Error;

use super::{BinaryOp, Expr, UnaryOp, Var, VarKind};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("log of nonpositive value {0}")]
    Log(f64),
    #[error("sqrt of negative value {0}")]
    Sqrt(f64),
    #[error("division by zero")]
    DivByZero,
    #[error("non-integer power {exp} of negative base {base}")]
    Pow { base: f64, exp: f64 },
    #[error("non-finite result")]
    NonFinite,
}

/// Values for every symbol an expression may reference.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalEnv {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub t: f64,
    pub tf: f64,
    /// Endpoint states for Mayer terms; may be left empty otherwise.
    pub x_initial: Vec<f64>,
    pub x_final: Vec<f64>,
}

impl EvalEnv {
    pub fn new(x: Vec<f64>, u: Vec<f64>, t: f64, tf: f64) -> Self {
        EvalEnv { x, u, t, tf, x_initial: Vec::new(), x_final: Vec::new() }
    }

    pub fn with_endpoints(mut self, x_initial: Vec<f64>, x_final: Vec<f64>) -> Self {
        self.x_initial = x_initial;
        self.x_final = x_final;
        self
    }

    pub fn get(&self, v: Var) -> f64 {
        let pick = |s: &[f64]| s.get(v.index).copied().unwrap_or(f64::NAN);
        match v.kind {
            VarKind::State => pick(&self.x),
            VarKind::Control => pick(&self.u),
            VarKind::Time => self.t,
            VarKind::FinalTime => self.tf,
            VarKind::InitialState => pick(&self.x_initial),
            VarKind::FinalState => pick(&self.x_final),
        }
    }
}

/// Arithmetic needed to evaluate an expression; implemented for `f64` and
/// first-order dual numbers.
pub trait Scalar: Copy {
    fn from_f64(c: f64) -> Self;
    fn re(self) -> f64;
    fn add(self, o: Self) -> Self;
    fn sub(self, o: Self) -> Self;
    fn mul(self, o: Self) -> Self;
    fn div(self, o: Self) -> Self;
    fn neg(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn tan(self) -> Self;
    fn atan(self) -> Self;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn abs(self) -> Self;
    fn tanh(self) -> Self;
    fn sign(self) -> Self;
    fn powi(self, n: i32) -> Self;
    /// True when the value carries no derivative information.
    fn is_plain(self) -> bool;
}

impl Scalar for f64 {
    fn from_f64(c: f64) -> Self {
        c
    }
    fn re(self) -> f64 {
        self
    }
    fn add(self, o: Self) -> Self {
        self + o
    }
    fn sub(self, o: Self) -> Self {
        self - o
    }
    fn mul(self, o: Self) -> Self {
        self * o
    }
    fn div(self, o: Self) -> Self {
        self / o
    }
    fn neg(self) -> Self {
        -self
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn tan(self) -> Self {
        f64::tan(self)
    }
    fn atan(self) -> Self {
        f64::atan(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    fn sign(self) -> Self {
        sign(self)
    }
    fn powi(self, n: i32) -> Self {
        powi_exact(self, n)
    }
    fn is_plain(self) -> bool {
        true
    }
}

pub(crate) fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Integer power by repeated squaring.
pub(crate) fn powi_exact(x: f64, n: i32) -> f64 {
    let mut base = if n < 0 { 1.0 / x } else { x };
    let mut k = n.unsigned_abs();
    let mut acc = 1.0;
    while k > 0 {
        if k & 1 == 1 {
            acc *= base;
        }
        base *= base;
        k >>= 1;
    }
    acc
}

/// Dual number `re + eps·ε` with `ε² = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dual {
    pub re: f64,
    pub eps: f64,
}

impl Dual {
    pub fn new(re: f64, eps: f64) -> Self {
        Dual { re, eps }
    }

    fn chain(self, value: f64, deriv: f64) -> Self {
        Dual { re: value, eps: deriv * self.eps }
    }
}

impl Scalar for Dual {
    fn from_f64(c: f64) -> Self {
        Dual { re: c, eps: 0.0 }
    }
    fn re(self) -> f64 {
        self.re
    }
    fn add(self, o: Self) -> Self {
        Dual { re: self.re + o.re, eps: self.eps + o.eps }
    }
    fn sub(self, o: Self) -> Self {
        Dual { re: self.re - o.re, eps: self.eps - o.eps }
    }
    fn mul(self, o: Self) -> Self {
        Dual { re: self.re * o.re, eps: self.eps * o.re + self.re * o.eps }
    }
    fn div(self, o: Self) -> Self {
        let q = self.re / o.re;
        Dual { re: q, eps: (self.eps - q * o.eps) / o.re }
    }
    fn neg(self) -> Self {
        Dual { re: -self.re, eps: -self.eps }
    }
    fn sin(self) -> Self {
        self.chain(self.re.sin(), self.re.cos())
    }
    fn cos(self) -> Self {
        self.chain(self.re.cos(), -self.re.sin())
    }
    fn tan(self) -> Self {
        let t = self.re.tan();
        self.chain(t, 1.0 + t * t)
    }
    fn atan(self) -> Self {
        self.chain(self.re.atan(), 1.0 / (1.0 + self.re * self.re))
    }
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        self.chain(s, 0.5 / s)
    }
    fn exp(self) -> Self {
        let e = self.re.exp();
        self.chain(e, e)
    }
    fn ln(self) -> Self {
        self.chain(self.re.ln(), 1.0 / self.re)
    }
    fn abs(self) -> Self {
        self.chain(self.re.abs(), sign(self.re))
    }
    fn tanh(self) -> Self {
        let t = self.re.tanh();
        self.chain(t, 1.0 - t * t)
    }
    fn sign(self) -> Self {
        Dual { re: sign(self.re), eps: 0.0 }
    }
    fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Dual::from_f64(1.0);
        }
        let p = powi_exact(self.re, n - 1);
        Dual { re: p * self.re, eps: n as f64 * p * self.eps }
    }
    fn is_plain(self) -> bool {
        self.eps == 0.0
    }
}

pub(crate) fn apply_unary<T: Scalar>(op: UnaryOp, a: T) -> Result<T, DomainError> {
    let r = a.re();
    Ok(match op {
        UnaryOp::Neg => a.neg(),
        UnaryOp::Sin => a.sin(),
        UnaryOp::Cos => a.cos(),
        UnaryOp::Tan => a.tan(),
        UnaryOp::Atan => a.atan(),
        UnaryOp::Sqrt => {
            if r < 0.0 {
                return Err(DomainError::Sqrt(r));
            }
            a.sqrt()
        }
        UnaryOp::Exp => a.exp(),
        UnaryOp::Log => {
            if r <= 0.0 {
                return Err(DomainError::Log(r));
            }
            a.ln()
        }
        UnaryOp::Abs => a.abs(),
        UnaryOp::Tanh => a.tanh(),
        UnaryOp::Sign => a.sign(),
    })
}

pub(crate) fn apply_binary<T: Scalar>(op: BinaryOp, a: T, b: T) -> Result<T, DomainError> {
    Ok(match op {
        BinaryOp::Add => a.add(b),
        BinaryOp::Sub => a.sub(b),
        BinaryOp::Mul => a.mul(b),
        BinaryOp::Div => {
            if b.re() == 0.0 {
                return Err(DomainError::DivByZero);
            }
            a.div(b)
        }
        BinaryOp::Pow => pow(a, b)?,
    })
}

fn pow<T: Scalar>(a: T, b: T) -> Result<T, DomainError> {
    let (x, n) = (a.re(), b.re());
    if n.fract() == 0.0 && n.abs() <= i32::MAX as f64 {
        if n < 0.0 && x == 0.0 {
            return Err(DomainError::DivByZero);
        }
        let p = a.powi(n as i32);
        if b.is_plain() || x <= 0.0 {
            return Ok(p);
        }
        // carries d/db x^b = x^b ln x through a factor that is exactly 1 in value
        return Ok(p.mul(a.ln().mul(b.sub(T::from_f64(n))).exp()));
    }
    if x < 0.0 {
        return Err(DomainError::Pow { base: x, exp: n });
    }
    if x == 0.0 {
        return if n > 0.0 { Ok(T::from_f64(0.0)) } else { Err(DomainError::DivByZero) };
    }
    Ok(a.ln().mul(b).exp())
}

pub(crate) fn eval_with<T: Scalar>(e: &Expr, lookup: &impl Fn(Var) -> T) -> Result<T, DomainError> {
    match e {
        Expr::Constant(c) => Ok(T::from_f64(*c)),
        Expr::Var(v) => Ok(lookup(*v)),
        Expr::Unary(op, a) => apply_unary(*op, eval_with(a, lookup)?),
        Expr::Binary(op, a, b) => apply_binary(*op, eval_with(a, lookup)?, eval_with(b, lookup)?),
    }
}

/// Evaluates `e` in `env`.
pub fn eval(e: &Expr, env: &EvalEnv) -> Result<f64, DomainError> {
    let v = eval_with(e, &|v| env.get(v))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(DomainError::NonFinite)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    #[test]
    fn moon_lander_acceleration() {
        let e = parse("u1 - 1.5", 2, 1).unwrap();
        let env = EvalEnv::new(vec![0.0, 0.0], vec![3.0], 0.0, 1.0);
        assert_eq!(eval(&e, &env).unwrap(), 1.5);
        assert_eq!(eval(&Expr::Constant(-4.25), &env).unwrap(), -4.25);
    }

    #[test]
    fn pythagorean_identity() {
        let e = parse("sin(t)^2 + cos(t)^2", 1, 0).unwrap();
        let env = EvalEnv::new(vec![0.0], vec![], 0.7, 1.0);
        assert!((eval(&e, &env).unwrap() - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn domain_errors() {
        let env = EvalEnv::new(vec![-1.0, 0.0], vec![], 0.0, 1.0);
        let err = |s: &str| eval(&parse(s, 2, 0).unwrap(), &env).unwrap_err();
        assert_eq!(err("log(x1)"), DomainError::Log(-1.0));
        assert_eq!(err("log(x2)"), DomainError::Log(0.0));
        assert_eq!(err("sqrt(x1)"), DomainError::Sqrt(-1.0));
        assert_eq!(err("1/x2"), DomainError::DivByZero);
        assert!(matches!(err("x1^0.5"), DomainError::Pow { .. }));
        assert_eq!(eval(&parse("x1^3", 2, 0).unwrap(), &env).unwrap(), -1.0);
        assert_eq!(eval(&parse("x1^-2", 2, 0).unwrap(), &env).unwrap(), 1.0);
    }

    #[test]
    fn integer_powers_are_exact() {
        let x = 1.1_f64;
        assert_eq!(powi_exact(x, 3), x * x * x);
        assert_eq!(powi_exact(2.0, -2), 0.25);
    }

    #[test]
    fn dual_power_rule() {
        let d = pow(Dual::new(2.0, 1.0), Dual::from_f64(3.0)).unwrap();
        assert_eq!(d, Dual::new(8.0, 12.0));
        // d/dy 2^y at y = 3 is 8 ln 2
        let d = pow(Dual::from_f64(2.0), Dual::new(3.0, 1.0)).unwrap();
        assert!((d.eps - 8.0 * 2f64.ln()).abs() < 1e-14);
        let d = pow(Dual::new(-2.0, 1.0), Dual::from_f64(2.0)).unwrap();
        assert_eq!(d, Dual::new(4.0, -4.0));
    }
}
