//! Bolza-form optimal control problems: dynamics, Lagrange and Mayer cost,
//! box bounds, boundary conditions with tolerances, slack relaxation of the
//! boundary conditions, and path constraints.

mod file;

use std::fmt;
use std::ops::Deref;
use std::sync::Arc;

use thiserror::Error;

use crate::expr::{parse, Expr, ParseError, VarKind};

pub use file::parse_problem;

/// A prescribed value, or no constraint at all.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    Value(f64),
    Free,
}

impl Bound {
    pub fn value(self) -> Option<f64> {
        match self {
            Bound::Value(v) => Some(v),
            Bound::Free => None,
        }
    }

    pub fn is_free(self) -> bool {
        matches!(self, Bound::Free)
    }

    /// As a lower bound: `Free` is `-inf`.
    pub fn lower(self) -> f64 {
        self.value().unwrap_or(f64::NEG_INFINITY)
    }

    /// As an upper bound: `Free` is `+inf`.
    pub fn upper(self) -> f64 {
        self.value().unwrap_or(f64::INFINITY)
    }
}

impl From<f64> for Bound {
    fn from(v: f64) -> Self {
        if v.is_finite() {
            Bound::Value(v)
        } else {
            Bound::Free
        }
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::Value(v) => write!(f, "{v}"),
            Bound::Free => f.write_str("free"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OcpError {
    #[error("{what}: expected {expected} entries, got {got}")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },
    #[error("{what}[{index}]: lower bound {lo} exceeds upper bound {hi}")]
    InvertedBounds { what: &'static str, index: usize, lo: f64, hi: f64 },
    #[error("The number of differential equations must equal the number of states ({expected}), got {got}")]
    DynamicsCount { expected: usize, got: usize },
    #[error("{what}[{index}] is negative ({value})")]
    NegativeWeight { what: &'static str, index: usize, value: f64 },
    #[error("{context}: variable `{var}` is not allowed here")]
    VariableOutOfRange { context: String, var: String },
    #[error("no dynamics were set")]
    MissingDynamics,
    #[error("free final time needs finite bounds, got [{tf_min}, {tf_max}]")]
    UnboundedFinalTime { tf_min: f64, tf_max: f64 },
    #[error("invalid final time: {0}")]
    InvalidFinalTime(String),
    #[error("invalid time configuration: {0}")]
    InvalidTime(String),
    #[error("expression `{text}`: {source}")]
    Parse { text: String, source: ParseError },
    #[error("line {line}: {message}")]
    File { line: usize, message: String },
}

/// How the final time enters the problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FinalTime {
    Fixed(f64),
    /// Design variable restricted to `[min, max]`.
    Free { min: f64, max: f64 },
}

/// One row of the path constraint vector: `lower <= expr <= upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathConstraint {
    pub expr: Expr,
    pub lower: f64,
    pub upper: f64,
}

/// Time settings applied with [`OcpModel::configure`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeConfig {
    pub final_time: FinalTime,
    pub t0: f64,
    pub t_ex: f64,
}

impl Default for TimeConfig {
    fn default() -> Self {
        TimeConfig { final_time: FinalTime::Fixed(1.0), t0: 0.0, t_ex: 0.0 }
    }
}

pub const DEFAULT_SLACK_WEIGHT: f64 = 100.0;

/// Mutable model under construction. Call [`OcpModel::freeze`] to validate
/// it and obtain a shareable, immutable [`Ocp`].
#[derive(Debug, Clone, PartialEq)]
pub struct OcpModel {
    pub n_st: usize,
    pub n_ctr: usize,
    pub dynamics: Option<Vec<Expr>>,
    pub lagrange: Option<Expr>,
    pub mayer: Option<Expr>,
    pub path: Vec<PathConstraint>,
    pub x0: Vec<Bound>,
    pub xf: Vec<Bound>,
    pub x0_tol: Vec<f64>,
    pub xf_tol: Vec<f64>,
    pub x_min: Vec<f64>,
    pub x_max: Vec<f64>,
    pub u_min: Vec<f64>,
    pub u_max: Vec<f64>,
    pub final_time: FinalTime,
    pub t0: f64,
    pub t_ex: f64,
    pub slack_x0: bool,
    pub slack_xf: bool,
    pub w_s0: Vec<f64>,
    pub w_sf: Vec<f64>,
}

fn check_len<T>(what: &'static str, v: &[T], expected: usize) -> Result<(), OcpError> {
    if v.len() == expected {
        Ok(())
    } else {
        Err(OcpError::DimensionMismatch { what, expected, got: v.len() })
    }
}

fn check_order(what: &'static str, lo: &[f64], hi: &[f64]) -> Result<(), OcpError> {
    for (index, (&l, &h)) in lo.iter().zip(hi).enumerate() {
        if l > h || l.is_nan() || h.is_nan() {
            return Err(OcpError::InvertedBounds { what, index, lo: l, hi: h });
        }
    }
    Ok(())
}

fn check_nonnegative(what: &'static str, v: &[f64]) -> Result<(), OcpError> {
    match v.iter().enumerate().find(|(_, &w)| !(w >= 0.0)) {
        Some((index, &value)) => Err(OcpError::NegativeWeight { what, index, value }),
        None => Ok(()),
    }
}

impl OcpModel {
    /// Creates a model shell with `t0 = 0`, `t_ex = 0`, zero tolerances, no
    /// slack, no objective terms and a fixed final time of 1.
    #[allow(clippy::too_many_arguments)]
    pub fn define(
        n_st: usize,
        n_ctr: usize,
        x0: Vec<Bound>,
        xf: Vec<Bound>,
        x_min: Vec<Bound>,
        x_max: Vec<Bound>,
        u_min: Vec<Bound>,
        u_max: Vec<Bound>,
    ) -> Result<Self, OcpError> {
        if n_st == 0 {
            return Err(OcpError::DimensionMismatch { what: "states", expected: 1, got: 0 });
        }
        check_len("x0", &x0, n_st)?;
        check_len("xf", &xf, n_st)?;
        check_len("x_min", &x_min, n_st)?;
        check_len("x_max", &x_max, n_st)?;
        check_len("u_min", &u_min, n_ctr)?;
        check_len("u_max", &u_max, n_ctr)?;
        let x_min: Vec<f64> = x_min.into_iter().map(Bound::lower).collect();
        let x_max: Vec<f64> = x_max.into_iter().map(Bound::upper).collect();
        let u_min: Vec<f64> = u_min.into_iter().map(Bound::lower).collect();
        let u_max: Vec<f64> = u_max.into_iter().map(Bound::upper).collect();
        check_order("x bounds", &x_min, &x_max)?;
        check_order("u bounds", &u_min, &u_max)?;
        let cfg = TimeConfig::default();
        Ok(OcpModel {
            n_st,
            n_ctr,
            dynamics: None,
            lagrange: None,
            mayer: None,
            path: Vec::new(),
            x0,
            xf,
            x0_tol: vec![0.0; n_st],
            xf_tol: vec![0.0; n_st],
            x_min,
            x_max,
            u_min,
            u_max,
            final_time: cfg.final_time,
            t0: cfg.t0,
            t_ex: cfg.t_ex,
            slack_x0: false,
            slack_xf: false,
            w_s0: vec![DEFAULT_SLACK_WEIGHT; n_st],
            w_sf: vec![DEFAULT_SLACK_WEIGHT; n_st],
        })
    }

    /// Parses `text` against this model's dimensions.
    pub fn expr(&self, text: &str) -> Result<Expr, OcpError> {
        parse(text, self.n_st, self.n_ctr).map_err(|source| OcpError::Parse { text: text.to_string(), source })
    }

    pub fn set_dynamics(&mut self, f: Vec<Expr>) -> Result<(), OcpError> {
        if f.len() != self.n_st {
            return Err(OcpError::DynamicsCount { expected: self.n_st, got: f.len() });
        }
        for (i, e) in f.iter().enumerate() {
            self.check_expr(&format!("dynamics of x{}", i + 1), e, false)?;
        }
        self.dynamics = Some(f);
        Ok(())
    }

    /// Adds `e` to the running cost.
    pub fn add_lagrange(&mut self, e: Expr) -> Result<(), OcpError> {
        self.check_expr("Lagrange term", &e, false)?;
        self.lagrange = Some(match self.lagrange.take() {
            Some(l) => Expr::binary(crate::expr::BinaryOp::Add, l, e),
            None => e,
        });
        Ok(())
    }

    pub fn set_mayer(&mut self, e: Expr) -> Result<(), OcpError> {
        self.check_expr("Mayer term", &e, true)?;
        self.mayer = Some(e);
        Ok(())
    }

    pub fn add_path_constraint(&mut self, e: Expr, lower: f64, upper: f64) -> Result<(), OcpError> {
        self.check_expr("path constraint", &e, false)?;
        if lower > upper || lower.is_nan() || upper.is_nan() {
            return Err(OcpError::InvertedBounds { what: "path constraint", index: self.path.len(), lo: lower, hi: upper });
        }
        self.path.push(PathConstraint { expr: e, lower, upper });
        Ok(())
    }

    pub fn set_tolerances(&mut self, x0_tol: Vec<f64>, xf_tol: Vec<f64>) -> Result<(), OcpError> {
        check_len("x0_tol", &x0_tol, self.n_st)?;
        check_len("xf_tol", &xf_tol, self.n_st)?;
        check_nonnegative("x0_tol", &x0_tol)?;
        check_nonnegative("xf_tol", &xf_tol)?;
        self.x0_tol = x0_tol;
        self.xf_tol = xf_tol;
        Ok(())
    }

    /// Relaxes the initial and/or final boundary conditions with penalized
    /// slack variables.
    pub fn enable_slack(&mut self, on_x0: bool, on_xf: bool, w_s0: Vec<f64>, w_sf: Vec<f64>) -> Result<(), OcpError> {
        check_len("w_s0", &w_s0, self.n_st)?;
        check_len("w_sf", &w_sf, self.n_st)?;
        check_nonnegative("w_s0", &w_s0)?;
        check_nonnegative("w_sf", &w_sf)?;
        self.slack_x0 = on_x0;
        self.slack_xf = on_xf;
        self.w_s0 = w_s0;
        self.w_sf = w_sf;
        Ok(())
    }

    pub fn configure(&mut self, cfg: TimeConfig) -> Result<(), OcpError> {
        check_time(&cfg)?;
        self.final_time = cfg.final_time;
        self.t0 = cfg.t0;
        self.t_ex = cfg.t_ex;
        Ok(())
    }

    pub fn time_config(&self) -> TimeConfig {
        TimeConfig { final_time: self.final_time, t0: self.t0, t_ex: self.t_ex }
    }

    pub fn final_time_is_dv(&self) -> bool {
        matches!(self.final_time, FinalTime::Free { .. })
    }

    pub fn tf_min(&self) -> f64 {
        match self.final_time {
            FinalTime::Fixed(tf) => tf,
            FinalTime::Free { min, .. } => min,
        }
    }

    pub fn tf_max(&self) -> f64 {
        match self.final_time {
            FinalTime::Fixed(tf) => tf,
            FinalTime::Free { max, .. } => max,
        }
    }

    fn check_expr(&self, context: &str, e: &Expr, mayer: bool) -> Result<(), OcpError> {
        for v in e.sparsity() {
            let ok = match v.kind {
                VarKind::State => v.index < self.n_st && !mayer,
                VarKind::Control => v.index < self.n_ctr && !mayer,
                VarKind::Time => !mayer,
                VarKind::FinalTime => true,
                VarKind::InitialState | VarKind::FinalState => v.index < self.n_st && mayer,
            };
            if !ok {
                return Err(OcpError::VariableOutOfRange { context: context.to_string(), var: v.to_string() });
            }
        }
        Ok(())
    }

    /// Validates every invariant and returns the immutable, shareable model.
    pub fn freeze(self) -> Result<Ocp, OcpError> {
        let n = self.n_st;
        check_len("x0", &self.x0, n)?;
        check_len("xf", &self.xf, n)?;
        check_len("x_min", &self.x_min, n)?;
        check_len("x_max", &self.x_max, n)?;
        check_len("u_min", &self.u_min, self.n_ctr)?;
        check_len("u_max", &self.u_max, self.n_ctr)?;
        check_order("x bounds", &self.x_min, &self.x_max)?;
        check_order("u bounds", &self.u_min, &self.u_max)?;
        set_checks(&self)?;
        check_time(&self.time_config())?;
        if let Some(f) = &self.dynamics {
            if f.len() != n {
                return Err(OcpError::DynamicsCount { expected: n, got: f.len() });
            }
            for (i, e) in f.iter().enumerate() {
                self.check_expr(&format!("dynamics of x{}", i + 1), e, false)?;
            }
        }
        if let Some(l) = &self.lagrange {
            self.check_expr("Lagrange term", l, false)?;
        }
        if let Some(m) = &self.mayer {
            self.check_expr("Mayer term", m, true)?;
        }
        for (i, p) in self.path.iter().enumerate() {
            self.check_expr("path constraint", &p.expr, false)?;
            if p.lower > p.upper {
                return Err(OcpError::InvertedBounds { what: "path constraint", index: i, lo: p.lower, hi: p.upper });
            }
        }
        Ok(Ocp(Arc::new(self)))
    }
}

fn set_checks(m: &OcpModel) -> Result<(), OcpError> {
    check_len("x0_tol", &m.x0_tol, m.n_st)?;
    check_len("xf_tol", &m.xf_tol, m.n_st)?;
    check_len("w_s0", &m.w_s0, m.n_st)?;
    check_len("w_sf", &m.w_sf, m.n_st)?;
    check_nonnegative("x0_tol", &m.x0_tol)?;
    check_nonnegative("xf_tol", &m.xf_tol)?;
    check_nonnegative("w_s0", &m.w_s0)?;
    check_nonnegative("w_sf", &m.w_sf)
}

fn check_time(cfg: &TimeConfig) -> Result<(), OcpError> {
    if !cfg.t0.is_finite() {
        return Err(OcpError::InvalidTime(format!("t0 = {}", cfg.t0)));
    }
    if !(cfg.t_ex >= 0.0) || !cfg.t_ex.is_finite() {
        return Err(OcpError::InvalidTime(format!("execution horizon {} must be finite and nonnegative", cfg.t_ex)));
    }
    match cfg.final_time {
        FinalTime::Fixed(tf) if !tf.is_finite() => Err(OcpError::InvalidFinalTime(format!("t_f = {tf}"))),
        FinalTime::Free { min, max } if !(min > 0.0) || min > max || max.is_nan() => {
            Err(OcpError::InvalidFinalTime(format!("bounds [{min}, {max}] need 0 < min <= max")))
        }
        _ => Ok(()),
    }
}

/// A validated model. Cheap to clone and safe to share between threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Ocp(Arc<OcpModel>);

impl Deref for Ocp {
    type Target = OcpModel;
    fn deref(&self) -> &OcpModel {
        &self.0
    }
}

impl Ocp {
    /// A mutable copy, e.g. to change the time window between MPC solves.
    pub fn to_model(&self) -> OcpModel {
        (*self.0).clone()
    }
}
