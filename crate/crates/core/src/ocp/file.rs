//! Line-oriented problem file format.
//!
//! ```text
//! [problem]   states=2 controls=1 t0=0 tex=0
//! [dynamics]  x1' = x2
//!             x2' = u1 - 1.5
//! [objective] lagrange = u1
//! [bounds]    x1 in [0,20]; x2 in [-20,20]; u1 in [0,3]; tf in [0.001,400] free
//! [boundary]  x(0) = 10,-2 tol 0,0 ; x(tf) = 0,0 tol 0,0
//! [slack]     x0 = off ; xf = off
//! [path]      1 - x1^2 <= 0
//! ```
//!
//! A section header may be followed by content on the same line; further
//! lines belong to the most recent header. Statements are separated by
//! newlines or `;`, and `#` starts a comment. Numbers may be constant
//! expressions such as `1/12` or `-pi/6`, and `free` marks an absent bound.

use std::collections::BTreeMap;

use super::{Bound, FinalTime, OcpError, OcpModel, TimeConfig, DEFAULT_SLACK_WEIGHT};
use crate::expr::{eval, parse, EvalEnv};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Section {
    Problem,
    Dynamics,
    Objective,
    Bounds,
    Boundary,
    Slack,
    Path,
}

impl Section {
    fn from_name(name: &str) -> Option<Section> {
        Some(match name {
            "problem" => Section::Problem,
            "dynamics" => Section::Dynamics,
            "objective" => Section::Objective,
            "bounds" => Section::Bounds,
            "boundary" => Section::Boundary,
            "slack" => Section::Slack,
            "path" => Section::Path,
            _ => return None,
        })
    }
}

fn err(line: usize, message: impl Into<String>) -> OcpError {
    OcpError::File { line, message: message.into() }
}

fn number(text: &str, line: usize) -> Result<f64, OcpError> {
    let text = text.trim();
    match text {
        "inf" | "+inf" => return Ok(f64::INFINITY),
        "-inf" => return Ok(f64::NEG_INFINITY),
        _ => {}
    }
    let e = parse(text, 0, 0).map_err(|e| err(line, format!("`{text}`: {e}")))?;
    if !e.sparsity().is_empty() {
        return Err(err(line, format!("`{text}` is not a constant")));
    }
    eval(&e, &EvalEnv::default()).map_err(|e| err(line, format!("`{text}`: {e}")))
}

fn bound(text: &str, line: usize) -> Result<Bound, OcpError> {
    if text.trim() == "free" {
        Ok(Bound::Free)
    } else {
        number(text, line).map(Bound::from)
    }
}

fn list<T>(text: &str, line: usize, item: impl Fn(&str, usize) -> Result<T, OcpError>) -> Result<Vec<T>, OcpError> {
    text.split(',').map(|s| item(s, line)).collect()
}

/// Splits `[a, b]` into its two ends.
fn interval(text: &str, line: usize) -> Result<(Bound, Bound), OcpError> {
    let inner = text
        .trim()
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| err(line, format!("expected `[lo, hi]`, got `{}`", text.trim())))?;
    let (lo, hi) = inner.split_once(',').ok_or_else(|| err(line, "interval needs two ends"))?;
    Ok((bound(lo, line)?, bound(hi, line)?))
}

/// `x3` -> 2, `u1` -> 0.
fn indexed(name: &str, prefix: char, line: usize) -> Result<usize, OcpError> {
    name.strip_prefix(prefix)
        .and_then(|d| d.parse::<usize>().ok())
        .filter(|&k| k >= 1)
        .map(|k| k - 1)
        .ok_or_else(|| err(line, format!("expected `{prefix}<index>`, got `{name}`")))
}

#[derive(Default)]
struct Raw {
    states: Option<usize>,
    controls: Option<usize>,
    t0: f64,
    t_ex: f64,
    dynamics: BTreeMap<usize, (String, usize)>,
    lagrange: Vec<(String, usize)>,
    mayer: Option<(String, usize)>,
    x_bounds: BTreeMap<usize, (Bound, Bound)>,
    u_bounds: BTreeMap<usize, (Bound, Bound)>,
    tf: Option<FinalTime>,
    x0: Option<(Vec<Bound>, Option<Vec<f64>>)>,
    xf: Option<(Vec<Bound>, Option<Vec<f64>>)>,
    slack0: Option<(bool, Option<Vec<f64>>)>,
    slackf: Option<(bool, Option<Vec<f64>>)>,
    path: Vec<(String, f64, f64, usize)>,
}

/// Parses a problem file into an (unfrozen) model.
pub fn parse_problem(text: &str) -> Result<OcpModel, OcpError> {
    let mut raw = Raw::default();
    let mut section: Option<Section> = None;
    for (i, full_line) in text.lines().enumerate() {
        let line = i + 1;
        let mut rest = full_line.split('#').next().unwrap_or("").trim();
        if let Some(after) = rest.strip_prefix('[') {
            let close = after.find(']').ok_or_else(|| err(line, "unterminated section header"))?;
            let name = after[..close].trim();
            section = Some(Section::from_name(name).ok_or_else(|| err(line, format!("unknown section `[{name}]`")))?);
            rest = after[close + 1..].trim();
        }
        for stmt in rest.split(';').map(str::trim).filter(|s| !s.is_empty()) {
            let sec = section.ok_or_else(|| err(line, "content before the first section header"))?;
            statement(&mut raw, sec, stmt, line)?;
        }
    }
    build(raw)
}

fn statement(raw: &mut Raw, sec: Section, stmt: &str, line: usize) -> Result<(), OcpError> {
    match sec {
        Section::Problem => {
            for kv in stmt.split_whitespace() {
                let (k, v) = kv.split_once('=').ok_or_else(|| err(line, format!("expected key=value, got `{kv}`")))?;
                match k {
                    "states" | "controls" => {
                        let n = v.parse().map_err(|_| err(line, format!("bad count `{v}`")))?;
                        if k == "states" {
                            raw.states = Some(n);
                        } else {
                            raw.controls = Some(n);
                        }
                    }
                    "t0" => raw.t0 = number(v, line)?,
                    "tex" => raw.t_ex = number(v, line)?,
                    "name" => {}
                    _ => return Err(err(line, format!("unknown problem key `{k}`"))),
                }
            }
        }
        Section::Dynamics => {
            let (lhs, rhs) = stmt.split_once('=').ok_or_else(|| err(line, "expected `xK' = expression`"))?;
            let name = lhs.trim().strip_suffix('\'').ok_or_else(|| err(line, "left side must be `xK'`"))?;
            let k = indexed(name.trim(), 'x', line)?;
            if raw.dynamics.insert(k, (rhs.trim().to_string(), line)).is_some() {
                return Err(err(line, format!("dynamics for x{} given twice", k + 1)));
            }
        }
        Section::Objective => {
            let (k, v) = stmt.split_once('=').ok_or_else(|| err(line, "expected `lagrange = …` or `mayer = …`"))?;
            let v = (v.trim().to_string(), line);
            match k.trim() {
                "lagrange" => raw.lagrange.push(v),
                "mayer" if raw.mayer.is_none() => raw.mayer = Some(v),
                "mayer" => return Err(err(line, "only one Mayer term")),
                other => return Err(err(line, format!("unknown objective term `{other}`"))),
            }
        }
        Section::Bounds => {
            if let Some(v) = stmt.strip_prefix("tf").and_then(|s| s.trim_start().strip_prefix('=')) {
                raw.tf = Some(FinalTime::Fixed(number(v, line)?));
                return Ok(());
            }
            let (name, range) = stmt.split_once(" in ").ok_or_else(|| err(line, "expected `name in [lo, hi]`"))?;
            let name = name.trim();
            let range = range.trim();
            if name == "tf" {
                let body = range.strip_suffix("free").unwrap_or(range);
                let (lo, hi) = interval(body, line)?;
                raw.tf = Some(FinalTime::Free { min: lo.lower(), max: hi.upper() });
            } else if name.starts_with('x') {
                raw.x_bounds.insert(indexed(name, 'x', line)?, interval(range, line)?);
            } else {
                raw.u_bounds.insert(indexed(name, 'u', line)?, interval(range, line)?);
            }
        }
        Section::Boundary => {
            let (lhs, rhs) = stmt.split_once('=').ok_or_else(|| err(line, "expected `x(0) = …` or `x(tf) = …`"))?;
            let (values, tol) = match rhs.split_once("tol") {
                Some((v, t)) => (v, Some(list(t, line, number)?)),
                None => (rhs, None),
            };
            let entry = Some((list(values, line, bound)?, tol));
            match lhs.replace(' ', "").as_str() {
                "x(0)" | "x(t0)" => raw.x0 = entry,
                "x(tf)" => raw.xf = entry,
                other => return Err(err(line, format!("unknown boundary `{other}`"))),
            }
        }
        Section::Slack => {
            let (k, v) = stmt.split_once('=').ok_or_else(|| err(line, "expected `x0 = on|off`"))?;
            let mut words = v.split_whitespace();
            let on = match words.next() {
                Some("on") => true,
                Some("off") => false,
                _ => return Err(err(line, "slack must be `on` or `off`")),
            };
            let weights = match (words.next(), words.next()) {
                (None, _) => None,
                (Some("weight" | "weights"), Some(w)) => Some(list(w, line, number)?),
                _ => return Err(err(line, "expected `on weights w1,w2,…`")),
            };
            match k.trim() {
                "x0" => raw.slack0 = Some((on, weights)),
                "xf" => raw.slackf = Some((on, weights)),
                other => return Err(err(line, format!("unknown slack target `{other}`"))),
            }
        }
        Section::Path => {
            let (e, lo, hi) = if let Some((e, c)) = stmt.split_once("<=") {
                (e, f64::NEG_INFINITY, number(c, line)?)
            } else if let Some((e, c)) = stmt.split_once(">=") {
                (e, number(c, line)?, f64::INFINITY)
            } else {
                return Err(err(line, "path constraints take the form `expr <= c` or `expr >= c`"));
            };
            raw.path.push((e.trim().to_string(), lo, hi, line));
        }
    }
    Ok(())
}

fn build(raw: Raw) -> Result<OcpModel, OcpError> {
    let n_st = raw.states.ok_or_else(|| err(0, "[problem] must give states="))?;
    let n_ctr = raw.controls.unwrap_or(0);
    let pick = |map: &BTreeMap<usize, (Bound, Bound)>, n: usize, what: char| -> Result<(Vec<Bound>, Vec<Bound>), OcpError> {
        if let Some(&k) = map.keys().find(|&&k| k >= n) {
            return Err(err(0, format!("bound on {what}{} exceeds the declared dimension", k + 1)));
        }
        Ok((0..n).map(|i| map.get(&i).copied().unwrap_or((Bound::Free, Bound::Free))).unzip())
    };
    let (x_min, x_max) = pick(&raw.x_bounds, n_st, 'x')?;
    let (u_min, u_max) = pick(&raw.u_bounds, n_ctr, 'u')?;
    let (x0, x0_tol) = raw.x0.unwrap_or((vec![Bound::Free; n_st], None));
    let (xf, xf_tol) = raw.xf.unwrap_or((vec![Bound::Free; n_st], None));
    let mut m = OcpModel::define(n_st, n_ctr, x0, xf, x_min, x_max, u_min, u_max)?;
    m.set_tolerances(x0_tol.unwrap_or(vec![0.0; n_st]), xf_tol.unwrap_or(vec![0.0; n_st]))?;
    m.configure(TimeConfig {
        final_time: raw.tf.unwrap_or(FinalTime::Fixed(1.0)),
        t0: raw.t0,
        t_ex: raw.t_ex,
    })?;

    let at = |line: usize| move |e: OcpError| match e {
        OcpError::File { .. } => e,
        other => err(line, other.to_string()),
    };
    if !raw.dynamics.is_empty() {
        let mut f = Vec::with_capacity(n_st);
        for k in 0..n_st {
            let (text, line) = raw.dynamics.get(&k).ok_or_else(|| err(0, format!("missing dynamics for x{}", k + 1)))?;
            f.push(m.expr(text).map_err(at(*line))?);
        }
        if raw.dynamics.len() != n_st {
            return Err(OcpError::DynamicsCount { expected: n_st, got: raw.dynamics.len() });
        }
        m.set_dynamics(f)?;
    }
    for (text, line) in &raw.lagrange {
        let e = m.expr(text).map_err(at(*line))?;
        m.add_lagrange(e).map_err(at(*line))?;
    }
    if let Some((text, line)) = &raw.mayer {
        let e = m.expr(text).map_err(at(*line))?;
        m.set_mayer(e).map_err(at(*line))?;
    }
    for (text, lo, hi, line) in &raw.path {
        let e = m.expr(text).map_err(at(*line))?;
        m.add_path_constraint(e, *lo, *hi).map_err(at(*line))?;
    }
    let (on0, w0) = raw.slack0.unwrap_or((false, None));
    let (onf, wf) = raw.slackf.unwrap_or((false, None));
    m.enable_slack(
        on0,
        onf,
        w0.unwrap_or(vec![DEFAULT_SLACK_WEIGHT; n_st]),
        wf.unwrap_or(vec![DEFAULT_SLACK_WEIGHT; n_st]),
    )?;
    Ok(m)
}
