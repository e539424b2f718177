use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::TranscribeError;
use crate::colloc::{barycentric_eval, barycentric_weights};

/// How values between grid points are reconstructed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Interpolation {
    /// Piecewise-linear through consecutive points.
    Linear,
    /// One polynomial per mesh interval; `starts[k]` is the index of the
    /// first state point of interval `k` and `lens[k]` its collocation count.
    Lagrange { starts: Vec<usize>, lens: Vec<usize> },
}

/// A solved (or guessed) state and control history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Time of every state point.
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    /// Controls at the first `u.len()` state points (LGR has none at `t_f`).
    pub u: Vec<Vec<f64>>,
    pub tf: f64,
    pub slack_x0: Vec<f64>,
    pub slack_xf: Vec<f64>,
    pub interpolation: Interpolation,
}

fn lerp(a: &[f64], b: &[f64], w: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(a, b)| a + w * (b - a)).collect()
}

/// Index of the last grid time `<= t` among `times` (clamped into range).
fn segment(times: &[f64], t: f64) -> usize {
    match times.partition_point(|&s| s <= t) {
        0 => 0,
        k => (k - 1).min(times.len().saturating_sub(2)),
    }
}

fn linear_at(times: &[f64], vals: &[Vec<f64>], t: f64) -> Vec<f64> {
    if times.len() == 1 {
        return vals[0].clone();
    }
    let i = segment(times, t);
    let span = times[i + 1] - times[i];
    let w = if span > 0.0 { ((t - times[i]) / span).clamp(0.0, 1.0) } else { 0.0 };
    if w == 0.0 {
        vals[i].clone()
    } else if w == 1.0 {
        vals[i + 1].clone()
    } else {
        lerp(&vals[i], &vals[i + 1], w)
    }
}

fn poly_at(nodes: &[f64], vals: &[Vec<f64>], t: f64) -> Vec<f64> {
    if nodes.len() == 1 {
        return vals[0].clone();
    }
    let lambda = barycentric_weights(nodes).expect("distinct grid times");
    let dim = vals[0].len();
    (0..dim)
        .map(|d| {
            let col: Vec<f64> = vals.iter().map(|v| v[d]).collect();
            barycentric_eval(nodes, &lambda, &col, t)
        })
        .collect()
}

impl Trajectory {
    pub fn n_st(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    pub fn n_ctr(&self) -> usize {
        self.u.first().map_or(0, Vec::len)
    }

    pub fn start(&self) -> f64 {
        self.t[0]
    }

    /// State and control at time `t` within `[t[0], t_f]`.
    pub fn interpolate(&self, t: f64) -> Result<(Vec<f64>, Vec<f64>), TranscribeError> {
        let (lo, hi) = (self.t[0], *self.t.last().unwrap());
        let tol = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
        if !(t >= lo - tol && t <= hi + tol) {
            return Err(TranscribeError::OutOfRange { t, lo, hi });
        }
        let t = t.clamp(lo, hi);
        Ok((self.state_at(t), self.control_at(t)))
    }

    /// Interpolated state; clamps `t` into the grid range.
    pub fn state_at(&self, t: f64) -> Vec<f64> {
        let t = t.clamp(self.t[0], *self.t.last().unwrap());
        if let Some(i) = self.t.iter().position(|&s| s == t) {
            return self.x[i].clone();
        }
        match &self.interpolation {
            Interpolation::Linear => linear_at(&self.t, &self.x, t),
            Interpolation::Lagrange { starts, lens } => {
                let k = self.interval(starts, lens, t);
                let r = starts[k]..starts[k] + lens[k] + 1;
                poly_at(&self.t[r.clone()], &self.x[r], t)
            }
        }
    }

    /// Interpolated control; clamps `t` into the grid range and holds or
    /// extrapolates where the grid has no control sample.
    pub fn control_at(&self, t: f64) -> Vec<f64> {
        if self.u.is_empty() {
            return Vec::new();
        }
        let t = t.clamp(self.t[0], *self.t.last().unwrap());
        let tu = &self.t[..self.u.len()];
        if let Some(i) = tu.iter().position(|&s| s == t) {
            return self.u[i].clone();
        }
        match &self.interpolation {
            Interpolation::Linear => linear_at(tu, &self.u, t),
            Interpolation::Lagrange { starts, lens } => {
                let k = self.interval(starts, lens, t);
                let r = starts[k]..starts[k] + lens[k];
                poly_at(&self.t[r.clone()], &self.u[r], t)
            }
        }
    }

    fn interval(&self, starts: &[usize], lens: &[usize], t: f64) -> usize {
        let k = starts.iter().zip(lens).rposition(|(&s, _)| self.t[s] <= t).unwrap_or(0);
        k.min(starts.len() - 1)
    }

    /// Writes `t,x1..,u1..` with blank control cells where none is defined.
    pub fn write_csv(&self, mut w: impl Write) -> io::Result<()> {
        let (ns, nc) = (self.n_st(), self.n_ctr());
        let mut header = vec!["t".to_string()];
        header.extend((1..=ns).map(|i| format!("x{i}")));
        header.extend((1..=nc).map(|i| format!("u{i}")));
        writeln!(w, "{}", header.join(","))?;
        for (i, &t) in self.t.iter().enumerate() {
            let mut row = vec![format!("{t}")];
            row.extend(self.x[i].iter().map(|v| format!("{v}")));
            match self.u.get(i) {
                Some(u) => row.extend(u.iter().map(|v| format!("{v}"))),
                None => row.extend(std::iter::repeat_n(String::new(), nc)),
            }
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_traj() -> Trajectory {
        Trajectory {
            t: vec![0.0, 1.0, 2.0],
            x: vec![vec![0.0, 1.0], vec![2.0, 1.0], vec![4.0, 1.0]],
            u: vec![vec![1.0], vec![3.0], vec![5.0]],
            tf: 2.0,
            slack_x0: vec![],
            slack_xf: vec![],
            interpolation: Interpolation::Linear,
        }
    }

    #[test]
    fn linear_midpoints_and_nodes() {
        let tr = linear_traj();
        assert_eq!(tr.interpolate(0.5).unwrap(), (vec![1.0, 1.0], vec![2.0]));
        assert_eq!(tr.interpolate(2.0).unwrap(), (vec![4.0, 1.0], vec![5.0]));
        assert!(matches!(tr.interpolate(2.5), Err(TranscribeError::OutOfRange { .. })));
    }

    #[test]
    fn csv_blanks_missing_controls() {
        let mut tr = linear_traj();
        tr.u.pop();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,x1,x2,u1");
        assert_eq!(lines[3], "2,4,1,");
    }
}
