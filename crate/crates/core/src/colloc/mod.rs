//! Time grids, Legendre-Gauss-Radau machinery and the discrete defect and
//! quadrature formulas of the three transcription methods.

mod lgr;

use std::ops::{Index, IndexMut};

use thiserror::Error;

use crate::expr::DomainError;

pub use lgr::{barycentric_eval, barycentric_weights, legendre_pair, lgr_diff_matrix, lgr_nodes};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CollocError {
    #[error("LGR Newton iteration for N = {n} did not converge at node {node} (residual {residual:e})")]
    ConvergenceFailure { n: usize, node: usize, residual: f64 },
    #[error("interpolation nodes must be strictly increasing")]
    DuplicateNodes,
    #[error("time span is empty: t_f = {tf} must exceed t0 + t_ex = {start}")]
    DegenerateSpan { start: f64, tf: f64 },
    #[error("grid needs more points")]
    EmptyGrid,
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Affine map from `τ ∈ [-1, 1]` onto `[t0 + t_ex, t_f]`.
pub fn time_map(tau: f64, t0: f64, t_ex: f64, tf: f64) -> Result<f64, CollocError> {
    let start = t0 + t_ex;
    if !(tf > start) {
        return Err(CollocError::DegenerateSpan { start, tf });
    }
    Ok((tf - start) / 2.0 * tau + (tf + start) / 2.0)
}

/// `N` evenly spaced points on `[t0 + t_ex, t_f]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HGrid {
    pub t: Vec<f64>,
    pub h: f64,
}

impl HGrid {
    pub fn new(n: usize, t0: f64, t_ex: f64, tf: f64) -> Result<Self, CollocError> {
        if n < 2 {
            return Err(CollocError::EmptyGrid);
        }
        let start = t0 + t_ex;
        if !(tf > start) {
            return Err(CollocError::DegenerateSpan { start, tf });
        }
        let h = (tf - start) / (n - 1) as f64;
        let t = (0..n).map(|i| if i + 1 == n { tf } else { start + i as f64 * h }).collect();
        Ok(HGrid { t, h })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// Interval boundaries `-1 = M_0 < … < M_K = 1` and per-interval node counts.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Mesh {
    breaks: Vec<f64>,
    ns: Vec<usize>,
}

impl Mesh {
    pub fn new(breaks: Vec<f64>, ns: Vec<usize>) -> Result<Self, CollocError> {
        if ns.is_empty() || breaks.len() != ns.len() + 1 {
            return Err(CollocError::InvalidMesh(format!(
                "{} breakpoints for {} intervals",
                breaks.len(),
                ns.len()
            )));
        }
        if breaks[0] != -1.0 || *breaks.last().unwrap() != 1.0 {
            return Err(CollocError::InvalidMesh("mesh must span [-1, 1]".into()));
        }
        if breaks.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(CollocError::InvalidMesh("breakpoints must be strictly increasing".into()));
        }
        if ns.contains(&0) {
            return Err(CollocError::InvalidMesh("every interval needs at least one node".into()));
        }
        Ok(Mesh { breaks, ns })
    }

    /// `k` equal intervals with `n` nodes each.
    pub fn uniform(k: usize, n: usize) -> Result<Self, CollocError> {
        if k == 0 {
            return Err(CollocError::InvalidMesh("at least one interval".into()));
        }
        let mut breaks: Vec<f64> = (0..=k).map(|i| -1.0 + 2.0 * i as f64 / k as f64).collect();
        breaks[k] = 1.0;
        Mesh::new(breaks, vec![n; k])
    }

    pub fn intervals(&self) -> usize {
        self.ns.len()
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn ns(&self) -> &[usize] {
        &self.ns
    }
}

/// Nodes, quadrature weights and differentiation matrix of one mesh interval,
/// all expressed in the global `τ` coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct LgrInterval {
    /// Collocation points on `[M_{k-1}, M_k)`.
    pub tau: Vec<f64>,
    /// `tau` plus the noncollocated right endpoint `M_k`.
    pub tau_aug: Vec<f64>,
    /// Standard LGR weights on `[-1, 1)`.
    pub w: Vec<f64>,
    /// `(M_k - M_{k-1})/2 · w`, precomputed for the cost quadrature.
    pub scaled_w: Vec<f64>,
    /// `N × (N+1)` derivative of the interval's Lagrange basis, per unit `τ`.
    pub d: DenseMatrix,
    /// Barycentric weights of `tau_aug`.
    pub lambda: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LgrGrid {
    pub mesh: Mesh,
    pub intervals: Vec<LgrInterval>,
}

impl LgrGrid {
    pub fn new(mesh: Mesh) -> Result<Self, CollocError> {
        let mut intervals = Vec::with_capacity(mesh.intervals());
        for (k, &n) in mesh.ns().iter().enumerate() {
            let (lo, hi) = (mesh.breaks()[k], mesh.breaks()[k + 1]);
            let half = (hi - lo) / 2.0;
            let (std_tau, w) = lgr_nodes(n)?;
            let tau: Vec<f64> = std_tau.iter().map(|&s| lo + (s + 1.0) * half).collect();
            let mut tau_aug = tau.clone();
            tau_aug.push(hi);
            let d = lgr_diff_matrix(&tau_aug)?;
            let lambda = barycentric_weights(&tau_aug)?;
            let scaled_w = w.iter().map(|&wj| half * wj).collect();
            intervals.push(LgrInterval { tau, tau_aug, w, scaled_w, d, lambda });
        }
        Ok(LgrGrid { mesh, intervals })
    }

    /// Number of distinct state points: `Σ N^k + 1` (interval endpoints shared).
    pub fn state_points(&self) -> usize {
        self.mesh.ns().iter().sum::<usize>() + 1
    }

    /// Number of collocation (control) points: `Σ N^k`.
    pub fn collocation_points(&self) -> usize {
        self.mesh.ns().iter().sum()
    }

    /// Index of the first state point of interval `k`.
    pub fn offset(&self, k: usize) -> usize {
        self.mesh.ns()[..k].iter().sum()
    }

    /// Global `τ` of every state point.
    pub fn points(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.intervals.iter().flat_map(|iv| iv.tau.iter().copied()).collect();
        out.push(1.0);
        out
    }
}

/// Dynamics callback `F(x, u, t)`.
pub type DynamicsFn<'a> = dyn Fn(&[f64], &[f64], f64) -> Result<Vec<f64>, DomainError> + 'a;

fn check_shapes(x: &[Vec<f64>], u: &[Vec<f64>], t: &[f64]) -> Result<(), CollocError> {
    if x.len() < 2 || x.len() != u.len() || x.len() != t.len() {
        return Err(CollocError::EmptyGrid);
    }
    Ok(())
}

/// Backward-Euler defects `X[i+1] - X[i] - h·F(X[i+1], U[i+1], T[i+1])`.
pub fn euler_residual(
    x: &[Vec<f64>],
    u: &[Vec<f64>],
    t: &[f64],
    f: &DynamicsFn<'_>,
) -> Result<Vec<Vec<f64>>, CollocError> {
    check_shapes(x, u, t)?;
    (0..x.len() - 1)
        .map(|i| {
            let h = t[i + 1] - t[i];
            let fi = f(&x[i + 1], &u[i + 1], t[i + 1])?;
            Ok(x[i].iter().zip(&x[i + 1]).zip(fi).map(|((a, b), fv)| b - a - h * fv).collect())
        })
        .collect()
}

/// Trapezoidal defects `X[i+1] - X[i] - (h/2)(F_i + F_{i+1})`.
pub fn trapezoid_residual(
    x: &[Vec<f64>],
    u: &[Vec<f64>],
    t: &[f64],
    f: &DynamicsFn<'_>,
) -> Result<Vec<Vec<f64>>, CollocError> {
    check_shapes(x, u, t)?;
    let fs = (0..x.len()).map(|i| f(&x[i], &u[i], t[i])).collect::<Result<Vec<_>, _>>()?;
    Ok((0..x.len() - 1)
        .map(|i| {
            let h = t[i + 1] - t[i];
            (0..x[i].len())
                .map(|d| x[i + 1][d] - x[i][d] - 0.5 * h * (fs[i][d] + fs[i + 1][d]))
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HMethod {
    Euler,
    Trapezoid,
}

/// Panel-sum quadrature of `L` sampled on an evenly spaced grid with step `h`.
/// Backward Euler uses the right endpoint of each of the `N - 1` panels.
pub fn h_cost(method: HMethod, l: &[f64], h: f64) -> f64 {
    if l.len() < 2 {
        return 0.0;
    }
    match method {
        HMethod::Euler => h * l[1..].iter().sum::<f64>(),
        HMethod::Trapezoid => 0.5 * h * l.windows(2).map(|p| p[0] + p[1]).sum::<f64>(),
    }
}

/// LGR quadrature `((t_f - t0 - t_ex)/2) Σ_k Σ_j ((M_k - M_{k-1})/2) w_j^k L_j^k`;
/// `l[k]` holds `L` at the collocation points of interval `k`.
pub fn lgr_cost(l: &[Vec<f64>], grid: &LgrGrid, t0: f64, t_ex: f64, tf: f64) -> f64 {
    let half_span = (tf - t0 - t_ex) / 2.0;
    half_span
        * grid
            .intervals
            .iter()
            .zip(l)
            .map(|(iv, lk)| iv.scaled_w.iter().zip(lk).map(|(w, v)| w * v).sum::<f64>())
            .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_map_endpoints() {
        assert_eq!(time_map(-1.0, 0.0, 0.0, 4.0).unwrap(), 0.0);
        assert_eq!(time_map(1.0, 0.0, 0.2, 4.0).unwrap(), 4.0);
        assert!((time_map(0.0, 0.0, 0.2, 4.0).unwrap() - 2.1).abs() < 1e-15);
        assert!(matches!(time_map(0.0, 1.0, 0.5, 1.5), Err(CollocError::DegenerateSpan { .. })));
    }

    #[test]
    fn hgrid_spacing() {
        let g = HGrid::new(11, 0.5, 0.5, 3.0).unwrap();
        assert_eq!(g.t[0], 1.0);
        assert_eq!(g.t[10], 3.0);
        assert!(g.t.windows(2).all(|w| ((w[1] - w[0]) - g.h).abs() < 1e-12));
        assert!((g.h - 0.2).abs() < 1e-15);
    }

    fn scalar(fx: impl Fn(f64, f64) -> f64) -> impl Fn(&[f64], &[f64], f64) -> Result<Vec<f64>, DomainError> {
        move |x, _u, t| Ok(vec![fx(x[0], t)])
    }

    fn col(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|&a| vec![a]).collect()
    }

    #[test]
    fn euler_defects() {
        let t = [0.0, 1.0, 2.0, 3.0];
        let u = col(&[0.0; 4]);
        let eta = euler_residual(&col(&[2.0; 4]), &u, &t, &scalar(|_, _| 0.0)).unwrap();
        assert!(eta.iter().all(|r| r[0] == 0.0));
        let eta = euler_residual(&col(&t), &u, &t, &scalar(|_, _| 1.0)).unwrap();
        assert!(eta.iter().all(|r| r[0] == 0.0));
        let eta = euler_residual(&col(&[1.0, 2.0]), &col(&[0.0, 0.0]), &[0.0, 1.0], &scalar(|x, _| x)).unwrap();
        assert_eq!(eta, vec![vec![-1.0]]);
    }

    #[test]
    fn trapezoid_defects() {
        let t = [0.0, 0.5, 1.0, 1.5];
        let u = col(&[0.0; 4]);
        let eta = trapezoid_residual(&col(&t), &u, &t, &scalar(|_, _| 1.0)).unwrap();
        assert!(eta.iter().all(|r| r[0] == 0.0));
        let x: Vec<f64> = t.iter().map(|&s| s * s / 2.0).collect();
        let eta = trapezoid_residual(&col(&x), &u, &t, &scalar(|_, t| t)).unwrap();
        assert!(eta.iter().all(|r| r[0] == 0.0));
        let eta = trapezoid_residual(&col(&[1.0, 2.0]), &col(&[0.0, 0.0]), &[0.0, 1.0], &scalar(|x, _| x)).unwrap();
        assert_eq!(eta, vec![vec![-0.5]]);
    }

    #[test]
    fn h_quadrature() {
        let g = HGrid::new(5, 0.0, 0.0, 1.0).unwrap();
        let ones = vec![1.0; 5];
        assert!((h_cost(HMethod::Euler, &ones, g.h) - 1.0).abs() < 1e-15);
        assert!((h_cost(HMethod::Trapezoid, &ones, g.h) - 1.0).abs() < 1e-15);
        assert_eq!(h_cost(HMethod::Trapezoid, &[0.0; 5], g.h), 0.0);
    }

    #[test]
    fn lgr_quadrature_span() {
        for (k, n) in [(1, 4), (3, 5), (4, 10)] {
            let grid = LgrGrid::new(Mesh::uniform(k, n).unwrap()).unwrap();
            let ones: Vec<Vec<f64>> = grid.intervals.iter().map(|iv| vec![1.0; iv.tau.len()]).collect();
            let zeros: Vec<Vec<f64>> = grid.intervals.iter().map(|iv| vec![0.0; iv.tau.len()]).collect();
            assert!((lgr_cost(&ones, &grid, 0.5, 0.2, 4.0) - 3.3).abs() < 1e-13);
            assert_eq!(lgr_cost(&zeros, &grid, 0.5, 0.2, 4.0), 0.0);
        }
    }

    #[test]
    fn lgr_quadrature_of_mapped_square() {
        // L = τ² on one interval mapped to t ∈ [0, 2]: ∫ (t - 1)² dt = 2/3
        let grid = LgrGrid::new(Mesh::uniform(1, 5).unwrap()).unwrap();
        let l = vec![grid.intervals[0].tau.iter().map(|t| t * t).collect::<Vec<_>>()];
        assert!((lgr_cost(&l, &grid, 0.0, 0.0, 2.0) - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn mesh_validation() {
        assert!(Mesh::new(vec![-1.0, 0.5, 0.2, 1.0], vec![2, 2, 2]).is_err());
        assert!(Mesh::new(vec![-1.0, 1.0], vec![0]).is_err());
        assert!(Mesh::new(vec![-0.9, 1.0], vec![3]).is_err());
        let m = Mesh::uniform(4, 3).unwrap();
        assert_eq!(m.breaks(), &[-1.0, -0.5, 0.0, 0.5, 1.0]);
    }

    #[test]
    fn shared_interval_endpoints() {
        let grid = LgrGrid::new(Mesh::uniform(3, 4).unwrap()).unwrap();
        assert_eq!(grid.state_points(), 13);
        let pts = grid.points();
        assert_eq!(pts.len(), 13);
        // every interior break appears exactly once, as the first node of the next interval
        for (k, &b) in grid.mesh.breaks()[1..3].iter().enumerate() {
            assert_eq!(pts.iter().filter(|&&p| (p - b).abs() < 1e-15).count(), 1);
            assert_eq!(pts[grid.offset(k + 1)], grid.intervals[k + 1].tau[0]);
            assert!((grid.intervals[k].tau_aug[4] - b).abs() < 1e-15);
        }
    }
}
