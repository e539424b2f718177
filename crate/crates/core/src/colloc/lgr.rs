use super::{CollocError, DenseMatrix};

/// Legendre polynomials `P_{n-1}(x)` and `P_n(x)` by the three-term recurrence.
pub fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let (mut prev, mut cur) = (1.0, x);
    for k in 1..n {
        let k = k as f64;
        let next = ((2.0 * k + 1.0) * x * cur - k * prev) / (k + 1.0);
        prev = cur;
        cur = next;
    }
    (prev, cur)
}

/// Legendre-Gauss-Radau nodes and weights on `[-1, 1)`.
///
/// The nodes are the roots of `P_{N-1} + P_N`; `tau[0] = -1` exactly and the
/// remaining `N - 1` roots are found by Newton iteration started from the
/// Chebyshev-Gauss-Radau points `-cos(2πj / (2N - 1))`.
pub fn lgr_nodes(n: usize) -> Result<(Vec<f64>, Vec<f64>), CollocError> {
    if n == 0 {
        return Err(CollocError::EmptyGrid);
    }
    let nf = n as f64;
    let mut tau = vec![-1.0; n];
    for (j, t) in tau.iter_mut().enumerate().skip(1) {
        let mut x = -(2.0 * std::f64::consts::PI * j as f64 / (2.0 * nf - 1.0)).cos();
        let mut residual = f64::INFINITY;
        for _ in 0..100 {
            let (p_prev, p) = legendre_pair(n, x);
            residual = p_prev + p;
            // (1 - x)·(P_{N-1} + P_N)' = N·(P_{N-1} - P_N)
            let deriv = nf * (p_prev - p) / (1.0 - x);
            let step = residual / deriv;
            x -= step;
            if step.abs() <= 4.0 * f64::EPSILON * x.abs().max(1e-3) {
                let (p_prev, p) = legendre_pair(n, x);
                residual = p_prev + p;
                break;
            }
        }
        // recurrence rounding grows roughly linearly with the degree
        if !(residual.abs() <= 1e-14 * nf.max(10.0)) || !(x > -1.0 && x < 1.0) {
            return Err(CollocError::ConvergenceFailure { n, node: j, residual });
        }
        *t = x;
    }
    tau.sort_by(f64::total_cmp);
    let w = tau
        .iter()
        .enumerate()
        .map(|(j, &x)| {
            if j == 0 {
                2.0 / (nf * nf)
            } else {
                let (p_prev, _) = legendre_pair(n, x);
                (1.0 - x) / (nf * nf * p_prev * p_prev)
            }
        })
        .collect();
    Ok((tau, w))
}

/// Barycentric weights `λ_j = 1 / Π_{k≠j} (x_j - x_k)`.
pub fn barycentric_weights(nodes: &[f64]) -> Result<Vec<f64>, CollocError> {
    let mut lambda = vec![1.0; nodes.len()];
    for (j, &xj) in nodes.iter().enumerate() {
        for (k, &xk) in nodes.iter().enumerate() {
            if j != k {
                let d = xj - xk;
                if d == 0.0 {
                    return Err(CollocError::DuplicateNodes);
                }
                lambda[j] /= d;
            }
        }
    }
    Ok(lambda)
}

/// Evaluates the interpolating polynomial through `(nodes, values)` at `x`
/// with the second barycentric formula.
pub fn barycentric_eval(nodes: &[f64], lambda: &[f64], values: &[f64], x: f64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for ((&xj, &lj), &vj) in nodes.iter().zip(lambda).zip(values) {
        let d = x - xj;
        if d == 0.0 {
            return vj;
        }
        let c = lj / d;
        num += c * vj;
        den += c;
    }
    num / den
}

/// Differentiation matrix `D[i][j] = L_j'(tau_aug[i])` for the Lagrange basis
/// on `tau_aug`, evaluated at the first `N = len - 1` (collocation) points.
pub fn lgr_diff_matrix(tau_aug: &[f64]) -> Result<DenseMatrix, CollocError> {
    let m = tau_aug.len();
    if m < 2 {
        return Err(CollocError::EmptyGrid);
    }
    if tau_aug.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(CollocError::DuplicateNodes);
    }
    let lambda = barycentric_weights(tau_aug)?;
    let n = m - 1;
    let mut d = DenseMatrix::zeros(n, m);
    for i in 0..n {
        let mut diag = 0.0;
        for j in 0..m {
            if i != j {
                let v = (lambda[j] / lambda[i]) / (tau_aug[i] - tau_aug[j]);
                d[(i, j)] = v;
                diag -= v;
            }
        }
        d[(i, i)] = diag;
    }
    Ok(d)
}
