//! Sparse LDLᵀ factorization without numerical pivoting, for symmetric
//! quasidefinite (or regularized indefinite) systems. The fill-reducing
//! ordering is computed once from the structure; numeric refactorizations
//! reuse it.

const NONE: usize = usize::MAX;

/// Signs of the pivots of the last factorization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

#[derive(Debug, Clone)]
pub struct Ldl {
    n: usize,
    /// `perm[new] = old`
    perm: Vec<usize>,
    entries: Vec<(usize, usize)>,
    /// Upper triangle of the permuted matrix, compressed by column.
    ap: Vec<usize>,
    ai: Vec<usize>,
    /// Input entry -> position in `ax`.
    map: Vec<usize>,
    etree: Vec<usize>,
    lp: Vec<usize>,
    ax: Vec<f64>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
    dinv: Vec<f64>,
}

impl Ldl {
    /// Analyzes the symmetric structure given as `(row, col)` pairs (either
    /// triangle, duplicates allowed). Every diagonal entry is added implicitly.
    pub fn new(n: usize, entries: &[(usize, usize)]) -> Ldl {
        let mut all: Vec<(usize, usize)> = entries.to_vec();
        all.extend((0..n).map(|i| (i, i)));

        let perm = min_degree(n, &all);
        let mut iperm = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }

        // Distinct upper-triangle positions in the permuted matrix.
        let mut keyed: Vec<((usize, usize), usize)> = all
            .iter()
            .enumerate()
            .map(|(k, &(i, j))| {
                let (a, b) = (iperm[i], iperm[j]);
                ((a.max(b), a.min(b)), k)
            })
            .collect();
        keyed.sort_unstable();
        let mut ap = vec![0; n + 1];
        let mut ai = Vec::new();
        let mut map = vec![0; all.len()];
        let mut last = None;
        for &((col, row), k) in &keyed {
            if last != Some((col, row)) {
                ai.push(row);
                ap[col + 1] += 1;
                last = Some((col, row));
            }
            map[k] = ai.len() - 1;
        }
        for c in 0..n {
            ap[c + 1] += ap[c];
        }

        let (etree, lnz) = elimination_tree(n, &ap, &ai);
        let mut lp = vec![0; n + 1];
        for i in 0..n {
            lp[i + 1] = lp[i] + lnz[i];
        }
        let nnz_l = lp[n];
        let nnz_a = ai.len();
        Ldl {
            n,
            perm,
            entries: all,
            ap,
            ai,
            map,
            etree,
            lp,
            ax: vec![0.0; nnz_a],
            li: vec![0; nnz_l],
            lx: vec![0.0; nnz_l],
            d: vec![0.0; n],
            dinv: vec![0.0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Nonzeros in the strict lower factor.
    pub fn factor_nnz(&self) -> usize {
        self.lp[self.n]
    }

    /// Factors the matrix whose values are `vals` (aligned with the entries
    /// passed to [`Ldl::new`]) plus `diag` on the diagonal. Returns the pivot
    /// inertia; a pivot with `|d| <= zero_tol` counts as zero and aborts.
    pub fn factor(&mut self, vals: &[f64], diag: &[f64], zero_tol: f64) -> Inertia {
        let n = self.n;
        let m_in = self.entries.len() - n;
        self.ax.iter_mut().for_each(|a| *a = 0.0);
        for (k, &v) in vals.iter().enumerate().take(m_in) {
            self.ax[self.map[k]] += v;
        }
        for (i, &v) in diag.iter().enumerate() {
            self.ax[self.map[m_in + i]] += v;
        }

        let mut inertia = Inertia::default();
        let mut y_vals = vec![0.0; n];
        let mut y_idx = vec![0usize; n];
        let mut marked = vec![false; n];
        let mut buffer = vec![0usize; n];
        let mut next_space: Vec<usize> = self.lp[..n].to_vec();

        for k in 0..n {
            let mut nnz_y = 0;
            self.d[k] = 0.0;
            for p in self.ap[k]..self.ap[k + 1] {
                let b = self.ai[p];
                if b == k {
                    self.d[k] = self.ax[p];
                    continue;
                }
                y_vals[b] = self.ax[p];
                if !marked[b] {
                    marked[b] = true;
                    buffer[0] = b;
                    let mut len = 1;
                    let mut next = self.etree[b];
                    while next != NONE && next < k {
                        if marked[next] {
                            break;
                        }
                        marked[next] = true;
                        buffer[len] = next;
                        len += 1;
                        next = self.etree[next];
                    }
                    while len > 0 {
                        len -= 1;
                        y_idx[nnz_y] = buffer[len];
                        nnz_y += 1;
                    }
                }
            }
            for i in (0..nnz_y).rev() {
                let c = y_idx[i];
                let slot = next_space[c];
                let yc = y_vals[c];
                for j in self.lp[c]..slot {
                    y_vals[self.li[j]] -= self.lx[j] * yc;
                }
                self.li[slot] = k;
                self.lx[slot] = yc * self.dinv[c];
                self.d[k] -= yc * self.lx[slot];
                next_space[c] += 1;
                y_vals[c] = 0.0;
                marked[c] = false;
            }
            let dk = self.d[k];
            if !(dk.abs() > zero_tol) {
                inertia.zero += 1;
                return inertia;
            }
            if dk > 0.0 {
                inertia.positive += 1;
            } else {
                inertia.negative += 1;
            }
            self.dinv[k] = 1.0 / dk;
        }
        inertia
    }

    /// Solves in place with the current factors.
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&o| b[o]).collect();
        for i in 0..n {
            let xi = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                x[self.li[j]] -= self.lx[j] * xi;
            }
        }
        for i in 0..n {
            x[i] *= self.dinv[i];
        }
        for i in (0..n).rev() {
            let mut xi = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                xi -= self.lx[j] * x[self.li[j]];
            }
            x[i] = xi;
        }
        for (new, &old) in self.perm.iter().enumerate() {
            b[old] = x[new];
        }
    }
}

/// `y = A x` for the symmetric matrix given by entries (summed, mirrored off
/// the diagonal) plus an explicit diagonal.
pub fn sym_matvec(entries: &[(usize, usize)], vals: &[f64], diag: &[f64], x: &[f64], y: &mut [f64]) {
    for (yi, (&d, &xi)) in y.iter_mut().zip(diag.iter().zip(x)) {
        *yi = d * xi;
    }
    for (&(i, j), &v) in entries.iter().zip(vals) {
        y[i] += v * x[j];
        if i != j {
            y[j] += v * x[i];
        }
    }
}

fn elimination_tree(n: usize, ap: &[usize], ai: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut etree = vec![NONE; n];
    let mut lnz = vec![0; n];
    let mut work = vec![NONE; n];
    for j in 0..n {
        work[j] = j;
        for &row in &ai[ap[j]..ap[j + 1]] {
            let mut i = row;
            while i < j && work[i] != j {
                work[i] = j;
                if etree[i] == NONE {
                    etree[i] = j;
                }
                lnz[i] += 1;
                i = etree[i];
            }
        }
    }
    (etree, lnz)
}

/// Minimum-degree ordering on the explicit elimination graph, with bitset
/// adjacency. Ties break toward the lowest index, so the result is
/// deterministic.
fn min_degree(n: usize, entries: &[(usize, usize)]) -> Vec<usize> {
    let words = n.div_ceil(64);
    let mut adj = vec![0u64; n * words];
    let set = |adj: &mut [u64], i: usize, j: usize| adj[i * words + j / 64] |= 1 << (j % 64);
    for &(i, j) in entries {
        if i != j {
            set(&mut adj, i, j);
            set(&mut adj, j, i);
        }
    }
    let mut degree: Vec<usize> =
        (0..n).map(|i| adj[i * words..(i + 1) * words].iter().map(|w| w.count_ones() as usize).sum()).collect();
    let mut done = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut row = vec![0u64; words];
    for _ in 0..n {
        let v = (0..n).filter(|&i| !done[i]).min_by_key(|&i| degree[i]).unwrap();
        done[v] = true;
        order.push(v);
        row.copy_from_slice(&adj[v * words..(v + 1) * words]);
        let neighbors: Vec<usize> = (0..n).filter(|&u| row[u / 64] >> (u % 64) & 1 == 1).collect();
        for &u in &neighbors {
            let r = &mut adj[u * words..(u + 1) * words];
            for (a, b) in r.iter_mut().zip(&row) {
                *a |= b;
            }
            r[u / 64] &= !(1 << (u % 64));
            r[v / 64] &= !(1 << (v % 64));
            degree[u] = r.iter().map(|w| w.count_ones() as usize).sum();
        }
    }
    order
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(n: usize, entries: &[(usize, usize)], vals: &[f64], diag: &[f64]) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            a[i][i] = diag[i];
        }
        for (&(i, j), &v) in entries.iter().zip(vals) {
            a[i][j] += v;
            if i != j {
                a[j][i] += v;
            }
        }
        a
    }

    #[test]
    fn solves_quasidefinite_kkt() {
        // [[4 1 | 1 0], [1 3 | 0 1], [1 0 | -1e-2 0], [0 1 | 0 -1e-2]]
        let entries = [(0, 0), (1, 0), (1, 1), (2, 0), (3, 1), (2, 2), (3, 3)];
        let vals = [4.0, 1.0, 3.0, 1.0, 1.0, -1e-2, -1e-2];
        let diag = [0.0; 4];
        let mut ldl = Ldl::new(4, &entries);
        let inertia = ldl.factor(&vals, &diag, 1e-300);
        assert_eq!(inertia, Inertia { positive: 2, negative: 2, zero: 0 });
        let b = [1.0, -2.0, 0.5, 3.0];
        let mut x = b;
        ldl.solve(&mut x);
        let a = dense(4, &entries, &vals, &diag);
        for i in 0..4 {
            let r: f64 = (0..4).map(|j| a[i][j] * x[j]).sum();
            assert!((r - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn detects_indefinite_hessian_block() {
        // Negative curvature along the null space of the constraint row.
        let entries = [(0, 0), (1, 1), (2, 0)];
        let vals = [2.0, -1.0, 1.0];
        let mut ldl = Ldl::new(3, &entries);
        let inertia = ldl.factor(&vals, &[0.0, 0.0, -1e-8], 1e-300);
        assert_eq!(inertia.positive + inertia.negative, 3);
        assert_ne!(inertia.positive, 2);
    }

    #[test]
    fn random_banded_systems() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for n in [5usize, 17, 60] {
            let mut entries = Vec::new();
            let mut vals = Vec::new();
            for i in 0..n {
                for j in i.saturating_sub(3)..i {
                    if rng.gen_bool(0.6) {
                        entries.push((i, j));
                        vals.push(rng.gen_range(-1.0..1.0));
                    }
                }
            }
            let diag: Vec<f64> = (0..n).map(|i| if i % 3 == 0 { -8.0 } else { 8.0 }).collect();
            let mut ldl = Ldl::new(n, &entries);
            let inertia = ldl.factor(&vals, &diag, 1e-300);
            assert_eq!(inertia.zero, 0);
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut x = b.clone();
            ldl.solve(&mut x);
            let mut r = vec![0.0; n];
            sym_matvec(&entries, &vals, &diag, &x, &mut r);
            for i in 0..n {
                assert!((r[i] - b[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn ordering_is_a_permutation() {
        let entries: Vec<(usize, usize)> = (1..30).map(|i| (i, i / 2)).collect();
        let mut p = min_degree(30, &entries);
        p.sort_unstable();
        assert_eq!(p, (0..30).collect::<Vec<_>>());
    }
}
