#![allow(dead_code)]

use ocpkit::expr::DomainError;
use ocpkit::nlp::Nlp;

type Scalar = Box<dyn Fn(&[f64]) -> f64 + Sync>;
type Vector = Box<dyn Fn(&[f64]) -> Vec<f64> + Sync>;
type Matrix = Box<dyn Fn(&[f64]) -> Vec<Vec<f64>> + Sync>;
type Hess = Box<dyn Fn(&[f64], f64, &[f64]) -> Vec<Vec<f64>> + Sync>;

/// Small NLP with dense hand-written derivatives.
pub struct DenseNlp {
    pub n: usize,
    pub n_ineq: usize,
    pub n_eq: usize,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub f: Scalar,
    pub grad: Vector,
    pub cons: Vector,
    pub jac: Matrix,
    pub hess: Hess,
}

impl DenseNlp {
    pub fn unconstrained(n: usize, f: Scalar, grad: Vector, hess: Matrix) -> Self {
        DenseNlp {
            n,
            n_ineq: 0,
            n_eq: 0,
            lo: vec![f64::NEG_INFINITY; n],
            hi: vec![f64::INFINITY; n],
            f,
            grad,
            cons: Box::new(|_| Vec::new()),
            jac: Box::new(|_| Vec::new()),
            hess: Box::new(move |z, s, _| hess(z).into_iter().map(|r| r.into_iter().map(|v| s * v).collect()).collect()),
        }
    }
}

impl Nlp for DenseNlp {
    fn num_vars(&self) -> usize {
        self.n
    }
    fn num_ineq(&self) -> usize {
        self.n_ineq
    }
    fn num_eq(&self) -> usize {
        self.n_eq
    }
    fn var_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (self.lo.clone(), self.hi.clone())
    }
    fn objective(&self, z: &[f64]) -> Result<f64, DomainError> {
        Ok((self.f)(z))
    }
    fn gradient(&self, z: &[f64], out: &mut [f64]) -> Result<(), DomainError> {
        out.copy_from_slice(&(self.grad)(z));
        Ok(())
    }
    fn constraints(&self, z: &[f64], out: &mut [f64]) -> Result<(), DomainError> {
        out.copy_from_slice(&(self.cons)(z));
        Ok(())
    }
    fn jacobian_structure(&self) -> Vec<(usize, usize)> {
        let n = self.n;
        (0..self.n_ineq + self.n_eq).flat_map(|r| (0..n).map(move |c| (r, c))).collect()
    }
    fn jacobian_values(&self, z: &[f64], out: &mut [f64]) -> Result<(), DomainError> {
        for (o, v) in out.iter_mut().zip((self.jac)(z).into_iter().flatten()) {
            *o = v;
        }
        Ok(())
    }
    fn hessian_structure(&self) -> Vec<(usize, usize)> {
        (0..self.n).flat_map(|r| (0..=r).map(move |c| (r, c))).collect()
    }
    fn hessian_values(&self, z: &[f64], s: f64, l: &[f64], out: &mut [f64]) -> Result<(), DomainError> {
        let h = (self.hess)(z, s, l);
        let mut k = 0;
        for (r, row) in h.iter().enumerate() {
            for &v in &row[..=r] {
                out[k] = v;
                k += 1;
            }
        }
        Ok(())
    }
}

pub fn scalar_quadratic() -> DenseNlp {
    DenseNlp::unconstrained(
        1,
        Box::new(|z| (z[0] - 1.0).powi(2)),
        Box::new(|z| vec![2.0 * (z[0] - 1.0)]),
        Box::new(|_| vec![vec![2.0]]),
    )
}

/// `min z²` with `z >= 1` as a variable bound.
pub fn bounded_square() -> DenseNlp {
    let mut p = DenseNlp::unconstrained(
        1,
        Box::new(|z| z[0] * z[0]),
        Box::new(|z| vec![2.0 * z[0]]),
        Box::new(|_| vec![vec![2.0]]),
    );
    p.lo = vec![1.0];
    p
}

pub fn rosenbrock() -> DenseNlp {
    DenseNlp::unconstrained(
        2,
        Box::new(|z| (1.0 - z[0]).powi(2) + 100.0 * (z[1] - z[0] * z[0]).powi(2)),
        Box::new(|z| {
            vec![-2.0 * (1.0 - z[0]) - 400.0 * z[0] * (z[1] - z[0] * z[0]), 200.0 * (z[1] - z[0] * z[0])]
        }),
        Box::new(|z| {
            vec![vec![2.0 - 400.0 * (z[1] - 3.0 * z[0] * z[0]), -400.0 * z[0]], vec![-400.0 * z[0], 200.0]]
        }),
    )
}

/// Hock-Schittkowski problem 71: one inequality, one equality, bounded
/// variables. Optimum objective 17.0140173.
pub fn hs071() -> DenseNlp {
    DenseNlp {
        n: 4,
        n_ineq: 1,
        n_eq: 1,
        lo: vec![1.0; 4],
        hi: vec![5.0; 4],
        f: Box::new(|x| x[0] * x[3] * (x[0] + x[1] + x[2]) + x[2]),
        grad: Box::new(|x| {
            vec![
                x[3] * (2.0 * x[0] + x[1] + x[2]),
                x[0] * x[3],
                x[0] * x[3] + 1.0,
                x[0] * (x[0] + x[1] + x[2]),
            ]
        }),
        // 25 - x1 x2 x3 x4 <= 0 ; Σx² - 40 = 0
        cons: Box::new(|x| vec![25.0 - x[0] * x[1] * x[2] * x[3], x.iter().map(|v| v * v).sum::<f64>() - 40.0]),
        jac: Box::new(|x| {
            vec![
                vec![-x[1] * x[2] * x[3], -x[0] * x[2] * x[3], -x[0] * x[1] * x[3], -x[0] * x[1] * x[2]],
                x.iter().map(|v| 2.0 * v).collect(),
            ]
        }),
        hess: Box::new(|x, s, l| {
            let mut h = vec![vec![0.0; 4]; 4];
            h[0][0] = s * 2.0 * x[3];
            h[1][0] = s * x[3];
            h[2][0] = s * x[3];
            h[3][0] = s * (2.0 * x[0] + x[1] + x[2]);
            h[3][1] = s * x[0];
            h[3][2] = s * x[0];
            h[1][0] -= l[0] * x[2] * x[3];
            h[2][0] -= l[0] * x[1] * x[3];
            h[3][0] -= l[0] * x[1] * x[2];
            h[2][1] -= l[0] * x[0] * x[3];
            h[3][1] -= l[0] * x[0] * x[2];
            h[3][2] -= l[0] * x[0] * x[1];
            for i in 0..4 {
                h[i][i] += 2.0 * l[1];
            }
            for r in 0..4 {
                for c in r + 1..4 {
                    h[r][c] = h[c][r];
                }
            }
            h
        }),
    }
}

/// Seed for randomized fixtures: `OCPKIT_SEED` if set, else `default`.
pub fn seed(default: u64) -> u64 {
    std::env::var("OCPKIT_SEED").ok().and_then(|s| s.parse().ok()).unwrap_or(default)
}

/// Random smooth expression text over `x1`, `x2`, `u1` and `t`, built so
/// that it is defined everywhere.
pub fn random_expr(rng: &mut impl rand::Rng, depth: usize) -> String {
    if depth == 0 || rng.gen_bool(0.2) {
        return match rng.gen_range(0..5) {
            0 => "x1".into(),
            1 => "x2".into(),
            2 => "u1".into(),
            3 => "t".into(),
            _ => format!("{:.3}", rng.gen_range(0.5..2.0)),
        };
    }
    let a = random_expr(rng, depth - 1);
    match rng.gen_range(0..12) {
        0 => format!("({a}) + ({})", random_expr(rng, depth - 1)),
        1 => format!("({a}) - ({})", random_expr(rng, depth - 1)),
        2 | 3 => format!("({a}) * ({})", random_expr(rng, depth - 1)),
        4 => format!("({a}) / (2 + cos({}))", random_expr(rng, depth - 1)),
        5 => format!("sin({a})"),
        6 => format!("cos({a})"),
        7 => format!("atan({a})"),
        8 => format!("tanh({a})"),
        9 => format!("exp(0.5 * sin({a}))"),
        10 => format!("sqrt(1 + ({a})^2)"),
        _ => format!("log(2 + sin({a}))"),
    }
}
