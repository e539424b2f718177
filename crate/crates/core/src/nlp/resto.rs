//! Feasibility restoration problem: minimize the ℓ1 constraint violation
//! plus a proximity term to the point where the line search failed,
//!
//! ```text
//! min  ρ·Σ(p + n) + ½·Σ w_i (z_i - r_i)²
//! s.t. g(z) - p <= 0,  h(z) - p + n = 0,  lo <= z <= hi,  p, n >= 0
//! ```
//!
//! with constraint rows multiplied by the outer problem's scaling factors.

use super::Nlp;
use crate::expr::DomainError;

pub(super) const RHO: f64 = 1000.0;

pub(super) struct Restoration<'a> {
    inner: &'a dyn Nlp,
    con_s: &'a [f64],
    reference: Vec<f64>,
    weight: Vec<f64>,
    n: usize,
    mi: usize,
    m: usize,
}

impl<'a> Restoration<'a> {
    pub(super) fn new(inner: &'a dyn Nlp, con_s: &'a [f64], reference: &[f64], zeta: f64) -> Self {
        let weight = reference.iter().map(|r| zeta * (1.0f64).min(1.0 / r.abs()).powi(2)).collect();
        Restoration {
            inner,
            con_s,
            reference: reference.to_vec(),
            weight,
            n: inner.num_vars(),
            mi: inner.num_ineq(),
            m: inner.num_constraints(),
        }
    }

    /// Starting point: the reference plus violation variables that make
    /// every row satisfied, chosen near the central path for `mu`.
    pub(super) fn start(&self, c: &[f64], mu: f64) -> Vec<f64> {
        let mut z = self.reference.clone();
        let (mut p, mut nn) = (Vec::with_capacity(self.m), Vec::new());
        for (i, &ci) in c.iter().enumerate() {
            if i < self.mi {
                p.push(ci.max(0.0) + mu / RHO);
            } else {
                let a = (mu - RHO * ci) / (2.0 * RHO);
                let neg = a + (a * a + mu * ci / (2.0 * RHO)).sqrt();
                p.push(ci + neg);
                nn.push(neg);
            }
        }
        z.extend(p);
        z.extend(nn);
        z
    }
}

impl Nlp for Restoration<'_> {
    fn num_vars(&self) -> usize {
        self.n + self.m + (self.m - self.mi)
    }

    fn num_ineq(&self) -> usize {
        self.mi
    }

    fn num_eq(&self) -> usize {
        self.m - self.mi
    }

    fn var_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let (mut lo, mut hi) = self.inner.var_bounds();
        let extra = self.num_vars() - self.n;
        lo.extend(std::iter::repeat_n(0.0, extra));
        hi.extend(std::iter::repeat_n(f64::INFINITY, extra));
        (lo, hi)
    }

    fn objective(&self, z: &[f64]) -> Result<f64, DomainError> {
        let prox: f64 = (0..self.n).map(|i| 0.5 * self.weight[i] * (z[i] - self.reference[i]).powi(2)).sum();
        Ok(RHO * z[self.n..].iter().sum::<f64>() + prox)
    }

    fn gradient(&self, z: &[f64], out: &mut [f64]) -> Result<(), DomainError> {
        for i in 0..self.n {
            out[i] = self.weight[i] * (z[i] - self.reference[i]);
        }
        out[self.n..].iter_mut().for_each(|g| *g = RHO);
        Ok(())
    }

    fn constraints(&self, z: &[f64], out: &mut [f64]) -> Result<(), DomainError> {
        self.inner.constraints(&z[..self.n], out)?;
        for i in 0..self.m {
            out[i] = out[i] * self.con_s[i] - z[self.n + i];
            if i >= self.mi {
                out[i] += z[self.n + self.m + i - self.mi];
            }
        }
        Ok(())
    }

    fn jacobian_structure(&self) -> Vec<(usize, usize)> {
        let mut s = self.inner.jacobian_structure();
        s.extend((0..self.m).map(|i| (i, self.n + i)));
        s.extend((self.mi..self.m).map(|i| (i, self.n + self.m + i - self.mi)));
        s
    }

    fn jacobian_values(&self, z: &[f64], out: &mut [f64]) -> Result<(), DomainError> {
        let structure = self.inner.jacobian_structure();
        let k = structure.len();
        self.inner.jacobian_values(&z[..self.n], &mut out[..k])?;
        for (v, &(r, _)) in out[..k].iter_mut().zip(&structure) {
            *v *= self.con_s[r];
        }
        out[k..k + self.m].iter_mut().for_each(|v| *v = -1.0);
        out[k + self.m..].iter_mut().for_each(|v| *v = 1.0);
        Ok(())
    }

    fn hessian_structure(&self) -> Vec<(usize, usize)> {
        let mut s = self.inner.hessian_structure();
        s.extend((0..self.n).map(|i| (i, i)));
        s
    }

    fn hessian_values(&self, z: &[f64], obj_factor: f64, lambda: &[f64], out: &mut [f64]) -> Result<(), DomainError> {
        let k = out.len() - self.n;
        let scaled: Vec<f64> = lambda.iter().zip(self.con_s).map(|(l, s)| l * s).collect();
        self.inner.hessian_values(&z[..self.n], 0.0, &scaled, &mut out[..k])?;
        for i in 0..self.n {
            out[k + i] = obj_factor * self.weight[i];
        }
        Ok(())
    }
}
