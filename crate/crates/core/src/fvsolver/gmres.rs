//! Restarted GMRES with right preconditioning.

use super::sparse::{CsrMatrix, Ilu};
use super::SolverError;

/// Residual floor relative to `‖b‖`, below which the solve is accepted even
/// when the requested reduction of the initial residual is not reached.
pub const ABSOLUTE_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct GmresStats {
    pub iterations: usize,
    pub initial_residual: f64,
    pub final_residual: f64,
}

/// Reusable Krylov workspace.
#[derive(Debug, Clone)]
pub struct Gmres {
    restart: usize,
    basis: Vec<Vec<f64>>,
    hess: Vec<Vec<f64>>,
    cs: Vec<f64>,
    sn: Vec<f64>,
    g: Vec<f64>,
    w: Vec<f64>,
    z: Vec<f64>,
}

impl Gmres {
    pub fn new(n: usize, restart: usize) -> Self {
        let restart = restart.max(1);
        Self {
            restart,
            basis: vec![vec![0.0; n]; restart + 1],
            hess: vec![vec![0.0; restart]; restart + 1],
            cs: vec![0.0; restart],
            sn: vec![0.0; restart],
            g: vec![0.0; restart + 1],
            w: vec![0.0; n],
            z: vec![0.0; n],
        }
    }

    /// Solves `A x = b` starting from `x`. Stops when
    /// `‖r‖ ≤ max(rel_tol ‖r₀‖, ABSOLUTE_FLOOR ‖|A||x₀| + |b|‖)`; the
    /// second term is the rounding level of the residual itself.
    pub fn solve(
        &mut self,
        a: &CsrMatrix,
        m: &Ilu,
        b: &[f64],
        x: &mut [f64],
        rel_tol: f64,
        max_iters: usize,
    ) -> Result<GmresStats, SolverError> {
        residual(a, b, x, &mut self.w);
        let r0 = norm(&self.w);
        let target = (rel_tol * r0).max(ABSOLUTE_FLOOR * rounding_scale(a, b, x));
        let mut history = vec![r0];
        if r0 <= target || r0 == 0.0 {
            return Ok(GmresStats {
                iterations: 0,
                initial_residual: r0,
                final_residual: r0,
            });
        }
        let mut total = 0;
        let mut beta = r0;
        loop {
            for (vi, wi) in self.basis[0].iter_mut().zip(&self.w) {
                *vi = wi / beta;
            }
            self.g.iter_mut().for_each(|v| *v = 0.0);
            self.g[0] = beta;
            let mut k_used = 0;
            for k in 0..self.restart {
                self.z.copy_from_slice(&self.basis[k]);
                m.apply(&mut self.z);
                a.mul_vec(&self.z, &mut self.w);
                for i in 0..=k {
                    let h = dot(&self.w, &self.basis[i]);
                    self.hess[i][k] = h;
                    for (wj, vj) in self.w.iter_mut().zip(&self.basis[i]) {
                        *wj -= h * vj;
                    }
                }
                let h_next = norm(&self.w);
                self.hess[k + 1][k] = h_next;
                if h_next > 0.0 {
                    for (vj, wj) in self.basis[k + 1].iter_mut().zip(&self.w) {
                        *vj = wj / h_next;
                    }
                }
                for i in 0..k {
                    let t = self.cs[i] * self.hess[i][k] + self.sn[i] * self.hess[i + 1][k];
                    self.hess[i + 1][k] = -self.sn[i] * self.hess[i][k] + self.cs[i] * self.hess[i + 1][k];
                    self.hess[i][k] = t;
                }
                let (hk, hk1) = (self.hess[k][k], self.hess[k + 1][k]);
                let denom = hk.hypot(hk1);
                let (c, s) = if denom == 0.0 { (1.0, 0.0) } else { (hk / denom, hk1 / denom) };
                self.cs[k] = c;
                self.sn[k] = s;
                self.hess[k][k] = denom;
                self.hess[k + 1][k] = 0.0;
                self.g[k + 1] = -s * self.g[k];
                self.g[k] *= c;
                let res = self.g[k + 1].abs();
                total += 1;
                k_used = k + 1;
                history.push(res);
                if res <= target || h_next == 0.0 || total >= max_iters {
                    break;
                }
            }
            // Back substitution for the Krylov coefficients.
            let mut y = vec![0.0; k_used];
            for i in (0..k_used).rev() {
                let mut s = self.g[i];
                for j in i + 1..k_used {
                    s -= self.hess[i][j] * y[j];
                }
                y[i] = s / self.hess[i][i];
            }
            self.z.iter_mut().for_each(|v| *v = 0.0);
            for (j, yj) in y.iter().enumerate() {
                for (zi, vi) in self.z.iter_mut().zip(&self.basis[j]) {
                    *zi += yj * vi;
                }
            }
            m.apply(&mut self.z);
            for (xi, zi) in x.iter_mut().zip(&self.z) {
                *xi += zi;
            }
            residual(a, b, x, &mut self.w);
            beta = norm(&self.w);
            if beta <= target {
                return Ok(GmresStats {
                    iterations: total,
                    initial_residual: r0,
                    final_residual: beta,
                });
            }
            if total >= max_iters || !beta.is_finite() {
                history.push(beta);
                return Err(SolverError::GmresStagnation {
                    iterations: total,
                    residual_history: history,
                });
            }
        }
    }
}

fn residual(a: &CsrMatrix, b: &[f64], x: &[f64], r: &mut [f64]) {
    a.mul_vec(x, r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
}

#[inline]
/// `‖|A||x| + |b|‖₂`.
fn rounding_scale(a: &CsrMatrix, b: &[f64], x: &[f64]) -> f64 {
    let (cols, vals) = (a.col_idx(), a.values());
    (0..a.dim())
        .map(|i| {
            let row: f64 = a.row_range(i).map(|p| (vals[p] * x[cols[p]]).abs()).sum();
            let s = row + b[i].abs();
            s * s
        })
        .sum::<f64>()
        .sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
