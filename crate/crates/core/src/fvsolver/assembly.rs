use crate::kernel::KernelTable;
use crate::moments::{w_prime, w_second};

use super::gmres::Gmres;
use super::sparse::{CsrMatrix, Ilu};
use super::{Mesh2D, Scheme, SimState, SolverConfig, SolverError};

/// Interleaved block system: `φ_c` is unknown `2c`, `ψ_c` is unknown `2c+1`.
/// Rows are equilibrated by their max-norm; `row_scale` holds the factors.
#[derive(Debug, Clone)]
pub struct BlockSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub row_scale: Vec<f64>,
    /// Per cell: positions of the 2x2 diagonal block and, per neighbor, of
    /// the off-diagonal block entries `(φφ, φψ, ψφ, ψψ)`.
    layout: Vec<CellLayout>,
}

#[derive(Debug, Clone)]
struct CellLayout {
    diag: [usize; 4],
    off: Vec<(usize, f64, [usize; 4])>,
}

impl BlockSystem {
    /// Allocates the point-block pattern for `mesh`.
    pub fn new(mesh: &Mesh2D) -> Self {
        let n = mesh.cell_count();
        let mut rows = Vec::with_capacity(2 * n);
        for j in 0..mesh.ny {
            for i in 0..mesh.nx {
                let c = mesh.index(i, j);
                let mut cols = vec![2 * c, 2 * c + 1];
                for (nb, _) in mesh.neighbors(i, j) {
                    cols.push(2 * nb);
                    cols.push(2 * nb + 1);
                }
                rows.push(cols.clone());
                rows.push(cols);
            }
        }
        let matrix = CsrMatrix::from_pattern(&rows);
        let block = |a: usize, b: usize| {
            let at = |r, c| matrix.find(r, c).expect("block entry in pattern");
            [at(2 * a, 2 * b), at(2 * a, 2 * b + 1), at(2 * a + 1, 2 * b), at(2 * a + 1, 2 * b + 1)]
        };
        let mut layout = Vec::with_capacity(n);
        for j in 0..mesh.ny {
            for i in 0..mesh.nx {
                let c = mesh.index(i, j);
                layout.push(CellLayout {
                    diag: block(c, c),
                    off: mesh.neighbors(i, j).map(|(nb, w)| (nb, w, block(c, nb))).collect(),
                });
            }
        }
        Self {
            matrix,
            rhs: vec![0.0; 2 * n],
            row_scale: vec![1.0; 2 * n],
            layout,
        }
    }

    pub fn cell_count(&self) -> usize {
        self.layout.len()
    }

    /// Fills values and right-hand side for one iterate `(φᵏ, ψᵏ)`.
    ///
    /// Both schemes share the operator shape
    /// φ-row: `c/δt φ + Σ_f M_f (ψ_c - ψ_f)/h² = r_φ`,
    /// ψ-row: `ε Σ_f (φ_c - φ_f)/h² + d φ - a ψ = r_ψ`, with `M` at `φᵏ`.
    ///
    /// `Picard`: `c = Q̄(φᵏ)`, `r_φ = Q(φⁿ)/δt`, `a = Q'_α(φᵏ)`,
    /// `d = (W''(φᵏ)+β)/ε`, `r_ψ = ((W''(φᵏ)+β) φᵏ - W'(φᵏ))/ε`.
    ///
    /// `ConvexSplit`: `c = Q'_α(φᵏ)`, `r_φ = (Q(φⁿ) - Q(φᵏ) + c φᵏ)/δt`,
    /// `a = max(Q̂'(φᵏ, φⁿ), α)`, `d = (W''(φᵏ)+β)/ε - a' ψᵏ` with `a' = ∂a/∂φᵏ`,
    /// `r_ψ = ((W''(φᵏ)+β) φᵏ - W'(φᵏ) - β(φᵏ - φⁿ))/ε - a' ψᵏ φᵏ`.
    #[allow(clippy::too_many_arguments)]
    pub fn assemble(
        &mut self,
        phi_n: &[f64],
        phi_k: &[f64],
        psi_k: &[f64],
        dt: f64,
        kernel: &KernelTable,
        cfg: &SolverConfig,
        mobility_exponent: u32,
    ) -> Result<(), SolverError> {
        let eps = cfg.epsilon;
        let alpha = cfg.alpha_qprime;
        let mobility: Vec<f64> = phi_k
            .iter()
            .map(|&p| {
                let p = p.clamp(-1.0, 1.0);
                (1.0 - p * p).powi(mobility_exponent as i32)
            })
            .collect();
        let vals = self.matrix.values_mut();
        vals.iter_mut().for_each(|v| *v = 0.0);
        for (c, cell) in self.layout.iter().enumerate() {
            let pk = phi_k[c].clamp(-1.0, 1.0);
            let pn = phi_n[c];
            let stab = w_second(pk) + cfg.beta;
            let q_old = kernel.q(pn);
            let (coef, rhs_phi, a_psi, newton_diag, b_psi) = match cfg.scheme {
                Scheme::Picard => (
                    kernel.qbar(pk),
                    q_old / dt,
                    kernel.q_prime(pk).max(alpha),
                    0.0,
                    (stab * pk - w_prime(pk)) / eps,
                ),
                Scheme::ConvexSplit => {
                    let coef = kernel.q_prime(pk).max(alpha);
                    let qhat = discrete_chain_quotient(pk, pn, kernel);
                    let slope = if qhat > alpha { chain_quotient_slope(pk, pn, kernel) } else { 0.0 };
                    let nd = -slope * psi_k[c];
                    (
                        coef,
                        (q_old - kernel.q(pk) + coef * pk) / dt,
                        qhat.max(alpha),
                        nd,
                        (stab * pk - w_prime(pk) - cfg.beta * (pk - pn)) / eps + nd * pk,
                    )
                }
            };
            for (v, what) in [(coef, "phi-row"), (a_psi, "Q'"), (newton_diag, "psi"), (q_old, "Q"), (stab, "potential"), (b_psi, "psi rhs")] {
                if !v.is_finite() {
                    return Err(SolverError::NonFiniteCoefficient { cell: c, what });
                }
            }
            let [pp, ps, sp, ss] = cell.diag;
            vals[pp] = coef / dt;
            vals[sp] = stab / eps + newton_diag;
            vals[ss] = -a_psi;
            for &(nb, w, [_, nps, nsp, _]) in &cell.off {
                let m_face = 0.5 * (mobility[c] + mobility[nb]);
                vals[ps] += m_face * w;
                vals[nps] = -m_face * w;
                vals[sp] += eps * w;
                vals[nsp] = -eps * w;
            }
            self.rhs[2 * c] = rhs_phi;
            self.rhs[2 * c + 1] = b_psi;
        }
        for r in 0..self.rhs.len() {
            let norm = self.matrix.row_inf_norm(r);
            let s = if norm > 0.0 { 1.0 / norm } else { 1.0 };
            self.row_scale[r] = s;
            self.matrix.scale_row(r, s);
            self.rhs[r] *= s;
        }
        Ok(())
    }
}

/// Assembles a fresh block system for the iterate `phi_k` of the step
/// starting from `state`.
pub fn assemble_block(
    state: &SimState,
    phi_k: &[f64],
    dt: f64,
    kernel: &KernelTable,
    cfg: &SolverConfig,
    mesh: &Mesh2D,
) -> Result<BlockSystem, SolverError> {
    let mut sys = BlockSystem::new(mesh);
    let ell = cfg.mobility_for(kernel.spec());
    sys.assemble(&state.phi, phi_k, &state.psi, dt, kernel, cfg, ell)?;
    Ok(sys)
}

/// Solves a block system with ILU(k)-preconditioned GMRES, starting from
/// `guess` (interleaved). Returns `(φ, ψ, iterations)`.
pub fn solve_block(
    system: &BlockSystem,
    cfg: &SolverConfig,
    guess: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, usize), SolverError> {
    let ilu = Ilu::factor(&system.matrix, cfg.ilu_fill)?;
    let mut x = guess.to_vec();
    let mut gmres = Gmres::new(x.len(), cfg.gmres_restart);
    let stats = gmres.solve(&system.matrix, &ilu, &system.rhs, &mut x, cfg.gmres_rel_tol, cfg.gmres_max_iters)?;
    let phi = x.iter().step_by(2).copied().collect();
    let psi = x.iter().skip(1).step_by(2).copied().collect();
    Ok((phi, psi, stats.iterations))
}

/// `(Q(a) - Q(b))/(a - b)`, or `Q'(b)` when `|a - b| < 1e-12`.
pub fn discrete_chain_quotient(a: f64, b: f64, kernel: &KernelTable) -> f64 {
    if (a - b).abs() < 1e-12 {
        kernel.q_prime(b)
    } else {
        (kernel.q(a) - kernel.q(b)) / (a - b)
    }
}

/// `∂/∂a` of the chain quotient `(Q(a) - Q(b))/(a - b)`.
fn chain_quotient_slope(a: f64, b: f64, kernel: &KernelTable) -> f64 {
    let d = a - b;
    if d.abs() > 1e-4 {
        (kernel.q_prime(a) - discrete_chain_quotient(a, b, kernel)) / d
    } else {
        // Half of Q'' at the midpoint.
        let h = 1e-5;
        let m = (0.5 * (a + b)).clamp(-1.0 + h, 1.0 - h);
        0.25 * (kernel.q_prime(m + h) - kernel.q_prime(m - h)) / h
    }
}

/// Discrete no-flux Laplacian of a cell field.
pub fn laplacian(phi: &[f64], mesh: &Mesh2D) -> Vec<f64> {
    let mut out = vec![0.0; phi.len()];
    for j in 0..mesh.ny {
        for i in 0..mesh.nx {
            let c = mesh.index(i, j);
            out[c] = mesh.neighbors(i, j).map(|(nb, w)| w * (phi[nb] - phi[c])).sum();
        }
    }
    out
}

/// `ψ⁰ = μ(φ⁰)/Q'_α(φ⁰)` with `μ = W'(φ)/ε - ε Δ_h φ`.
pub fn initial_psi(phi: &[f64], kernel: &KernelTable, cfg: &SolverConfig, mesh: &Mesh2D) -> Vec<f64> {
    let lap = laplacian(phi, mesh);
    phi.iter()
        .zip(&lap)
        .map(|(&p, &l)| {
            let p = p.clamp(-1.0, 1.0);
            let mu = w_prime(p) / cfg.epsilon - cfg.epsilon * l;
            mu / kernel.q_prime(p).max(cfg.alpha_qprime)
        })
        .collect()
}
