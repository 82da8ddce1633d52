use crate::kernel::KernelTable;

use super::assembly::BlockSystem;
use super::gmres::Gmres;
use super::sparse::Ilu;
use super::{Mesh2D, SimState, SolverConfig, SolverError};

/// Statistics of one accepted step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub dt: f64,
    pub picard_iters: usize,
    pub gmres_iters: usize,
    /// Picard residual after each iterate.
    pub residuals: Vec<f64>,
    /// `Σ Q̄(φᵏ)(clip(φ) - φ)|Ω_i|` of the accepted iterate.
    pub clip_delta: f64,
    /// Steps rejected before this one was accepted.
    pub rejections: usize,
}

impl StepReport {
    pub fn gmres_per_picard(&self) -> f64 {
        self.gmres_iters as f64 / self.picard_iters.max(1) as f64
    }
}

/// Totals over a sequence of steps.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunStats {
    pub steps: usize,
    pub rejections: usize,
    pub picard_iters: usize,
    pub gmres_iters: usize,
    pub clip_budget: f64,
    pub dt_sum: f64,
}

impl RunStats {
    pub fn record(&mut self, r: &StepReport) {
        self.steps += 1;
        self.rejections += r.rejections;
        self.picard_iters += r.picard_iters;
        self.gmres_iters += r.gmres_iters;
        self.clip_budget += r.clip_delta.abs();
        self.dt_sum += r.dt;
    }

    pub fn avg_picard(&self) -> f64 {
        self.picard_iters as f64 / self.steps.max(1) as f64
    }

    pub fn avg_gmres_per_picard(&self) -> f64 {
        self.gmres_iters as f64 / self.picard_iters.max(1) as f64
    }

    pub fn avg_dt(&self) -> f64 {
        self.dt_sum / self.steps.max(1) as f64
    }
}

/// `dt · clamp(target/iters, 0.7, 1.3)`, clamped to `[dt_min, dt_max]`.
pub fn adapt_dt(dt: f64, picard_iters: usize, cfg: &SolverConfig) -> f64 {
    let ratio = (cfg.target_picard as f64 / picard_iters.max(1) as f64).clamp(0.7, 1.3);
    (dt * ratio).clamp(cfg.dt_min, cfg.dt_max)
}

/// Step size after a rejection: `max(dt/2, dt_min)`; fails when `dt` is
/// already at the lower bound.
pub fn reject_dt(dt: f64, t: f64, cfg: &SolverConfig) -> Result<f64, SolverError> {
    if dt <= cfg.dt_min {
        return Err(SolverError::TimeStepUnderflow { t, dt });
    }
    Ok((0.5 * dt).max(cfg.dt_min))
}

/// Owns the per-mesh workspaces and advances states.
pub struct Stepper {
    mesh: Mesh2D,
    kernel: KernelTable,
    cfg: SolverConfig,
    mobility_exponent: u32,
    system: BlockSystem,
    ilu: Option<Ilu>,
    gmres: Gmres,
    x: Vec<f64>,
}

impl Stepper {
    pub fn new(mesh: Mesh2D, kernel: KernelTable, cfg: SolverConfig) -> Result<Self, SolverError> {
        cfg.validate()?;
        let mobility_exponent = cfg.mobility_for(kernel.spec());
        let n = mesh.cell_count();
        Ok(Self {
            system: BlockSystem::new(&mesh),
            gmres: Gmres::new(2 * n, cfg.gmres_restart),
            x: vec![0.0; 2 * n],
            ilu: None,
            mesh,
            kernel,
            cfg,
            mobility_exponent,
        })
    }

    pub fn mesh(&self) -> &Mesh2D {
        &self.mesh
    }

    pub fn kernel(&self) -> &KernelTable {
        &self.kernel
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn mobility_exponent(&self) -> u32 {
        self.mobility_exponent
    }

    /// State at `t = 0` with `ψ⁰` from the chemical potential of `phi`.
    pub fn initial_state(&self, phi: Vec<f64>) -> SimState {
        let psi = super::initial_psi(&phi, &self.kernel, &self.cfg, &self.mesh);
        SimState::new(phi, psi, self.cfg.initial_dt())
    }

    /// One Picard-converged step of size `dt` from `state`. The input state
    /// is left untouched; on failure nothing is committed.
    pub fn advance_step(&mut self, state: &SimState, dt: f64) -> Result<(SimState, StepReport), SolverError> {
        let n = self.mesh.cell_count();
        let volume = self.mesh.cell_volume();
        let area = self.mesh.domain_area();
        let mut phi_k = state.phi.clone();
        for c in 0..n {
            self.x[2 * c] = state.phi[c];
            self.x[2 * c + 1] = state.psi[c];
        }
        let mut residuals = Vec::new();
        let mut gmres_iters = 0;
        let mut psi_k = state.psi.clone();
        for iter in 1..=self.cfg.picard_max {
            self.system
                .assemble(&state.phi, &phi_k, &psi_k, dt, &self.kernel, &self.cfg, self.mobility_exponent)?;
            match &mut self.ilu {
                Some(ilu) => ilu.refactor(&self.system.matrix)?,
                None => self.ilu = Some(Ilu::factor(&self.system.matrix, self.cfg.ilu_fill)?),
            }
            let ilu = self.ilu.as_ref().expect("factorization present");
            let stats = self.gmres.solve(
                &self.system.matrix,
                ilu,
                &self.system.rhs,
                &mut self.x,
                self.cfg.gmres_rel_tol,
                self.cfg.gmres_max_iters,
            )?;
            gmres_iters += stats.iterations;
            let mut change = 0.0;
            let mut clip_delta = 0.0;
            for c in 0..n {
                let raw = self.x[2 * c];
                if !raw.is_finite() {
                    return Err(SolverError::NonFiniteCoefficient { cell: c, what: "phi" });
                }
                let new = if self.cfg.enforce_bounds { raw.clamp(-1.0, 1.0) } else { raw };
                if new != raw {
                    clip_delta += self.kernel.qbar(phi_k[c]) * (new - raw) * volume;
                    self.x[2 * c] = new;
                }
                change += (new - phi_k[c]).abs() * volume;
                phi_k[c] = new;
                psi_k[c] = self.x[2 * c + 1];
            }
            let r = change / area;
            residuals.push(r);
            if r < self.cfg.picard_tol {
                let psi = self.x.iter().skip(1).step_by(2).copied().collect();
                let next = SimState {
                    phi: phi_k,
                    psi,
                    t: state.t + dt,
                    dt: state.dt,
                    step_index: state.step_index + 1,
                };
                let report = StepReport {
                    dt,
                    picard_iters: iter,
                    gmres_iters,
                    residuals,
                    clip_delta,
                    rejections: 0,
                };
                return Ok((next, report));
            }
        }
        Err(SolverError::PicardNotConverged {
            iterations: self.cfg.picard_max,
            residual: residuals.last().copied().unwrap_or(f64::NAN),
        })
    }

    /// Advances with adaptive steps, retrying rejected steps with halved
    /// `dt`, and never stepping past `t_end`.
    pub fn step_adaptive(&mut self, state: &SimState, t_end: f64) -> Result<(SimState, StepReport), SolverError> {
        let mut dt = state.dt.clamp(self.cfg.dt_min, self.cfg.dt_max);
        let mut rejections = 0;
        loop {
            let remaining = t_end - state.t;
            let shortened = remaining < dt;
            let dt_try = if shortened { remaining } else { dt };
            match self.advance_step(state, dt_try) {
                Ok((mut next, mut report)) => {
                    report.rejections = rejections;
                    if shortened {
                        next.t = t_end;
                        next.dt = adapt_dt(dt, report.picard_iters, &self.cfg);
                    } else {
                        next.dt = adapt_dt(dt_try, report.picard_iters, &self.cfg);
                    }
                    return Ok((next, report));
                }
                Err(e) if e.is_recoverable() => {
                    dt = reject_dt(dt_try, state.t, &self.cfg)?;
                    rejections += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// Runs to `t_end`, calling `observer` after every accepted step.
    pub fn run_until<F>(&mut self, mut state: SimState, t_end: f64, mut observer: F) -> Result<(SimState, RunStats), SolverError>
    where
        F: FnMut(&SimState, &StepReport),
    {
        let mut stats = RunStats::default();
        while state.t < t_end * (1.0 - 1e-12) {
            let (next, report) = self.step_adaptive(&state, t_end)?;
            stats.record(&report);
            observer(&next, &report);
            state = next;
        }
        Ok((state, stats))
    }
}
