//! Simulation driver: runs a [`RunConfig`] to its end time and writes the
//! diagnostics CSV, the final fields and a run summary.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::diagnostics::{self, AuditVerdict, DiagnosticsError, DiagnosticsRecord, Tracker};
use crate::fvsolver::{Mesh2D, RunStats, SimState, SolverError, Stepper};
use crate::initial::init_field;
use crate::kernel::{build_kernel_with_nodes, KernelError};

/// Conservation tolerance per unit domain area, on top of the clipping budget.
pub const MASS_TOL_PER_AREA: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("solver failed at step {step} (t = {t}): {source}")]
    Solver { step: usize, t: f64, source: SolverError },
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl ExperimentError {
    pub fn is_config(&self) -> bool {
        matches!(self, Self::Config(_) | Self::Kernel(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub tag: String,
    pub kernel: String,
    pub initial: String,
    pub nx: usize,
    pub ny: usize,
    pub epsilon: f64,
    pub mobility_exponent: u32,
    pub end_time: f64,
    pub steps: usize,
    pub rejections: usize,
    pub avg_picard: f64,
    pub avg_gmres_per_picard: f64,
    pub initial_err_v: f64,
    pub final_err_v: f64,
    pub final_err_v_drift: f64,
    pub initial_energy: f64,
    pub min_energy: f64,
    pub final_energy: f64,
    pub clip_budget: f64,
    pub audit: AuditVerdict,
    pub wall_time_s: f64,
}

/// Everything a run produced. `records` holds one entry per accepted step
/// plus the initial state.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub mesh: Mesh2D,
    pub records: Vec<DiagnosticsRecord>,
    pub final_state: SimState,
    pub stats: RunStats,
    pub summary: RunSummary,
}

impl RunOutcome {
    /// Records written to the CSV: every `record_every`-th step, the initial
    /// state and the last step.
    pub fn csv_records(&self, record_every: usize) -> Vec<DiagnosticsRecord> {
        let last = self.records.len() - 1;
        self.records
            .iter()
            .enumerate()
            .filter(|(i, _)| i % record_every == 0 || *i == last)
            .map(|(_, r)| r.clone())
            .collect()
    }
}

/// Runs the simulation in memory.
pub fn simulate(cfg: &RunConfig) -> Result<RunOutcome, ExperimentError> {
    cfg.validate()?;
    let clock = Instant::now();
    let mesh = cfg.mesh()?;
    let solver_cfg = cfg.solver_config()?;
    let eps = solver_cfg.epsilon;
    let kernel = build_kernel_with_nodes(&cfg.kernel, cfg.table_nodes)?;
    let phi = init_field(&cfg.initial, eps, &mesh).map_err(ConfigError::from)?;
    let context = |state: &SimState, source: SolverError| ExperimentError::Solver {
        step: state.step_index + 1,
        t: state.t,
        source,
    };
    let mut stepper = Stepper::new(mesh, kernel.clone(), solver_cfg).map_err(ConfigError::from)?;
    let mobility_exponent = stepper.mobility_exponent();

    let mut tracker = Tracker::new(mesh, eps);
    let mut state = stepper.initial_state(phi);
    let mut records = vec![tracker.record(&state.phi, 0.0, &kernel, None)];
    let mut stats = RunStats::default();
    while state.t < cfg.end_time * (1.0 - 1e-12) {
        let (next, report) = stepper
            .step_adaptive(&state, cfg.end_time)
            .map_err(|e| context(&state, e))?;
        stats.record(&report);
        records.push(tracker.record(&next.phi, next.t, &kernel, Some(&report)));
        state = next;
    }

    let budget = MASS_TOL_PER_AREA * mesh.domain_area() + stats.clip_budget;
    let audit = diagnostics::audit_run(&records, budget)?;
    let first = &records[0];
    let last = records.last().expect("initial record present");
    let summary = RunSummary {
        tag: cfg.tag.clone(),
        kernel: cfg.kernel.display_label(),
        initial: cfg.initial.name().into(),
        nx: mesh.nx,
        ny: mesh.ny,
        epsilon: eps,
        mobility_exponent,
        end_time: cfg.end_time,
        steps: stats.steps,
        rejections: stats.rejections,
        avg_picard: stats.avg_picard(),
        avg_gmres_per_picard: stats.avg_gmres_per_picard(),
        initial_err_v: first.err_v,
        final_err_v: last.err_v,
        final_err_v_drift: last.err_v_drift,
        initial_energy: first.energy,
        min_energy: records.iter().map(|r| r.energy).fold(f64::INFINITY, f64::min),
        final_energy: last.energy,
        clip_budget: stats.clip_budget,
        audit,
        wall_time_s: clock.elapsed().as_secs_f64(),
    };
    Ok(RunOutcome {
        mesh,
        records,
        final_state: state,
        stats,
        summary,
    })
}

/// Output paths of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    pub csv: PathBuf,
    pub fields: PathBuf,
    pub summary: PathBuf,
}

impl Artifacts {
    pub fn for_config(cfg: &RunConfig) -> Self {
        let stem = |ext: &str| cfg.out_dir.join(format!("{}{ext}", cfg.tag));
        Self {
            csv: stem(".csv"),
            fields: stem(".vtk"),
            summary: stem("_summary.toml"),
        }
    }
}

/// Runs the simulation and writes its artifacts under `cfg.out_dir`.
pub fn run_experiment(cfg: &RunConfig) -> Result<(RunOutcome, Artifacts), ExperimentError> {
    let outcome = simulate(cfg)?;
    let paths = Artifacts::for_config(cfg);
    let io = |path: &Path| {
        let path = path.to_owned();
        move |source| ExperimentError::Io { path, source }
    };
    fs::create_dir_all(&cfg.out_dir).map_err(io(&cfg.out_dir))?;
    diagnostics::write_csv(&paths.csv, &outcome.csv_records(cfg.record_every))?;
    write_vtk(&paths.fields, &outcome.mesh, &outcome.final_state, &cfg.tag).map_err(io(&paths.fields))?;
    let text = toml::to_string(&outcome.summary).map_err(ConfigError::from)?;
    fs::write(&paths.summary, text).map_err(io(&paths.summary))?;
    Ok((outcome, paths))
}

/// Legacy-VTK structured-points file with cell data `phi` and `psi`.
pub fn write_vtk(path: &Path, mesh: &Mesh2D, state: &SimState, title: &str) -> std::io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{title} t={}", state.t)?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET STRUCTURED_POINTS")?;
    writeln!(w, "DIMENSIONS {} {} 1", mesh.nx + 1, mesh.ny + 1)?;
    writeln!(w, "ORIGIN {} {} 0", mesh.origin.0, mesh.origin.1)?;
    writeln!(w, "SPACING {} {} 1", mesh.dx, mesh.dy)?;
    writeln!(w, "CELL_DATA {}", mesh.cell_count())?;
    for (name, field) in [("phi", &state.phi), ("psi", &state.psi)] {
        writeln!(w, "SCALARS {name} double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for v in field.iter() {
            writeln!(w, "{v}")?;
        }
    }
    w.flush()
}

/// Runs independent configurations on up to `jobs` worker threads, one
/// simulation per worker at a time. Results keep the input order.
pub fn run_sweep<T, F>(cfgs: &[RunConfig], jobs: usize, run: F) -> Vec<Result<T, ExperimentError>>
where
    T: Send,
    F: Fn(&RunConfig) -> Result<T, ExperimentError> + Sync,
{
    let jobs = jobs.clamp(1, cfgs.len().max(1));
    if jobs == 1 {
        return cfgs.iter().map(&run).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<T, ExperimentError>>>> = Mutex::new((0..cfgs.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(cfg) = cfgs.get(i) else { break };
                let result = run(cfg);
                slots.lock().expect("no worker panicked")[i] = Some(result);
            });
        }
    });
    slots
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|r| r.expect("every slot filled"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Epsilon;
    use crate::initial::InitialCondition;
    use crate::kernel::KernelSpec;

    fn small(tag: &str, kernel: KernelSpec) -> RunConfig {
        let mut cfg = RunConfig::flower(tag, 24, 2.0, kernel, 2e-4);
        cfg.initial = InitialCondition::Disc {
            center: (0.5, 0.5),
            radius: 0.25,
        };
        cfg
    }

    #[test]
    fn mobility_pairing() {
        for (spec, ell) in [
            (KernelSpec::zhou(2), 3),
            (KernelSpec::zhou(8), 3),
            (KernelSpec::nmn(), 2),
            (KernelSpec::mass(), 2),
            (KernelSpec::exp_k2(-6.95), 2),
            (KernelSpec::pade(-0.3, 23.4), 2),
        ] {
            let mut cfg = small("m", spec);
            cfg.end_time = 1e-5;
            assert_eq!(simulate(&cfg).unwrap().summary.mobility_exponent, ell);
        }
    }

    #[test]
    fn writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small("disc", KernelSpec::nmn());
        cfg.out_dir = dir.path().to_owned();
        cfg.record_every = 3;
        let (outcome, paths) = run_experiment(&cfg).unwrap();
        assert!(outcome.summary.audit.pass);
        assert!(outcome.summary.steps > 0);
        let csv = diagnostics::read_csv(&paths.csv).unwrap();
        assert_eq!(csv.first(), outcome.records.first());
        assert_eq!(csv.last(), outcome.records.last());
        assert!(csv.len() <= outcome.records.len() / 3 + 2);
        let vtk = fs::read_to_string(&paths.fields).unwrap();
        assert!(vtk.contains("DIMENSIONS 25 25 1"));
        assert!(vtk.contains("SCALARS psi double 1"));
        assert_eq!(vtk.lines().count(), 8 + 2 * (2 + 24 * 24));
        let summary: RunSummary = toml::from_str(&fs::read_to_string(&paths.summary).unwrap()).unwrap();
        assert_eq!(summary.steps, outcome.summary.steps);
    }

    #[test]
    fn deterministic_csv() {
        let dir = tempfile::tempdir().unwrap();
        let mut texts = Vec::new();
        for sub in ["a", "b"] {
            let mut cfg = small("det", KernelSpec::exp_k1(-8.12));
            cfg.out_dir = dir.path().join(sub);
            let (_, paths) = run_experiment(&cfg).unwrap();
            texts.push(fs::read(&paths.csv).unwrap());
        }
        assert_eq!(texts[0], texts[1]);
    }

    #[test]
    fn config_errors_are_classified() {
        let mut cfg = small("bad", KernelSpec::nmn());
        cfg.epsilon = Epsilon::Cells(1.0);
        assert!(simulate(&cfg).unwrap_err().is_config());
    }

    #[test]
    fn solver_errors_carry_step() {
        let mut cfg = small("fail", KernelSpec::nmn());
        cfg.solver.picard_max = 1;
        cfg.solver.dt_min = 1e-6;
        cfg.solver.dt_initial = Some(1e-6);
        match simulate(&cfg) {
            Err(ExperimentError::Solver { step, t, .. }) => {
                assert_eq!(step, 1);
                assert_eq!(t, 0.0);
            }
            other => panic!("expected solver error, got {other:?}"),
        }
    }

    #[test]
    fn sweep_keeps_order() {
        let cfgs: Vec<_> = ["x", "y", "z"].iter().map(|t| small(t, KernelSpec::nmn())).collect();
        let tags = run_sweep(&cfgs, 2, |c| Ok(c.tag.clone()));
        let tags: Vec<_> = tags.into_iter().map(Result::unwrap).collect();
        assert_eq!(tags, ["x", "y", "z"]);
    }
}
