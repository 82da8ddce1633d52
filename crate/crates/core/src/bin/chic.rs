use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use chic_core::config::RunConfig;
use chic_core::diagnostics::{audit_run, read_csv};
use chic_core::experiment::{run_experiment, run_sweep, ExperimentError, MASS_TOL_PER_AREA};
use chic_core::kernel::{build_kernel_with_nodes, FreeParameter, KernelSpec, DEFAULT_KERNEL_TABLE_NODES};
use chic_core::moments::{compute_phi1, compute_report, tune_kernel};
use chic_core::table1::{self, parse_kernel, RowResult};

const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_AUDIT: u8 = 4;

#[derive(Parser)]
#[command(name = "chic", about = "Conserved-mapping kernel design and phase-field simulation")]
struct Cli {
    /// Output directory (overrides `out_dir` of run configs).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Kernel table resolution.
    #[arg(long, global = true)]
    seed_table: Option<usize>,
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Tune a kernel family to moment balance and print the spec.
    Design {
        /// exp-k2, exp-k1, rational or pade.
        family: String,
        /// Search bracket for the free parameter.
        #[arg(long, num_args = 2, allow_negative_numbers = true)]
        bracket: Option<Vec<f64>>,
        /// Fixed quartic coefficient of the Pade family.
        #[arg(long, allow_negative_numbers = true)]
        p: Option<f64>,
    },
    /// Print the moment report of a kernel.
    Moments { kernel: String },
    /// Write the first profile correction as CSV.
    Profile {
        kernel: String,
        #[arg(long, default_value_t = 20.0)]
        z_max: f64,
        #[arg(long, default_value_t = 2001)]
        points: usize,
    },
    /// Recompute the kernel summary table against the reference values.
    Table1,
    /// Run simulations; several configs run as a sweep.
    Run {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        /// Worker threads for sweeps.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Conservation and energy audit of a diagnostics CSV.
    Audit {
        csv: PathBuf,
        /// Clipping budget added to the conservation tolerance.
        #[arg(long, default_value_t = 0.0)]
        clip_budget: f64,
    },
}

enum Failure {
    Config(String),
    Solver(String),
    Audit(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Self::Config(_) => EXIT_CONFIG,
            Self::Solver(_) => EXIT_SOLVER,
            Self::Audit(_) => EXIT_AUDIT,
        }
    }

    fn message(&self) -> &str {
        match self {
            Self::Config(m) | Self::Solver(m) | Self::Audit(m) => m,
        }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        if e.is_config() {
            Self::Config(e.to_string())
        } else {
            Self::Solver(e.to_string())
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> Failure {
    Failure::Config(e.to_string())
}

fn solver_err(e: impl std::fmt::Display) -> Failure {
    Failure::Solver(e.to_string())
}

struct Ctx {
    out: Option<PathBuf>,
    nodes: usize,
    quiet: bool,
}

impl Ctx {
    fn say(&self, text: &str) {
        if !self.quiet {
            println!("{text}");
        }
    }

    fn write_or_print(&self, name: &str, text: &str) -> Result<(), Failure> {
        match &self.out {
            Some(dir) => {
                std::fs::create_dir_all(dir).map_err(solver_err)?;
                let path = dir.join(name);
                std::fs::write(&path, text).map_err(solver_err)?;
                self.say(&format!("wrote {}", path.display()));
            }
            None => {
                let _ = std::io::stdout().write_all(text.as_bytes());
            }
        }
        Ok(())
    }
}

fn toml_block<T: Serialize>(key: &str, value: &T) -> Result<String, Failure> {
    #[derive(Serialize)]
    struct Wrap<'a, T> {
        #[serde(flatten)]
        inner: std::collections::BTreeMap<&'a str, &'a T>,
    }
    let inner = [(key, value)].into_iter().collect();
    toml::to_string(&Wrap { inner }).map_err(solver_err)
}

fn design(ctx: &Ctx, family: &str, bracket: Option<Vec<f64>>, p: Option<f64>) -> Result<(), Failure> {
    let entry = table1::tunable(family)
        .ok_or_else(|| Failure::Config(format!("{family:?} is not tunable (use exp-k2, exp-k1, rational, pade)")))?;
    let (free, default_bracket) = entry.tuning.expect("tunable entry");
    let mut template = entry.spec.clone();
    if let Some(p) = p {
        template = template.with_parameter(FreeParameter::P, p).map_err(config_err)?;
    }
    let bracket = bracket.map_or(default_bracket, |b| (b[0], b[1]));
    let (spec, report) = tune_kernel(&template, free, bracket).map_err(solver_err)?;
    let mut text = toml_block("kernel", &spec)?;
    text.push('\n');
    text.push_str(&toml_block("moments", &report)?);
    ctx.write_or_print(&format!("design_{family}.toml"), &text)
}

fn kernel_arg(name: &str) -> Result<KernelSpec, Failure> {
    parse_kernel(name).map_err(config_err)
}

fn moments(ctx: &Ctx, name: &str) -> Result<(), Failure> {
    let spec = kernel_arg(name)?;
    let kernel = build_kernel_with_nodes(&spec, ctx.nodes).map_err(config_err)?;
    let report = compute_report(&kernel).map_err(solver_err)?;
    ctx.write_or_print(&format!("moments_{name}.toml"), &toml_block("moments", &report)?)
}

fn profile(ctx: &Ctx, name: &str, z_max: f64, points: usize) -> Result<(), Failure> {
    let spec = kernel_arg(name)?;
    let kernel = build_kernel_with_nodes(&spec, ctx.nodes).map_err(config_err)?;
    let p = compute_phi1(&kernel, z_max, points).map_err(config_err)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| solver_err(e);
    w.write_record(["z", "sigma", "phi1"]).map_err(io)?;
    for i in 0..p.z_grid.len() {
        w.write_record([p.z_grid[i].to_string(), p.sigma[i].to_string(), p.phi1[i].to_string()])
            .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| solver_err(e.error()))?;
    ctx.write_or_print(&format!("profile_{name}.csv"), &String::from_utf8_lossy(&bytes))
}

fn table(ctx: &Ctx) -> Result<(), Failure> {
    let rows = table1::regenerate_table1(ctx.nodes);
    let text = table1::render_table1(&rows);
    ctx.write_or_print("table1.txt", &text)?;
    let failed: Vec<String> = rows
        .iter()
        .filter_map(|r| match r {
            RowResult::Ok(r) if r.pass => None,
            RowResult::Ok(r) => Some(r.name.clone()),
            RowResult::Failed { name, .. } => Some(name.clone()),
        })
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Audit(format!("rows outside tolerance: {}", failed.join(", "))))
    }
}

fn load_config(ctx: &Ctx, path: &Path) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::load(path).map_err(config_err)?;
    if let Some(dir) = &ctx.out {
        cfg.out_dir = dir.clone();
    }
    if let Some(n) = ctx.nodes_override() {
        cfg.table_nodes = n;
    }
    Ok(cfg)
}

impl Ctx {
    fn nodes_override(&self) -> Option<usize> {
        (self.nodes != DEFAULT_KERNEL_TABLE_NODES).then_some(self.nodes)
    }
}

fn run(ctx: &Ctx, paths: &[PathBuf], jobs: usize) -> Result<(), Failure> {
    let cfgs = paths.iter().map(|p| load_config(ctx, p)).collect::<Result<Vec<_>, _>>()?;
    let results = run_sweep(&cfgs, jobs, run_experiment);
    let mut worst: Option<Failure> = None;
    for (cfg, result) in cfgs.iter().zip(results) {
        let failure = match result {
            Ok((outcome, paths)) => {
                let s = &outcome.summary;
                ctx.say(&format!(
                    "{}: {} steps, drift {:.3e}, max mass dev {:.3e}, audit {} -> {}",
                    s.tag,
                    s.steps,
                    s.final_err_v_drift,
                    s.audit.max_mass_deviation,
                    if s.audit.pass { "pass" } else { "FAIL" },
                    paths.csv.display()
                ));
                (!s.audit.pass).then(|| Failure::Audit(format!("{}: {}", cfg.tag, s.audit.failures.join("; "))))
            }
            Err(e) => Some(Failure::from(e)),
        };
        if let Some(f) = failure {
            eprintln!("{}: {}", cfg.tag, f.message());
            if worst.as_ref().map_or(true, |w| f.code() < w.code()) {
                worst = Some(f);
            }
        }
    }
    worst.map_or(Ok(()), Err)
}

fn audit(ctx: &Ctx, path: &Path, clip_budget: f64) -> Result<(), Failure> {
    let records = read_csv(path).map_err(config_err)?;
    let first = records.first().ok_or_else(|| Failure::Config("empty CSV".into()))?;
    // VQ = (|Ω| + Qmass)/2.
    let area = 2.0 * first.vq - first.q_mass;
    let verdict = audit_run(&records, MASS_TOL_PER_AREA * area + clip_budget).map_err(config_err)?;
    ctx.say(&toml_block("audit", &verdict)?);
    if verdict.pass {
        Ok(())
    } else {
        Err(Failure::Audit(verdict.failures.join("; ")))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ctx = Ctx {
        out: cli.out,
        nodes: cli.seed_table.unwrap_or(DEFAULT_KERNEL_TABLE_NODES),
        quiet: cli.quiet,
    };
    let result = match cli.cmd {
        Cmd::Design { family, bracket, p } => design(&ctx, &family, bracket, p),
        Cmd::Moments { kernel } => moments(&ctx, &kernel),
        Cmd::Profile { kernel, z_max, points } => profile(&ctx, &kernel, z_max, points),
        Cmd::Table1 => table(&ctx),
        Cmd::Run { configs, jobs } => run(&ctx, &configs, jobs),
        Cmd::Audit { csv, clip_budget } => audit(&ctx, &csv, clip_budget),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
