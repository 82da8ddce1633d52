//! Run configuration, read from and written to TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fvsolver::{Mesh2D, SolverConfig, SolverError};
use crate::initial::{InitialCondition, InitialError};
use crate::kernel::{KernelError, KernelSpec, DEFAULT_KERNEL_TABLE_NODES};

/// Smallest admissible `ε / dx`.
pub const MIN_EPS_CELLS: f64 = 1.5;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot parse {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("cannot render config: {0}")]
    Render(#[from] toml::ser::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Mesh(#[from] SolverError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Initial(#[from] InitialError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSpec {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    #[serde(default)]
    pub origin: (f64, f64),
}

impl MeshSpec {
    pub fn square(n: usize) -> Self {
        Self {
            nx: n,
            ny: n,
            lx: 1.0,
            ly: 1.0,
            origin: (0.0, 0.0),
        }
    }

    pub fn build(&self) -> Result<Mesh2D, SolverError> {
        let mesh = Mesh2D::from_extents(self.nx, self.ny, self.lx, self.ly, self.origin)?;
        mesh.require_square_cells()?;
        Ok(mesh)
    }
}

/// Interface width, absolute or in cell widths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Epsilon {
    Cells(f64),
    Absolute(f64),
}

impl Epsilon {
    pub fn resolve(&self, dx: f64) -> f64 {
        match *self {
            Self::Cells(c) => c * dx,
            Self::Absolute(e) => e,
        }
    }
}

fn default_record_every() -> usize {
    1
}

fn default_table_nodes() -> usize {
    DEFAULT_KERNEL_TABLE_NODES
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub tag: String,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    pub end_time: f64,
    /// Every n-th accepted step goes to the CSV; the last one always does.
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default = "default_table_nodes")]
    pub table_nodes: usize,
    pub mesh: MeshSpec,
    pub epsilon: Epsilon,
    pub kernel: KernelSpec,
    pub initial: InitialCondition,
    #[serde(default)]
    pub solver: SolverConfig,
}

impl RunConfig {
    /// Flower on the unit square with `ε = eps_cells·dx`.
    pub fn flower(tag: impl Into<String>, n: usize, eps_cells: f64, kernel: KernelSpec, end_time: f64) -> Self {
        Self {
            tag: tag.into(),
            out_dir: default_out_dir(),
            end_time,
            record_every: 1,
            table_nodes: DEFAULT_KERNEL_TABLE_NODES,
            mesh: MeshSpec::square(n),
            epsilon: Epsilon::Cells(eps_cells),
            kernel,
            initial: InitialCondition::flower(),
            solver: SolverConfig::default(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_owned(),
            source,
        })?;
        let cfg: Self = toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_owned(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: PathBuf::from("<string>"),
            source,
        })
    }

    pub fn render(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    pub fn mesh(&self) -> Result<Mesh2D, ConfigError> {
        Ok(self.mesh.build()?)
    }

    pub fn resolved_epsilon(&self) -> Result<f64, ConfigError> {
        Ok(self.epsilon.resolve(self.mesh()?.dx))
    }

    /// Solver settings with `epsilon` filled in.
    pub fn solver_config(&self) -> Result<SolverConfig, ConfigError> {
        Ok(SolverConfig {
            epsilon: self.resolved_epsilon()?,
            ..self.solver.clone()
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.tag.is_empty() || self.tag.contains(['/', '\\']) {
            return Err(ConfigError::Invalid(format!("tag {:?} is not a file stem", self.tag)));
        }
        if !(self.end_time > 0.0) || !self.end_time.is_finite() {
            return Err(ConfigError::Invalid(format!("end_time must be positive, got {}", self.end_time)));
        }
        if self.record_every == 0 {
            return Err(ConfigError::Invalid("record_every must be at least 1".into()));
        }
        if self.table_nodes < 16 {
            return Err(ConfigError::Invalid(format!("table_nodes must be at least 16, got {}", self.table_nodes)));
        }
        let mesh = self.mesh()?;
        let eps = self.epsilon.resolve(mesh.dx);
        if !(eps >= MIN_EPS_CELLS * mesh.dx * (1.0 - 1e-12)) || !eps.is_finite() {
            return Err(ConfigError::Invalid(format!(
                "epsilon = {eps} is below {MIN_EPS_CELLS} dx = {}",
                MIN_EPS_CELLS * mesh.dx
            )));
        }
        self.kernel.validate()?;
        self.solver_config()?.validate()?;
        self.initial.validate(eps, &mesh)?;
        Ok(())
    }
}
