//! Conserved-mapping design and finite-volume simulation for degenerate
//! Cahn–Hilliard dynamics with a conserved quantity `Q(φ)`.

pub mod config;
pub mod diagnostics;
pub mod experiment;
pub mod fvsolver;
pub mod initial;
pub mod kernel;
pub mod moments;
pub mod quad;
pub mod table1;
