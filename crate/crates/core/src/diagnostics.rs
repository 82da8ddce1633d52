//! Volume, energy and conservation diagnostics of cell fields.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fvsolver::{Mesh2D, StepReport};
use crate::kernel::KernelTable;
use crate::moments::w;

/// Relative tolerance on energy increases between consecutive records.
pub const ENERGY_REL_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("audit needs at least 2 records, got {0}")]
    TooFewRecords(usize),
}

/// One row of the run diagnostics; field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub dt: f64,
    #[serde(rename = "VQ")]
    pub vq: f64,
    #[serde(rename = "Vgeom")]
    pub vgeom: f64,
    #[serde(rename = "ErrV")]
    pub err_v: f64,
    #[serde(rename = "ErrV_drift")]
    pub err_v_drift: f64,
    pub energy: f64,
    #[serde(rename = "Qmass")]
    pub q_mass: f64,
    pub picard_iters: usize,
    pub gmres_iters_avg: f64,
}

/// `½ Σ (1 + Q(φ_i)) |Ω_i|`.
pub fn q_volume(phi: &[f64], kernel: &KernelTable, mesh: &Mesh2D) -> f64 {
    0.5 * (mesh.domain_area() + q_mass(phi, kernel, mesh))
}

/// `Σ Q(φ_i) |Ω_i|`.
pub fn q_mass(phi: &[f64], kernel: &KernelTable, mesh: &Mesh2D) -> f64 {
    phi.iter().map(|&p| kernel.q(p)).sum::<f64>() * mesh.cell_volume()
}

/// Area of `{φ > 0}` by marching squares on the dual grid of cell centers.
///
/// The dual grid is closed at the domain boundary with nodes that copy the
/// adjacent cell value, so the dual cells tile the whole domain. Within each
/// dual cell the zero level set is the polygon through the linearly
/// interpolated edge crossings; ambiguous saddles are resolved by the mean of
/// the four corner values.
pub fn geometric_volume(phi: &[f64], mesh: &Mesh2D) -> f64 {
    let (nx, ny) = (mesh.nx, mesh.ny);
    let xs = dual_coords(nx, mesh.dx, mesh.origin.0);
    let ys = dual_coords(ny, mesh.dy, mesh.origin.1);
    let value = |a: usize, b: usize| {
        let i = a.saturating_sub(1).min(nx - 1);
        let j = b.saturating_sub(1).min(ny - 1);
        phi[mesh.index(i, j)]
    };
    let mut total = 0.0;
    for b in 0..=ny {
        for a in 0..=nx {
            let (x0, x1, y0, y1) = (xs[a], xs[a + 1], ys[b], ys[b + 1]);
            let v = [value(a, b), value(a + 1, b), value(a + 1, b + 1), value(a, b + 1)];
            let full = (x1 - x0) * (y1 - y0);
            let positive = v.iter().filter(|x| **x > 0.0).count();
            if positive == 4 {
                total += full;
            } else if positive > 0 {
                total += cell_positive_area(&[(x0, y0), (x1, y0), (x1, y1), (x0, y1)], &v);
            }
        }
    }
    total
}

fn dual_coords(n: usize, h: f64, origin: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 2);
    out.push(origin);
    out.extend((0..n).map(|i| origin + (i as f64 + 0.5) * h));
    out.push(origin + n as f64 * h);
    out
}

fn cell_positive_area(corners: &[(f64, f64); 4], v: &[f64; 4]) -> f64 {
    let mut poly: Vec<(f64, f64)> = Vec::with_capacity(8);
    let mut crossings: Vec<(f64, f64)> = Vec::with_capacity(4);
    for k in 0..4 {
        let (p, q) = (corners[k], corners[(k + 1) % 4]);
        let (a, b) = (v[k], v[(k + 1) % 4]);
        if a > 0.0 {
            poly.push(p);
        }
        if (a > 0.0) != (b > 0.0) {
            let s = a / (a - b);
            let x = (p.0 + s * (q.0 - p.0), p.1 + s * (q.1 - p.1));
            poly.push(x);
            crossings.push(x);
        }
    }
    let mut area = shoelace(&poly);
    let saddle = crossings.len() == 4 && (v[0] > 0.0) == (v[2] > 0.0);
    let center = 0.25 * (v[0] + v[1] + v[2] + v[3]);
    // Ties go to the phase of corner 0 so that φ and -φ stay complementary.
    let connected = center > 0.0 || (center == 0.0 && v[0] > 0.0);
    if saddle && !connected {
        // Positive corners are disconnected: drop the central quadrilateral.
        area -= shoelace(&crossings);
    }
    area
}

fn shoelace(poly: &[(f64, f64)]) -> f64 {
    let n = poly.len();
    let mut s = 0.0;
    for k in 0..n {
        let (x0, y0) = poly[k];
        let (x1, y1) = poly[(k + 1) % n];
        s += x0 * y1 - x1 * y0;
    }
    0.5 * s.abs()
}

/// `Σ W(φ_i)/ε |Ω_i| + (ε/2) Σ_faces ((φ_j - φ_i)/h)² dx dy` over interior
/// faces; boundary faces carry no gradient.
pub fn free_energy(phi: &[f64], epsilon: f64, mesh: &Mesh2D) -> f64 {
    let vol = mesh.cell_volume();
    let bulk: f64 = phi.iter().map(|&p| w(p)).sum::<f64>() * vol / epsilon;
    let mut grad = 0.0;
    for j in 0..mesh.ny {
        for i in 0..mesh.nx {
            let c = mesh.index(i, j);
            if i + 1 < mesh.nx {
                let d = (phi[c + 1] - phi[c]) / mesh.dx;
                grad += d * d;
            }
            if j + 1 < mesh.ny {
                let d = (phi[c + mesh.nx] - phi[c]) / mesh.dy;
                grad += d * d;
            }
        }
    }
    bulk + 0.5 * epsilon * grad * vol
}

/// Produces records along a run, remembering the initial volume error.
#[derive(Debug, Clone)]
pub struct Tracker {
    mesh: Mesh2D,
    epsilon: f64,
    err_v0: Option<f64>,
}

impl Tracker {
    pub fn new(mesh: Mesh2D, epsilon: f64) -> Self {
        Self {
            mesh,
            epsilon,
            err_v0: None,
        }
    }

    pub fn record(&mut self, phi: &[f64], t: f64, kernel: &KernelTable, step: Option<&StepReport>) -> DiagnosticsRecord {
        let vq = q_volume(phi, kernel, &self.mesh);
        let vgeom = geometric_volume(phi, &self.mesh);
        let err_v = vq - vgeom;
        let err_v0 = *self.err_v0.get_or_insert(err_v);
        DiagnosticsRecord {
            t,
            dt: step.map_or(0.0, |s| s.dt),
            vq,
            vgeom,
            err_v,
            err_v_drift: err_v - err_v0,
            energy: free_energy(phi, self.epsilon, &self.mesh),
            q_mass: q_mass(phi, kernel, &self.mesh),
            picard_iters: step.map_or(0, |s| s.picard_iters),
            gmres_iters_avg: step.map_or(0.0, |s| s.gmres_per_picard()),
        }
    }
}

/// Outcome of a conservation and energy audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditVerdict {
    pub pass: bool,
    pub budget: f64,
    pub max_mass_deviation: f64,
    /// Record index of the largest deviation from the initial `Qmass`.
    pub worst_mass_step: usize,
    /// Largest relative energy increase between consecutive records.
    pub max_energy_increase: f64,
    pub worst_energy_step: usize,
    pub failures: Vec<String>,
}

/// PASS iff `max |Qmass_n - Qmass_0| ≤ budget` and no energy increase
/// exceeds `ENERGY_REL_TOL · |E_0|`.
pub fn audit_run(records: &[DiagnosticsRecord], budget: f64) -> Result<AuditVerdict, DiagnosticsError> {
    if records.len() < 2 {
        return Err(DiagnosticsError::TooFewRecords(records.len()));
    }
    let m0 = records[0].q_mass;
    let e0 = records[0].energy.abs().max(f64::MIN_POSITIVE);
    let (mut max_dev, mut worst_mass) = (0.0f64, 0);
    let (mut max_inc, mut worst_energy) = (f64::NEG_INFINITY, 0);
    let mut failures = Vec::new();
    for (n, r) in records.iter().enumerate() {
        let dev = (r.q_mass - m0).abs();
        if dev > max_dev || !dev.is_finite() {
            max_dev = dev;
            worst_mass = n;
        }
        if dev > budget || !dev.is_finite() {
            failures.push(format!("step {n}: Q-mass deviation {dev:.3e} exceeds budget {budget:.3e}"));
        }
        if n > 0 {
            let inc = (r.energy - records[n - 1].energy) / e0;
            if inc > max_inc {
                max_inc = inc;
                worst_energy = n;
            }
            if inc > ENERGY_REL_TOL || !inc.is_finite() {
                failures.push(format!("step {n}: energy increased by {inc:.3e} (relative)"));
            }
        }
    }
    Ok(AuditVerdict {
        pass: failures.is_empty(),
        budget,
        max_mass_deviation: max_dev,
        worst_mass_step: worst_mass,
        max_energy_increase: max_inc,
        worst_energy_step: worst_energy,
        failures,
    })
}

pub fn write_csv(path: &Path, records: &[DiagnosticsRecord]) -> Result<(), DiagnosticsError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<DiagnosticsRecord>, DiagnosticsError> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{build_kernel, KernelSpec};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn field(mesh: &Mesh2D, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let mut out = vec![0.0; mesh.cell_count()];
        for j in 0..mesh.ny {
            for i in 0..mesh.nx {
                let (x, y) = mesh.cell_center(i, j);
                out[mesh.index(i, j)] = f(x, y);
            }
        }
        out
    }

    fn disc(n: usize, r: f64) -> (Mesh2D, Vec<f64>) {
        let mesh = Mesh2D::unit_square(n).unwrap();
        let eps = 2.0 / n as f64;
        let phi = field(&mesh, |x, y| ((r - ((x - 0.5).powi(2) + (y - 0.5).powi(2)).sqrt()) / eps).clamp(-1.0, 1.0));
        (mesh, phi)
    }

    #[test]
    fn q_volume_examples() {
        let mesh = Mesh2D::unit_square(10).unwrap();
        let k = build_kernel(&KernelSpec::exp_k1(-8.12)).unwrap();
        for (v, expected) in [(1.0, 1.0), (-1.0, 0.0), (0.0, 0.5)] {
            let phi = vec![v; mesh.cell_count()];
            assert!((q_volume(&phi, &k, &mesh) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn mass_kernel_volume_is_linear() {
        let mesh = Mesh2D::unit_square(10).unwrap();
        let k = build_kernel(&KernelSpec::mass()).unwrap();
        let phi = field(&mesh, |x, y| (x - y).sin());
        let direct = 0.5 * (1.0 + phi.iter().sum::<f64>() * mesh.cell_volume());
        assert_eq!(q_volume(&phi, &k, &mesh), direct);
    }

    #[test]
    fn geometric_volume_examples() {
        let mesh = Mesh2D::from_extents(40, 10, 2.0, 0.5, (0.0, 0.0)).unwrap();
        assert!((geometric_volume(&vec![1.0; mesh.cell_count()], &mesh) - 1.0).abs() < 1e-14);
        assert_eq!(geometric_volume(&vec![-1.0; mesh.cell_count()], &mesh), 0.0);
        // Linear profile through x_c = 0.8125, inside a cell.
        let xc = 0.8125;
        let phi = field(&mesh, |x, _| xc - x);
        assert!((geometric_volume(&phi, &mesh) - xc * 0.5).abs() < 1e-12);
    }

    #[test]
    fn disc_area() {
        // Inscribed chords of length ~dx lose about πdx²/6 on any disc, and
        // linear crossings add a bias of the same sign.
        let (mesh, phi) = disc(100, 0.15);
        let err = geometric_volume(&phi, &mesh) - PI * 0.15 * 0.15;
        assert!(err < 0.0 && err.abs() < PI * 1e-4 / 4.0, "{err}");
    }

    #[test]
    fn disc_area_converges_second_order() {
        let pts: Vec<(f64, f64)> = [50, 100, 200]
            .iter()
            .map(|&n| {
                let (mesh, phi) = disc(n, 0.15);
                let err = (geometric_volume(&phi, &mesh) - PI * 0.15 * 0.15).abs();
                ((1.0 / n as f64).ln(), err.ln())
            })
            .collect();
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / 3.0;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / 3.0;
        let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        assert!(slope >= 1.8, "{slope}");
    }

    #[test]
    fn saddle_resolution() {
        let mesh = Mesh2D::unit_square(3).unwrap();
        // Checkerboard: positive corners at two diagonal cells.
        let mut phi = vec![-1.0; 9];
        phi[mesh.index(0, 0)] = 1.0;
        phi[mesh.index(1, 1)] = 1.0;
        let a = geometric_volume(&phi, &mesh);
        let neg: Vec<f64> = phi.iter().map(|p| -p).collect();
        let b = geometric_volume(&neg, &mesh);
        assert!((a + b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn energy_examples() {
        let mesh = Mesh2D::unit_square(10).unwrap();
        assert_eq!(free_energy(&vec![1.0; 100], 0.1, &mesh), 0.0);
        assert!((free_energy(&vec![0.0; 100], 0.1, &mesh) - 1.0 / (4.0 * 0.1)).abs() < 1e-12);
    }

    #[test]
    fn planar_profile_energy_per_length() {
        // Interface along y across a 4 x 0.25 box, ε = 4 dx.
        let mesh = Mesh2D::from_extents(800, 50, 4.0, 0.25, (0.0, 0.0)).unwrap();
        let eps = 4.0 * mesh.dx;
        let phi = field(&mesh, |x, _| ((x - 2.0) / (eps * std::f64::consts::SQRT_2)).tanh());
        let per_length = free_energy(&phi, eps, &mesh) / mesh.ly();
        // 1D quadrature of the exact profile energy density.
        let oracle = crate::quad::integrate_adaptive(
            |z| {
                let s = crate::moments::sigma(z);
                w(s) + 0.5 * crate::moments::sigma_prime(z).powi(2)
            },
            -30.0,
            30.0,
            1e-13,
            1e-13,
        )
        .unwrap();
        assert!((oracle - 2.0 * 2f64.sqrt() / 3.0).abs() < 1e-10);
        assert!(((per_length - oracle) / oracle).abs() < 0.02, "{per_length} vs {oracle}");
    }

    fn rec(q_mass: f64, energy: f64) -> DiagnosticsRecord {
        DiagnosticsRecord {
            t: 0.0,
            dt: 0.0,
            vq: 0.0,
            vgeom: 0.0,
            err_v: 0.0,
            err_v_drift: 0.0,
            energy,
            q_mass,
            picard_iters: 1,
            gmres_iters_avg: 1.0,
        }
    }

    #[test]
    fn audit_examples() {
        let flat: Vec<_> = (0..5).map(|_| rec(0.3, 1.0)).collect();
        let v = audit_run(&flat, 1e-7).unwrap();
        assert!(v.pass);
        assert_eq!(v.max_mass_deviation, 0.0);

        let mut spiked = flat.clone();
        spiked[3].q_mass += 1e-5;
        let v = audit_run(&spiked, 1e-7).unwrap();
        assert!(!v.pass);
        assert_eq!(v.worst_mass_step, 3);
        assert!(v.failures[0].contains("step 3"));

        let mut rising = flat.clone();
        rising[2].energy = 1.0 + 1e-6;
        let v = audit_run(&rising, 1e-7).unwrap();
        assert!(!v.pass);
        assert_eq!(v.worst_energy_step, 2);

        assert!(audit_run(&flat[..1], 1e-7).is_err());
    }

    #[test]
    fn csv_round_trip_and_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.csv");
        let records = vec![rec(0.1, 2.0), rec(0.1, 1.5)];
        write_csv(&path, &records).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "t,dt,VQ,Vgeom,ErrV,ErrV_drift,energy,Qmass,picard_iters,gmres_iters_avg"
        );
        assert_eq!(read_csv(&path).unwrap(), records);
    }

    proptest! {
        #[test]
        fn reconstruction_partitions_domain(values in proptest::collection::vec(-1.0f64..1.0, 30)) {
            let mesh = Mesh2D::from_extents(6, 5, 1.2, 1.0, (0.3, -0.2)).unwrap();
            let neg: Vec<f64> = values.iter().map(|p| -p).collect();
            let total = geometric_volume(&values, &mesh) + geometric_volume(&neg, &mesh);
            prop_assert!((total - mesh.domain_area()).abs() < 1e-12);
        }
    }
}
