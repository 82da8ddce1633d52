//! Initial phase fields from signed distances, `φ = clip(d/ε, -1, 1)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fvsolver::Mesh2D;

/// Samples of the flower boundary polyline.
pub const FLOWER_SAMPLES: usize = 4096;
/// Required clearance between shapes and the domain boundary, in units of ε.
pub const MARGIN_EPS: f64 = 3.0;

#[derive(Debug, Error, PartialEq)]
pub enum InitialError {
    #[error("{shape} does not fit in the domain with margin {margin}")]
    OutsideDomain { shape: String, margin: f64 },
    #[error("invalid initial condition: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Droplet {
    pub center: (f64, f64),
    pub radius: f64,
}

/// Composite shapes are unions: the signed distance is the maximum over
/// the parts, positive inside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    Droplets {
        droplets: Vec<Droplet>,
    },
    /// Polar curve `r(θ) = r0 + a cos(mθ)` around `center`.
    Flower {
        #[serde(default = "flower_center")]
        center: (f64, f64),
        #[serde(default = "flower_r0")]
        r0: f64,
        #[serde(default = "flower_amplitude")]
        amplitude: f64,
        #[serde(default = "flower_petals")]
        petals: u32,
    },
    /// Vertical interface at `x = position`, positive phase on the left.
    PlanarInterface {
        position: f64,
    },
    Disc {
        center: (f64, f64),
        radius: f64,
    },
    Uniform {
        value: f64,
    },
}

fn flower_center() -> (f64, f64) {
    (0.5, 0.5)
}
fn flower_r0() -> f64 {
    0.25
}
fn flower_amplitude() -> f64 {
    0.08
}
fn flower_petals() -> u32 {
    6
}

impl InitialCondition {
    /// Six-petaled flower on the unit square.
    pub fn flower() -> Self {
        Self::Flower {
            center: flower_center(),
            r0: flower_r0(),
            amplitude: flower_amplitude(),
            petals: flower_petals(),
        }
    }

    /// Four droplets of radii 0.15, 0.10, 0.06, 0.03 along `y = 0.5` of `[0,4]×[0,1]`.
    pub fn four_droplets() -> Self {
        let parts = [(0.55, 0.15), (1.45, 0.10), (2.25, 0.06), (2.95, 0.03)];
        Self::Droplets {
            droplets: parts
                .iter()
                .map(|&(x, r)| Droplet {
                    center: (x, 0.5),
                    radius: r,
                })
                .collect(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Droplets { .. } => "droplets",
            Self::Flower { .. } => "flower",
            Self::PlanarInterface { .. } => "planar_interface",
            Self::Disc { .. } => "disc",
            Self::Uniform { .. } => "uniform",
        }
    }

    /// Checks parameters and the clearance to the domain boundary.
    pub fn validate(&self, epsilon: f64, mesh: &Mesh2D) -> Result<(), InitialError> {
        let margin = MARGIN_EPS * epsilon;
        let (x0, y0) = mesh.origin;
        let (x1, y1) = (x0 + mesh.lx(), y0 + mesh.ly());
        let fits = |c: (f64, f64), r: f64| c.0 - r >= x0 + margin && c.0 + r <= x1 - margin && c.1 - r >= y0 + margin && c.1 + r <= y1 - margin;
        let outside = |shape: &str| InitialError::OutsideDomain {
            shape: shape.to_string(),
            margin,
        };
        match self {
            Self::Droplets { droplets } => {
                if droplets.is_empty() {
                    return Err(InitialError::Invalid("no droplets".into()));
                }
                for (n, d) in droplets.iter().enumerate() {
                    if !(d.radius > 0.0) {
                        return Err(InitialError::Invalid(format!("droplet {n} has radius {}", d.radius)));
                    }
                    if !fits(d.center, d.radius) {
                        return Err(outside(&format!("droplet {n}")));
                    }
                }
            }
            Self::Flower {
                center,
                r0,
                amplitude,
                petals,
            } => {
                if !(*r0 > 0.0 && amplitude.abs() < *r0 && *petals >= 1) {
                    return Err(InitialError::Invalid(format!(
                        "flower needs r0 > |a| and petals >= 1, got r0 = {r0}, a = {amplitude}, m = {petals}"
                    )));
                }
                if !fits(*center, r0 + amplitude.abs()) {
                    return Err(outside("flower"));
                }
            }
            Self::PlanarInterface { position } => {
                if !(*position >= x0 + margin && *position <= x1 - margin) {
                    return Err(outside("planar interface"));
                }
            }
            Self::Disc { center, radius } => {
                if !(*radius > 0.0) {
                    return Err(InitialError::Invalid(format!("disc radius {radius}")));
                }
                if !fits(*center, *radius) {
                    return Err(outside("disc"));
                }
            }
            Self::Uniform { value } => {
                if !(-1.0..=1.0).contains(value) {
                    return Err(InitialError::Invalid(format!("uniform value {value} outside [-1, 1]")));
                }
            }
        }
        Ok(())
    }
}

/// `clip(d/ε, -1, 1)` at cell centers.
pub fn init_field(ic: &InitialCondition, epsilon: f64, mesh: &Mesh2D) -> Result<Vec<f64>, InitialError> {
    ic.validate(epsilon, mesh)?;
    let dist: Box<dyn Fn(f64, f64) -> f64> = match ic {
        InitialCondition::Uniform { value } => {
            let v = *value;
            return Ok(vec![v; mesh.cell_count()]);
        }
        InitialCondition::Droplets { droplets } => {
            let ds = droplets.clone();
            Box::new(move |x, y| {
                ds.iter()
                    .map(|d| d.radius - (x - d.center.0).hypot(y - d.center.1))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
        }
        InitialCondition::Disc { center, radius } => {
            let (c, r) = (*center, *radius);
            Box::new(move |x, y| r - (x - c.0).hypot(y - c.1))
        }
        InitialCondition::PlanarInterface { position } => {
            let p = *position;
            Box::new(move |x, _| p - x)
        }
        InitialCondition::Flower {
            center,
            r0,
            amplitude,
            petals,
        } => {
            let poly = FlowerPolyline::new(*center, *r0, *amplitude, *petals);
            Box::new(move |x, y| poly.signed_distance(x, y))
        }
    };
    let mut phi = vec![0.0; mesh.cell_count()];
    for j in 0..mesh.ny {
        for i in 0..mesh.nx {
            let (x, y) = mesh.cell_center(i, j);
            phi[mesh.index(i, j)] = (dist(x, y) / epsilon).clamp(-1.0, 1.0);
        }
    }
    Ok(phi)
}

struct FlowerPolyline {
    center: (f64, f64),
    r0: f64,
    amplitude: f64,
    petals: f64,
    points: Vec<(f64, f64)>,
}

impl FlowerPolyline {
    fn new(center: (f64, f64), r0: f64, amplitude: f64, petals: u32) -> Self {
        let m = petals as f64;
        let points = (0..FLOWER_SAMPLES)
            .map(|k| {
                let th = 2.0 * PI * k as f64 / FLOWER_SAMPLES as f64;
                let r = r0 + amplitude * (m * th).cos();
                (center.0 + r * th.cos(), center.1 + r * th.sin())
            })
            .collect();
        Self {
            center,
            r0,
            amplitude,
            petals: m,
            points,
        }
    }

    fn signed_distance(&self, x: f64, y: f64) -> f64 {
        let n = self.points.len();
        let mut best = f64::INFINITY;
        for k in 0..n {
            let (ax, ay) = self.points[k];
            let (bx, by) = self.points[(k + 1) % n];
            let (ex, ey) = (bx - ax, by - ay);
            let s = (((x - ax) * ex + (y - ay) * ey) / (ex * ex + ey * ey)).clamp(0.0, 1.0);
            let d2 = (x - ax - s * ex).powi(2) + (y - ay - s * ey).powi(2);
            best = best.min(d2);
        }
        let (dx, dy) = (x - self.center.0, y - self.center.1);
        let rb = self.r0 + self.amplitude * (self.petals * dy.atan2(dx)).cos();
        let d = best.sqrt();
        if dx.hypot(dy) < rb {
            d
        } else {
            -d
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::geometric_volume;

    #[test]
    fn uniform_and_disc() {
        let mesh = Mesh2D::unit_square(20).unwrap();
        let phi = init_field(&InitialCondition::Uniform { value: 1.0 }, 0.1, &mesh).unwrap();
        assert!(phi.iter().all(|p| *p == 1.0));
        let disc = InitialCondition::Disc {
            center: (0.525, 0.525),
            radius: 0.2,
        };
        let phi = init_field(&disc, 0.05, &mesh).unwrap();
        assert_eq!(phi[mesh.index(10, 10)], 1.0);
        assert_eq!(phi[0], -1.0);
    }

    #[test]
    fn four_droplets_area() {
        let mesh = Mesh2D::from_extents(400, 100, 4.0, 1.0, (0.0, 0.0)).unwrap();
        let phi = init_field(&InitialCondition::four_droplets(), 0.02, &mesh).unwrap();
        let expected = PI * (0.15f64.powi(2) + 0.10f64.powi(2) + 0.06f64.powi(2) + 0.03f64.powi(2));
        assert!((expected - 0.11624).abs() < 1e-5);
        let err = (geometric_volume(&phi, &mesh) - expected).abs();
        // Four discs, each short by about the polygon chord deficit πdx²/6.
        assert!(err < 4.0 * PI * 1e-4 / 4.0, "{err}");
    }

    #[test]
    fn flower_distance_matches_polar_radius_on_axis() {
        let poly = FlowerPolyline::new((0.5, 0.5), 0.25, 0.08, 6);
        // Petal tip at θ = 0 is at radius 0.33; probe along the axis.
        assert!(poly.signed_distance(0.5 + 0.30, 0.5) > 0.0);
        assert!((poly.signed_distance(0.5 + 0.36, 0.5) + 0.03).abs() < 1e-6);
        assert!(poly.signed_distance(0.5, 0.5) > 0.15);
    }

    #[test]
    fn flower_area_matches_polar_integral() {
        // ∫ r²/2 dθ = π(r0² + a²/2).
        let mesh = Mesh2D::unit_square(200).unwrap();
        let phi = init_field(&InitialCondition::flower(), 0.01, &mesh).unwrap();
        let exact = PI * (0.25f64.powi(2) + 0.5 * 0.08f64.powi(2));
        assert!((geometric_volume(&phi, &mesh) - exact).abs() < 1e-4);
    }

    #[test]
    fn margin_is_enforced() {
        let mesh = Mesh2D::unit_square(100).unwrap();
        let disc = InitialCondition::Disc {
            center: (0.5, 0.5),
            radius: 0.45,
        };
        assert!(matches!(init_field(&disc, 0.02, &mesh), Err(InitialError::OutsideDomain { .. })));
        assert!(init_field(&disc, 0.01, &mesh).is_ok());
        assert!(InitialCondition::PlanarInterface { position: 0.05 }.validate(0.02, &mesh).is_err());
        assert!(InitialCondition::Uniform { value: 1.5 }.validate(0.02, &mesh).is_err());
        let wide = Mesh2D::from_extents(400, 100, 4.0, 1.0, (0.0, 0.0)).unwrap();
        assert!(InitialCondition::flower().validate(0.02, &mesh).is_ok());
        assert!(InitialCondition::four_droplets().validate(0.04, &wide).is_ok());
    }

    #[test]
    fn toml_round_trip() {
        for ic in [InitialCondition::flower(), InitialCondition::four_droplets(), InitialCondition::Uniform { value: -1.0 }] {
            let text = toml::to_string(&ic).unwrap();
            assert_eq!(toml::from_str::<InitialCondition>(&text).unwrap(), ic);
        }
        let parsed: InitialCondition = toml::from_str("shape = \"flower\"\namplitude = 0.05").unwrap();
        assert!(matches!(parsed, InitialCondition::Flower { amplitude, r0, .. } if amplitude == 0.05 && r0 == 0.25));
    }
}
