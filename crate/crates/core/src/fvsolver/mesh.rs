use serde::{Deserialize, Serialize};

use super::SolverError;

/// Uniform cell-centered Cartesian mesh. Cell `(i, j)` has index `i + nx*j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mesh2D {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub origin: (f64, f64),
}

impl Mesh2D {
    pub fn new(nx: usize, ny: usize, dx: f64, dy: f64, origin: (f64, f64)) -> Result<Self, SolverError> {
        if nx * ny < 9 || nx == 0 || ny == 0 {
            return Err(SolverError::InvalidConfig(format!(
                "mesh needs at least 9 cells, got {nx}x{ny}"
            )));
        }
        if !(dx > 0.0 && dy > 0.0 && dx.is_finite() && dy.is_finite()) {
            return Err(SolverError::InvalidConfig(format!("bad cell size {dx} x {dy}")));
        }
        Ok(Self { nx, ny, dx, dy, origin })
    }

    /// Mesh covering `[x0, x0+lx] × [y0, y0+ly]`.
    pub fn from_extents(nx: usize, ny: usize, lx: f64, ly: f64, origin: (f64, f64)) -> Result<Self, SolverError> {
        Self::new(nx, ny, lx / nx as f64, ly / ny as f64, origin)
    }

    pub fn unit_square(n: usize) -> Result<Self, SolverError> {
        Self::from_extents(n, n, 1.0, 1.0, (0.0, 0.0))
    }

    /// Rejects anisotropic cells.
    pub fn require_square_cells(&self) -> Result<(), SolverError> {
        if ((self.dx - self.dy) / self.dx).abs() > 1e-12 {
            return Err(SolverError::InvalidConfig(format!(
                "dx = dy required, got dx = {}, dy = {}",
                self.dx, self.dy
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn cell_count(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn cell_volume(&self) -> f64 {
        self.dx * self.dy
    }

    pub fn lx(&self) -> f64 {
        self.nx as f64 * self.dx
    }

    pub fn ly(&self) -> f64 {
        self.ny as f64 * self.dy
    }

    pub fn domain_area(&self) -> f64 {
        self.lx() * self.ly()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.nx * j
    }

    #[inline]
    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.origin.0 + (i as f64 + 0.5) * self.dx,
            self.origin.1 + (j as f64 + 0.5) * self.dy,
        )
    }

    /// Interior neighbors of cell `(i, j)` with the face transmissibility
    /// `face_area / distance` divided by the cell volume: `1/dx²` across
    /// vertical faces, `1/dy²` across horizontal ones. Boundary faces carry
    /// no flux and are omitted.
    #[inline]
    pub fn neighbors(&self, i: usize, j: usize) -> impl Iterator<Item = (usize, f64)> {
        let (nx, ny) = (self.nx, self.ny);
        let wx = 1.0 / (self.dx * self.dx);
        let wy = 1.0 / (self.dy * self.dy);
        let c = i + nx * j;
        [
            (i > 0).then(|| (c - 1, wx)),
            (i + 1 < nx).then(|| (c + 1, wx)),
            (j > 0).then(|| (c - nx, wy)),
            (j + 1 < ny).then(|| (c + nx, wy)),
        ]
        .into_iter()
        .flatten()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometry() {
        let m = Mesh2D::from_extents(4, 3, 4.0, 1.5, (0.0, 0.0)).unwrap();
        assert_eq!(m.dx, 1.0);
        assert_eq!(m.dy, 0.5);
        assert!(m.require_square_cells().is_err());
        assert_eq!(m.cell_center(3, 1), (3.5, 0.75));
        assert_eq!(m.domain_area(), 6.0);
        assert!(Mesh2D::unit_square(2).is_err());
    }

    #[test]
    fn neighbor_counts() {
        let m = Mesh2D::unit_square(3).unwrap();
        assert_eq!(m.neighbors(0, 0).count(), 2);
        assert_eq!(m.neighbors(1, 0).count(), 3);
        assert_eq!(m.neighbors(1, 1).count(), 4);
        let total: usize = (0..3).flat_map(|j| (0..3).map(move |i| (i, j))).map(|(i, j)| m.neighbors(i, j).count()).sum();
        // 12 interior faces, each seen twice.
        assert_eq!(total, 24);
    }
}
