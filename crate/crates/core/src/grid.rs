//! Uniform cell-centred grids in position and phase space.

use serde::{Deserialize, Serialize};

use crate::error::{FlockError, Result};

/// Treatment of the two ends of the position interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    Periodic,
    /// Zero-gradient extrapolation into the ghost cells.
    CopyOut,
    /// Specular wall: ghost cells mirror the interior with the velocity reversed.
    Reflecting,
}

impl std::str::FromStr for Boundary {
    type Err = FlockError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "periodic" => Ok(Boundary::Periodic),
            "copy-out" | "copyout" => Ok(Boundary::CopyOut),
            "reflecting" | "wall" => Ok(Boundary::Reflecting),
            other => Err(FlockError::Parse(format!("unknown boundary `{other}`"))),
        }
    }
}

/// Where a ghost cell takes its value from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GhostSource {
    pub cell: usize,
    /// True when the source is a mirror image (velocity and momentum flip sign).
    pub mirrored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub dx: f64,
    pub boundary: Boundary,
}

impl SpaceGrid {
    pub fn new(x_min: f64, x_max: f64, nx: usize, boundary: Boundary) -> Result<Self> {
        if nx < 4 {
            return Err(FlockError::InvalidGrid(format!("nx = {nx} must be at least 4")));
        }
        if !(x_min.is_finite() && x_max.is_finite()) || x_max <= x_min {
            return Err(FlockError::InvalidGrid(format!(
                "position bounds [{x_min}, {x_max}] are not an increasing finite interval"
            )));
        }
        Ok(Self {
            x_min,
            x_max,
            nx,
            dx: (x_max - x_min) / nx as f64,
            boundary,
        })
    }

    pub fn center(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.dx
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.center(i)).collect()
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    /// Distance between two cell centres, using the shortest image on a periodic grid.
    pub fn distance(&self, i: usize, l: usize) -> f64 {
        let d = (self.center(i) - self.center(l)).abs();
        match self.boundary {
            Boundary::Periodic => d.min(self.length() - d),
            _ => d,
        }
    }

    /// Resolve a possibly out-of-range cell index (ghost cell) to its source cell.
    pub fn ghost(&self, idx: isize) -> GhostSource {
        let n = self.nx as isize;
        if (0..n).contains(&idx) {
            return GhostSource {
                cell: idx as usize,
                mirrored: false,
            };
        }
        match self.boundary {
            Boundary::Periodic => GhostSource {
                cell: idx.rem_euclid(n) as usize,
                mirrored: false,
            },
            Boundary::CopyOut => GhostSource {
                cell: idx.clamp(0, n - 1) as usize,
                mirrored: false,
            },
            Boundary::Reflecting => {
                let cell = if idx < 0 { -idx - 1 } else { 2 * n - 1 - idx };
                GhostSource {
                    cell: cell.clamp(0, n - 1) as usize,
                    mirrored: true,
                }
            }
        }
    }

    pub fn same_as(&self, other: &SpaceGrid) -> bool {
        self.nx == other.nx
            && self.boundary == other.boundary
            && (self.x_min - other.x_min).abs() <= 1e-12 * self.length()
            && (self.x_max - other.x_max).abs() <= 1e-12 * self.length()
    }
}

/// Position grid times the symmetric velocity interval `[-v_max, v_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub space: SpaceGrid,
    pub v_max: f64,
    pub nv: usize,
    pub dv: f64,
}

impl PhaseGrid {
    pub fn new(space: SpaceGrid, v_max: f64, nv: usize) -> Result<Self> {
        if nv < 2 || !nv.is_multiple_of(2) {
            return Err(FlockError::InvalidGrid(format!("nv = {nv} must be even and at least 2")));
        }
        if !(v_max.is_finite() && v_max > 0.0) {
            return Err(FlockError::InvalidGrid(format!("v_max = {v_max} must be positive")));
        }
        Ok(Self {
            space,
            v_max,
            nv,
            dv: 2.0 * v_max / nv as f64,
        })
    }

    pub fn nx(&self) -> usize {
        self.space.nx
    }

    pub fn dx(&self) -> f64 {
        self.space.dx
    }

    pub fn velocity(&self, j: usize) -> f64 {
        -self.v_max + (j as f64 + 0.5) * self.dv
    }

    pub fn velocities(&self) -> Vec<f64> {
        (0..self.nv).map(|j| self.velocity(j)).collect()
    }

    /// Velocity at the face between cells `k - 1` and `k`.
    pub fn velocity_face(&self, k: usize) -> f64 {
        -self.v_max + k as f64 * self.dv
    }

    pub fn cell_volume(&self) -> f64 {
        self.space.dx * self.dv
    }

    /// Index of the velocity cell mirrored through `v = 0`.
    pub fn mirror_velocity(&self, j: usize) -> usize {
        self.nv - 1 - j
    }

    pub fn len(&self) -> usize {
        self.space.nx * self.nv
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
