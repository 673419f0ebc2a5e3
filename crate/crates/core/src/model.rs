//! States, Maxwellians, moments and confinement potentials.

use serde::{Deserialize, Serialize};
use libm::erfc;

use crate::error::{FlockError, Result};
use crate::grid::{Boundary, PhaseGrid, SpaceGrid};

pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Cell-averaged phase-space density, stored column by column (`f[i * nv + j]`).
#[derive(Debug, Clone, PartialEq)]
pub struct KineticState {
    pub grid: PhaseGrid,
    pub f: Vec<f64>,
    pub t: f64,
}

impl KineticState {
    pub fn zeros(grid: PhaseGrid) -> Self {
        let f = vec![0.0; grid.len()];
        Self { grid, f, t: 0.0 }
    }

    pub fn from_fn(grid: PhaseGrid, mut value: impl FnMut(f64, f64) -> f64) -> Self {
        let mut f = Vec::with_capacity(grid.len());
        for i in 0..grid.nx() {
            let x = grid.space.center(i);
            for j in 0..grid.nv {
                f.push(value(x, grid.velocity(j)));
            }
        }
        Self { grid, f, t: 0.0 }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.f[i * self.grid.nv + j]
    }

    pub fn column(&self, i: usize) -> &[f64] {
        let nv = self.grid.nv;
        &self.f[i * nv..(i + 1) * nv]
    }

    pub fn mass(&self) -> f64 {
        self.f.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn momentum(&self) -> f64 {
        let vs = self.grid.velocities();
        self.f
            .chunks_exact(self.grid.nv)
            .map(|col| col.iter().zip(&vs).map(|(f, v)| f * v).sum::<f64>())
            .sum::<f64>()
            * self.grid.cell_volume()
    }

    pub fn min_value(&self) -> f64 {
        self.f.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Conservative macroscopic pair `(rho, P = rho u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroState {
    pub grid: SpaceGrid,
    pub rho: Vec<f64>,
    pub p_mom: Vec<f64>,
    pub t: f64,
}

impl MacroState {
    pub fn new(grid: SpaceGrid, rho: Vec<f64>, p_mom: Vec<f64>) -> Result<Self> {
        if rho.len() != grid.nx || p_mom.len() != grid.nx {
            return Err(FlockError::GridMismatch(format!(
                "macro fields have lengths ({}, {}) on a grid of {} cells",
                rho.len(),
                p_mom.len(),
                grid.nx
            )));
        }
        if let Some(i) = rho.iter().position(|r| !(*r >= 0.0)) {
            return Err(FlockError::InvalidConfig(format!("negative density {} at cell {i}", rho[i])));
        }
        Ok(Self {
            grid,
            rho,
            p_mom,
            t: 0.0,
        })
    }

    pub fn from_velocity(grid: SpaceGrid, rho: Vec<f64>, u: &[f64]) -> Result<Self> {
        let p = rho.iter().zip(u).map(|(r, u)| r * u).collect();
        Self::new(grid, rho, p)
    }

    /// Velocity with the vacuum rule: zero wherever `rho <= rho_floor`.
    pub fn velocity(&self, rho_floor: f64) -> Vec<f64> {
        self.rho
            .iter()
            .zip(&self.p_mom)
            .map(|(&r, &p)| if r > rho_floor { p / r } else { 0.0 })
            .collect()
    }

    pub fn mass(&self) -> f64 {
        self.rho.iter().sum::<f64>() * self.grid.dx
    }

    pub fn momentum(&self) -> f64 {
        self.p_mom.iter().sum::<f64>() * self.grid.dx
    }

    /// Restrict onto a grid `factor` times coarser by averaging groups of cells.
    pub fn restrict(&self, factor: usize) -> Result<MacroState> {
        if factor == 0 || !self.grid.nx.is_multiple_of(factor) {
            return Err(FlockError::GridMismatch(format!(
                "cannot restrict {} cells by a factor {factor}",
                self.grid.nx
            )));
        }
        let coarse = SpaceGrid::new(
            self.grid.x_min,
            self.grid.x_max,
            self.grid.nx / factor,
            self.grid.boundary,
        )?;
        let avg = |v: &[f64]| -> Vec<f64> {
            v.chunks_exact(factor)
                .map(|c| c.iter().sum::<f64>() / factor as f64)
                .collect()
        };
        let mut out = MacroState::new(coarse, avg(&self.rho), avg(&self.p_mom))?;
        out.t = self.t;
        Ok(out)
    }
}

/// Moments of a kinetic state together with the vacuum-rule velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub state: MacroState,
    pub u: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PotentialSpec {
    None,
    /// `a x^2 / 2`
    Quadratic { a: f64 },
    /// Values at the cell centres; gradient by central differences.
    Table { values: Vec<f64> },
}

/// A confinement potential sampled at the cell centres.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    pub spec: PotentialSpec,
    pub values: Vec<f64>,
    pub gradient: Vec<f64>,
}

/// Default ceiling on the discrete confinement integral `sum exp(-phi) dx`.
pub const ADMISSIBILITY_CEILING: f64 = 1e12;

impl Potential {
    pub fn new(spec: PotentialSpec, grid: &SpaceGrid) -> Result<Self> {
        Self::with_ceiling(spec, grid, ADMISSIBILITY_CEILING)
    }

    pub fn with_ceiling(spec: PotentialSpec, grid: &SpaceGrid, ceiling: f64) -> Result<Self> {
        let xs = grid.centers();
        let (values, gradient) = match &spec {
            PotentialSpec::None => (vec![0.0; grid.nx], vec![0.0; grid.nx]),
            PotentialSpec::Quadratic { a } => {
                if !(*a >= 0.0) {
                    return Err(FlockError::InvalidConfig(format!(
                        "quadratic potential needs a >= 0, got {a}"
                    )));
                }
                (
                    xs.iter().map(|x| 0.5 * a * x * x).collect(),
                    xs.iter().map(|x| a * x).collect(),
                )
            }
            PotentialSpec::Table { values } => {
                if values.len() != grid.nx {
                    return Err(FlockError::GridMismatch(format!(
                        "potential table has {} values for {} cells",
                        values.len(),
                        grid.nx
                    )));
                }
                (values.clone(), central_gradient(values, grid))
            }
        };
        if let Some(i) = values.iter().position(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(FlockError::InvalidConfig(format!(
                "potential must be finite and nonnegative, got {} at cell {i}",
                values[i]
            )));
        }
        let z = values.iter().map(|p| (-p).exp()).sum::<f64>() * grid.dx;
        if z > ceiling {
            return Err(FlockError::InvalidConfig(format!(
                "confinement integral {z:.3e} exceeds admissibility ceiling {ceiling:.3e}"
            )));
        }
        Ok(Self {
            spec,
            values,
            gradient,
        })
    }

    /// Discrete confinement integral `sum exp(-phi_i) dx`.
    pub fn partition(&self, dx: f64) -> f64 {
        self.values.iter().map(|p| (-p).exp()).sum::<f64>() * dx
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0) && self.gradient.iter().all(|v| *v == 0.0)
    }
}

fn central_gradient(values: &[f64], grid: &SpaceGrid) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|i| match grid.boundary {
            Boundary::Periodic => {
                (values[(i + 1) % n] - values[(i + n - 1) % n]) / (2.0 * grid.dx)
            }
            _ if i == 0 => (values[1] - values[0]) / grid.dx,
            _ if i == n - 1 => (values[n - 1] - values[n - 2]) / grid.dx,
            _ => (values[i + 1] - values[i - 1]) / (2.0 * grid.dx),
        })
        .collect()
}

/// Mass of a unit Gaussian centred at `u` lying outside `[-v_max, v_max]`.
pub fn gaussian_tail_mass(u: f64, v_max: f64) -> f64 {
    let s = std::f64::consts::SQRT_2;
    0.5 * erfc((v_max - u) / s) + 0.5 * erfc((v_max + u) / s)
}

/// Normalised local Maxwellian `rho (2 pi)^{-1/2} exp(-(v - u)^2 / 2)` sampled at the cell centres.
pub fn maxwellian(grid: &PhaseGrid, rho: &[f64], u: &[f64], tail_tol: f64) -> Result<KineticState> {
    let nx = grid.nx();
    if rho.len() != nx || u.len() != nx {
        return Err(FlockError::GridMismatch(format!(
            "maxwellian fields have lengths ({}, {}) for {nx} cells",
            rho.len(),
            u.len()
        )));
    }
    let vs = grid.velocities();
    let mut f = Vec::with_capacity(grid.len());
    for i in 0..nx {
        if !(rho[i] >= 0.0) || !u[i].is_finite() {
            return Err(FlockError::InvalidConfig(format!(
                "maxwellian needs rho >= 0 and finite u, got ({}, {}) at cell {i}",
                rho[i], u[i]
            )));
        }
        if rho[i] > 0.0 {
            let tail = gaussian_tail_mass(u[i], grid.v_max);
            if tail > tail_tol {
                return Err(FlockError::VelocityTail {
                    cell: i,
                    tail,
                    tol: tail_tol,
                });
            }
        }
        f.extend(vs.iter().map(|v| {
            let c = v - u[i];
            rho[i] * INV_SQRT_2PI * (-0.5 * c * c).exp()
        }));
    }
    Ok(KineticState {
        grid: grid.clone(),
        f,
        t: 0.0,
    })
}

/// Shift `s` such that the discrete Gaussian `exp(-(v_j - s)^2 / 2)` on the
/// velocity cells has mean `target`. The mean is strictly increasing in `s`
/// (its derivative is the discrete variance), so a bracketed Newton
/// iteration converges.
pub fn fit_gaussian_shift(vs: &[f64], target: f64) -> f64 {
    let lo_v = vs[0];
    let hi_v = vs[vs.len() - 1];
    let (mut lo, mut hi) = (lo_v - 60.0, hi_v + 60.0);
    let mut s = target.clamp(lo_v, hi_v);
    for _ in 0..100 {
        let (mean, var) = gaussian_mean_var(vs, s);
        let g = mean - target;
        if g.abs() <= 4.0 * f64::EPSILON * (1.0 + target.abs()) {
            break;
        }
        if g > 0.0 {
            hi = s;
        } else {
            lo = s;
        }
        let newton = s - g / var;
        s = if var > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= 1e-15 * (1.0 + s.abs()) {
            break;
        }
    }
    s
}

fn gaussian_mean_var(vs: &[f64], s: f64) -> (f64, f64) {
    let emax = vs
        .iter()
        .map(|v| -0.5 * (v - s) * (v - s))
        .fold(f64::NEG_INFINITY, f64::max);
    let (mut z, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for v in vs {
        let w = (-0.5 * (v - s) * (v - s) - emax).exp();
        z += w;
        m1 += w * v;
        m2 += w * v * v;
    }
    let mean = m1 / z;
    (mean, (m2 / z - mean * mean).max(0.0))
}

/// Discrete local equilibrium with exactly the moments `(rho, j)` on the velocity
/// grid: a shifted unit-variance Gaussian, renormalised on the cells. Returns the
/// column and the fitted shift. It is the minimiser of the discrete velocity
/// entropy `sum f log f + f v^2 / 2` under the two moment constraints.
pub fn discrete_maxwellian(grid: &PhaseGrid, rho: f64, j: f64, rho_floor: f64) -> (Vec<f64>, f64) {
    let vs = grid.velocities();
    let u = if rho > rho_floor { j / rho } else { 0.0 };
    let s = fit_gaussian_shift(&vs, u);
    let w: Vec<f64> = vs.iter().map(|v| (-0.5 * (v - s) * (v - s)).exp()).collect();
    let z = w.iter().sum::<f64>() * grid.dv;
    let col = if z > 0.0 {
        w.iter().map(|w| rho * w / z).collect()
    } else {
        vec![0.0; vs.len()]
    };
    (col, s)
}

/// Column density and momentum `(rho_i, j_i)` by midpoint quadrature in velocity.
pub fn column_moments(col: &[f64], vs: &[f64], dv: f64) -> (f64, f64) {
    let (mut r, mut m) = (0.0, 0.0);
    for (f, v) in col.iter().zip(vs) {
        r += f;
        m += f * v;
    }
    (r * dv, m * dv)
}

/// Macroscopic moments with the vacuum rule `u = 0` wherever `rho <= rho_floor`.
pub fn moments(state: &KineticState, rho_floor: f64) -> Moments {
    let grid = &state.grid;
    let vs = grid.velocities();
    let mut rho = Vec::with_capacity(grid.nx());
    let mut mom = Vec::with_capacity(grid.nx());
    let mut u = Vec::with_capacity(grid.nx());
    for col in state.f.chunks_exact(grid.nv) {
        let (r, m) = column_moments(col, &vs, grid.dv);
        rho.push(r);
        mom.push(m);
        u.push(if r > rho_floor { m / r } else { 0.0 });
    }
    Moments {
        state: MacroState {
            grid: grid.space.clone(),
            rho,
            p_mom: mom,
            t: state.t,
        },
        u,
    }
}

/// Per-cell second velocity moment `sum_j v_j^2 f_ij dv`.
pub fn second_moment_flux(state: &KineticState) -> Vec<f64> {
    let vs = state.grid.velocities();
    state
        .f
        .chunks_exact(state.grid.nv)
        .map(|col| col.iter().zip(&vs).map(|(f, v)| f * v * v).sum::<f64>() * state.grid.dv)
        .collect()
}

/// Flocking steady state `rho = M exp(-phi) / sum exp(-phi) dx` at rest.
pub fn stationary_profile(potential: &Potential, grid: &SpaceGrid, mass: f64) -> Result<MacroState> {
    if !(mass > 0.0) {
        return Err(FlockError::InvalidConfig(format!("stationary profile needs M > 0, got {mass}")));
    }
    if potential.values.len() != grid.nx {
        return Err(FlockError::GridMismatch("potential and grid sizes differ".into()));
    }
    let z = potential.partition(grid.dx);
    let rho = potential.values.iter().map(|p| mass * (-p).exp() / z).collect();
    MacroState::new(grid.clone(), rho, vec![0.0; grid.nx])
}
