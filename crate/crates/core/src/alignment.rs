//! Nonlocal alignment: the Cucker-Smale operator, the Motsch-Tadmor operator,
//! and the macroscopic alignment source of the Euler-flocking system.
//!
//! Both kinetic operators are affine in the velocity variable, so they are
//! returned as coefficient pairs `(a, b)` with `L(x_i, v) = a_i - b_i v`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{FlockError, Result};
use crate::grid::SpaceGrid;
use crate::model::{column_moments, KineticState, MacroState};

/// Symmetry tolerance enforced on tabulated kernels.
pub const KERNEL_SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KernelSpec {
    Constant { k0: f64 },
    /// `amplitude * exp(-d^2 / (2 width^2))`, `d` the (periodic) distance.
    Gaussian { amplitude: f64, width: f64 },
    /// Row-major `nx * nx` matrix.
    Table { values: Vec<f64> },
}

/// Communication kernel sampled on cell-centre pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub spec: KernelSpec,
    pub nx: usize,
    pub dx: f64,
    matrix: Vec<f64>,
    pub k_max: f64,
}

impl Kernel {
    pub fn new(spec: KernelSpec, grid: &SpaceGrid) -> Result<Self> {
        let nx = grid.nx;
        let matrix = match &spec {
            KernelSpec::Constant { k0 } => vec![*k0; nx * nx],
            KernelSpec::Gaussian { amplitude, width } => {
                if !(*width > 0.0) {
                    return Err(FlockError::InvalidConfig(format!(
                        "gaussian kernel width must be positive, got {width}"
                    )));
                }
                let mut m = vec![0.0; nx * nx];
                for i in 0..nx {
                    for l in i..nx {
                        let d = grid.distance(i, l);
                        let k = amplitude * (-0.5 * d * d / (width * width)).exp();
                        m[i * nx + l] = k;
                        m[l * nx + i] = k;
                    }
                }
                m
            }
            KernelSpec::Table { values } => {
                if values.len() != nx * nx {
                    return Err(FlockError::GridMismatch(format!(
                        "kernel table has {} entries, expected {}",
                        values.len(),
                        nx * nx
                    )));
                }
                check_symmetric(values, nx)?;
                values.clone()
            }
        };
        if let Some(k) = matrix.iter().find(|k| !(**k >= 0.0) || !k.is_finite()) {
            return Err(FlockError::InvalidConfig(format!(
                "kernel entries must be finite and nonnegative, found {k}"
            )));
        }
        let k_max = matrix.iter().copied().fold(0.0, f64::max);
        Ok(Self {
            spec,
            nx,
            dx: grid.dx,
            matrix,
            k_max,
        })
    }

    #[inline]
    pub fn at(&self, i: usize, l: usize) -> f64 {
        self.matrix[i * self.nx + l]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.matrix[i * self.nx..(i + 1) * self.nx]
    }

    /// Midpoint quadrature `sum_l K_il g_l dx`.
    pub fn apply(&self, g: &[f64]) -> Vec<f64> {
        (0..self.nx)
            .map(|i| self.row(i).iter().zip(g).map(|(k, g)| k * g).sum::<f64>() * self.dx)
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.k_max == 0.0
    }
}

fn check_symmetric(values: &[f64], nx: usize) -> Result<()> {
    for i in 0..nx {
        for l in (i + 1)..nx {
            let diff = (values[i * nx + l] - values[l * nx + i]).abs();
            if diff > KERNEL_SYMMETRY_TOL {
                return Err(FlockError::AsymmetricKernel { i, l, diff });
            }
        }
    }
    Ok(())
}

/// Read a square kernel matrix from CSV (row `i` holds `K(x_i, x_l)` for all `l`).
pub fn load_kernel_csv(path: &Path) -> Result<KernelSpec> {
    let text = std::fs::read_to_string(path)?;
    parse_kernel_csv(&text)
}

pub fn parse_kernel_csv(text: &str) -> Result<KernelSpec> {
    let mut values = Vec::new();
    let mut rows = 0usize;
    let mut width = None;
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|c| {
                c.trim()
                    .parse::<f64>()
                    .map_err(|e| FlockError::Parse(format!("kernel csv line {}: {e}", n + 1)))
            })
            .collect::<Result<_>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(FlockError::Parse(format!(
                    "kernel csv line {} has {} columns, expected {w}",
                    n + 1,
                    row.len()
                )))
            }
            _ => {}
        }
        values.extend(row);
        rows += 1;
    }
    if width != Some(rows) {
        return Err(FlockError::Parse(format!(
            "kernel csv is {rows} x {} and not square",
            width.unwrap_or(0)
        )));
    }
    check_symmetric(&values, rows)?;
    Ok(KernelSpec::Table { values })
}

/// Velocity-affine alignment field `a_i - b_i v`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineField {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl AffineField {
    #[inline]
    pub fn eval(&self, i: usize, v: f64) -> f64 {
        self.a[i] - self.b[i] * v
    }
}

/// Cucker-Smale coefficients from column moments: `a = K j`, `b = K rho`.
pub fn cs_coefficients(kernel: &Kernel, rho: &[f64], mom: &[f64]) -> AffineField {
    AffineField {
        a: kernel.apply(mom),
        b: kernel.apply(rho),
    }
}

/// `L[f](x, v) = sum_l K(x, x_l) (j_l - rho_l v) dx`.
pub fn cs_operator(f: &KineticState, kernel: &Kernel) -> AffineField {
    let (rho, mom) = raw_moments(f);
    cs_coefficients(kernel, &rho, &mom)
}

fn raw_moments(f: &KineticState) -> (Vec<f64>, Vec<f64>) {
    let vs = f.grid.velocities();
    f.f.chunks_exact(f.grid.nv)
        .map(|c| column_moments(c, &vs, f.grid.dv))
        .unzip()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MollifierShape {
    Gaussian,
    /// `exp(-1 / (1 - (d/r)^2))` on `|d| < r`.
    Bump,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MollifierSpec {
    pub radius: f64,
    pub shape: MollifierShape,
}

/// Mollifier weights on the grid, renormalised so every row sums to one under `dx`.
#[derive(Debug, Clone)]
pub struct Mollifier {
    pub spec: MollifierSpec,
    nx: usize,
    dx: f64,
    weights: Vec<f64>,
}

impl Mollifier {
    pub fn new(spec: MollifierSpec, grid: &SpaceGrid) -> Result<Self> {
        if !(spec.radius > 0.0) {
            return Err(FlockError::InvalidConfig(format!(
                "mollifier radius must be positive, got {}",
                spec.radius
            )));
        }
        let nx = grid.nx;
        let r = spec.radius;
        let mut weights = vec![0.0; nx * nx];
        for i in 0..nx {
            let row = &mut weights[i * nx..(i + 1) * nx];
            for (l, w) in row.iter_mut().enumerate() {
                let s = grid.distance(i, l) / r;
                *w = match spec.shape {
                    MollifierShape::Gaussian => (-0.5 * s * s).exp(),
                    MollifierShape::Bump if s < 1.0 => (-1.0 / (1.0 - s * s)).exp(),
                    MollifierShape::Bump => 0.0,
                };
            }
            let norm = row.iter().sum::<f64>() * grid.dx;
            row.iter_mut().for_each(|w| *w /= norm);
        }
        Ok(Self {
            spec,
            nx,
            dx: grid.dx,
            weights,
        })
    }

    pub fn apply(&self, g: &[f64]) -> Vec<f64> {
        (0..self.nx)
            .map(|i| {
                self.weights[i * self.nx..(i + 1) * self.nx]
                    .iter()
                    .zip(g)
                    .map(|(w, g)| w * g)
                    .sum::<f64>()
                    * self.dx
            })
            .collect()
    }
}

/// Motsch-Tadmor operator `(phi * j) / (phi * rho) - v`.
pub fn mt_operator(f: &KineticState, mollifier: &Mollifier, rho_floor: f64) -> Result<AffineField> {
    let (rho, mom) = raw_moments(f);
    let num = mollifier.apply(&mom);
    let den = mollifier.apply(&rho);
    let mut a = Vec::with_capacity(den.len());
    for (i, (n, d)) in num.iter().zip(&den).enumerate() {
        if !(*d > rho_floor) {
            return Err(FlockError::MollifiedVacuum { cell: i, value: *d });
        }
        a.push(n / d);
    }
    let b = vec![1.0; a.len()];
    Ok(AffineField { a, b })
}

/// Momentum source `S_i = sum_l K_il rho_i rho_l (u_l - u_i) dx`, evaluated as
/// `rho_i (K P)_i - P_i (K rho)_i` so that `sum_i S_i = 0` holds to round-off
/// for a symmetric kernel.
pub fn alignment_source(state: &MacroState, kernel: &Kernel) -> Vec<f64> {
    let kp = kernel.apply(&state.p_mom);
    let kr = kernel.apply(&state.rho);
    state
        .rho
        .iter()
        .zip(&state.p_mom)
        .zip(kp.iter().zip(&kr))
        .map(|((r, p), (kp, kr))| r * kp - p * kr)
        .collect()
}

/// `1/2 sum_i sum_l K_il rho_i rho_l (u_i - u_l)^2 dx^2`.
pub fn alignment_dissipation_rate(state: &MacroState, kernel: &Kernel, rho_floor: f64) -> f64 {
    let u = state.velocity(rho_floor);
    shifted_dissipation(kernel, &state.rho, &u)
}

/// `1/2 sum sum K_il w_i w_l (d_i - d_l)^2 dx^2` for weights `w` and a field `d`.
pub(crate) fn shifted_dissipation(kernel: &Kernel, w: &[f64], d: &[f64]) -> f64 {
    let nx = kernel.nx;
    let mut acc = 0.0;
    for i in 0..nx {
        if w[i] == 0.0 {
            continue;
        }
        let row = kernel.row(i);
        let mut s = 0.0;
        for l in 0..nx {
            let diff = d[i] - d[l];
            s += row[l] * w[l] * diff * diff;
        }
        acc += w[i] * s;
    }
    0.5 * acc * kernel.dx * kernel.dx
}
