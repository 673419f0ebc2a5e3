//! Entropies, dissipations and relative-entropy functionals.
//!
//! All integrals are midpoint sums on the solver grids, with `f log f = 0` at `f = 0`.

use crate::alignment::{shifted_dissipation, Kernel};
use crate::error::{FlockError, Result};
use crate::model::{column_moments, discrete_maxwellian, moments, KineticState, MacroState, Potential};

/// `F(M) - E(rho, u)` per unit mass for a normalised unit-temperature Maxwellian: `-log(2 pi) / 2`.
pub const GAUSSIAN_ENTROPY_OFFSET: f64 = -0.918_938_533_204_672_7;

/// Relative cut-off below which cells are skipped in `D1`.
pub const D1_FLOOR: f64 = 1e-14;

#[inline]
fn xlogx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

/// `F(f) = int f log f + f v^2 / 2 + f phi`.
pub fn kinetic_entropy(f: &KineticState, potential: &Potential) -> f64 {
    let g = &f.grid;
    let vs = g.velocities();
    let mut total = 0.0;
    for (i, col) in f.f.chunks_exact(g.nv).enumerate() {
        let phi = potential.values[i];
        total += col
            .iter()
            .zip(&vs)
            .map(|(f, v)| xlogx(*f) + f * (0.5 * v * v + phi))
            .sum::<f64>();
    }
    total * g.cell_volume()
}

/// Entropy relative to the global equilibrium `exp(-phi - v^2 / 2)`:
/// `F(f) - M log(M / Z)` with `Z` the discrete partition sum; nonnegative.
pub fn equilibrium_relative_entropy(f: &KineticState, potential: &Potential) -> f64 {
    let g = &f.grid;
    let m = f.mass();
    if !(m > 0.0) {
        return 0.0;
    }
    let zv: f64 = g.velocities().iter().map(|v| (-0.5 * v * v).exp()).sum::<f64>() * g.dv;
    let z = potential.partition(g.dx()) * zv;
    kinetic_entropy(f, potential) - m * (m / z).ln()
}

/// `D1(f) = int |f_v - f (u - v)|^2 / f`, with `f_v` by central differences
/// (five-point away from the edges, three-point next to them) on the interior
/// velocity cells; cells below `D1_FLOOR * max f` are skipped.
pub fn dissipation_d1(f: &KineticState, rho_floor: f64) -> f64 {
    let g = &f.grid;
    let nv = g.nv;
    let vs = g.velocities();
    let fmax = f.f.iter().copied().fold(0.0, f64::max);
    if fmax <= 0.0 {
        return 0.0;
    }
    let floor = D1_FLOOR * fmax;
    let m = moments(f, rho_floor);
    let mut total = 0.0;
    for (i, col) in f.f.chunks_exact(nv).enumerate() {
        let u = m.u[i];
        for j in 1..nv - 1 {
            let fj = col[j];
            if fj < floor {
                continue;
            }
            let grad = if j >= 2 && j + 2 < nv {
                (8.0 * (col[j + 1] - col[j - 1]) - (col[j + 2] - col[j - 2])) / (12.0 * g.dv)
            } else {
                (col[j + 1] - col[j - 1]) / (2.0 * g.dv)
            };
            let r = grad - fj * (u - vs[j]);
            total += r * r / fj;
        }
    }
    total * g.cell_volume()
}

/// `D2(f) = 1/2 int K f f' |v - w|^2`, collapsed through the moments
/// `(rho, j, e = int v^2 f)` of each column.
pub fn dissipation_d2(f: &KineticState, kernel: &Kernel) -> f64 {
    let g = &f.grid;
    let vs = g.velocities();
    let mut rho = Vec::with_capacity(g.nx());
    let mut mom = Vec::with_capacity(g.nx());
    let mut e = Vec::with_capacity(g.nx());
    for col in f.f.chunks_exact(g.nv) {
        let (r, m) = column_moments(col, &vs, g.dv);
        rho.push(r);
        mom.push(m);
        e.push(col.iter().zip(&vs).map(|(f, v)| f * v * v).sum::<f64>() * g.dv);
    }
    let kr = kernel.apply(&rho);
    let km = kernel.apply(&mom);
    let ke = kernel.apply(&e);
    // sum_il K_il (rho_i e_l + rho_l e_i - 2 j_i j_l) dx^2
    let s: f64 = (0..g.nx())
        .map(|i| rho[i] * ke[i] + e[i] * kr[i] - 2.0 * mom[i] * km[i])
        .sum();
    0.5 * s * g.dx()
}

/// `E(U) = int P^2 / (2 rho) + rho log rho + rho phi`, kinetic part dropped in vacuum.
pub fn macro_entropy(state: &MacroState, potential: &Potential, rho_floor: f64) -> f64 {
    state
        .rho
        .iter()
        .zip(&state.p_mom)
        .zip(&potential.values)
        .map(|((&r, &p), &phi)| {
            let kin = if r > rho_floor { p * p / (2.0 * r) } else { 0.0 };
            kin + xlogx(r) + r * phi
        })
        .sum::<f64>()
        * state.grid.dx
}

/// Relative pressure `p(q | rho) = q log(q / rho) - (q - rho)`.
pub fn relative_pressure(q: f64, rho: f64) -> f64 {
    if q > 0.0 {
        q * (q / rho).ln() - (q - rho)
    } else {
        rho
    }
}

fn check_pair(v: &MacroState, u: &MacroState, rho_floor: f64) -> Result<()> {
    if !v.grid.same_as(&u.grid) {
        return Err(FlockError::GridMismatch(format!(
            "states on grids of {} and {} cells",
            v.grid.nx, u.grid.nx
        )));
    }
    if let Some(i) = u.rho.iter().position(|r| !(*r > rho_floor)) {
        return Err(FlockError::Vacuum {
            cell: i,
            rho: u.rho[i],
            floor: rho_floor,
        });
    }
    Ok(())
}

/// Pointwise density of the relative entropy `q |v - u|^2 / 2 + p(q | rho)`.
pub fn relative_entropy_density(v: &MacroState, u: &MacroState, rho_floor: f64) -> Result<Vec<f64>> {
    check_pair(v, u, rho_floor)?;
    let vu = v.velocity(rho_floor);
    let uu = u.velocity(rho_floor);
    Ok((0..v.grid.nx)
        .map(|i| {
            let q = v.rho[i];
            let kin = if q > rho_floor {
                0.5 * q * (vu[i] - uu[i]).powi(2)
            } else {
                0.0
            };
            kin + relative_pressure(q, u.rho[i])
        })
        .collect())
}

/// `int E(V | U) dx` for a possibly vacuous `V = (q, q v)` and a strictly positive `U`.
pub fn relative_entropy(v: &MacroState, u: &MacroState, rho_floor: f64) -> Result<f64> {
    Ok(relative_entropy_density(v, u, rho_floor)?.iter().sum::<f64>() * v.grid.dx)
}

/// Momentum row of the relative flux, `q (v - u)^2` per cell.
pub fn relative_flux(v: &MacroState, u: &MacroState, rho_floor: f64) -> Result<Vec<f64>> {
    check_pair(v, u, rho_floor)?;
    let vu = v.velocity(rho_floor);
    let uu = u.velocity(rho_floor);
    Ok((0..v.grid.nx)
        .map(|i| {
            if v.rho[i] > rho_floor {
                v.rho[i] * (vu[i] - uu[i]).powi(2)
            } else {
                0.0
            }
        })
        .collect())
}

/// Shifted alignment dissipation `1/2 int int K q q' [(v - u)(x) - (v - u)(y)]^2`.
pub fn relative_dissipation(v: &MacroState, u: &MacroState, kernel: &Kernel, rho_floor: f64) -> Result<f64> {
    check_pair(v, u, rho_floor)?;
    let vu = v.velocity(rho_floor);
    let uu = u.velocity(rho_floor);
    let d: Vec<f64> = vu.iter().zip(&uu).map(|(a, b)| a - b).collect();
    Ok(shifted_dissipation(kernel, &v.rho, &d))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JensenGap {
    /// `F(f) - E(moments(f))`.
    pub raw: f64,
    /// `GAUSSIAN_ENTROPY_OFFSET * mass`, the value of `raw` for a Maxwellian.
    pub offset: f64,
}

impl JensenGap {
    /// `raw - offset`; nonnegative by Jensen's inequality, zero for local Maxwellians.
    pub fn normalized(&self) -> f64 {
        self.raw - self.offset
    }
}

pub fn jensen_gap(f: &KineticState, potential: &Potential, rho_floor: f64) -> JensenGap {
    let m = moments(f, rho_floor);
    let raw = kinetic_entropy(f, potential) - macro_entropy(&m.state, potential, rho_floor);
    JensenGap {
        raw,
        offset: GAUSSIAN_ENTROPY_OFFSET * f.mass(),
    }
}

/// Discrete L1 distance between `f` and the local equilibrium built from its own moments.
pub fn maxwellian_gap(f: &KineticState, rho_floor: f64) -> f64 {
    let g = &f.grid;
    let vs = g.velocities();
    let mut total = 0.0;
    for col in f.f.chunks_exact(g.nv) {
        let (r, m) = column_moments(col, &vs, g.dv);
        let (eq, _) = discrete_maxwellian(g, r, m, rho_floor);
        total += col.iter().zip(&eq).map(|(a, b)| (a - b).abs()).sum::<f64>();
    }
    total * g.cell_volume()
}

/// Right-hand-side terms of the relative-entropy budget between a kinetic
/// snapshot and the Euler reference at the same time.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Budget {
    /// `int | int (u_eps^2 - v^2 + 1) f dv | dx`, the defect of the Maxwellian closure.
    pub kinetic_approx: f64,
    /// `int int K q(x) (rho(y) - q(y)) [u(y) - u(x)] [u_eps(x) - u(x)]`.
    pub coupling: f64,
    /// Shifted alignment dissipation.
    pub shifted_dissipation: f64,
}

pub fn budget_terms(f: &KineticState, reference: &MacroState, kernel: &Kernel, rho_floor: f64) -> Result<Budget> {
    let m = moments(f, rho_floor);
    check_pair(&m.state, reference, rho_floor)?;
    let g = &f.grid;
    let vs = g.velocities();
    let mut approx = 0.0;
    for (i, col) in f.f.chunks_exact(g.nv).enumerate() {
        let ue2 = m.u[i] * m.u[i];
        let s: f64 = col.iter().zip(&vs).map(|(f, v)| (ue2 - v * v + 1.0) * f).sum::<f64>() * g.dv;
        approx += s.abs();
    }
    approx *= g.dx();

    let q = &m.state.rho;
    let u = reference.velocity(rho_floor);
    let rho = &reference.rho;
    let nx = g.nx();
    let mut coupling = 0.0;
    for i in 0..nx {
        let di = m.u[i] - u[i];
        if q[i] == 0.0 || di == 0.0 {
            continue;
        }
        let row = kernel.row(i);
        let s: f64 = (0..nx).map(|l| row[l] * (rho[l] - q[l]) * (u[l] - u[i])).sum();
        coupling += q[i] * di * s;
    }
    coupling *= g.dx() * g.dx();

    let d: Vec<f64> = m.u.iter().zip(&u).map(|(a, b)| a - b).collect();
    Ok(Budget {
        kinetic_approx: approx,
        coupling,
        shifted_dissipation: shifted_dissipation(kernel, q, &d),
    })
}

/// Fitted constant `C = |coupling| / (|u|_inf (|rho|_1 + |q|_1) int E(V|U))`.
pub fn coupling_constant(budget: &Budget, f: &KineticState, reference: &MacroState, rho_floor: f64) -> Result<f64> {
    let m = moments(f, rho_floor);
    let rel = relative_entropy(&m.state, reference, rho_floor)?;
    let umax = reference.velocity(rho_floor).iter().map(|u| u.abs()).fold(0.0, f64::max);
    let denom = umax * (reference.mass() + m.state.mass()) * rel;
    Ok(if denom > 0.0 {
        budget.coupling.abs() / denom
    } else {
        0.0
    })
}

/// All scalar diagnostics of one snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EntropyReport {
    pub t: f64,
    pub kinetic_entropy: f64,
    pub d1: f64,
    pub d2: f64,
    pub macro_entropy: f64,
    pub rel_entropy: f64,
    pub rel_dissipation: f64,
    pub jensen_gap: f64,
    pub maxwellian_gap: f64,
    pub budget: Budget,
    /// Alignment dissipation of the kinetic moments (not serialised).
    pub alignment_dissipation: f64,
    /// Entropy relative to the global equilibrium (not serialised).
    pub equilibrium_entropy: f64,
    /// Total mass and momentum of the snapshot (not serialised).
    pub mass: f64,
    pub momentum: f64,
}

pub const REPORT_COLUMNS: [&str; 12] = [
    "t",
    "F",
    "D1",
    "D2",
    "E",
    "rel_entropy",
    "rel_dissipation",
    "jensen_gap",
    "maxwellian_gap",
    "budget_a",
    "budget_b",
    "budget_c",
];

impl EntropyReport {
    /// Evaluate every functional of a kinetic snapshot, against `reference` when given.
    pub fn evaluate(
        f: &KineticState,
        reference: Option<&MacroState>,
        kernel: &Kernel,
        potential: &Potential,
        rho_floor: f64,
    ) -> Result<Self> {
        let m = moments(f, rho_floor);
        let mut r = EntropyReport {
            t: f.t,
            kinetic_entropy: kinetic_entropy(f, potential),
            d1: dissipation_d1(f, rho_floor),
            d2: dissipation_d2(f, kernel),
            macro_entropy: macro_entropy(&m.state, potential, rho_floor),
            jensen_gap: jensen_gap(f, potential, rho_floor).normalized(),
            maxwellian_gap: maxwellian_gap(f, rho_floor),
            alignment_dissipation: crate::alignment::alignment_dissipation_rate(&m.state, kernel, rho_floor),
            equilibrium_entropy: equilibrium_relative_entropy(f, potential),
            mass: f.mass(),
            momentum: f.momentum(),
            ..Default::default()
        };
        if let Some(u) = reference {
            r.rel_entropy = relative_entropy(&m.state, u, rho_floor)?;
            r.budget = budget_terms(f, u, kernel, rho_floor)?;
            r.rel_dissipation = r.budget.shifted_dissipation;
        }
        Ok(r)
    }

    pub fn csv_header() -> String {
        REPORT_COLUMNS.join(",")
    }

    pub fn csv_row(&self) -> String {
        [
            self.t,
            self.kinetic_entropy,
            self.d1,
            self.d2,
            self.macro_entropy,
            self.rel_entropy,
            self.rel_dissipation,
            self.jensen_gap,
            self.maxwellian_gap,
            self.budget.kinetic_approx,
            self.budget.coupling,
            self.budget.shifted_dissipation,
        ]
        .iter()
        .map(|v| format!("{v:.17e}"))
        .collect::<Vec<_>>()
        .join(",")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::KernelSpec;
    use crate::grid::{Boundary, PhaseGrid, SpaceGrid};
    use crate::model::{maxwellian, PotentialSpec};
    use approx::assert_abs_diff_eq;

    fn setup(nx: usize, nv: usize, v_max: f64) -> (PhaseGrid, Potential) {
        let s = SpaceGrid::new(0.0, 1.0, nx, Boundary::Periodic).unwrap();
        let p = Potential::new(PotentialSpec::None, &s).unwrap();
        (PhaseGrid::new(s, v_max, nv).unwrap(), p)
    }

    #[test]
    fn zero_state_functionals_vanish() {
        let (g, p) = setup(8, 32, 6.0);
        let k = Kernel::new(KernelSpec::Constant { k0: 1.0 }, &g.space).unwrap();
        let f = KineticState::zeros(g);
        assert_eq!(kinetic_entropy(&f, &p), 0.0);
        assert_eq!(dissipation_d1(&f, 1e-12), 0.0);
        assert_eq!(dissipation_d2(&f, &k), 0.0);
        assert_eq!(maxwellian_gap(&f, 1e-12), 0.0);
        assert_eq!(jensen_gap(&f, &p, 1e-12).normalized(), 0.0);
    }

    #[test]
    fn macro_entropy_simple_states() {
        let (g, p) = setup(16, 32, 6.0);
        let rest = MacroState::from_velocity(g.space.clone(), vec![1.0; 16], &[0.0; 16]).unwrap();
        assert_abs_diff_eq!(macro_entropy(&rest, &p, 1e-12), 0.0, epsilon = 1e-15);
        let moving = MacroState::from_velocity(g.space.clone(), vec![1.0; 16], &[1.0; 16]).unwrap();
        assert_abs_diff_eq!(macro_entropy(&moving, &p, 1e-12), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn relative_pressure_values() {
        assert_eq!(relative_pressure(1.7, 1.7), 0.0);
        assert_abs_diff_eq!(relative_pressure(std::f64::consts::E, 1.0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(relative_pressure(2.0, 1.0), 2.0 * 2f64.ln() - 1.0, epsilon = 1e-15);
        assert_eq!(relative_pressure(0.0, 0.3), 0.3);
    }

    #[test]
    fn relative_entropy_simple_cases() {
        let (g, _) = setup(10, 8, 6.0);
        let u = MacroState::from_velocity(g.space.clone(), vec![1.0; 10], &[0.1; 10]).unwrap();
        assert_eq!(relative_entropy(&u, &u, 1e-12).unwrap(), 0.0);
        let v = MacroState::from_velocity(g.space.clone(), vec![1.0; 10], &[0.3; 10]).unwrap();
        assert_abs_diff_eq!(relative_entropy(&v, &u, 1e-12).unwrap(), 0.02, epsilon = 1e-15);
        let flux = relative_flux(&v, &u, 1e-12).unwrap();
        assert_abs_diff_eq!(flux[0], 0.04, epsilon = 1e-15);
        let w = MacroState::from_velocity(g.space.clone(), vec![2.0; 10], &[0.6; 10]).unwrap();
        assert_abs_diff_eq!(relative_flux(&w, &u, 1e-12).unwrap()[3], 0.5, epsilon = 1e-15);
        let vac = MacroState::from_velocity(g.space.clone(), vec![0.0; 10], &[0.0; 10]).unwrap();
        assert!(matches!(relative_entropy(&u, &vac, 1e-12), Err(FlockError::Vacuum { .. })));
        let other = SpaceGrid::new(0.0, 1.0, 20, Boundary::Periodic).unwrap();
        let x = MacroState::from_velocity(other, vec![1.0; 20], &[0.0; 20]).unwrap();
        assert!(matches!(relative_entropy(&x, &u, 1e-12), Err(FlockError::GridMismatch(_))));
    }

    #[test]
    fn maxwellian_functionals() {
        let (g, p) = setup(4, 64, 8.0);
        let f = maxwellian(&g, &[1.0, 2.0, 0.5, 1.0], &[0.0, 0.3, -0.5, 1.0], 1e-10).unwrap();
        assert!(maxwellian_gap(&f, 1e-12) < 1e-14);
        assert!(dissipation_d1(&f, 1e-12) < 1e-4);
        let j = jensen_gap(&f, &p, 1e-12);
        assert_abs_diff_eq!(j.normalized(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn equilibrium_entropy_vanishes_at_the_global_equilibrium() {
        let s = SpaceGrid::new(-5.0, 5.0, 40, Boundary::Reflecting).unwrap();
        let p = Potential::new(PotentialSpec::Quadratic { a: 1.0 }, &s).unwrap();
        let g = PhaseGrid::new(s, 6.0, 48).unwrap();
        let f = KineticState::from_fn(g.clone(), |x, v| 2.0 * (-0.5 * x * x - 0.5 * v * v).exp());
        assert_abs_diff_eq!(equilibrium_relative_entropy(&f, &p), 0.0, epsilon = 1e-12);
        let h = KineticState::from_fn(g, |x, v| (-(x - 1.0).powi(2) - 0.5 * v * v).exp());
        assert!(equilibrium_relative_entropy(&h, &p) > 0.01);
    }

    #[test]
    fn d2_of_a_single_velocity_is_zero() {
        let (g, _) = setup(8, 64, 6.0);
        let k = Kernel::new(KernelSpec::Constant { k0: 1.0 }, &g.space).unwrap();
        let j0 = 40;
        let f = KineticState::from_fn(g.clone(), |_, v| if v == g.velocity(j0) { 1.0 / g.dv } else { 0.0 });
        assert!(dissipation_d2(&f, &k).abs() < 1e-12);
    }

    #[test]
    fn budget_vanishes_on_the_reference_itself() {
        let (g, _) = setup(16, 64, 8.0);
        let k = Kernel::new(KernelSpec::Gaussian { amplitude: 1.0, width: 0.2 }, &g.space).unwrap();
        let xs = g.space.centers();
        let rho: Vec<f64> = xs.iter().map(|x| 1.0 + 0.3 * (6.0 * x).sin()).collect();
        let u: Vec<f64> = xs.iter().map(|x| 0.5 * (6.0 * x).cos()).collect();
        let f = maxwellian(&g, &rho, &u, 1e-10).unwrap();
        let reference = moments(&f, 1e-12).state;
        let b = budget_terms(&f, &reference, &k, 1e-12).unwrap();
        assert!(b.kinetic_approx < 1e-9);
        assert_eq!(b.coupling, 0.0);
        assert_eq!(b.shifted_dissipation, 0.0);
        // same velocity, different density: shifted dissipation still zero
        let other = MacroState::from_velocity(g.space.clone(), vec![1.0; 16], &u).unwrap();
        let b = budget_terms(&f, &other, &k, 1e-12).unwrap();
        assert!(b.shifted_dissipation < 1e-20, "{}", b.shifted_dissipation);
    }

    #[test]
    fn report_row_has_every_column() {
        let r = EntropyReport::default();
        assert_eq!(r.csv_row().split(',').count(), REPORT_COLUMNS.len());
        assert!(EntropyReport::csv_header().starts_with("t,F,D1,D2,E,"));
    }
}
