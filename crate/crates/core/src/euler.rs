//! Isothermal Euler-flocking system in conservative form
//!
//! ```text
//! rho_t + P_x = 0
//! P_t + (P^2 / rho + rho)_x = rho (K P) - P (K rho) - rho phi'
//! ```
//!
//! discretised by a MUSCL finite-volume method with SSP-RK2 time stepping.
//! The nonlocal source is evaluated from cell averages inside every stage.

use serde::{Deserialize, Serialize};

use crate::alignment::{alignment_dissipation_rate, alignment_source, Kernel};
use crate::error::{FlockError, Result};
use crate::grid::{Boundary, SpaceGrid};
use crate::model::{MacroState, Potential};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NumericalFlux {
    Rusanov,
    Hll,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reconstruction {
    FirstOrder,
    Minmod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EulerScheme {
    pub flux: NumericalFlux,
    pub reconstruction: Reconstruction,
}

impl Default for EulerScheme {
    fn default() -> Self {
        Self {
            flux: NumericalFlux::Rusanov,
            reconstruction: Reconstruction::Minmod,
        }
    }
}

/// Physical flux `A(U) = (P, P^2 / rho + rho)`.
pub fn flux_a(rho: f64, p: f64, rho_floor: f64) -> Result<[f64; 2]> {
    if !(rho > rho_floor) {
        return Err(FlockError::Vacuum {
            cell: 0,
            rho,
            floor: rho_floor,
        });
    }
    Ok([p, p * p / rho + rho])
}

/// Source `F(U) = (0, rho (K P) - P (K rho) - rho phi')` on every cell.
pub fn source_f(state: &MacroState, kernel: &Kernel, potential: &Potential) -> Vec<[f64; 2]> {
    let s = alignment_source(state, kernel);
    s.iter()
        .zip(&state.rho)
        .zip(&potential.gradient)
        .map(|((s, r), g)| [0.0, s - r * g])
        .collect()
}

/// A trajectory of the Euler solver with the running integral of the
/// alignment dissipation, accumulated step by step with the trapezoid rule.
#[derive(Debug, Clone)]
pub struct EulerTrajectory {
    pub snapshots: Vec<MacroState>,
    pub dissipation_integral: Vec<f64>,
    pub steps: usize,
}

#[derive(Debug, Clone)]
pub struct EulerSolver {
    pub grid: SpaceGrid,
    pub kernel: Kernel,
    pub potential: Potential,
    pub rho_floor: f64,
    pub cfl: f64,
    pub scheme: EulerScheme,
    /// Optional blow-up heuristic: abort once `max |u_x|` exceeds this value.
    pub gradient_limit: Option<f64>,
}

#[inline]
fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

impl EulerSolver {
    pub fn new(
        grid: SpaceGrid,
        kernel: Kernel,
        potential: Potential,
        rho_floor: f64,
        cfl: f64,
        scheme: EulerScheme,
    ) -> Result<Self> {
        if kernel.nx != grid.nx || potential.values.len() != grid.nx {
            return Err(FlockError::GridMismatch(
                "kernel or potential was built on a different grid".into(),
            ));
        }
        if !(cfl > 0.0 && cfl <= 1.0) {
            return Err(FlockError::InvalidConfig(format!("cfl must lie in (0, 1], got {cfl}")));
        }
        Ok(Self {
            grid,
            kernel,
            potential,
            rho_floor,
            cfl,
            scheme,
            gradient_limit: None,
        })
    }

    pub fn stable_dt(&self, state: &MacroState) -> f64 {
        let speed = state
            .rho
            .iter()
            .zip(&state.p_mom)
            .map(|(r, p)| (p / r).abs() + 1.0)
            .fold(1.0, f64::max);
        self.cfl * self.grid.dx / speed
    }

    fn ghost(&self, state: &MacroState, idx: isize) -> (f64, f64) {
        let g = self.grid.ghost(idx);
        let (r, p) = (state.rho[g.cell], state.p_mom[g.cell]);
        if g.mirrored {
            (r, -p)
        } else {
            (r, p)
        }
    }

    fn check_vacuum(&self, state: &MacroState) -> Result<()> {
        for (i, r) in state.rho.iter().enumerate() {
            if !r.is_finite() || !state.p_mom[i].is_finite() {
                return Err(FlockError::NonFinite {
                    stage: "euler stage",
                    t: state.t,
                });
            }
            if !(*r > self.rho_floor) {
                return Err(FlockError::Vacuum {
                    cell: i,
                    rho: *r,
                    floor: self.rho_floor,
                });
            }
        }
        Ok(())
    }

    fn numerical_flux(&self, l: (f64, f64), r: (f64, f64)) -> Result<[f64; 2]> {
        let fl = flux_a(l.0, l.1, self.rho_floor)?;
        let fr = flux_a(r.0, r.1, self.rho_floor)?;
        let (ul, ur) = (l.1 / l.0, r.1 / r.0);
        Ok(match self.scheme.flux {
            NumericalFlux::Rusanov => {
                let s = (ul.abs() + 1.0).max(ur.abs() + 1.0);
                [
                    0.5 * (fl[0] + fr[0]) - 0.5 * s * (r.0 - l.0),
                    0.5 * (fl[1] + fr[1]) - 0.5 * s * (r.1 - l.1),
                ]
            }
            NumericalFlux::Hll => {
                let sl = (ul - 1.0).min(ur - 1.0);
                let sr = (ul + 1.0).max(ur + 1.0);
                if sl >= 0.0 {
                    fl
                } else if sr <= 0.0 {
                    fr
                } else {
                    let w = 1.0 / (sr - sl);
                    [
                        w * (sr * fl[0] - sl * fr[0] + sl * sr * (r.0 - l.0)),
                        w * (sr * fl[1] - sl * fr[1] + sl * sr * (r.1 - l.1)),
                    ]
                }
            }
        })
    }

    /// Semi-discrete right-hand side `-(F_{i+1/2} - F_{i-1/2}) / dx + S_i`.
    pub fn rhs(&self, state: &MacroState) -> Result<(Vec<f64>, Vec<f64>)> {
        let nx = self.grid.nx;
        let ext: Vec<(f64, f64)> = (-2..nx as isize + 2).map(|k| self.ghost(state, k)).collect();
        let second = self.scheme.reconstruction == Reconstruction::Minmod;
        let slope = |k: usize| -> (f64, f64) {
            if second {
                (
                    minmod(ext[k].0 - ext[k - 1].0, ext[k + 1].0 - ext[k].0),
                    minmod(ext[k].1 - ext[k - 1].1, ext[k + 1].1 - ext[k].1),
                )
            } else {
                (0.0, 0.0)
            }
        };
        let mut flux = Vec::with_capacity(nx + 1);
        for m in 0..=nx {
            let (a, b) = (m + 1, m + 2);
            let (sa, sb) = (slope(a), slope(b));
            let left = (ext[a].0 + 0.5 * sa.0, ext[a].1 + 0.5 * sa.1);
            let right = (ext[b].0 - 0.5 * sb.0, ext[b].1 - 0.5 * sb.1);
            flux.push(self.numerical_flux(left, right).map_err(|e| match e {
                FlockError::Vacuum { rho, floor, .. } => FlockError::Vacuum {
                    cell: m.min(nx - 1),
                    rho,
                    floor,
                },
                other => other,
            })?);
        }
        let src = source_f(state, &self.kernel, &self.potential);
        let dx = self.grid.dx;
        let drho = (0..nx).map(|i| -(flux[i + 1][0] - flux[i][0]) / dx + src[i][0]).collect();
        let dp = (0..nx).map(|i| -(flux[i + 1][1] - flux[i][1]) / dx + src[i][1]).collect();
        Ok((drho, dp))
    }

    /// One SSP-RK2 step.
    pub fn step(&self, state: &mut MacroState, dt: f64) -> Result<()> {
        let (r0, p0) = self.rhs(state)?;
        let mut s1 = state.clone();
        for i in 0..self.grid.nx {
            s1.rho[i] += dt * r0[i];
            s1.p_mom[i] += dt * p0[i];
        }
        s1.t += dt;
        self.check_vacuum(&s1)?;
        let (r1, p1) = self.rhs(&s1)?;
        for i in 0..self.grid.nx {
            state.rho[i] = 0.5 * (state.rho[i] + s1.rho[i] + dt * r1[i]);
            state.p_mom[i] = 0.5 * (state.p_mom[i] + s1.p_mom[i] + dt * p1[i]);
        }
        state.t += dt;
        self.check_vacuum(state)
    }

    fn max_velocity_gradient(&self, state: &MacroState) -> f64 {
        let u = state.velocity(self.rho_floor);
        let n = u.len();
        (0..n)
            .map(|i| {
                let ip = self.grid.ghost(i as isize + 1);
                let up = if ip.mirrored { -u[ip.cell] } else { u[ip.cell] };
                ((up - u[i]) / self.grid.dx).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Evolve to `t_target`, with snapshots at multiples of `snapshot_dt`.
    pub fn advance(&self, u0: &MacroState, t_target: f64, snapshot_dt: f64) -> Result<EulerTrajectory> {
        if !u0.grid.same_as(&self.grid) {
            return Err(FlockError::GridMismatch("initial state lives on another grid".into()));
        }
        if !(snapshot_dt > 0.0) {
            return Err(FlockError::InvalidConfig(format!("snapshot_dt must be positive, got {snapshot_dt}")));
        }
        self.check_vacuum(u0)?;
        let closed = self.grid.boundary != Boundary::CopyOut;
        let m0 = u0.mass();
        let t0 = u0.t;
        let mut u = u0.clone();
        let mut diss = alignment_dissipation_rate(&u, &self.kernel, self.rho_floor);
        let mut integral = 0.0;
        let mut traj = EulerTrajectory {
            snapshots: vec![u.clone()],
            dissipation_integral: vec![0.0],
            steps: 0,
        };
        let mut k = 1usize;
        while u.t < t_target - 1e-14 * t_target.abs().max(1.0) {
            let t_next = (t0 + k as f64 * snapshot_dt).min(t_target);
            let dt = self.stable_dt(&u).min(t_next - u.t);
            self.step(&mut u, dt)?;
            traj.steps += 1;
            let d_new = alignment_dissipation_rate(&u, &self.kernel, self.rho_floor);
            integral += 0.5 * dt * (diss + d_new);
            diss = d_new;
            if let Some(limit) = self.gradient_limit {
                let g = self.max_velocity_gradient(&u);
                if g > limit {
                    return Err(FlockError::BlowUp { t: u.t, value: g, limit });
                }
            }
            if t_next - u.t <= 1e-13 * t_next.abs().max(1.0) {
                u.t = t_next;
                if closed {
                    let drift = (u.mass() - m0).abs() / m0;
                    if drift > crate::kinetic::MASS_DRIFT_TOL {
                        return Err(FlockError::MassDrift {
                            t: u.t,
                            drift,
                            limit: crate::kinetic::MASS_DRIFT_TOL,
                        });
                    }
                }
                traj.snapshots.push(u.clone());
                traj.dissipation_integral.push(integral);
                k += 1;
            }
        }
        Ok(traj)
    }

    /// L1 norm of the momentum-equation residual of the scheme at `state`.
    pub fn momentum_residual_l1(&self, state: &MacroState) -> Result<f64> {
        let (_, dp) = self.rhs(state)?;
        Ok(dp.iter().map(|v| v.abs()).sum::<f64>() * self.grid.dx)
    }
}

/// Symmetrizer diagnostics at one state `w = (rho, u)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetrizerReport {
    /// `max |(A0 Df) - (A0 Df)^T|` with the Jacobian from central differences.
    pub asymmetry: f64,
    /// Smallest `c0` with `c0^{-1} I <= A0 <= c0 I`.
    pub c0: f64,
}

/// Smooth-form flux `f(w) = (rho u, u^2 + log rho)`, `w = (rho, u)`.
fn smooth_flux(w: [f64; 2]) -> [f64; 2] {
    [w[0] * w[1], w[1] * w[1] + w[0].ln()]
}

fn fd_jacobian(f: impl Fn([f64; 2]) -> [f64; 2], w: [f64; 2]) -> [[f64; 2]; 2] {
    let mut jac = [[0.0; 2]; 2];
    for c in 0..2 {
        let h = 1e-6 * w[c].abs().max(1.0);
        let (mut wp, mut wm) = (w, w);
        wp[c] += h;
        wm[c] -= h;
        let (fp, fm) = (f(wp), f(wm));
        for r in 0..2 {
            jac[r][c] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    jac
}

fn fd_gradient(f: impl Fn([f64; 2]) -> f64, w: [f64; 2]) -> [f64; 2] {
    let mut g = [0.0; 2];
    for c in 0..2 {
        let h = 1e-6 * w[c].abs().max(1.0);
        let (mut wp, mut wm) = (w, w);
        wp[c] += h;
        wm[c] -= h;
        g[c] = (f(wp) - f(wm)) / (2.0 * h);
    }
    g
}

/// Check that `A0(w) = diag(1/rho, rho)` symmetrises the Jacobian of the smooth-form flux.
pub fn symmetrizer_check(rho: f64, u: f64) -> Result<SymmetrizerReport> {
    if !(rho > 0.0) {
        return Err(FlockError::Vacuum {
            cell: 0,
            rho,
            floor: 0.0,
        });
    }
    let jac = fd_jacobian(smooth_flux, [rho, u]);
    let a0 = [1.0 / rho, rho];
    let mut sym = [[0.0; 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            sym[r][c] = a0[r] * jac[r][c];
        }
    }
    Ok(SymmetrizerReport {
        asymmetry: (sym[0][1] - sym[1][0]).abs(),
        c0: rho.max(1.0 / rho),
    })
}

/// Entropy `E(U) = P^2 / (2 rho) + rho log rho + rho phi` at one cell.
pub fn cell_entropy(rho: f64, p: f64, phi: f64) -> f64 {
    p * p / (2.0 * rho) + rho * rho.ln() + rho * phi
}

/// Closed-form entropy flux `Q(U) = u (E(U) + rho)`.
pub fn cell_entropy_flux(rho: f64, p: f64, phi: f64) -> f64 {
    p / rho * (cell_entropy(rho, p, phi) + rho)
}

/// Largest residual of `dQ/dU_j = sum_k dA_k/dU_j dE/dU_k`, all derivatives by central differences.
pub fn entropy_flux_check(rho: f64, p: f64, phi: f64) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(FlockError::Vacuum {
            cell: 0,
            rho,
            floor: 0.0,
        });
    }
    let w = [rho, p];
    let dq = fd_gradient(|w| cell_entropy_flux(w[0], w[1], phi), w);
    let de = fd_gradient(|w| cell_entropy(w[0], w[1], phi), w);
    let da = fd_jacobian(|w| [w[1], w[1] * w[1] / w[0] + w[0]], w);
    Ok((0..2)
        .map(|j| (dq[j] - (da[0][j] * de[0] + da[1][j] * de[1])).abs())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::KernelSpec;
    use crate::model::{stationary_profile, PotentialSpec};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn flux_definition() {
        assert_eq!(flux_a(1.0, 0.0, 1e-12).unwrap(), [0.0, 1.0]);
        assert_eq!(flux_a(2.0, 2.0, 1e-12).unwrap(), [2.0, 4.0]);
        assert!(matches!(flux_a(0.0, 0.0, 1e-12), Err(FlockError::Vacuum { .. })));
    }

    #[test]
    fn source_cases() {
        let g = SpaceGrid::new(0.0, 1.0, 64, Boundary::Periodic).unwrap();
        let k = Kernel::new(KernelSpec::Gaussian { amplitude: 1.0, width: 0.3 }, &g).unwrap();
        let none = Potential::new(PotentialSpec::None, &g).unwrap();
        let u = MacroState::from_velocity(g.clone(), vec![1.3; 64], &[0.4; 64]).unwrap();
        assert!(source_f(&u, &k, &none).iter().all(|s| s[0] == 0.0 && s[1].abs() < 1e-14));
    }

    #[test]
    fn stationary_profile_source_balances_confinement() {
        let g = SpaceGrid::new(-5.0, 5.0, 100, Boundary::Reflecting).unwrap();
        let k = Kernel::new(KernelSpec::Gaussian { amplitude: 1.0, width: 1.0 }, &g).unwrap();
        let phi = Potential::new(PotentialSpec::Quadratic { a: 1.0 }, &g).unwrap();
        let st = stationary_profile(&phi, &g, 1.0).unwrap();
        for (i, s) in source_f(&st, &k, &phi).iter().enumerate() {
            assert_eq!(s[0], 0.0);
            assert_abs_diff_eq!(s[1], -st.rho[i] * phi.gradient[i], epsilon = 1e-15);
        }
    }

    fn periodic_solver(nx: usize, scheme: EulerScheme) -> EulerSolver {
        let g = SpaceGrid::new(0.0, 1.0, nx, Boundary::Periodic).unwrap();
        let k = Kernel::new(KernelSpec::Gaussian { amplitude: 1.0, width: 0.2 }, &g).unwrap();
        let p = Potential::new(PotentialSpec::None, &g).unwrap();
        EulerSolver::new(g, k, p, 1e-12, 0.4, scheme).unwrap()
    }

    #[test]
    fn constant_state_is_a_fixed_point() {
        for flux in [NumericalFlux::Rusanov, NumericalFlux::Hll] {
            let s = periodic_solver(32, EulerScheme { flux, reconstruction: Reconstruction::Minmod });
            let u0 = MacroState::from_velocity(s.grid.clone(), vec![1.7; 32], &[-0.3; 32]).unwrap();
            let traj = s.advance(&u0, 0.3, 0.1).unwrap();
            let last = traj.snapshots.last().unwrap();
            for i in 0..32 {
                assert_abs_diff_eq!(last.rho[i], 1.7, epsilon = 1e-13);
                assert_abs_diff_eq!(last.p_mom[i], -0.51, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn smooth_run_conserves_mass_and_momentum() {
        let s = periodic_solver(128, EulerScheme::default());
        let xs = s.grid.centers();
        let rho: Vec<f64> = xs.iter().map(|x| 1.0 + 0.3 * (2.0 * PI * x).sin()).collect();
        let u: Vec<f64> = xs.iter().map(|x| 0.2 * (2.0 * PI * x).cos()).collect();
        let u0 = MacroState::from_velocity(s.grid.clone(), rho, &u).unwrap();
        let traj = s.advance(&u0, 0.2, 0.05).unwrap();
        let last = traj.snapshots.last().unwrap();
        assert!((last.mass() - u0.mass()).abs() < 1e-13);
        assert!((last.momentum() - u0.momentum()).abs() < 1e-13);
        assert!(traj.dissipation_integral.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn vacuum_initial_data_is_rejected() {
        let s = periodic_solver(16, EulerScheme::default());
        let mut rho = vec![1.0; 16];
        rho[3] = 0.0;
        let u0 = MacroState::from_velocity(s.grid.clone(), rho, &[0.0; 16]).unwrap();
        assert!(matches!(s.advance(&u0, 0.1, 0.1), Err(FlockError::Vacuum { cell: 3, .. })));
    }

    #[test]
    fn symmetrizer_at_rest_state() {
        let r = symmetrizer_check(1.0, 0.0).unwrap();
        assert!(r.asymmetry <= 1e-6);
        assert_eq!(r.c0, 1.0);
        assert!(symmetrizer_check(2.0, 1.0).unwrap().asymmetry <= 1e-6);
        assert!(symmetrizer_check(0.0, 1.0).is_err());
    }

    #[test]
    fn entropy_flux_pair() {
        assert!(entropy_flux_check(1.0, 0.0, 0.0).unwrap() <= 1e-6);
        assert!(entropy_flux_check(1.0, 1.0, 0.0).unwrap() <= 1e-6);
        let a = entropy_flux_check(1.3, -0.4, 0.0).unwrap();
        let b = entropy_flux_check(1.3, -0.4, 5.0).unwrap();
        assert!(a <= 1e-6 && b <= 1e-6);
        assert!(entropy_flux_check(-1.0, 0.0, 0.0).is_err());
    }
}
