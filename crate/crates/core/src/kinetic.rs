//! Finite-volume integration of the scaled kinetic flocking equation
//!
//! ```text
//! f_t + v f_x + (f (a - b v - phi'))_v = (1/eps) (f_v + (v - u) f)_v
//! ```
//!
//! by operator splitting: free transport in `x`, the alignment and confinement
//! force in `v`, and the stiff local Fokker-Planck relaxation, which is treated
//! implicitly so the time step never depends on `eps`.

use serde::{Deserialize, Serialize};

use crate::alignment::{cs_coefficients, Kernel};
use crate::error::{FlockError, Result};
use crate::grid::PhaseGrid;
use crate::model::{column_moments, discrete_maxwellian, KineticState, Potential};

/// Relative mass drift tolerated between snapshots of a closed domain.
pub const MASS_DRIFT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Splitting {
    Lie,
    Strang,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpatialOrder {
    First,
    /// MUSCL reconstruction with the minmod limiter and SSP-RK2 in time.
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LocalStep {
    /// Backward Euler with exponentially fitted (Chang-Cooper) fluxes.
    ChangCooper,
    /// Exponential relaxation of the deviation from the discrete equilibrium.
    ExactProjection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KineticScheme {
    pub splitting: Splitting,
    pub transport: SpatialOrder,
    pub local_step: LocalStep,
}

impl Default for KineticScheme {
    fn default() -> Self {
        Self {
            splitting: Splitting::Strang,
            transport: SpatialOrder::Second,
            local_step: LocalStep::ChangCooper,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KineticSolver {
    pub grid: PhaseGrid,
    pub kernel: Kernel,
    pub potential: Potential,
    /// Relaxation scale; `f64::INFINITY` switches the local term off.
    pub epsilon: f64,
    pub rho_floor: f64,
    pub cfl_hyp: f64,
    pub cfl_force: f64,
    pub scheme: KineticScheme,
    vs: Vec<f64>,
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

impl KineticSolver {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        grid: PhaseGrid,
        kernel: Kernel,
        potential: Potential,
        epsilon: f64,
        rho_floor: f64,
        cfl_hyp: f64,
        cfl_force: f64,
        scheme: KineticScheme,
    ) -> Result<Self> {
        if kernel.nx != grid.nx() || potential.values.len() != grid.nx() {
            return Err(FlockError::GridMismatch(
                "kernel or potential was built on a different grid".into(),
            ));
        }
        if !(epsilon > 0.0) {
            return Err(FlockError::InvalidConfig(format!("epsilon must be positive, got {epsilon}")));
        }
        for (name, c) in [("cfl_hyp", cfl_hyp), ("cfl_force", cfl_force)] {
            if !(c > 0.0 && c <= 1.0) {
                return Err(FlockError::InvalidConfig(format!("{name} must lie in (0, 1], got {c}")));
            }
        }
        if !(rho_floor > 0.0) {
            return Err(FlockError::InvalidConfig(format!("rho_floor must be positive, got {rho_floor}")));
        }
        let vs = grid.velocities();
        Ok(Self {
            grid,
            kernel,
            potential,
            epsilon,
            rho_floor,
            cfl_hyp,
            cfl_force,
            scheme,
            vs,
        })
    }

    fn column_moments_all(&self, f: &[f64]) -> (Vec<f64>, Vec<f64>) {
        f.chunks_exact(self.grid.nv)
            .map(|c| column_moments(c, &self.vs, self.grid.dv))
            .unzip()
    }

    /// Largest |acceleration| over all cells and velocity faces for the current state.
    pub fn max_force(&self, f: &KineticState) -> f64 {
        let (rho, mom) = self.column_moments_all(&f.f);
        let field = cs_coefficients(&self.kernel, &rho, &mom);
        let vm = self.grid.v_max;
        (0..self.grid.nx())
            .map(|i| {
                let g = self.potential.gradient[i];
                (field.eval(i, vm) - g).abs().max((field.eval(i, -vm) - g).abs())
            })
            .fold(0.0, f64::max)
    }

    /// Time step allowed by the transport and force CFL conditions.
    pub fn stable_dt(&self, f: &KineticState) -> f64 {
        let dt_x = self.cfl_hyp * self.grid.dx() / self.grid.v_max;
        let force = self.max_force(f);
        let dt_v = if force > 0.0 {
            self.cfl_force * self.grid.dv / force
        } else {
            f64::INFINITY
        };
        dt_x.min(dt_v)
    }

    /// Free transport `f_t + v f_x = 0`, conservative upwind in `x` at every velocity.
    pub fn step_transport(&self, f: &mut KineticState, dt: f64) -> Result<()> {
        let courant = dt * self.grid.v_max / self.grid.dx();
        if courant > 1.0 {
            return Err(FlockError::Cfl {
                stage: "transport",
                courant,
                limit: 1.0,
            });
        }
        match self.scheme.transport {
            SpatialOrder::First => {
                let mut out = vec![0.0; f.f.len()];
                self.transport_euler(&f.f, dt, &mut out);
                f.f = out;
            }
            SpatialOrder::Second => {
                let mut f1 = vec![0.0; f.f.len()];
                self.transport_euler(&f.f, dt, &mut f1);
                let mut f2 = vec![0.0; f.f.len()];
                self.transport_euler(&f1, dt, &mut f2);
                for (o, b) in f.f.iter_mut().zip(&f2) {
                    *o = 0.5 * (*o + b);
                }
            }
        }
        Ok(())
    }

    fn transport_euler(&self, f: &[f64], dt: f64, out: &mut [f64]) {
        let nx = self.grid.nx();
        let nv = self.grid.nv;
        let space = &self.grid.space;
        let second = self.scheme.transport == SpatialOrder::Second;
        let lambda = dt / self.grid.dx();
        let mut ext = vec![0.0; nx + 4];
        let mut flux = vec![0.0; nx + 1];
        for j in 0..nv {
            let v = self.vs[j];
            for (k, e) in ext.iter_mut().enumerate() {
                let g = space.ghost(k as isize - 2);
                let row = if g.mirrored { self.grid.mirror_velocity(j) } else { j };
                *e = f[g.cell * nv + row];
            }
            let slope = |k: usize| -> f64 {
                if second {
                    minmod(ext[k] - ext[k - 1], ext[k + 1] - ext[k])
                } else {
                    0.0
                }
            };
            // face m sits between cells m-1 and m; extended index of cell i is i+2
            for (m, fl) in flux.iter_mut().enumerate() {
                let left = m + 1;
                let right = m + 2;
                *fl = if v > 0.0 {
                    v * (ext[left] + 0.5 * slope(left))
                } else {
                    v * (ext[right] - 0.5 * slope(right))
                };
            }
            for i in 0..nx {
                out[i * nv + j] = f[i * nv + j] - lambda * (flux[i + 1] - flux[i]);
            }
        }
    }

    /// Velocity advection by the alignment force `a - b v` and the confinement force `-phi'`.
    pub fn step_field(&self, f: &mut KineticState, dt: f64) -> Result<()> {
        let courant = dt * self.max_force(f) / self.grid.dv;
        if courant > 1.0 {
            return Err(FlockError::Cfl {
                stage: "field",
                courant,
                limit: 1.0,
            });
        }
        if self.kernel.is_zero() && self.potential.is_zero() {
            return Ok(());
        }
        let mut f1 = vec![0.0; f.f.len()];
        self.field_euler(&f.f, dt, &mut f1);
        match self.scheme.transport {
            SpatialOrder::First => f.f = f1,
            SpatialOrder::Second => {
                let mut f2 = vec![0.0; f.f.len()];
                self.field_euler(&f1, dt, &mut f2);
                for (o, b) in f.f.iter_mut().zip(&f2) {
                    *o = 0.5 * (*o + b);
                }
            }
        }
        Ok(())
    }

    fn field_euler(&self, f: &[f64], dt: f64, out: &mut [f64]) {
        let nv = self.grid.nv;
        let dv = self.grid.dv;
        let second = self.scheme.transport == SpatialOrder::Second;
        let (rho, mom) = self.column_moments_all(f);
        let field = cs_coefficients(&self.kernel, &rho, &mom);
        let mut flux = vec![0.0; nv + 1];
        for i in 0..self.grid.nx() {
            let col = &f[i * nv..(i + 1) * nv];
            let grad = self.potential.gradient[i];
            let slope = |j: usize| -> f64 {
                if second && j > 0 && j + 1 < nv {
                    minmod(col[j] - col[j - 1], col[j + 1] - col[j])
                } else {
                    0.0
                }
            };
            for k in 1..nv {
                let acc = field.eval(i, self.grid.velocity_face(k)) - grad;
                flux[k] = if acc > 0.0 {
                    acc * (col[k - 1] + 0.5 * slope(k - 1))
                } else {
                    acc * (col[k] - 0.5 * slope(k))
                };
            }
            let dst = &mut out[i * nv..(i + 1) * nv];
            for j in 0..nv {
                dst[j] = col[j] - dt / dv * (flux[j + 1] - flux[j]);
            }
            // The column must gain exactly dt (a rho - b j - phi' rho) of momentum;
            // with a symmetric kernel this cancels across columns.
            let target = mom[i] + dt * (field.a[i] * rho[i] - field.b[i] * mom[i] - grad * rho[i]);
            restore_momentum(dst, &self.vs, dv, target);
        }
    }

    /// Stiff local relaxation `(1/eps) (f_v + (v - u) f)_v` with `u` frozen at the
    /// column's pre-step mean velocity. Density and momentum of every column are
    /// preserved.
    pub fn step_local_fp(&self, f: &mut KineticState, dt: f64, epsilon: f64) -> Result<()> {
        if !epsilon.is_finite() {
            return Ok(());
        }
        let tau = dt / epsilon;
        let nv = self.grid.nv;
        let dv = self.grid.dv;
        let mut lower = vec![0.0; nv];
        let mut diag = vec![0.0; nv];
        let mut upper = vec![0.0; nv];
        let mut rhs = vec![0.0; nv];
        for col in f.f.chunks_exact_mut(nv) {
            let (rho, mom) = column_moments(col, &self.vs, dv);
            if rho <= self.rho_floor {
                continue;
            }
            match self.scheme.local_step {
                LocalStep::ExactProjection => {
                    let (eq, _) = discrete_maxwellian(&self.grid, rho, mom, self.rho_floor);
                    let w = (-tau).exp();
                    for (c, m) in col.iter_mut().zip(&eq) {
                        *c = m + w * (*c - m);
                    }
                }
                LocalStep::ChangCooper => {
                    // Solve for the deviation from the fitted equilibrium, which lies in
                    // the kernel of the fitted operator; this keeps the solve accurate
                    // when dt / eps is huge.
                    let (eq, shift) = discrete_maxwellian(&self.grid, rho, mom, self.rho_floor);
                    let c = tau / (dv * dv);
                    diag.iter_mut().for_each(|d| *d = 1.0);
                    lower.iter_mut().for_each(|d| *d = 0.0);
                    upper.iter_mut().for_each(|d| *d = 0.0);
                    for k in 1..nv {
                        // face between cells k-1 and k
                        let half = 0.5 * dv * (self.grid.velocity_face(k) - shift);
                        let (ep, em) = (half.exp(), (-half).exp());
                        diag[k - 1] += c * em;
                        upper[k - 1] = -c * ep;
                        diag[k] += c * ep;
                        lower[k] = -c * em;
                    }
                    for ((r, c), e) in rhs.iter_mut().zip(col.iter()).zip(&eq) {
                        *r = c - e;
                    }
                    solve_tridiagonal(&lower, &diag, &upper, &mut rhs);
                    for ((c, r), e) in col.iter_mut().zip(&rhs).zip(&eq) {
                        *c = (e + r).max(0.0);
                    }
                    restore_momentum(col, &self.vs, dv, mom);
                }
            }
        }
        Ok(())
    }

    fn check(&self, f: &KineticState, stage: &'static str) -> Result<()> {
        let mut min = f64::INFINITY;
        for v in &f.f {
            if !v.is_finite() {
                return Err(FlockError::NonFinite { stage, t: f.t });
            }
            min = min.min(*v);
        }
        if min < 0.0 {
            return Err(FlockError::Negative {
                stage,
                t: f.t,
                value: min,
            });
        }
        Ok(())
    }

    /// One split time step of length `dt`.
    pub fn step(&self, f: &mut KineticState, dt: f64) -> Result<()> {
        let eps = self.epsilon;
        match self.scheme.splitting {
            Splitting::Lie => {
                self.step_transport(f, dt)?;
                self.check(f, "transport")?;
                self.step_field(f, dt)?;
                self.check(f, "field")?;
                self.step_local_fp(f, dt, eps)?;
                self.check(f, "local relaxation")?;
            }
            Splitting::Strang => {
                self.step_local_fp(f, 0.5 * dt, eps)?;
                self.check(f, "local relaxation")?;
                self.step_field(f, 0.5 * dt)?;
                self.check(f, "field")?;
                self.step_transport(f, dt)?;
                self.check(f, "transport")?;
                self.step_field(f, 0.5 * dt)?;
                self.check(f, "field")?;
                self.step_local_fp(f, 0.5 * dt, eps)?;
                self.check(f, "local relaxation")?;
            }
        }
        f.t += dt;
        Ok(())
    }

    /// Integrate from `f0.t` to `t_target`, returning snapshots at every multiple
    /// of `snapshot_dt` (and at `t_target`).
    pub fn advance(&self, f0: &KineticState, t_target: f64, snapshot_dt: f64) -> Result<Vec<KineticState>> {
        self.advance_with(f0, t_target, snapshot_dt, |_| Ok(()))
    }

    /// As [`advance`](Self::advance), calling `observer` on every snapshot as it is produced.
    pub fn advance_with(
        &self,
        f0: &KineticState,
        t_target: f64,
        snapshot_dt: f64,
        mut observer: impl FnMut(&KineticState) -> Result<()>,
    ) -> Result<Vec<KineticState>> {
        if f0.grid != self.grid {
            return Err(FlockError::GridMismatch("initial state lives on another grid".into()));
        }
        if !(snapshot_dt > 0.0) {
            return Err(FlockError::InvalidConfig(format!("snapshot_dt must be positive, got {snapshot_dt}")));
        }
        self.check(f0, "initial data")?;
        let closed = self.grid.space.boundary != crate::grid::Boundary::CopyOut;
        let m0 = f0.mass();
        let t0 = f0.t;
        let mut f = f0.clone();
        observer(&f)?;
        let mut snaps = vec![f.clone()];
        let mut k = 1usize;
        while f.t < t_target - 1e-14 * t_target.abs().max(1.0) {
            let t_next = (t0 + k as f64 * snapshot_dt).min(t_target);
            let dt = self.stable_dt(&f).min(t_next - f.t);
            self.step(&mut f, dt)?;
            if t_next - f.t <= 1e-13 * t_next.abs().max(1.0) {
                f.t = t_next;
                if closed && m0 > 0.0 {
                    let drift = (f.mass() - m0).abs() / m0;
                    if drift > MASS_DRIFT_TOL {
                        return Err(FlockError::MassDrift {
                            t: f.t,
                            drift,
                            limit: MASS_DRIFT_TOL,
                        });
                    }
                }
                observer(&f)?;
                snaps.push(f.clone());
                k += 1;
            }
        }
        Ok(snaps)
    }
}

/// Adjust a nonnegative column so its momentum equals `target` without touching
/// its mass, by adding a multiple of `(v - mean) f`.
fn restore_momentum(col: &mut [f64], vs: &[f64], dv: f64, target: f64) {
    let (rho, mom) = column_moments(col, vs, dv);
    if !(rho > 0.0) {
        return;
    }
    let mean = mom / rho;
    let var: f64 = col.iter().zip(vs).map(|(f, v)| f * (v - mean) * (v - mean)).sum::<f64>() * dv;
    if !(var > 0.0) {
        return;
    }
    let coef = (target - mom) / var;
    let spread = vs.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
    if coef.abs() * spread >= 0.5 {
        log::warn!("momentum restoration skipped: correction {coef:.3e} too large for positivity");
        return;
    }
    for (f, v) in col.iter_mut().zip(vs) {
        *f *= 1.0 + coef * (v - mean);
    }
}

/// Thomas algorithm; `lower[0]` and `upper[n-1]` are ignored. Solution overwrites `rhs`.
fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64]) {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut beta = diag[0];
    c[0] = upper[0] / beta;
    rhs[0] /= beta;
    for k in 1..n {
        beta = diag[k] - lower[k] * c[k - 1];
        c[k] = upper[k] / beta;
        rhs[k] = (rhs[k] - lower[k] * rhs[k - 1]) / beta;
    }
    for k in (0..n - 1).rev() {
        rhs[k] -= c[k] * rhs[k + 1];
    }
}
