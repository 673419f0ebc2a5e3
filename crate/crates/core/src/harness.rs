//! Experiment orchestration: configuration, kinetic runs against the Euler
//! reference, epsilon sweeps, rate fitting, the inequality ledger and CSV output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alignment::{load_kernel_csv, Kernel, KernelSpec};
use crate::entropy::{
    jensen_gap, macro_entropy, relative_entropy, relative_flux, relative_pressure, EntropyReport,
};
use crate::error::{FlockError, Result};
use crate::euler::{
    entropy_flux_check, symmetrizer_check, EulerScheme, EulerSolver, EulerTrajectory, NumericalFlux,
    Reconstruction,
};
use crate::grid::{Boundary, PhaseGrid, SpaceGrid};
use crate::kinetic::{KineticScheme, KineticSolver, LocalStep, SpatialOrder, Splitting};
use crate::model::{maxwellian, moments, KineticState, MacroState, Potential, PotentialSpec};

/// A scalar profile on the position interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Profile {
    Constant {
        value: f64,
    },
    /// `amplitude * exp(-(x - center)^2 / (2 width^2)) * (1 + modulation * cos(wavenumber * x))`
    Gaussian {
        amplitude: f64,
        center: f64,
        width: f64,
        #[serde(default)]
        modulation: f64,
        #[serde(default)]
        wavenumber: f64,
    },
    /// `amplitude * sin(wavenumber * x + phase)`
    Sine {
        amplitude: f64,
        wavenumber: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Cell values on the kinetic grid; repeated piecewise-constantly on finer grids.
    Table { values: Vec<f64> },
}

impl Profile {
    pub fn sample(&self, grid: &SpaceGrid) -> Result<Vec<f64>> {
        let xs = grid.centers();
        Ok(match self {
            Profile::Constant { value } => vec![*value; grid.nx],
            Profile::Gaussian {
                amplitude,
                center,
                width,
                modulation,
                wavenumber,
            } => xs
                .iter()
                .map(|x| {
                    let d = (x - center) / width;
                    amplitude * (-0.5 * d * d).exp() * (1.0 + modulation * (wavenumber * x).cos())
                })
                .collect(),
            Profile::Sine {
                amplitude,
                wavenumber,
                phase,
            } => xs.iter().map(|x| amplitude * (wavenumber * x + phase).sin()).collect(),
            Profile::Table { values } => prolong(values, grid.nx)?,
        })
    }
}

fn prolong(values: &[f64], n: usize) -> Result<Vec<f64>> {
    if values.is_empty() || !n.is_multiple_of(values.len()) {
        return Err(FlockError::GridMismatch(format!(
            "table of {} values does not divide a grid of {n} cells",
            values.len()
        )));
    }
    let k = n / values.len();
    Ok(values.iter().flat_map(|v| std::iter::repeat_n(*v, k)).collect())
}

fn prolong_matrix(values: &[f64], n: usize) -> Result<Vec<f64>> {
    let m = (values.len() as f64).sqrt().round() as usize;
    if m * m != values.len() || m == 0 || !n.is_multiple_of(m) {
        return Err(FlockError::GridMismatch(format!(
            "kernel table of {} entries does not fit a grid of {n} cells",
            values.len()
        )));
    }
    let k = n / m;
    Ok((0..n * n).map(|idx| values[(idx / n / k) * m + (idx % n) / k]).collect())
}

fn d_epsilon() -> f64 {
    0.05
}
fn d_rho_floor() -> f64 {
    1e-12
}
fn d_tail_tol() -> f64 {
    1e-6
}
fn d_cfl() -> f64 {
    0.5
}
fn d_t_final() -> f64 {
    0.5
}
fn d_snapshot_dt() -> f64 {
    0.05
}
fn d_factor() -> usize {
    2
}
fn d_gradient_limit() -> f64 {
    50.0
}

/// Physical and numerical parameters shared by every run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "d_epsilon")]
    pub epsilon: f64,
    #[serde(default = "d_rho_floor")]
    pub rho_floor: f64,
    #[serde(default = "d_tail_tol")]
    pub tail_tol: f64,
    #[serde(default = "d_cfl")]
    pub cfl_hyp: f64,
    #[serde(default = "d_cfl")]
    pub cfl_force: f64,
    #[serde(default = "d_t_final")]
    pub t_final: f64,
    #[serde(default = "d_snapshot_dt")]
    pub snapshot_dt: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            epsilon: d_epsilon(),
            rho_floor: d_rho_floor(),
            tail_tol: d_tail_tol(),
            cfl_hyp: d_cfl(),
            cfl_force: d_cfl(),
            t_final: d_t_final(),
            snapshot_dt: d_snapshot_dt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub nv: usize,
    pub v_max: f64,
    pub boundary: Boundary,
    /// Euler reference resolution as a multiple of `nx`.
    #[serde(default = "d_factor")]
    pub reference_factor: usize,
}

/// Well-prepared initial data `f0 = maxwellian(rho0, u0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialData {
    pub rho: Profile,
    pub u: Profile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    pub splitting: Splitting,
    pub transport: SpatialOrder,
    pub local_step: LocalStep,
    pub euler_flux: NumericalFlux,
    pub euler_reconstruction: Reconstruction,
    pub euler_cfl: f64,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        let k = KineticScheme::default();
        let e = EulerScheme::default();
        Self {
            splitting: k.splitting,
            transport: k.transport,
            local_step: k.local_step,
            euler_flux: e.flux,
            euler_reconstruction: e.reconstruction,
            euler_cfl: d_cfl(),
        }
    }
}

impl SchemeConfig {
    pub fn kinetic(&self) -> KineticScheme {
        KineticScheme {
            splitting: self.splitting,
            transport: self.transport,
            local_step: self.local_step,
        }
    }

    pub fn euler(&self) -> EulerScheme {
        EulerScheme {
            flux: self.euler_flux,
            reconstruction: self.euler_reconstruction,
        }
    }

    /// Apply comma-separated overrides such as `lie,first-order,exact-projection,hll`.
    pub fn apply_overrides(&mut self, spec: &str) -> Result<()> {
        for token in spec.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            match token {
                "strang" => self.splitting = Splitting::Strang,
                "lie" => self.splitting = Splitting::Lie,
                "first-order" | "first" => {
                    self.transport = SpatialOrder::First;
                    self.euler_reconstruction = Reconstruction::FirstOrder;
                }
                "second-order" | "second" | "minmod" => {
                    self.transport = SpatialOrder::Second;
                    self.euler_reconstruction = Reconstruction::Minmod;
                }
                "chang-cooper" => self.local_step = LocalStep::ChangCooper,
                "exact-projection" => self.local_step = LocalStep::ExactProjection,
                "rusanov" => self.euler_flux = NumericalFlux::Rusanov,
                "hll" => self.euler_flux = NumericalFlux::Hll,
                other => return Err(FlockError::Parse(format!("unknown scheme option `{other}`"))),
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub epsilon_list: Vec<f64>,
    /// Seed of the randomized property checks.
    #[serde(default)]
    pub seed: u64,
    /// Abort once the reference velocity gradient exceeds this bound.
    #[serde(default = "d_gradient_limit")]
    pub gradient_limit: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            epsilon_list: vec![0.1, 0.05, 0.025, 0.0125],
            seed: 0,
            gradient_limit: d_gradient_limit(),
        }
    }
}

/// Complete description of an experiment, read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Optional CSV file with the kernel matrix; overrides `[kernel]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_file: Option<PathBuf>,
    #[serde(default)]
    pub model: ModelConfig,
    pub grids: GridConfig,
    pub kernel: KernelSpec,
    pub potential: PotentialSpec,
    pub initial: InitialData,
    #[serde(default)]
    pub scheme: SchemeConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
}

impl ExperimentConfig {
    /// The shipped demonstration setup: harmonic confinement, Gaussian kernel,
    /// a modulated Gaussian density and a sine velocity between reflecting walls.
    pub fn demo() -> Self {
        Self {
            kernel_file: None,
            model: ModelConfig::default(),
            grids: GridConfig {
                x_min: -4.0,
                x_max: 4.0,
                nx: 128,
                nv: 64,
                v_max: 6.0,
                boundary: Boundary::Reflecting,
                reference_factor: 2,
            },
            kernel: KernelSpec::Gaussian {
                amplitude: 1.0,
                width: 1.0,
            },
            potential: PotentialSpec::Quadratic { a: 1.0 },
            initial: InitialData {
                rho: Profile::Gaussian {
                    amplitude: 0.35,
                    center: 0.0,
                    width: 1.0,
                    modulation: 0.2,
                    wavenumber: 1.0,
                },
                u: Profile::Sine {
                    amplitude: 0.3,
                    wavenumber: std::f64::consts::FRAC_PI_4,
                    phase: 0.0,
                },
            },
            scheme: SchemeConfig::default(),
            sweep: SweepConfig {
                seed: 20240611,
                ..Default::default()
            },
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| FlockError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_toml_str(&fs::read_to_string(path)?)?;
        if let Some(k) = &cfg.kernel_file {
            if k.is_relative() {
                if let Some(dir) = path.parent() {
                    cfg.kernel_file = Some(dir.join(k));
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always serialisable")
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        let bad = |msg: String| Err(FlockError::InvalidConfig(msg));
        if !(m.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", m.epsilon));
        }
        if !(m.rho_floor > 0.0 && m.rho_floor < 1e-3) {
            return bad(format!("rho_floor must lie in (0, 1e-3), got {}", m.rho_floor));
        }
        if !(m.tail_tol > 0.0) {
            return bad(format!("tail_tol must be positive, got {}", m.tail_tol));
        }
        for (name, c) in [("cfl_hyp", m.cfl_hyp), ("cfl_force", m.cfl_force), ("euler_cfl", self.scheme.euler_cfl)] {
            if !(c > 0.0 && c <= 1.0) {
                return bad(format!("{name} must lie in (0, 1], got {c}"));
            }
        }
        if !(m.t_final >= 0.0 && m.t_final.is_finite()) {
            return bad(format!("t_final must be finite and nonnegative, got {}", m.t_final));
        }
        if !(m.snapshot_dt > 0.0) {
            return bad(format!("snapshot_dt must be positive, got {}", m.snapshot_dt));
        }
        if self.grids.reference_factor == 0 {
            return bad("reference_factor must be at least 1".into());
        }
        if !(self.sweep.gradient_limit > 0.0) {
            return bad(format!("gradient_limit must be positive, got {}", self.sweep.gradient_limit));
        }
        self.phase_grid()?;
        self.reference_grid()?;
        Ok(())
    }

    /// Check the sweep list: strictly decreasing, positive, at least three entries.
    pub fn validate_epsilon_list(&self) -> Result<()> {
        let l = &self.sweep.epsilon_list;
        if l.len() < 3 {
            return Err(FlockError::InvalidConfig(format!(
                "epsilon_list needs at least 3 values for a rate fit, got {}",
                l.len()
            )));
        }
        if l.iter().any(|e| !(*e > 0.0)) || l.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(FlockError::InvalidConfig(format!(
                "epsilon_list must be positive and strictly decreasing, got {l:?}"
            )));
        }
        Ok(())
    }

    pub fn space_grid(&self) -> Result<SpaceGrid> {
        let g = &self.grids;
        SpaceGrid::new(g.x_min, g.x_max, g.nx, g.boundary)
    }

    pub fn reference_grid(&self) -> Result<SpaceGrid> {
        let g = &self.grids;
        SpaceGrid::new(g.x_min, g.x_max, g.nx * g.reference_factor, g.boundary)
    }

    pub fn phase_grid(&self) -> Result<PhaseGrid> {
        PhaseGrid::new(self.space_grid()?, self.grids.v_max, self.grids.nv)
    }

    fn kernel_spec(&self) -> Result<KernelSpec> {
        match &self.kernel_file {
            Some(p) => load_kernel_csv(p),
            None => Ok(self.kernel.clone()),
        }
    }

    /// Kernel on `grid`; tables are refined piecewise-constantly.
    pub fn kernel_on(&self, grid: &SpaceGrid) -> Result<Kernel> {
        let spec = match self.kernel_spec()? {
            KernelSpec::Table { values } => KernelSpec::Table {
                values: prolong_matrix(&values, grid.nx)?,
            },
            other => other,
        };
        Kernel::new(spec, grid)
    }

    pub fn potential_on(&self, grid: &SpaceGrid) -> Result<Potential> {
        let spec = match &self.potential {
            PotentialSpec::Table { values } => PotentialSpec::Table {
                values: prolong(values, grid.nx)?,
            },
            other => other.clone(),
        };
        Potential::new(spec, grid)
    }

    pub fn kinetic_solver(&self, epsilon: f64) -> Result<KineticSolver> {
        let space = self.space_grid()?;
        KineticSolver::new(
            self.phase_grid()?,
            self.kernel_on(&space)?,
            self.potential_on(&space)?,
            epsilon,
            self.model.rho_floor,
            self.model.cfl_hyp,
            self.model.cfl_force,
            self.scheme.kinetic(),
        )
    }

    pub fn euler_solver(&self) -> Result<EulerSolver> {
        let grid = self.reference_grid()?;
        let mut s = EulerSolver::new(
            grid.clone(),
            self.kernel_on(&grid)?,
            self.potential_on(&grid)?,
            self.model.rho_floor,
            self.scheme.euler_cfl,
            self.scheme.euler(),
        )?;
        s.gradient_limit = Some(self.sweep.gradient_limit);
        Ok(s)
    }

    /// Initial macroscopic state on the reference grid, sampled at cell centres.
    pub fn reference_initial(&self) -> Result<MacroState> {
        let grid = self.reference_grid()?;
        let rho = self.initial.rho.sample(&grid)?;
        let u = self.initial.u.sample(&grid)?;
        MacroState::from_velocity(grid, rho, &u)
    }

    /// Well-prepared kinetic data: the Maxwellian of the cell-averaged reference data.
    pub fn kinetic_initial(&self) -> Result<KineticState> {
        let coarse = self.reference_initial()?.restrict(self.grids.reference_factor)?;
        let u = coarse.velocity(self.model.rho_floor);
        maxwellian(&self.phase_grid()?, &coarse.rho, &u, self.model.tail_tol)
    }
}

/// The Euler reference trajectory and its restriction to the kinetic grid.
#[derive(Debug, Clone)]
pub struct ReferenceRun {
    pub trajectory: EulerTrajectory,
    pub coarse: Vec<MacroState>,
    /// Macroscopic entropy of every reference snapshot.
    pub entropy: Vec<f64>,
}

pub fn run_reference(config: &ExperimentConfig) -> Result<ReferenceRun> {
    let solver = config.euler_solver()?;
    let u0 = config.reference_initial()?;
    let trajectory = solver.advance(&u0, config.model.t_final, config.model.snapshot_dt)?;
    let coarse = trajectory
        .snapshots
        .iter()
        .map(|s| s.restrict(config.grids.reference_factor))
        .collect::<Result<Vec<_>>>()?;
    let entropy = trajectory
        .snapshots
        .iter()
        .map(|s| macro_entropy(s, &solver.potential, config.model.rho_floor))
        .collect();
    log::info!("euler reference: {} steps on {} cells", trajectory.steps, solver.grid.nx);
    Ok(ReferenceRun {
        trajectory,
        coarse,
        entropy,
    })
}

/// Everything recorded along one kinetic run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub epsilon: f64,
    pub rho_floor: f64,
    pub reports: Vec<EntropyReport>,
    /// Moments of every kinetic snapshot.
    pub kinetic_moments: Vec<MacroState>,
    /// Restricted reference at the snapshot times.
    pub reference: Vec<MacroState>,
    /// Reference entropy and accumulated alignment dissipation at the snapshot times.
    pub euler_entropy: Vec<f64>,
    pub euler_dissipation: Vec<f64>,
    pub final_state: KineticState,
    /// Smallest value of `f` over all snapshots.
    pub min_f: f64,
    pub max_mass_drift: f64,
    pub max_momentum_drift: f64,
}

impl RunRecord {
    /// `sup_t rel_entropy + int rel_dissipation dt`.
    pub fn error_functional(&self) -> (f64, f64) {
        let sup = self.reports.iter().map(|r| r.rel_entropy).fold(0.0, f64::max);
        let ts: Vec<f64> = self.reports.iter().map(|r| r.t).collect();
        let d: Vec<f64> = self.reports.iter().map(|r| r.rel_dissipation).collect();
        (sup, *trapezoid_cumulative(&ts, &d).last().unwrap_or(&0.0))
    }
}

/// Output switches of a run.
#[derive(Debug, Clone, Default)]
pub struct OutputOptions {
    pub dir: Option<PathBuf>,
    /// Also write one field CSV per snapshot.
    pub snapshots: bool,
}

/// Kinetic run at `epsilon` compared against a precomputed reference.
pub fn run_kinetic(
    config: &ExperimentConfig,
    epsilon: f64,
    reference: &ReferenceRun,
    out: &OutputOptions,
) -> Result<RunRecord> {
    let solver = config.kinetic_solver(epsilon)?;
    let f0 = config.kinetic_initial()?;
    let floor = config.model.rho_floor;
    let (m0, p0) = (f0.mass(), f0.momentum());
    let mut reports = Vec::new();
    let mut kinetic_moments = Vec::new();
    let mut min_f = f64::INFINITY;
    let mut max_mass_drift: f64 = 0.0;
    let mut max_momentum_drift: f64 = 0.0;
    if let Some(dir) = &out.dir {
        fs::create_dir_all(dir)?;
    }
    let result = solver.advance_with(&f0, config.model.t_final, config.model.snapshot_dt, |f| {
        let k = reports.len();
        let r = reference.coarse.get(k).ok_or_else(|| {
            FlockError::GridMismatch(format!("no reference snapshot for kinetic snapshot {k}"))
        })?;
        if (r.t - f.t).abs() > 1e-9 * f.t.abs().max(1.0) {
            return Err(FlockError::GridMismatch(format!(
                "reference snapshot at t = {} paired with kinetic snapshot at t = {}",
                r.t, f.t
            )));
        }
        let rep = EntropyReport::evaluate(f, Some(r), &solver.kernel, &solver.potential, floor)?;
        min_f = min_f.min(f.min_value());
        if m0 > 0.0 {
            max_mass_drift = max_mass_drift.max((f.mass() - m0).abs() / m0);
            max_momentum_drift = max_momentum_drift.max((f.momentum() - p0).abs() / m0);
        }
        if out.snapshots {
            if let Some(dir) = &out.dir {
                write_kinetic_snapshot(&dir.join(format!("kinetic_{k:04}.csv")), f)?;
            }
        }
        kinetic_moments.push(moments(f, floor).state);
        reports.push(rep);
        Ok(())
    });
    let snaps = match result {
        Ok(s) => s,
        Err(e) => {
            if let Some(dir) = &out.dir {
                write_reports_csv(&dir.join("reports.csv"), &reports)?;
                write_failure_manifest(dir, epsilon, &e, &reports)?;
            }
            return Err(e);
        }
    };
    let n = reports.len();
    let record = RunRecord {
        epsilon,
        rho_floor: floor,
        reports,
        kinetic_moments,
        reference: reference.coarse[..n].to_vec(),
        euler_entropy: reference.entropy[..n].to_vec(),
        euler_dissipation: reference.trajectory.dissipation_integral[..n].to_vec(),
        final_state: snaps.into_iter().last().expect("advance returns the initial snapshot"),
        min_f,
        max_mass_drift,
        max_momentum_drift,
    };
    if let Some(dir) = &out.dir {
        write_reports_csv(&dir.join("reports.csv"), &record.reports)?;
        if out.snapshots {
            for (k, s) in reference.trajectory.snapshots.iter().take(n).enumerate() {
                write_euler_snapshot(&dir.join(format!("euler_{k:04}.csv")), s, floor)?;
            }
        }
    }
    Ok(record)
}

/// A kinetic run at `config.model.epsilon` with its own Euler reference.
pub fn run_single(config: &ExperimentConfig, out: &OutputOptions) -> Result<RunRecord> {
    let reference = match run_reference(config) {
        Ok(r) => r,
        Err(e) => {
            if let Some(dir) = &out.dir {
                fs::create_dir_all(dir)?;
                write_failure_manifest(dir, config.model.epsilon, &e, &[])?;
            }
            return Err(e);
        }
    };
    run_kinetic(config, config.model.epsilon, &reference, out)
}

/// Least-squares fit of `log error = slope * log eps + intercept`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub residuals: Vec<f64>,
    pub max_residual: f64,
}

pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(FlockError::DegenerateFit(format!("need at least 3 points, got {}", points.len())));
    }
    if let Some((e, err)) = points.iter().find(|(e, err)| !(*e > 0.0 && *err > 0.0 && e.is_finite() && err.is_finite())) {
        return Err(FlockError::DegenerateFit(format!(
            "all points must be positive and finite, got ({e}, {err})"
        )));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if !(sxx > 0.0) {
        return Err(FlockError::DegenerateFit("all epsilon values coincide".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| y - (slope * x + intercept)).collect();
    let max_residual = residuals.iter().map(|r| r.abs()).fold(0.0, f64::max);
    Ok(RateFit {
        slope,
        intercept,
        residuals,
        max_residual,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub epsilon: f64,
    pub sup_rel_entropy: f64,
    pub integrated_rel_dissipation: f64,
    pub error: f64,
    pub final_maxwellian_gap: f64,
}

impl SweepPoint {
    fn from_record(r: &RunRecord) -> Self {
        let (sup, int) = r.error_functional();
        SweepPoint {
            epsilon: r.epsilon,
            sup_rel_entropy: sup,
            integrated_rel_dissipation: int,
            error: sup + int,
            final_maxwellian_gap: r.reports.last().map_or(0.0, |x| x.maxwellian_gap),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub runs: Vec<RunRecord>,
    /// Fit over every epsilon.
    pub fit: RateFit,
    /// Fit over the three largest epsilons.
    pub fit_largest3: RateFit,
    pub warnings: Vec<String>,
}

/// Kinetic runs for every epsilon of the sweep against one shared reference.
/// Runs execute on separate threads; results are combined in list order.
pub fn run_sweep(config: &ExperimentConfig, out: &OutputOptions) -> Result<SweepResult> {
    config.validate_epsilon_list()?;
    if let Some(dir) = &out.dir {
        fs::create_dir_all(dir)?;
    }
    let reference = match run_reference(config) {
        Ok(r) => r,
        Err(e) => {
            if let Some(dir) = &out.dir {
                write_failure_manifest(dir, f64::NAN, &e, &[])?;
            }
            return Err(e);
        }
    };
    let eps_list = config.sweep.epsilon_list.clone();
    let results: Vec<Result<RunRecord>> = std::thread::scope(|scope| {
        let handles: Vec<_> = eps_list
            .iter()
            .map(|&eps| {
                let reference = &reference;
                let run_out = OutputOptions {
                    dir: out.dir.as_ref().map(|d| d.join(format!("eps_{eps}"))),
                    snapshots: out.snapshots,
                };
                scope.spawn(move || run_kinetic(config, eps, reference, &run_out))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(FlockError::InvalidConfig("sweep worker panicked".into()))))
            .collect()
    });
    let mut runs = Vec::new();
    let mut first_error = None;
    for (eps, r) in eps_list.iter().zip(results) {
        match r {
            Ok(rec) => runs.push(rec),
            Err(e) => {
                log::error!("run at epsilon {eps} aborted: {e}");
                first_error.get_or_insert(e);
            }
        }
    }
    let points: Vec<SweepPoint> = runs.iter().map(SweepPoint::from_record).collect();
    if let Some(e) = first_error {
        if let Some(dir) = &out.dir {
            write_sweep_csv(&dir.join("sweep.csv"), &points, None)?;
        }
        return Err(e);
    }
    let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.epsilon, p.error)).collect();
    let fit = fit_rate(&pairs)?;
    let fit_largest3 = fit_rate(&pairs[..3])?;
    let mut warnings = Vec::new();
    for w in points.windows(2) {
        if w[1].error > w[0].error {
            warnings.push(format!(
                "error increases from {:.3e} at epsilon {} to {:.3e} at epsilon {}",
                w[0].error, w[0].epsilon, w[1].error, w[1].epsilon
            ));
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    if let Some(dir) = &out.dir {
        write_sweep_csv(&dir.join("sweep.csv"), &points, Some((&fit, &fit_largest3)))?;
    }
    Ok(SweepResult {
        points,
        runs,
        fit,
        fit_largest3,
        warnings,
    })
}

/// Tolerances of the inequality ledger.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TolerancePolicy {
    pub jensen_abs: f64,
    /// Relative to `|F(f0)|`.
    pub kinetic_entropy_rel: f64,
    /// Relative to `max(1, |E(U0)|)`.
    pub euler_entropy_rel: f64,
    pub pointwise_abs: f64,
}

impl Default for TolerancePolicy {
    fn default() -> Self {
        Self {
            jensen_abs: 1e-10,
            kinetic_entropy_rel: 1e-8,
            euler_entropy_rel: 1e-8,
            pointwise_abs: 1e-12,
        }
    }
}

/// Names of the inequalities every complete ledger contains.
pub const LEDGER_ENTRIES: [&str; 6] = [
    "jensen",
    "kinetic-entropy",
    "euler-entropy",
    "relative-pressure",
    "relative-flux",
    "gronwall",
];

#[derive(Debug, Clone, PartialEq)]
pub struct LedgerEntry {
    pub name: String,
    pub label: String,
    pub hard: bool,
    pub passed: bool,
    pub worst_margin: f64,
    /// Fitted constant, where the inequality has one.
    pub constant: Option<f64>,
    pub note: String,
    /// `(t, margin)` pairs; empty for pointwise checks.
    pub margins: Vec<(f64, f64)>,
}

impl LedgerEntry {
    fn from_margins(name: &str, label: &str, margins: Vec<(f64, f64)>, tol: f64) -> Self {
        let worst = margins.iter().map(|m| m.1).fold(f64::INFINITY, f64::min);
        LedgerEntry {
            name: name.into(),
            label: label.into(),
            hard: true,
            passed: margins.iter().all(|m| m.1 >= -tol && m.1.is_finite()),
            worst_margin: worst,
            constant: None,
            note: format!("tolerance {tol:.1e}"),
            margins,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ledger {
    pub entries: Vec<LedgerEntry>,
    /// Entry names every run label must carry.
    pub required: Vec<String>,
}

impl Default for Ledger {
    fn default() -> Self {
        Self {
            entries: Vec::new(),
            required: LEDGER_ENTRIES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl Ledger {
    /// Required entries absent for some run label.
    pub fn missing(&self) -> Vec<String> {
        let mut labels: Vec<&str> = Vec::new();
        for e in self.entries.iter().filter(|e| self.required.contains(&e.name)) {
            if !labels.contains(&e.label.as_str()) {
                labels.push(&e.label);
            }
        }
        if labels.is_empty() {
            return self.required.clone();
        }
        let mut out = Vec::new();
        for l in labels {
            for n in &self.required {
                if !self.entries.iter().any(|e| e.label == l && &e.name == n) {
                    out.push(format!("{n} [{l}]"));
                }
            }
        }
        out
    }

    /// True iff every hard entry passed and no required entry is missing.
    pub fn passed(&self) -> bool {
        self.missing().is_empty() && self.entries.iter().all(|e| !e.hard || e.passed)
    }

    pub fn get(&self, name: &str) -> Option<&LedgerEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            let status = match (e.passed, e.hard) {
                (true, _) => "PASS",
                (false, true) => "FAIL",
                (false, false) => "WARN",
            };
            let _ = write!(s, "{status} {} [{}] worst_margin={:.6e}", e.name, e.label, e.worst_margin);
            if let Some(c) = e.constant {
                let _ = write!(s, " C={c:.6e}");
            }
            let _ = writeln!(s, " {}", e.note);
            for (t, m) in &e.margins {
                let _ = writeln!(s, "    t={t:.6} margin={m:.6e}");
            }
        }
        for m in self.missing() {
            let _ = writeln!(s, "FAIL missing entry {m}");
        }
        let _ = writeln!(s, "overall: {}", if self.passed() { "PASS" } else { "FAIL" });
        s
    }
}

/// Cumulative trapezoid integral of samples `y` at times `t`.
pub fn trapezoid_cumulative(t: &[f64], y: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(t.len());
    for k in 0..t.len() {
        if k > 0 {
            acc += 0.5 * (t[k] - t[k - 1]) * (y[k] + y[k - 1]);
        }
        out.push(acc);
    }
    out
}

/// Evaluate every inequality of the ledger along one run.
pub fn verify_inequalities(run: &RunRecord, policy: &TolerancePolicy) -> Ledger {
    let label = format!("eps={}", run.epsilon);
    let reports = &run.reports;
    let ts: Vec<f64> = reports.iter().map(|r| r.t).collect();
    let mut entries = Vec::new();

    // Jensen: F(f) - E(moments f) minus the Maxwellian offset stays nonnegative.
    entries.push(LedgerEntry::from_margins(
        "jensen",
        &label,
        reports.iter().map(|r| (r.t, r.jensen_gap)).collect(),
        policy.jensen_abs,
    ));

    // Kinetic entropy inequality with the minimal nonnegative C making t = T tight.
    // The growth term integrates the entropy relative to the global equilibrium,
    // which differs from F by a mass constant and is nonnegative.
    {
        let f: Vec<f64> = reports.iter().map(|r| r.kinetic_entropy).collect();
        let h: Vec<f64> = reports.iter().map(|r| r.equilibrium_entropy).collect();
        let d1 = trapezoid_cumulative(&ts, &reports.iter().map(|r| r.d1).collect::<Vec<_>>());
        let ad = trapezoid_cumulative(&ts, &reports.iter().map(|r| r.alignment_dissipation).collect::<Vec<_>>());
        let int_h = trapezoid_cumulative(&ts, &h);
        let f0 = f.first().copied().unwrap_or(0.0);
        let lhs: Vec<f64> = (0..f.len())
            .map(|k| f[k] + d1[k] / (2.0 * run.epsilon) + ad[k] - f0)
            .collect();
        let last = f.len().saturating_sub(1);
        let tol = policy.kinetic_entropy_rel * f0.abs();
        let denom = run.epsilon * int_h.get(last).copied().unwrap_or(0.0);
        let excess = lhs.get(last).copied().unwrap_or(0.0);
        let c = if excess <= 0.0 || denom <= 0.0 { 0.0 } else { excess / denom };
        let margins = (0..f.len())
            .map(|k| (ts[k], c * run.epsilon * int_h[k] - lhs[k]))
            .collect();
        let mut e = LedgerEntry::from_margins("kinetic-entropy", &label, margins, tol);
        e.constant = Some(c);
        entries.push(e);
    }

    // Discrete Euler entropy balance of the reference: E(t) - E(0) + int D <= 0.
    {
        let e0 = run.euler_entropy.first().copied().unwrap_or(0.0);
        let margins: Vec<(f64, f64)> = (0..run.euler_entropy.len())
            .map(|k| (ts[k], -(run.euler_entropy[k] - e0 + run.euler_dissipation[k])))
            .collect();
        let mut e = LedgerEntry::from_margins(
            "euler-entropy",
            &label,
            margins,
            policy.euler_entropy_rel * e0.abs().max(1.0),
        );
        let residual = e.margins.last().map_or(0.0, |m| m.1.abs());
        e.note = format!("{}; |balance(T)|={residual:.3e}", e.note);
        entries.push(e);
    }

    // Pointwise lower bound on the relative pressure.
    {
        let mut worst = f64::INFINITY;
        for (v, u) in run.kinetic_moments.iter().zip(&run.reference) {
            for (&q, &rho) in v.rho.iter().zip(&u.rho) {
                if q > 0.0 && rho > 0.0 {
                    let bound = 0.5 * (1.0 / q).min(1.0 / rho) * (q - rho).powi(2);
                    worst = worst.min(relative_pressure(q, rho) - bound);
                }
            }
        }
        let passed = worst >= -policy.pointwise_abs;
        entries.push(LedgerEntry {
            name: "relative-pressure".into(),
            label: label.clone(),
            hard: true,
            passed,
            worst_margin: worst,
            constant: None,
            note: format!("pointwise over all snapshots and cells, tolerance {:.1e}", policy.pointwise_abs),
            margins: Vec::new(),
        });
    }

    // int |A(V|U)| <= 2 int E(V|U); the sharper form without the 2 is reported.
    {
        let mut margins = Vec::new();
        let mut sharp = true;
        let mut ok = true;
        for (k, (v, u)) in run.kinetic_moments.iter().zip(&run.reference).enumerate() {
            match (relative_flux(v, u, run.rho_floor), relative_entropy(v, u, run.rho_floor)) {
                (Ok(a), Ok(e)) => {
                    let a: f64 = a.iter().sum::<f64>() * v.grid.dx;
                    margins.push((ts[k], 2.0 * e - a));
                    sharp &= a <= e + policy.pointwise_abs;
                }
                _ => ok = false,
            }
        }
        let mut e = LedgerEntry::from_margins("relative-flux", &label, margins, policy.pointwise_abs);
        e.passed &= ok;
        e.note = format!(
            "{}; sharper bound without the factor 2 {}",
            e.note,
            if sharp { "also holds" } else { "fails" }
        );
        entries.push(e);
    }

    // Gronwall envelope: relE(t) + int relD <= C int relE + C sqrt(eps), C fitted.
    {
        let rel: Vec<f64> = reports.iter().map(|r| r.rel_entropy).collect();
        let int_rel = trapezoid_cumulative(&ts, &rel);
        let int_d = trapezoid_cumulative(&ts, &reports.iter().map(|r| r.rel_dissipation).collect::<Vec<_>>());
        let s = run.epsilon.sqrt();
        let c = (0..rel.len())
            .map(|k| (rel[k] + int_d[k]) / (int_rel[k] + s))
            .fold(0.0, f64::max);
        let margins = (0..rel.len())
            .map(|k| (ts[k], c * (int_rel[k] + s) - rel[k] - int_d[k]))
            .collect();
        let mut e = LedgerEntry::from_margins("gronwall", &label, margins, policy.pointwise_abs);
        e.constant = Some(c);
        entries.push(e);
    }

    // Scheme invariants.
    entries.push(LedgerEntry {
        name: "positivity".into(),
        label: label.clone(),
        hard: true,
        passed: run.min_f >= 0.0,
        worst_margin: run.min_f,
        constant: None,
        note: "min f over all snapshots".into(),
        margins: Vec::new(),
    });
    entries.push(LedgerEntry {
        name: "mass".into(),
        label,
        hard: true,
        passed: run.max_mass_drift <= crate::kinetic::MASS_DRIFT_TOL
            || run.final_state.grid.space.boundary == Boundary::CopyOut,
        worst_margin: crate::kinetic::MASS_DRIFT_TOL - run.max_mass_drift,
        constant: None,
        note: format!("max relative mass drift {:.3e}", run.max_mass_drift),
        margins: Vec::new(),
    });
    Ledger {
        entries,
        ..Default::default()
    }
}

/// Ledger for a bare Euler run: the discrete entropy balance only.
pub fn verify_euler(traj: &EulerTrajectory, potential: &Potential, rho_floor: f64, policy: &TolerancePolicy) -> Ledger {
    let e: Vec<f64> = traj.snapshots.iter().map(|s| macro_entropy(s, potential, rho_floor)).collect();
    let e0 = e.first().copied().unwrap_or(0.0);
    let margins = traj
        .snapshots
        .iter()
        .zip(&e)
        .zip(&traj.dissipation_integral)
        .map(|((s, e), d)| (s.t, -(e - e0 + d)))
        .collect();
    Ledger {
        entries: vec![LedgerEntry::from_margins(
            "euler-entropy",
            "euler",
            margins,
            policy.euler_entropy_rel * e0.abs().max(1.0),
        )],
        required: vec!["euler-entropy".into()],
    }
}

/// Randomized pointwise checks: relative-pressure bound, Jensen gap, symmetrizer, entropy flux.
pub fn randomized_checks(seed: u64, samples: usize) -> Vec<LedgerEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_p = f64::INFINITY;
    let mut worst_sym: f64 = 0.0;
    let mut worst_flux: f64 = 0.0;
    for _ in 0..samples {
        let q = rng.gen_range(0.1..10.0);
        let rho = rng.gen_range(0.1..10.0);
        worst_p = worst_p.min(relative_pressure(q, rho) - 0.5 * (1.0 / q).min(1.0 / rho) * (q - rho).powi(2));
        let u = rng.gen_range(-3.0..3.0);
        if let Ok(r) = symmetrizer_check(rho, u) {
            worst_sym = worst_sym.max(r.asymmetry);
        }
        let phi = rng.gen_range(0.0..2.0);
        worst_flux = worst_flux.max(entropy_flux_check(rho, rho * u, phi).unwrap_or(f64::INFINITY));
    }
    let mut worst_j = f64::INFINITY;
    let space = SpaceGrid::new(0.0, 1.0, 4, Boundary::Periodic).expect("valid grid");
    let grid = PhaseGrid::new(space.clone(), 8.0, 64).expect("valid grid");
    let potential = Potential::new(PotentialSpec::None, &space).expect("valid potential");
    for _ in 0..samples.max(1) / 4 + 1 {
        let f = KineticState::from_fn(grid.clone(), |_, _| rng.gen_range(0.0..1.0));
        worst_j = worst_j.min(jensen_gap(&f, &potential, 1e-12).normalized());
    }
    let entry = |name: &str, worst: f64, passed: bool, note: String| LedgerEntry {
        name: name.into(),
        label: format!("seed={seed}"),
        hard: true,
        passed,
        worst_margin: worst,
        constant: None,
        note,
        margins: Vec::new(),
    };
    vec![
        entry("random-relative-pressure", worst_p, worst_p >= -1e-12, format!("{samples} pairs in [0.1, 10]^2")),
        entry("random-jensen", worst_j, worst_j >= -1e-10, "uniform random columns".into()),
        entry("random-symmetrizer", 1e-6 - worst_sym, worst_sym <= 1e-6, format!("max asymmetry {worst_sym:.3e}")),
        entry("random-entropy-flux", 1e-6 - worst_flux, worst_flux <= 1e-6, format!("max residual {worst_flux:.3e}")),
    ]
}

fn fmt(v: f64) -> String {
    format!("{v:.17e}")
}

pub fn write_reports_csv(path: &Path, reports: &[EntropyReport]) -> Result<()> {
    let mut s = EntropyReport::csv_header();
    s.push('\n');
    for r in reports {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

/// Header line `t,nx,nv,x_min,x_max,v_max`, its values, then rows `i,j,x,v,f`.
pub fn write_kinetic_snapshot(path: &Path, f: &KineticState) -> Result<()> {
    let g = &f.grid;
    let mut s = String::with_capacity(g.len() * 64);
    let _ = writeln!(s, "t,nx,nv,x_min,x_max,v_max");
    let _ = writeln!(s, "{},{},{},{},{},{}", fmt(f.t), g.nx(), g.nv, fmt(g.space.x_min), fmt(g.space.x_max), fmt(g.v_max));
    let _ = writeln!(s, "i,j,x,v,f");
    for i in 0..g.nx() {
        let x = g.space.center(i);
        for j in 0..g.nv {
            let _ = writeln!(s, "{i},{j},{},{},{}", fmt(x), fmt(g.velocity(j)), fmt(f.get(i, j)));
        }
    }
    fs::write(path, s)?;
    Ok(())
}

/// Header line `t,nx,x_min,x_max`, its values, then rows `i,x,rho,u,P`.
pub fn write_euler_snapshot(path: &Path, u: &MacroState, rho_floor: f64) -> Result<()> {
    let g = &u.grid;
    let vel = u.velocity(rho_floor);
    let mut s = String::new();
    let _ = writeln!(s, "t,nx,x_min,x_max");
    let _ = writeln!(s, "{},{},{},{}", fmt(u.t), g.nx, fmt(g.x_min), fmt(g.x_max));
    let _ = writeln!(s, "i,x,rho,u,P");
    for (i, v) in vel.iter().enumerate() {
        let _ = writeln!(s, "{i},{},{},{},{}", fmt(g.center(i)), fmt(u.rho[i]), fmt(*v), fmt(u.p_mom[i]));
    }
    fs::write(path, s)?;
    Ok(())
}

/// One row per epsilon, then `#`-prefixed fit summary lines.
pub fn write_sweep_csv(path: &Path, points: &[SweepPoint], fits: Option<(&RateFit, &RateFit)>) -> Result<()> {
    let mut s = String::from("epsilon,error,sup_rel_entropy,integrated_rel_dissipation,final_maxwellian_gap\n");
    for p in points {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            fmt(p.epsilon),
            fmt(p.error),
            fmt(p.sup_rel_entropy),
            fmt(p.integrated_rel_dissipation),
            fmt(p.final_maxwellian_gap)
        );
    }
    match fits {
        Some((all, top)) => {
            let _ = writeln!(s, "# fit all: slope={:.6},intercept={:.6},max_residual={:.6}", all.slope, all.intercept, all.max_residual);
            let _ = writeln!(s, "# fit largest3: slope={:.6},intercept={:.6},max_residual={:.6}", top.slope, top.intercept, top.max_residual);
        }
        None => s.push_str("# sweep aborted; partial results\n"),
    }
    fs::write(path, s)?;
    Ok(())
}

/// Read `(epsilon, error)` pairs from the first two columns of a CSV, skipping
/// the header and `#` lines.
pub fn read_rate_points(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split(',').map(str::trim);
        let (a, b) = (cols.next().unwrap_or(""), cols.next().unwrap_or(""));
        match (a.parse::<f64>(), b.parse::<f64>()) {
            (Ok(e), Ok(err)) => out.push((e, err)),
            _ if out.is_empty() && n == 0 => continue,
            _ => return Err(FlockError::Parse(format!("line {}: cannot read `{line}`", n + 1))),
        }
    }
    Ok(out)
}

fn write_failure_manifest(dir: &Path, epsilon: f64, err: &FlockError, reports: &[EntropyReport]) -> Result<()> {
    let mut s = String::new();
    let _ = writeln!(s, "status = \"aborted\"");
    let _ = writeln!(s, "epsilon = {epsilon}");
    let _ = writeln!(s, "error = {:?}", err.to_string());
    let _ = writeln!(s, "snapshots_completed = {}", reports.len());
    if let Some(r) = reports.last() {
        let _ = writeln!(s, "last_t = {}", r.t);
    }
    fs::write(dir.join("failure.toml"), s)?;
    Ok(())
}
