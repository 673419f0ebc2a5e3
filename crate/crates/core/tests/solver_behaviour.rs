//! Kinetic and Euler solvers on problems with known behaviour.

use std::f64::consts::PI;

use flocklab::alignment::{Kernel, KernelSpec};
use flocklab::entropy::maxwellian_gap;
use flocklab::euler::{EulerScheme, EulerSolver, NumericalFlux, Reconstruction};
use flocklab::kinetic::{KineticScheme, KineticSolver, LocalStep, SpatialOrder, Splitting};
use flocklab::model::{column_moments, maxwellian};
use flocklab::{Boundary, FlockError, KineticState, MacroState, PhaseGrid, Potential, PotentialSpec, SpaceGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn gauss(v: f64) -> f64 {
    (-0.5 * v * v).exp() / (2.0 * PI).sqrt()
}

fn solver(grid: &PhaseGrid, kernel: KernelSpec, pot: PotentialSpec, eps: f64, scheme: KineticScheme) -> KineticSolver {
    let k = Kernel::new(kernel, &grid.space).unwrap();
    let p = Potential::new(pot, &grid.space).unwrap();
    KineticSolver::new(grid.clone(), k, p, eps, 1e-12, 0.5, 0.5, scheme).unwrap()
}

fn free_transport_error(nx: usize) -> f64 {
    let s = SpaceGrid::new(0.0, 1.0, nx, Boundary::Periodic).unwrap();
    let g = PhaseGrid::new(s, 3.0, 12).unwrap();
    let profile = |x: f64| 1.0 + 0.5 * (2.0 * PI * x).sin();
    let f0 = KineticState::from_fn(g.clone(), |x, v| profile(x) * gauss(v));
    let sol = solver(&g, KernelSpec::Constant { k0: 0.0 }, PotentialSpec::None, f64::INFINITY, KineticScheme::default());
    let t = 0.2;
    let f = sol.advance(&f0, t, t).unwrap().pop().unwrap();
    let exact = KineticState::from_fn(g.clone(), |x, v| profile(x - v * t) * gauss(v));
    f.f.iter().zip(&exact.f).map(|(a, b)| (a - b).abs()).sum::<f64>() * g.cell_volume()
}

#[test]
fn free_transport_follows_the_characteristics() {
    let e: Vec<f64> = [64, 128, 256].iter().map(|n| free_transport_error(*n)).collect();
    assert!(e[2] < 2e-3, "{e:?}");
    for w in e.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order > 1.5, "order {order}, errors {e:?}");
    }
}

#[test]
fn transport_rejects_steps_beyond_its_cfl_limit() {
    let s = SpaceGrid::new(0.0, 1.0, 16, Boundary::Periodic).unwrap();
    let g = PhaseGrid::new(s, 4.0, 16).unwrap();
    let sol = solver(&g, KernelSpec::Constant { k0: 0.0 }, PotentialSpec::None, 1.0, KineticScheme::default());
    let mut f = KineticState::from_fn(g, |_, v| gauss(v));
    let err = sol.step_transport(&mut f, 1.0).unwrap_err();
    assert!(matches!(err, FlockError::Cfl { stage: "transport", .. }));
}

#[test]
fn local_relaxation_conserves_column_moments_and_relaxes() {
    let s = SpaceGrid::new(0.0, 1.0, 8, Boundary::Periodic).unwrap();
    let g = PhaseGrid::new(s, 8.0, 64).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let f0 = KineticState::from_fn(g.clone(), |_, v| {
        let c = rng.gen_range(-1.0..1.0);
        0.5 * gauss(v - 1.5 - c) + 0.5 * gauss(v + 1.0)
    });
    let vs = g.velocities();
    for local in [LocalStep::ChangCooper, LocalStep::ExactProjection] {
        let scheme = KineticScheme {
            local_step: local,
            ..Default::default()
        };
        let sol = solver(&g, KernelSpec::Constant { k0: 0.0 }, PotentialSpec::None, 1.0, scheme);
        let mut f = f0.clone();
        sol.step_local_fp(&mut f, 0.1, 1e-3).unwrap();
        for i in 0..g.nx() {
            let (r0, j0) = column_moments(f0.column(i), &vs, g.dv);
            let (r1, j1) = column_moments(f.column(i), &vs, g.dv);
            assert!((r0 - r1).abs() < 1e-13 * r0, "{local:?}");
            assert!((j0 - j1).abs() < 1e-12, "{local:?}");
        }
        assert!(f.min_value() >= 0.0);
        // one implicit step damps by about 1 / (1 + dt / eps); the projection by exp(-dt / eps)
        let factor = match local {
            LocalStep::ChangCooper => 0.05,
            LocalStep::ExactProjection => 1e-12,
        };
        let (g0, g1) = (maxwellian_gap(&f0, 1e-12), maxwellian_gap(&f, 1e-12));
        assert!(g1 < factor * g0, "{local:?}: {g0:e} -> {g1:e}");
    }
}

#[test]
fn time_step_does_not_depend_on_epsilon() {
    let s = SpaceGrid::new(-2.0, 2.0, 32, Boundary::Reflecting).unwrap();
    let g = PhaseGrid::new(s, 6.0, 32).unwrap();
    let f = maxwellian(&g, &vec![0.5; 32], &vec![0.2; 32], 1e-8).unwrap();
    let k = KernelSpec::Gaussian { amplitude: 1.0, width: 0.5 };
    let stiff = solver(&g, k.clone(), PotentialSpec::Quadratic { a: 1.0 }, 1e-8, KineticScheme::default());
    let soft = solver(&g, k, PotentialSpec::Quadratic { a: 1.0 }, 1.0, KineticScheme::default());
    assert_eq!(stiff.stable_dt(&f), soft.stable_dt(&f));
    let out = stiff.advance(&f, 0.1, 0.1).unwrap();
    let last = out.last().unwrap();
    assert!((last.mass() - f.mass()).abs() < 1e-12 * f.mass());
    assert!(maxwellian_gap(last, 1e-12) < 1e-6);
}

#[test]
fn every_scheme_variant_conserves_mass_and_positivity() {
    let s = SpaceGrid::new(-3.0, 3.0, 32, Boundary::Reflecting).unwrap();
    let g = PhaseGrid::new(s.clone(), 6.0, 32).unwrap();
    let xs = s.centers();
    let rho: Vec<f64> = xs.iter().map(|x| 0.4 * (-0.5 * x * x).exp() + 0.01).collect();
    let u: Vec<f64> = xs.iter().map(|x| 0.3 * (x * 0.8).sin()).collect();
    let f0 = maxwellian(&g, &rho, &u, 1e-8).unwrap();
    for splitting in [Splitting::Lie, Splitting::Strang] {
        for transport in [SpatialOrder::First, SpatialOrder::Second] {
            for local_step in [LocalStep::ChangCooper, LocalStep::ExactProjection] {
                let scheme = KineticScheme {
                    splitting,
                    transport,
                    local_step,
                };
                let sol = solver(
                    &g,
                    KernelSpec::Gaussian { amplitude: 1.0, width: 1.0 },
                    PotentialSpec::Quadratic { a: 1.0 },
                    0.05,
                    scheme,
                );
                let out = sol.advance(&f0, 0.2, 0.1).unwrap();
                for f in &out {
                    assert!((f.mass() - f0.mass()).abs() <= 1e-12 * f0.mass(), "{scheme:?}");
                    assert!(f.min_value() >= 0.0, "{scheme:?}");
                }
            }
        }
    }
}

#[test]
fn alignment_without_confinement_conserves_momentum() {
    let s = SpaceGrid::new(0.0, 2.0, 32, Boundary::Periodic).unwrap();
    let g = PhaseGrid::new(s.clone(), 7.0, 56).unwrap();
    let xs = s.centers();
    let rho: Vec<f64> = xs.iter().map(|x| 1.0 + 0.4 * (PI * x).cos()).collect();
    let u: Vec<f64> = xs.iter().map(|x| 0.2 + 0.5 * (PI * x).sin()).collect();
    let f0 = maxwellian(&g, &rho, &u, 1e-8).unwrap();
    let sol = solver(
        &g,
        KernelSpec::Gaussian { amplitude: 2.0, width: 0.3 },
        PotentialSpec::None,
        0.1,
        KineticScheme::default(),
    );
    let out = sol.advance(&f0, 0.5, 0.25).unwrap();
    for f in &out {
        assert!((f.momentum() - f0.momentum()).abs() < 1e-12, "{}", f.momentum() - f0.momentum());
    }
}

fn euler(grid: &SpaceGrid, scheme: EulerScheme, kernel: KernelSpec, pot: PotentialSpec) -> EulerSolver {
    let k = Kernel::new(kernel, grid).unwrap();
    let p = Potential::new(pot, grid).unwrap();
    EulerSolver::new(grid.clone(), k, p, 1e-12, 0.5, scheme).unwrap()
}

#[test]
fn euler_keeps_a_uniform_flow_uniform() {
    let grid = SpaceGrid::new(0.0, 1.0, 32, Boundary::Periodic).unwrap();
    let u0 = MacroState::from_velocity(grid.clone(), vec![0.8; 32], &[0.4; 32]).unwrap();
    for flux in [NumericalFlux::Rusanov, NumericalFlux::Hll] {
        let scheme = EulerScheme {
            flux,
            reconstruction: Reconstruction::Minmod,
        };
        let sol = euler(&grid, scheme, KernelSpec::Constant { k0: 1.0 }, PotentialSpec::None);
        let traj = sol.advance(&u0, 0.3, 0.3).unwrap();
        let last = traj.snapshots.last().unwrap();
        for i in 0..32 {
            assert!((last.rho[i] - 0.8).abs() < 1e-13);
            assert!((last.p_mom[i] - 0.32).abs() < 1e-13);
        }
        assert!(traj.dissipation_integral.last().unwrap().abs() < 1e-20);
    }
}

fn euler_l1_error(nx: usize, flux: NumericalFlux) -> f64 {
    // Self-convergence against a 4x finer run of the same scheme.
    let run = |n: usize| {
        let grid = SpaceGrid::new(0.0, 1.0, n, Boundary::Periodic).unwrap();
        let xs = grid.centers();
        let rho: Vec<f64> = xs.iter().map(|x| 1.0 + 0.2 * (2.0 * PI * x).sin()).collect();
        let u: Vec<f64> = xs.iter().map(|x| 0.1 * (2.0 * PI * x).cos()).collect();
        let u0 = MacroState::from_velocity(grid.clone(), rho, &u).unwrap();
        let scheme = EulerScheme {
            flux,
            reconstruction: Reconstruction::Minmod,
        };
        let sol = euler(&grid, scheme, KernelSpec::Gaussian { amplitude: 1.0, width: 0.2 }, PotentialSpec::None);
        sol.advance(&u0, 0.1, 0.1).unwrap().snapshots.pop().unwrap()
    };
    let coarse = run(nx);
    let fine = run(4 * nx).restrict(4).unwrap();
    coarse.rho.iter().zip(&fine.rho).map(|(a, b)| (a - b).abs()).sum::<f64>() / nx as f64
}

#[test]
fn euler_schemes_converge_under_refinement() {
    for flux in [NumericalFlux::Rusanov, NumericalFlux::Hll] {
        let a = euler_l1_error(32, flux);
        let b = euler_l1_error(64, flux);
        assert!(b < a / 2.5, "{flux:?}: {a:e} -> {b:e}");
    }
}

#[test]
fn euler_reports_vacuum_in_the_initial_data() {
    let grid = SpaceGrid::new(0.0, 1.0, 16, Boundary::Periodic).unwrap();
    let mut rho = vec![1.0; 16];
    rho[5] = 0.0;
    let u0 = MacroState::from_velocity(grid.clone(), rho, &[0.0; 16]).unwrap();
    let sol = euler(&grid, EulerScheme::default(), KernelSpec::Constant { k0: 1.0 }, PotentialSpec::None);
    assert!(matches!(sol.advance(&u0, 0.1, 0.1), Err(FlockError::Vacuum { .. })));
}
