//! Randomised invariants.

use flocklab::alignment::{alignment_source, Kernel, KernelSpec};
use flocklab::entropy::{
    dissipation_d1, dissipation_d2, jensen_gap, maxwellian_gap, relative_entropy, relative_flux, relative_pressure,
};
use flocklab::harness::fit_rate;
use flocklab::kinetic::{KineticScheme, KineticSolver};
use flocklab::model::{column_moments, maxwellian, moments};
use flocklab::{Boundary, KineticState, MacroState, PhaseGrid, Potential, PotentialSpec, SpaceGrid};
use proptest::prelude::*;

const NX: usize = 8;
const NV: usize = 32;

fn phase(boundary: Boundary) -> PhaseGrid {
    let s = SpaceGrid::new(-1.0, 1.0, NX, boundary).unwrap();
    PhaseGrid::new(s, 6.0, NV).unwrap()
}

fn field(lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(lo..hi, NX)
}

fn kinetic() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..1.0f64, NX * NV)
}

fn state(values: Vec<f64>, boundary: Boundary) -> KineticState {
    KineticState {
        grid: phase(boundary),
        f: values,
        t: 0.0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn relative_pressure_is_nonnegative_and_bounded(q in 0.0..10.0f64, rho in 0.1..10.0f64) {
        let p = relative_pressure(q, rho);
        prop_assert!(p >= -1e-12);
        if q > 0.0 {
            // (q - rho)^2 / (2 max(q, rho)) <= p <= (q - rho)^2 / (2 min(q, rho))
            let d2 = (q - rho) * (q - rho);
            prop_assert!(p >= d2 / (2.0 * q.max(rho)) * (1.0 - 1e-12) - 1e-15);
            prop_assert!(p <= d2 / (2.0 * q.min(rho)) * (1.0 + 1e-12) + 1e-15);
        }
    }

    #[test]
    fn relative_entropy_is_nonnegative_and_zero_on_the_diagonal(
        q in field(0.0, 3.0), v in field(-2.0, 2.0), rho in field(0.1, 3.0), u in field(-2.0, 2.0)
    ) {
        let g = SpaceGrid::new(0.0, 1.0, NX, Boundary::Periodic).unwrap();
        let a = MacroState::from_velocity(g.clone(), q, &v).unwrap();
        let b = MacroState::from_velocity(g, rho, &u).unwrap();
        prop_assert!(relative_entropy(&a, &b, 1e-12).unwrap() >= -1e-12);
        prop_assert!(relative_entropy(&b, &b, 1e-12).unwrap().abs() <= 1e-14);
        prop_assert!(relative_flux(&a, &b, 1e-12).unwrap().iter().all(|x| *x >= 0.0));
    }

    #[test]
    fn dissipations_and_gaps_are_nonnegative(values in kinetic()) {
        let f = state(values, Boundary::Periodic);
        let p = Potential::new(PotentialSpec::None, &f.grid.space).unwrap();
        let k = Kernel::new(KernelSpec::Gaussian { amplitude: 1.0, width: 0.5 }, &f.grid.space).unwrap();
        prop_assert!(dissipation_d1(&f, 1e-12) >= 0.0);
        prop_assert!(dissipation_d2(&f, &k) >= -1e-12);
        prop_assert!(maxwellian_gap(&f, 1e-12) >= 0.0);
        prop_assert!(jensen_gap(&f, &p, 1e-12).normalized() >= -1e-10);
    }

    #[test]
    fn maxwellian_has_the_requested_moments(rho in field(0.01, 5.0), u in field(-1.0, 1.0)) {
        let g = phase(Boundary::Periodic);
        let f = maxwellian(&g, &rho, &u, 1e-6).unwrap();
        let m = moments(&f, 1e-12);
        for i in 0..NX {
            prop_assert!((m.state.rho[i] - rho[i]).abs() <= 1e-5 * rho[i]);
            prop_assert!((m.u[i] - u[i]).abs() <= 1e-5);
        }
    }

    #[test]
    fn alignment_source_has_zero_total(rho in field(0.0, 3.0), u in field(-2.0, 2.0), width in 0.1..2.0f64) {
        let g = SpaceGrid::new(0.0, 1.0, NX, Boundary::Periodic).unwrap();
        let k = Kernel::new(KernelSpec::Gaussian { amplitude: 1.0, width }, &g).unwrap();
        let s = MacroState::from_velocity(g, rho, &u).unwrap();
        let total: f64 = alignment_source(&s, &k).iter().sum();
        let scale: f64 = s.p_mom.iter().map(|p| p.abs()).sum::<f64>() * s.rho.iter().sum::<f64>();
        prop_assert!(total.abs() <= 1e-13 * scale.max(1.0));
    }

    #[test]
    fn split_step_conserves_mass_and_positivity(values in kinetic(), eps in 1e-4..1.0f64, periodic in any::<bool>()) {
        let boundary = if periodic { Boundary::Periodic } else { Boundary::Reflecting };
        let f0 = state(values, boundary);
        let k = Kernel::new(KernelSpec::Gaussian { amplitude: 1.0, width: 0.5 }, &f0.grid.space).unwrap();
        let pot = if periodic { PotentialSpec::None } else { PotentialSpec::Quadratic { a: 1.0 } };
        let p = Potential::new(pot, &f0.grid.space).unwrap();
        let sol = KineticSolver::new(f0.grid.clone(), k, p, eps, 1e-12, 0.5, 0.5, KineticScheme::default()).unwrap();
        let mut f = f0.clone();
        let dt = sol.stable_dt(&f);
        sol.step(&mut f, dt).unwrap();
        prop_assert!((f.mass() - f0.mass()).abs() <= 1e-12 * f0.mass().max(1e-300));
        prop_assert!(f.min_value() >= 0.0);
    }

    #[test]
    fn local_relaxation_keeps_column_moments(values in kinetic(), eps in 1e-6..1.0f64, dt in 1e-3..0.1f64) {
        let f0 = state(values, Boundary::Periodic);
        let k = Kernel::new(KernelSpec::Constant { k0: 0.0 }, &f0.grid.space).unwrap();
        let p = Potential::new(PotentialSpec::None, &f0.grid.space).unwrap();
        let sol = KineticSolver::new(f0.grid.clone(), k, p, eps, 1e-12, 0.5, 0.5, KineticScheme::default()).unwrap();
        let mut f = f0.clone();
        sol.step_local_fp(&mut f, dt, eps).unwrap();
        let vs = f0.grid.velocities();
        for i in 0..NX {
            let (r0, j0) = column_moments(f0.column(i), &vs, f0.grid.dv);
            let (r1, j1) = column_moments(f.column(i), &vs, f0.grid.dv);
            prop_assert!((r0 - r1).abs() <= 1e-12 * r0.max(1e-300));
            prop_assert!((j0 - j1).abs() <= 1e-11 * r0.max(1.0));
        }
        prop_assert!(maxwellian_gap(&f, 1e-12) <= maxwellian_gap(&f0, 1e-12) * (1.0 + 1e-9) + 1e-14);
    }

    #[test]
    fn exact_power_laws_are_fitted_exactly(slope in 0.1..2.0f64, c in 0.01..100.0f64) {
        let pts: Vec<(f64, f64)> = [0.1, 0.05, 0.025, 0.0125].iter().map(|e: &f64| (*e, c * e.powf(slope))).collect();
        let fit = fit_rate(&pts).unwrap();
        prop_assert!((fit.slope - slope).abs() < 1e-10);
        prop_assert!(fit.max_residual < 1e-10);
    }
}
