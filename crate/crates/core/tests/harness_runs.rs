//! End-to-end harness behaviour: configuration, runs, fits, output files and the CLI.

use std::path::{Path, PathBuf};
use std::process::Command;

use flocklab::alignment::KernelSpec;
use flocklab::harness::{
    fit_rate, read_rate_points, run_single, run_sweep, verify_inequalities, ExperimentConfig, OutputOptions, Profile,
    TolerancePolicy,
};
use flocklab::{Boundary, FlockError, PotentialSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn demo() -> ExperimentConfig {
    ExperimentConfig::load(&manifest_dir().join("configs/demo.toml")).unwrap()
}

/// A coarse version of the demo for quick runs.
fn small() -> ExperimentConfig {
    let mut c = demo();
    c.grids.nx = 32;
    c.grids.nv = 32;
    c.model.t_final = 0.2;
    c.model.snapshot_dt = 0.1;
    c
}

fn out(dir: &Path) -> OutputOptions {
    OutputOptions {
        dir: Some(dir.to_path_buf()),
        snapshots: true,
    }
}

#[test]
fn shipped_demo_file_matches_the_builtin_demo() {
    assert_eq!(demo(), ExperimentConfig::demo());
    let round = ExperimentConfig::from_toml_str(&demo().to_toml()).unwrap();
    assert_eq!(round, demo());
}

#[test]
fn invalid_configurations_are_rejected() {
    let mut c = demo();
    c.sweep.epsilon_list = vec![0.1, -0.05];
    assert!(matches!(c.validate_epsilon_list(), Err(FlockError::InvalidConfig(_))));
    let text = demo().to_toml().replace("nx = 128", "nx = 2");
    assert!(ExperimentConfig::from_toml_str(&text).is_err());
    let text = demo().to_toml().replace("[grids]", "[grids]\nbogus = 1");
    assert!(matches!(ExperimentConfig::from_toml_str(&text), Err(FlockError::Parse(_))));
}

#[test]
fn kernel_file_is_resolved_next_to_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let n = 32;
    let mut csv = String::new();
    for i in 0..n {
        let row: Vec<String> = (0..n).map(|l| format!("{}", 1.0 / (1.0 + (i as f64 - l as f64).abs()))).collect();
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    std::fs::write(dir.path().join("k.csv"), csv).unwrap();
    let mut text = small().to_toml();
    text.insert_str(0, "kernel_file = \"k.csv\"\n");
    std::fs::write(dir.path().join("exp.toml"), text).unwrap();
    let cfg = ExperimentConfig::load(&dir.path().join("exp.toml")).unwrap();
    let k = cfg.kernel_on(&cfg.space_grid().unwrap()).unwrap();
    assert_eq!(k.at(0, 0), 1.0);
    assert_eq!(k.at(3, 1), 1.0 / 3.0);
    // the reference grid is finer; the table is repeated piecewise-constantly
    let kr = cfg.kernel_on(&cfg.reference_grid().unwrap()).unwrap();
    assert_eq!(kr.at(7, 2), 1.0 / 3.0);
}

#[test]
fn zero_final_time_gives_a_single_consistent_report() {
    let mut c = small();
    c.model.t_final = 0.0;
    let rec = run_single(&c, &OutputOptions::default()).unwrap();
    assert_eq!(rec.reports.len(), 1);
    let r = &rec.reports[0];
    assert_eq!(r.t, 0.0);
    assert!(r.rel_entropy.abs() < 1e-10, "{}", r.rel_entropy);
    assert!(r.maxwellian_gap < 1e-10);
}

fn equilibrium_run(nv: usize) -> flocklab::harness::RunRecord {
    let mut c = small();
    c.grids.nv = nv;
    c.kernel = KernelSpec::Constant { k0: 0.0 };
    c.potential = PotentialSpec::None;
    c.grids.boundary = Boundary::Periodic;
    c.initial.rho = Profile::Constant { value: 0.7 };
    c.initial.u = Profile::Constant { value: 0.0 };
    c.model.epsilon = 1e-3;
    run_single(&c, &OutputOptions::default()).unwrap()
}

#[test]
fn global_equilibrium_stays_put() {
    let rec = equilibrium_run(32);
    let r0 = rec.reports[0];
    for r in &rec.reports {
        assert!(r.maxwellian_gap <= r0.maxwellian_gap + 1e-8);
        assert!(r.rel_entropy < 1e-12);
        assert!((r.mass - r0.mass).abs() < 1e-12);
        assert!((r.kinetic_entropy - r0.kinetic_entropy).abs() < 1e-10);
    }
    let policy = TolerancePolicy::default();
    let ledger = verify_inequalities(&rec, &policy);
    for e in &ledger.entries {
        if e.name != "kinetic-entropy" {
            assert!(e.passed, "{}", ledger.render());
        }
    }
    // At equilibrium the only slack in the kinetic entropy inequality is the
    // quadrature error of D1 on the discrete Maxwellian, amplified by 1/eps;
    // it must vanish under velocity refinement.
    let d1 = |nv| equilibrium_run(nv).reports.iter().map(|r| r.d1).fold(0.0, f64::max);
    let (a, b, c) = (d1(32), d1(64), d1(128));
    assert!(b < a / 16.0 && c < b / 16.0, "{a:e} {b:e} {c:e}");
}

#[test]
fn demo_run_reproduces_the_stored_reports() {
    let dir = tempfile::tempdir().unwrap();
    let rec = run_single(
        &demo(),
        &OutputOptions {
            dir: Some(dir.path().to_path_buf()),
            snapshots: false,
        },
    )
    .unwrap();
    let got = std::fs::read_to_string(dir.path().join("reports.csv")).unwrap();
    let want = std::fs::read_to_string(manifest_dir().join("tests/data/demo_reports.csv")).unwrap();
    assert_eq!(got, want);
    let ledger = verify_inequalities(&rec, &TolerancePolicy::default());
    assert!(ledger.passed(), "{}", ledger.render());
    assert!(ledger.missing().is_empty());
}

#[test]
fn synthetic_power_laws_are_recovered() {
    let eps: [f64; 5] = [0.2, 0.1, 0.05, 0.025, 0.0125];
    let sqrt: Vec<(f64, f64)> = eps.iter().map(|e| (*e, 0.7 * e.sqrt())).collect();
    let fit = fit_rate(&sqrt).unwrap();
    assert!((fit.slope - 0.5).abs() < 1e-12);
    assert!((fit.intercept - 0.7f64.ln()).abs() < 1e-12);
    let lin: Vec<(f64, f64)> = eps.iter().map(|e| (*e, 3.0 * e)).collect();
    assert!((fit_rate(&lin).unwrap().slope - 1.0).abs() < 1e-12);

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let noisy: Vec<(f64, f64)> = eps
        .iter()
        .map(|e| (*e, 0.7 * e.sqrt() * (1.0 + 0.01 * rng.gen_range(-1.0..1.0))))
        .collect();
    let fit = fit_rate(&noisy).unwrap();
    assert!((fit.slope - 0.5).abs() < 0.03, "{}", fit.slope);
    assert!(fit.max_residual < 0.02);
}

#[test]
fn rate_points_round_trip_through_sweep_csv() {
    let text = "epsilon,error,x\n0.1,0.3,1\n0.05,0.2,1\n# fit all: slope=1\n0.025,0.14,2\n";
    assert_eq!(read_rate_points(text).unwrap(), vec![(0.1, 0.3), (0.05, 0.2), (0.025, 0.14)]);
    assert!(read_rate_points("epsilon,error\n0.1,abc\n").is_err());
}

#[test]
fn blow_up_of_the_reference_leaves_a_failure_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small();
    c.sweep.gradient_limit = 1e-6;
    let err = run_single(&c, &out(dir.path())).unwrap_err();
    let manifest = std::fs::read_to_string(dir.path().join("failure.toml")).unwrap();
    let parsed: toml::Value = toml::from_str(&manifest).unwrap();
    assert_eq!(parsed["status"].as_str(), Some("aborted"));
    assert_eq!(parsed["error"].as_str(), Some(err.to_string().as_str()));
}

#[test]
fn sweep_writes_one_directory_per_epsilon() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small();
    c.sweep.epsilon_list = vec![0.2, 0.1, 0.05];
    let res = run_sweep(&c, &out(dir.path())).unwrap();
    assert_eq!(res.points.len(), 3);
    for e in &c.sweep.epsilon_list {
        let sub = dir.path().join(format!("eps_{e}"));
        assert!(sub.join("reports.csv").exists(), "{sub:?}");
        assert!(sub.join("kinetic_0000.csv").exists());
        assert!(sub.join("euler_0000.csv").exists());
    }
    let sweep = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let pts = read_rate_points(&sweep).unwrap();
    assert_eq!(pts.len(), 3);
    assert!(sweep.contains("# fit all: slope="));
    // errors shrink with epsilon and the local equilibrium gap with it
    let gaps: Vec<f64> = res.points.iter().map(|p| p.final_maxwellian_gap).collect();
    assert!(gaps[1] < gaps[0] && gaps[2] < gaps[1], "{gaps:?}");
    assert!(res.points[2].error < res.points[0].error);
}

fn flocklab(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_flocklab")).args(args).output().unwrap()
}

#[test]
fn cli_simulate_and_fit() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let o = flocklab(&["simulate-euler", "--nx", "32", "--nv", "32", "--tfinal", "0.1", "--out", d]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("euler_entropy.csv").exists());
    assert!(dir.path().join("ledger.txt").exists());

    let o = flocklab(&[
        "simulate-kinetic", "--nx", "32", "--nv", "32", "--tfinal", "0.1", "--epsilon-list", "0.1", "--out", d,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let reports = std::fs::read_to_string(dir.path().join("reports.csv")).unwrap();
    assert!(reports.starts_with("t,F,D1,D2,E,rel_entropy"));

    let pts = dir.path().join("pts.csv");
    std::fs::write(&pts, "epsilon,error\n1,2\n0.25,1\n0.0625,0.5\n").unwrap();
    let o = flocklab(&["fit", pts.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("slope=0.500000"));
}

#[test]
fn cli_reports_errors_with_exit_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let o = flocklab(&["sweep", "--epsilon-list", "0.1,-1", "--out", d]);
    assert_eq!(o.status.code(), Some(2));
    let o = flocklab(&["simulate-kinetic", "--scheme", "sideways", "--out", d]);
    assert_eq!(o.status.code(), Some(2));
    let o = flocklab(&["fit", dir.path().join("missing.csv").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
