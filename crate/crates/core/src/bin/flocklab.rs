use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use flocklab::harness::{
    fit_rate, randomized_checks, read_rate_points, run_single, run_sweep, verify_euler, verify_inequalities,
    write_euler_snapshot, ExperimentConfig, Ledger, OutputOptions, TolerancePolicy,
};
use flocklab::Result;

#[derive(Parser)]
#[command(name = "flocklab", version, about = "Kinetic flocking and its Euler-flocking limit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One kinetic run at the configured epsilon, compared against the Euler reference.
    SimulateKinetic(Common),
    /// The Euler-flocking reference alone.
    SimulateEuler(Common),
    /// Kinetic runs over the epsilon list and the fitted convergence rate.
    Sweep(Common),
    /// A kinetic run plus the randomized property checks; prints the ledger.
    Verify(Common),
    /// Fit the log-log slope of `epsilon,error` rows (e.g. a sweep.csv).
    Fit {
        /// CSV file whose first two columns are epsilon and error.
        input: PathBuf,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment file; the built-in demo setup when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "flocklab-out")]
    out: PathBuf,
    /// Comma-separated epsilon values; the first one is used by single runs.
    #[arg(long, value_delimiter = ',')]
    epsilon_list: Option<Vec<f64>>,
    /// Position cells of the kinetic grid.
    #[arg(long)]
    nx: Option<usize>,
    /// Velocity cells.
    #[arg(long)]
    nv: Option<usize>,
    /// Velocity cut-off.
    #[arg(long)]
    vmax: Option<f64>,
    /// Final time.
    #[arg(long)]
    tfinal: Option<f64>,
    /// Write one field CSV per snapshot.
    #[arg(long)]
    snapshots: bool,
    /// Scheme overrides, e.g. `lie,first-order,exact-projection,hll`.
    #[arg(long)]
    scheme: Option<String>,
    /// Seed of the randomized checks.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::demo(),
        };
        if let Some(l) = &self.epsilon_list {
            c.sweep.epsilon_list = l.clone();
            if let Some(e) = l.first() {
                c.model.epsilon = *e;
            }
        }
        if let Some(n) = self.nx {
            c.grids.nx = n;
        }
        if let Some(n) = self.nv {
            c.grids.nv = n;
        }
        if let Some(v) = self.vmax {
            c.grids.v_max = v;
        }
        if let Some(t) = self.tfinal {
            c.model.t_final = t;
        }
        if let Some(s) = &self.scheme {
            c.scheme.apply_overrides(s)?;
        }
        if let Some(s) = self.seed {
            c.sweep.seed = s;
        }
        c.validate()?;
        Ok(c)
    }

    fn output(&self) -> OutputOptions {
        OutputOptions {
            dir: Some(self.out.clone()),
            snapshots: self.snapshots,
        }
    }
}

fn finish(ledger: &Ledger, common: &Common) -> Result<bool> {
    std::fs::create_dir_all(&common.out)?;
    let text = ledger.render();
    std::fs::write(common.out.join("ledger.txt"), &text)?;
    print!("{text}");
    Ok(ledger.passed())
}

fn run(cli: Cli) -> Result<bool> {
    let policy = TolerancePolicy::default();
    match cli.command {
        Command::SimulateKinetic(common) => {
            let cfg = common.config()?;
            let rec = run_single(&cfg, &common.output())?;
            finish(&verify_inequalities(&rec, &policy), &common)
        }
        Command::SimulateEuler(common) => {
            let cfg = common.config()?;
            let solver = cfg.euler_solver()?;
            let traj = solver.advance(&cfg.reference_initial()?, cfg.model.t_final, cfg.model.snapshot_dt)?;
            std::fs::create_dir_all(&common.out)?;
            let mut csv = String::from("t,E,dissipation_integral\n");
            for (s, d) in traj.snapshots.iter().zip(&traj.dissipation_integral) {
                let e = flocklab::entropy::macro_entropy(s, &solver.potential, cfg.model.rho_floor);
                csv.push_str(&format!("{:.17e},{e:.17e},{d:.17e}\n", s.t));
            }
            std::fs::write(common.out.join("euler_entropy.csv"), csv)?;
            if common.snapshots {
                for (k, s) in traj.snapshots.iter().enumerate() {
                    write_euler_snapshot(&common.out.join(format!("euler_{k:04}.csv")), s, cfg.model.rho_floor)?;
                }
            }
            finish(&verify_euler(&traj, &solver.potential, cfg.model.rho_floor, &policy), &common)
        }
        Command::Sweep(common) => {
            let cfg = common.config()?;
            let res = run_sweep(&cfg, &common.output())?;
            for p in &res.points {
                println!("epsilon={} error={:.6e} maxwellian_gap={:.6e}", p.epsilon, p.error, p.final_maxwellian_gap);
            }
            println!(
                "slope={:.4} max_residual={:.4} (largest three: slope={:.4} max_residual={:.4})",
                res.fit.slope, res.fit.max_residual, res.fit_largest3.slope, res.fit_largest3.max_residual
            );
            let mut ledger = Ledger::default();
            for r in &res.runs {
                ledger.entries.extend(verify_inequalities(r, &policy).entries);
            }
            finish(&ledger, &common)
        }
        Command::Verify(common) => {
            let cfg = common.config()?;
            let rec = run_single(&cfg, &common.output())?;
            let mut ledger = verify_inequalities(&rec, &policy);
            ledger.entries.extend(randomized_checks(cfg.sweep.seed, 100));
            finish(&ledger, &common)
        }
        Command::Fit { input } => {
            let points = read_rate_points(&std::fs::read_to_string(&input)?)?;
            let fit = fit_rate(&points)?;
            println!("slope={:.6} intercept={:.6} max_residual={:.6}", fit.slope, fit.intercept, fit.max_residual);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
