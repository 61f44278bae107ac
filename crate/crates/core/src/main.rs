use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use mfgdta::io::{self, ExperimentConfig, RunMode};
use mfgdta::solver::{solve_mfe, Mode, SolverConfig};
use mfgdta::validate::{simulate_car, Routing};
use mfgdta::Error;

#[derive(Parser)]
#[command(name = "mfgdta", version, about = "Driving and routing equilibria of autonomous vehicles on road networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Mfg,
    Lwr,
    Both,
}

impl From<ModeArg> for RunMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Mfg => RunMode::Mfg,
            ModeArg::Lwr => RunMode::Lwr,
            ModeArg::Both => RunMode::Both,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve the equilibrium and write fields, queues, ratios and a summary.
    Run {
        config: PathBuf,
        #[arg(long, value_enum, default_value = "mfg")]
        mode: ModeArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve on a sequence of meshes and report error slopes.
    Convergence {
        config: PathBuf,
        /// Comma-separated mesh sizes, each half the previous.
        #[arg(long, value_delimiter = ',', required = true)]
        dx: Vec<f64>,
        #[arg(long, value_enum, default_value = "mfg")]
        mode: ModeArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve both the optimal-speed and the LWR-speed equilibria and compare them.
    Compare {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Drive a single car through a solved equilibrium.
    SimulateCar {
        config: PathBuf,
        #[arg(long)]
        origin: String,
        #[arg(long, default_value_t = 0.0)]
        t0: f64,
        /// Sample routes from the turning ratios with this seed instead of
        /// following the cheapest exit.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "mfg")]
        mode: ModeArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

const EXIT_NONCONVERGED: u8 = 2;

fn out_dir(cli: Option<PathBuf>, cfg: &ExperimentConfig) -> PathBuf {
    cli.or_else(|| cfg.outputs.dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn status(converged: bool) -> ExitCode {
    if converged {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_NONCONVERGED)
    }
}

fn load(path: &Path) -> Result<ExperimentConfig, Error> {
    io::load_config(path)
}

fn execute(cmd: Command) -> Result<ExitCode, Error> {
    match cmd {
        Command::Run { config, mode, out } => {
            let cfg = load(&config)?;
            let dir = out_dir(out, &cfg);
            let outcome = io::run_experiment(&cfg, mode.into(), &dir)?;
            for s in &outcome.solutions {
                eprintln!(
                    "{}: converged={} outer={} E={:.3e} time={:.2}s",
                    s.mode,
                    s.converged,
                    s.outer_iterations,
                    s.residuals.outer_error_history.last().copied().unwrap_or(f64::NAN),
                    s.wall_time
                );
            }
            eprintln!("wrote {}", dir.display());
            Ok(status(outcome.converged()))
        }
        Command::Convergence { config, dx, mode, out } => {
            let cfg = load(&config)?;
            let dir = out_dir(out, &cfg);
            let modes = RunMode::from(mode).modes();
            let mut ok = true;
            for m in &modes {
                let report = io::convergence_study(&cfg, &dx, *m)?;
                let sub = if modes.len() > 1 { dir.join(m.to_string()) } else { dir.clone() };
                std::fs::create_dir_all(&sub)?;
                io::write_convergence(&sub.join("convergence.csv"), &report)?;
                io::write_json(&sub.join("convergence.json"), &report)?;
                println!("{m}: dx -> MAE (rho, u, V, beta)");
                for l in &report.levels {
                    let e = &l.errors;
                    println!("  {:<8} {:.3e} {:.3e} {:.3e} {:.3e}", l.dx, e.rho, e.u, e.v, e.beta);
                }
                for (var, slope) in &report.slopes {
                    match slope {
                        Some(s) => println!("  slope {var:<4} {s:.3}"),
                        None => println!("  slope {var:<4} undefined (errors vanish)"),
                    }
                }
                ok &= report.converged();
            }
            Ok(status(ok))
        }
        Command::Compare { config, out } => {
            let cfg = load(&config)?;
            let dir = out_dir(out, &cfg);
            let outcome = io::run_experiment(&cfg, RunMode::Both, &dir)?;
            if let [m, l] = outcome.solutions.as_slice() {
                let c = io::compare(m, l);
                println!("max queue (mfg, lwr): {:?}", c.max_queue);
                println!("network empty at (mfg, lwr): {:?}", c.network_empty_time);
                println!("mean average velocity (mfg, lwr): {:?}", c.mean_average_velocity);
                println!("peak occupied links (mfg, lwr): {:?}", c.peak_occupied_links);
            }
            Ok(status(outcome.converged()))
        }
        Command::SimulateCar { config, origin, t0, seed, mode, out } => {
            let cfg = load(&config)?;
            let dir = out_dir(out, &cfg);
            let m = match mode {
                ModeArg::Lwr => Mode::Lwr,
                _ => Mode::Mfg,
            };
            let problem = cfg.problem()?;
            let sol = solve_mfe(&problem, &SolverConfig { mode: m, ..cfg.solver.clone() })?;
            let routing = seed.map_or(Routing::Argmin, |seed| Routing::Sample { seed });
            let car = simulate_car(&sol, &origin, t0, routing)?;
            let k = ((t0 / sol.problem.grid.dt).round() as usize).min(sol.problem.grid.nt);
            let node = sol
                .problem
                .dnet
                .network()
                .node_index(&origin)
                .expect("checked by simulate_car");
            let lambda = mfgdta::backward::nodal_cost(
                sol.values.pi.row(node),
                sol.queues.size[[node, k]],
                sol.problem.dnet.node(node).capacity,
                k,
                &sol.problem.grid,
                &sol.problem.params,
            );
            std::fs::create_dir_all(&dir)?;
            io::write_json(&dir.join("trajectory.json"), &car)?;
            println!("car cost {:.6}, nodal cost {:.6}, arrival {:?}", car.cost, lambda, car.arrival);
            Ok(status(sol.converged))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
