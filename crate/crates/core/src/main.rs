use clap::{Args, Parser, Subcommand};
use pfnav::config;
use pfnav::pipeline::Scenario;
use pfnav::synthesis::Synthesis;
use std::path::PathBuf;
use std::process::ExitCode;

/// Density-based safe navigation from learned Perron–Frobenius generators.
#[derive(Parser)]
#[command(name = "pfnav", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate snapshot pairs for the drift and input fields.
    Snapshots(Common),
    /// Fit NSDMD operators from stored snapshots.
    Fit(Common),
    /// Assemble and solve the density LP; writes the controller bundle.
    Synthesize(Common),
    /// Closed- and open-loop trajectories from X0.
    Simulate(Common),
    /// Monte Carlo collision estimate for the stored controller.
    Eval(Common),
    /// Density on a uniform grid.
    DensityGrid(Common),
    /// Every stage in order.
    Pipeline(Common),
}

#[derive(Args)]
struct Common {
    /// Config file, or the name of a shipped scenario (example1, example2, ...).
    #[arg(long)]
    config: PathBuf,
    /// Full-scale basis and snapshot grids.
    #[arg(long)]
    full: bool,
    /// Print the attained minimum of uᵀDv.
    #[arg(long)]
    best_gamma: bool,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

const EXIT_INFEASIBLE: u8 = 2;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn scenario(c: &Common) -> pfnav::Result<Scenario> {
    let mut cfg = config::load(&c.config)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    Scenario::new(cfg, c.full, c.out.clone())
}

fn report_synthesis(s: &Synthesis, always: bool) -> ExitCode {
    match s {
        Synthesis::Feasible(p) => {
            if always {
                println!("best_gamma={}", p.hazard_value);
            }
            println!(
                "feasible hazard={} residual_eq={}",
                p.hazard_value, p.residual_eq
            );
            ExitCode::SUCCESS
        }
        Synthesis::Infeasible {
            best_gamma,
            min_residual,
            ..
        } => {
            println!("infeasible best_gamma={best_gamma}");
            if let Some(r) = min_residual {
                println!("min_residual={r}");
            }
            ExitCode::from(EXIT_INFEASIBLE)
        }
    }
}

fn run(cmd: Cmd) -> pfnav::Result<ExitCode> {
    match cmd {
        Cmd::Snapshots(c) => {
            let s = scenario(&c)?;
            s.write_config()?;
            let (d, i) = s.snapshots()?;
            println!(
                "snapshot pairs: drift {} input {} -> {}",
                d.len(),
                i.len(),
                s.out.display()
            );
        }
        Cmd::Fit(c) => {
            let s = scenario(&c)?;
            let ops = s.fit(&s.load_snapshots()?)?;
            println!(
                "operators N={} markov violation drift {:e} input {:e}",
                ops.drift.len(),
                ops.drift.markov_violation(),
                ops.input.markov_violation()
            );
        }
        Cmd::Synthesize(c) => {
            let s = scenario(&c)?;
            let problem = s.problem(&s.load_operators()?)?;
            let (res, _) = s.synthesize(&problem)?;
            return Ok(report_synthesis(&res, c.best_gamma));
        }
        Cmd::Simulate(c) => {
            let s = scenario(&c)?;
            let ctrl = s.load_controller()?;
            let recs = s.simulate(&ctrl)?;
            let reached = recs
                .iter()
                .filter(|r| r.closed.end == pfnav::dynamics::End::Reached)
                .count();
            println!(
                "{} closed-loop trajectories, {reached} reached the target",
                recs.len()
            );
        }
        Cmd::Eval(c) => {
            let s = scenario(&c)?;
            let ctrl = s.load_controller()?;
            let r = s.evaluate(&ctrl)?;
            println!(
                "estimate={} stderr={} bound={}",
                r.estimate,
                r.stderr,
                ctrl.pair().hazard_value
            );
        }
        Cmd::DensityGrid(c) => {
            let s = scenario(&c)?;
            let ctrl = s.load_controller()?;
            let rows = s.density_grid(&ctrl, s.cfg.density_grid)?;
            println!(
                "{} grid points -> {}",
                rows.len(),
                s.out.join("density_grid.csv").display()
            );
        }
        Cmd::Pipeline(c) => {
            let s = scenario(&c)?;
            let summary = s.run()?;
            if let Some(r) = &summary.mc {
                println!(
                    "estimate={} stderr={} bound={}",
                    r.estimate,
                    r.stderr,
                    summary.synthesis.best_gamma()
                );
            }
            return Ok(report_synthesis(&summary.synthesis, c.best_gamma));
        }
    }
    Ok(ExitCode::SUCCESS)
}
