use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lorenz_lab::commands::{self, Check, LabError};
use lorenz_lab::config::{ConfigError, RunConfig};
use lorenz_lab::output::RunDir;

#[derive(Parser)]
#[command(
    name = "lorenz-lab",
    version,
    about = "Geometric Lorenz flow experiments"
)]
struct Cli {
    /// key = value config file; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Extra `key=value` overrides, applied after the file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one orbit and write samples and Σ-crossings as CSV.
    Simulate {
        #[arg(long, default_value_t = 100.0)]
        t_max: f64,
        #[arg(long, default_value_t = 0.4123, allow_negative_numbers = true)]
        x: f64,
        #[arg(long, default_value_t = 0.1, allow_negative_numbers = true)]
        y: f64,
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
    },
    /// Periodic orbits and the graph of α.
    ReturnMap {
        #[arg(long, default_value_t = 8)]
        n_max: usize,
    },
    /// Splitting, cones, sectional expansion and tangent-flow checks.
    VerifyHyperbolic {
        #[arg(long)]
        returns: Option<usize>,
    },
    /// Leaves, holonomy chart, injectivity, density and Bowen balls.
    Manifolds,
    /// Gap certificate for one separatrix time.
    CertifyGap {
        #[arg(long = "T")]
        t: Option<f64>,
    },
    /// The obstruction sweep, or the search on one torus instance file.
    TestSpec {
        #[arg(long)]
        instance: Option<PathBuf>,
    },
    /// Box-graph mixing for the return map, the cat map and a rotation.
    Mixing,
    /// Random two-segment cat-map instances.
    ControlCatmap,
    /// Everything, with a summary and a regression baseline.
    ReproduceAll {
        /// Earlier `baseline.json` to compare against.
        #[arg(long)]
        baseline: Option<PathBuf>,
    },
}

fn load(cli: &Cli) -> Result<RunConfig, ConfigError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut pairs = Vec::new();
    for s in &cli.set {
        let Some((k, v)) = s.split_once('=') else {
            return Err(ConfigError::Syntax {
                line: 0,
                msg: format!("--set expects KEY=VALUE, got `{s}`"),
            });
        };
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    if let Some(o) = &cli.out {
        pairs.push(("output_dir".into(), o.display().to_string()));
    }
    cfg.apply(&pairs)?;
    Ok(cfg)
}

fn report(check: Check) -> Result<(), LabError> {
    println!("{}", check.line());
    check.into_result().map(|_| ())
}

fn run(cli: &Cli) -> Result<(), LabError> {
    let cfg = load(cli)?;
    let dir = RunDir::create(&cfg)?;
    match &cli.command {
        Command::Simulate { t_max, x, y, dt } => {
            let s = commands::simulate(&cfg, &dir, [*x, *y], *t_max, *dt)?;
            println!("{} samples, {} crossings", s.samples, s.crossings);
        }
        Command::ReturnMap { n_max } => {
            let s = commands::return_map(&cfg, &dir, *n_max)?;
            println!(
                "lowest period {} at x* = {}, y* = {}",
                s.lowest.period_n, s.lowest.x_star, s.lowest.y_star
            );
        }
        Command::VerifyHyperbolic { returns } => report(
            commands::verify_hyperbolic(&cfg, &dir, returns.unwrap_or(cfg.hyperbolic_returns))?.1,
        )?,
        Command::Manifolds => report(commands::manifolds(&cfg, &dir)?.1)?,
        Command::CertifyGap { t } => {
            report(commands::certify_gap(&cfg, &dir, t.unwrap_or(cfg.gap_t))?.1)?
        }
        Command::TestSpec { instance: Some(p) } => {
            let r = commands::test_instance(&cfg, &dir, p)?;
            println!(
                "{}: deviation {} at eps {}",
                if r.result.is_witness() {
                    "witness"
                } else {
                    "no witness on the grid"
                },
                r.result.deviation(),
                r.result.eps
            );
        }
        Command::TestSpec { instance: None } => {
            let (r, check) = commands::test_spec(&cfg, &dir)?;
            print!("{}", dir.read("obstruction.txt")?);
            if r.regime_change {
                println!(
                    "loose eps admits a witness: the certificate's threshold separates the regimes"
                );
            }
            report(check)?
        }
        Command::Mixing => report(commands::mixing(&cfg, &dir)?.1)?,
        Command::ControlCatmap => report(commands::control_catmap(&cfg, &dir)?.1)?,
        Command::ReproduceAll { baseline } => {
            let s = commands::reproduce_all(&cfg, &dir, baseline.as_deref())?;
            for c in &s.checks {
                println!("{}", c.line());
            }
            for r in &s.regressions {
                println!("regression: {r}");
            }
            println!(
                "mixing={} specification={} (Lorenz) specification={} (cat map); {}",
                s.mixing, s.specification_lorenz, s.specification_catmap, s.sweep
            );
            if !s.headline_holds || !s.regressions.is_empty() || s.checks.iter().any(|c| !c.passed)
            {
                return Err(LabError::CertificateFailed("see summary.json".into()));
            }
        }
    }
    println!("artifacts in {}", dir.root().display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{msg}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
