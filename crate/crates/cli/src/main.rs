mod commands;
mod config;
mod report;

use clap::{Args, Parser, Subcommand};
use commands::{Context, Failure, Outcome};
use config::ExperimentConfig;
use report::{write_json, Gate};
use std::path::PathBuf;
use std::process::ExitCode;

/// Subordinate random walks on Z^d: weights, step laws, Green functions,
/// ball quantities, Harnack ratios and Monte Carlo cross-checks.
///
/// Exit status is 0 when every gate passes, 1 when a gate fails or a run is
/// invalid, and 2 on configuration errors.
#[derive(Parser, Debug)]
#[command(name = "subwalk", version, after_help = CONFIG_HELP)]
struct Cli {
    /// INI-style file with [spec], [walk], [ball], [mc] and [output] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for CSV tables and JSON reports [default: out].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed for Monte Carlo runs [default: 20240611].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the parallel parts; defaults to all cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default, Clone)]
struct Overrides {
    /// stable, mixture or relativistic.
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Lattice dimension, 1 to 3.
    #[arg(long)]
    d: Option<usize>,
    /// Truncation of the weight table.
    #[arg(long)]
    m: Option<usize>,
    /// Comma-separated ball radii.
    #[arg(long)]
    n: Option<String>,
    /// Any setting as section.key=value; repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// c_m and c(m) tables with their asymptotic bands.
    Weights(Overrides),
    /// One-step law on its window and its band against j.
    Steplaw(Overrides),
    /// Whole-space Green function table and its band against g.
    Green(Overrides),
    /// Exit times and ball Green functions for each radius.
    Ball(Overrides),
    /// Poisson kernels of balls and their band against l.
    Poisson(Overrides),
    /// Harnack ratios of point-mass boundary data across radii.
    Harnack(Overrides),
    /// Monte Carlo comparisons against the exact quantities.
    Mc(Overrides),
    /// Everything above, plus a summary report.
    All(Overrides),
}

const CONFIG_HELP: &str = "\
Configuration keys and defaults:
  [spec]   family=stable alpha=0.5 w1=1 alpha1=0.25 w2=1 alpha2=0.75 theta=1
  [walk]   d=2 m=4000 tail_target=1e-6 law_radius=0 green_radius=0 band_radius=16
           (radius 0: law 32/160/16 and green 32/32/16 for d=1/2/3)
  [ball]   n=8,16,32 a=0.3 b1=1/12 b2=1/6 harnack_a=b1,0.5
  [mc]     seed=20240611 paths=1000000 green_paths=100000 green_steps=400
           workers=8 max_steps=100000
  [output] out=out
Unknown sections or keys are rejected.";

fn build_config(cli: &Cli, ov: &Overrides) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = &ov.family {
        cfg.set("spec", "family", v)?;
    }
    if let Some(v) = ov.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = ov.d {
        cfg.d = v;
    }
    if let Some(v) = ov.m {
        cfg.m = v;
    }
    if let Some(v) = &ov.n {
        cfg.set("ball", "n", v)?;
    }
    for s in &ov.set {
        cfg.set_dotted(s)?;
    }
    if let Some(v) = &cli.out {
        cfg.out = v.clone();
    }
    if let Some(v) = cli.seed {
        cfg.seed = v;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<Vec<Gate>, Failure> {
    if let Some(j) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| Failure::Config(format!("--jobs: {e}")))?;
    }
    let ov = match &cli.command {
        Command::Weights(o)
        | Command::Steplaw(o)
        | Command::Green(o)
        | Command::Ball(o)
        | Command::Poisson(o)
        | Command::Harnack(o)
        | Command::Mc(o)
        | Command::All(o) => o,
    };
    let ctx = Context::new(build_config(cli, ov)?)?;
    let single = |f: fn(&Context) -> Outcome| f(&ctx);
    match cli.command {
        Command::Weights(_) => single(commands::weights),
        Command::Steplaw(_) => single(commands::steplaw),
        Command::Green(_) => single(commands::green),
        Command::Ball(_) => single(commands::ball),
        Command::Poisson(_) => single(commands::poisson),
        Command::Harnack(_) => single(commands::harnack),
        Command::Mc(_) => single(commands::mc),
        Command::All(_) => {
            let steps: [(&str, fn(&Context) -> Outcome); 7] = [
                ("weights", commands::weights),
                ("steplaw", commands::steplaw),
                ("green", commands::green),
                ("ball", commands::ball),
                ("poisson", commands::poisson),
                ("harnack", commands::harnack),
                ("mc", commands::mc),
            ];
            let mut all = Vec::new();
            let mut sections = serde_json::Map::new();
            for (name, f) in steps {
                eprintln!("running {name}");
                let gates = f(&ctx)?;
                sections.insert(name.into(), serde_json::json!(gates));
                all.extend(gates);
            }
            let failing: Vec<String> = all.iter().filter(|g| !g.pass).map(Gate::label).collect();
            let summary = serde_json::json!({ "config": ctx.cfg, "gates": sections, "failing": failing });
            write_json(&ctx.cfg.out.join("report.json"), &summary)?;
            Ok(all)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(gates) => {
            for g in &gates {
                println!("{} {} value {:.6e} limit {:.6e}", if g.pass { "PASS" } else { "FAIL" }, g.label(), g.value, g.limit);
            }
            let failing: Vec<String> = gates.iter().filter(|g| !g.pass).map(Gate::label).collect();
            if failing.is_empty() {
                ExitCode::SUCCESS
            } else {
                eprintln!("failing gates: {}", failing.join(", "));
                ExitCode::from(1)
            }
        }
        Err(Failure::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("run failed: {msg}");
            ExitCode::from(1)
        }
    }
}
