//! `gossiplab`: graph generation, spectral analysis, perturbation sweeps and
//! Monte Carlo campaigns for broadcast gossip averaging.
//!
//! Exit codes: 0 success, 2 invalid configuration, 3 numerical failure,
//! 4 retry budget exhausted.

mod commands;
mod config;
mod error;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Workspace;
use crate::config::Settings;
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "gossiplab", version, about)]
struct Cli {
    /// key=value file; command-line flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory all file paths are resolved against.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a random geometric graph and write it as an edge list.
    Generate(GenerateArgs),
    /// Spectral report for one scheme on one graph.
    Analyze(AnalyzeArgs),
    /// Monte Carlo sweep over the perturbation parameter.
    Sweep(SweepArgs),
    /// Convergence trajectories for several schemes on shared seeds.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct GraphArgs {
    /// Edge-list file; when absent a graph is generated.
    #[arg(long)]
    graph: Option<String>,
    #[arg(long)]
    n: Option<String>,
    /// Connection radius or `auto` for sqrt(2 ln n / n).
    #[arg(long)]
    radius: Option<String>,
    /// Probability that an edge pair becomes one-directional.
    #[arg(long)]
    p_asym: Option<String>,
    /// Seed for graph generation; defaults to `--seed`.
    #[arg(long)]
    graph_seed: Option<String>,
    #[arg(long)]
    seed: Option<String>,
}

impl GraphArgs {
    fn overrides(&self) -> Vec<(&'static str, Option<String>)> {
        vec![
            ("graph", self.graph.clone()),
            ("n", self.n.clone()),
            ("radius", self.radius.clone()),
            ("p_asym", self.p_asym.clone()),
            ("graph_seed", self.graph_seed.clone()),
            ("seed", self.seed.clone()),
        ]
    }
}

#[derive(Args)]
struct SchemeArgs {
    /// ubga1, ubga2, ubga3, bbga or classic.
    #[arg(long)]
    scheme: Option<String>,
    /// A number, `auto-optimal` or `auto-eta-fraction:f`.
    #[arg(long)]
    epsilon: Option<String>,
    /// Mixing weight of the classic scheme.
    #[arg(long)]
    gamma: Option<String>,
    /// File of `j k a` lines replacing the scheme's mixing weights.
    #[arg(long)]
    mixing: Option<String>,
}

impl SchemeArgs {
    fn overrides(&self) -> Vec<(&'static str, Option<String>)> {
        vec![
            ("scheme", self.scheme.clone()),
            ("epsilon", self.epsilon.clone()),
            ("gamma", self.gamma.clone()),
            ("mixing", self.mixing.clone()),
        ]
    }
}

#[derive(Args)]
struct RunArgs {
    /// uniform, gaussian, spike or slope.
    #[arg(long)]
    init: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    #[arg(long)]
    threshold: Option<String>,
    /// `step` (|z(t) - z(t-1)| <= threshold) or `deviation` (q <= threshold^2).
    #[arg(long)]
    stop: Option<String>,
    #[arg(long)]
    max_iters: Option<String>,
    /// Evaluate the stop rule every `stride` iterations.
    #[arg(long)]
    stride: Option<String>,
}

impl RunArgs {
    fn overrides(&self) -> Vec<(&'static str, Option<String>)> {
        vec![
            ("init", self.init.clone()),
            ("trials", self.trials.clone()),
            ("threshold", self.threshold.clone()),
            ("stop", self.stop.clone()),
            ("max_iters", self.max_iters.clone()),
            ("stride", self.stride.clone()),
        ]
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    radius: Option<String>,
    #[arg(long)]
    p_asym: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    graph_seed: Option<String>,
    /// Output file, default `graph.txt`.
    #[arg(long)]
    output: Option<String>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    graph: GraphArgs,
    #[command(flatten)]
    scheme: SchemeArgs,
    /// Extra CSV rows: `default` or a comma-separated list of perturbations.
    #[arg(long)]
    grid: Option<String>,
    /// `second-moment` adds the mean-square stability test.
    #[arg(long)]
    check: Option<String>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    graph: GraphArgs,
    #[command(flatten)]
    scheme: SchemeArgs,
    #[command(flatten)]
    run: RunArgs,
    /// `default` (0.02..1.0 step 0.02) or a comma-separated list.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    output: Option<String>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    graph: GraphArgs,
    /// Comma-separated `kind` or `kind@epsilon` entries.
    #[arg(long)]
    schemes: Option<String>,
    /// Perturbation for entries without `@`.
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    gamma: Option<String>,
    /// File of `j k a` lines replacing every scheme's mixing weights.
    #[arg(long)]
    mixing: Option<String>,
    #[command(flatten)]
    run: RunArgs,
    /// thinned, full or none.
    #[arg(long)]
    series: Option<String>,
    /// Also write one trajectory file per trial.
    #[arg(long)]
    per_trial: bool,
    /// Also write an SVG chart of mean r(t).
    #[arg(long)]
    svg: bool,
}

fn flag(v: bool) -> Option<String> {
    v.then(|| "true".to_string())
}

fn run(cli: Cli) -> Result<(), CliError> {
    commands::configure_threads(std::env::var("GOSSIPLAB_THREADS").ok())?;
    let ws = Workspace { out_dir: cli.out };
    let cfg = cli.config.as_deref();
    match cli.command {
        Command::Generate(a) => {
            let o = vec![
                ("n", a.n),
                ("radius", a.radius),
                ("p_asym", a.p_asym),
                ("seed", a.seed),
                ("graph_seed", a.graph_seed),
                ("output", a.output),
            ];
            commands::generate(Settings::resolve(cfg, o)?, &ws)
        }
        Command::Analyze(a) => {
            let mut o = a.graph.overrides();
            o.extend(a.scheme.overrides());
            o.extend([("grid", a.grid), ("check", a.check)]);
            commands::analyze(Settings::resolve(cfg, o)?, &ws)
        }
        Command::Sweep(a) => {
            let mut o = a.graph.overrides();
            o.extend(a.scheme.overrides());
            o.extend(a.run.overrides());
            o.extend([("grid", a.grid), ("output", a.output)]);
            commands::sweep(Settings::resolve(cfg, o)?, &ws)
        }
        Command::Simulate(a) => {
            let mut o = a.graph.overrides();
            o.extend(a.run.overrides());
            o.extend([
                ("schemes", a.schemes),
                ("epsilon", a.epsilon),
                ("gamma", a.gamma),
                ("mixing", a.mixing),
                ("series", a.series),
                ("per_trial", flag(a.per_trial)),
                ("svg", flag(a.svg)),
            ]);
            commands::simulate(Settings::resolve(cfg, o)?, &ws)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
