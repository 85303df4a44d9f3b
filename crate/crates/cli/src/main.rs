//! `perclap`: batch experiments on percolation Laplacians.
//!
//! Every subcommand reads an optional JSON config (`--config`), overrides its fields with the
//! flags given, and embeds the merged config in its output. Exit codes: 2 invalid input,
//! 3 budget exceeded, 4 resolution failure, 5 invariant or check failure.

mod artifact;
mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use perclap::graphs::BUDGET_ENV;
use perclap::Error;

use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "perclap", version, about = "Spectra and IDS of percolation Laplacians on Cayley graphs")]
#[command(after_help = "Environment:\n  PERCLAP_VERTEX_BUDGET  largest window any command may build (default 2000000)")]
struct Cli {
    /// Worker threads; outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug, Default)]
struct Common {
    /// JSON experiment config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Largest window built, overriding the environment.
    #[arg(long)]
    vertex_budget: Option<usize>,
}

#[derive(Args, Clone, Debug, Default)]
struct Sampling {
    /// Graph spec: z:<d>, tree:<k>, lamplighter:<m>[:s0|:std], heisenberg.
    #[arg(long)]
    graph: Option<String>,
    /// Model spec: site:<p>, bond:<p>, longrange:<beta>:J=pow:<alpha>, longrange:<beta>:J=exp:<c>.
    #[arg(long)]
    model: Option<String>,
    /// Assert subcriticality for parameters the built-in criterion does not cover.
    #[arg(long)]
    assume_subcritical: bool,
    #[arg(long)]
    samples: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Radius of the sampling window around the anchor.
    #[arg(long)]
    window_radius: Option<usize>,
}

#[derive(Args, Clone, Debug, Default)]
struct Grid {
    #[arg(long)]
    emin: Option<f64>,
    #[arg(long)]
    emax: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// IDS of a percolation operator, by Monte Carlo or from the exact z:1 series.
    Ids {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sampling: Sampling,
        #[command(flatten)]
        grid: Grid,
        /// Operator kind: N, A, D, P or R.
        #[arg(long)]
        operator: Option<String>,
        /// Transition kernel for P and R: `uniform` or `list:<s=w,...>` by generator index.
        #[arg(long)]
        kernel: Option<String>,
        /// Exact cluster series instead of sampling (z:1 site models).
        #[arg(long)]
        exact_series: bool,
    },
    /// IDS of the full-graph Laplacian.
    Periodic {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        graph: Option<String>,
        #[command(flatten)]
        grid: Grid,
        /// closed or folner:<level>.
        #[arg(long)]
        method: Option<String>,
        /// Evenly spaced energies instead of log-spaced ones.
        #[arg(long)]
        linear: bool,
    },
    /// Exponent fit on an IDS curve.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: Option<PathBuf>,
        /// vanhove, lifshitz or doublelog.
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        emin: Option<f64>,
        #[arg(long)]
        emax: Option<f64>,
    },
    /// Upper and lower IDS envelopes on a curve.
    Envelope {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: Option<PathBuf>,
        /// dirichlet-arbitrary, dirichlet-poly, neumann, lamplighter, markov-poly, regularized
        /// or longrange-neumann.
        #[arg(long)]
        theorem: Option<String>,
        /// Cluster-size tail CSV, or `exact` for the z:1 site tail.
        #[arg(long)]
        tail: Option<String>,
    },
    /// Eigenvalue inequalities on sampled clusters, balls and paths.
    BoundsCheck {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sampling: Sampling,
        /// Check balls of radius 1..=N.
        #[arg(long)]
        balls: Option<usize>,
        /// Check linear paths of length 1..=N.
        #[arg(long)]
        paths: Option<usize>,
    },
    /// Eigenvalue facts on lamplighter tetrahedra.
    Tetra {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        m: Option<u32>,
        #[arg(long)]
        n: Option<usize>,
        /// N, A or D; all three when absent.
        #[arg(long)]
        operator: Option<String>,
    },
    /// Return probabilities of the simple random walk.
    Walk {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        graph: Option<String>,
        #[arg(long)]
        steps: Option<usize>,
        /// exact, range or mc:<samples>.
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Survival function of the anchor cluster size.
    Tail {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sampling: Sampling,
    },
    /// Joins outputs of one pipeline into verdicts.
    Report {
        #[command(flatten)]
        common: Common,
        /// Output files to join.
        inputs: Vec<PathBuf>,
    },
}

impl Sampling {
    fn overlay(&self, c: &mut ExperimentConfig) {
        c.graph = self.graph.clone();
        c.model = self.model.clone();
        c.assume_subcritical = self.assume_subcritical.then_some(true);
        c.samples = self.samples;
        c.seed = self.seed;
        c.window_radius = self.window_radius;
    }
}

impl Grid {
    fn overlay(&self, c: &mut ExperimentConfig) {
        c.emin = self.emin;
        c.emax = self.emax;
        c.points = self.points;
    }
}

/// The command name and the flags as a config overlay.
fn flags(cmd: &Command) -> (&'static str, &Common, ExperimentConfig) {
    let mut c = ExperimentConfig::default();
    let (name, common) = match cmd {
        Command::Ids { common, sampling, grid, operator, kernel, exact_series } => {
            sampling.overlay(&mut c);
            grid.overlay(&mut c);
            c.operator = operator.clone();
            c.kernel = kernel.clone();
            c.exact_series = exact_series.then_some(true);
            ("ids", common)
        }
        Command::Periodic { common, graph, grid, method, linear } => {
            grid.overlay(&mut c);
            c.graph = graph.clone();
            c.method = method.clone();
            c.linear = linear.then_some(true);
            ("periodic", common)
        }
        Command::Fit { common, input, kind, emin, emax } => {
            c.input = input.clone();
            c.kind = kind.clone();
            c.emin = *emin;
            c.emax = *emax;
            ("fit", common)
        }
        Command::Envelope { common, input, theorem, tail } => {
            c.input = input.clone();
            c.theorem = theorem.clone();
            c.tail = tail.clone();
            ("envelope", common)
        }
        Command::BoundsCheck { common, sampling, balls, paths } => {
            sampling.overlay(&mut c);
            c.balls = *balls;
            c.paths = *paths;
            ("bounds-check", common)
        }
        Command::Tetra { common, m, n, operator } => {
            c.m = *m;
            c.n = *n;
            c.operator = operator.clone();
            ("tetra", common)
        }
        Command::Walk { common, graph, steps, method, seed } => {
            c.graph = graph.clone();
            c.steps = *steps;
            c.method = method.clone();
            c.seed = *seed;
            ("walk", common)
        }
        Command::Tail { common, sampling } => {
            sampling.overlay(&mut c);
            ("tail", common)
        }
        Command::Report { common, inputs } => {
            c.inputs = (!inputs.is_empty()).then(|| inputs.clone());
            ("report", common)
        }
    };
    c.vertex_budget = common.vertex_budget;
    c.out = common.out.clone();
    (name, common, c)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidInput(_)
        | Error::OutOfRange { .. }
        | Error::DimensionMismatch { .. }
        | Error::LabelMismatch(..)
        | Error::Disconnected { .. } => 2,
        Error::Budget { .. } | Error::CombinatorialExplosion { .. } => 3,
        Error::Resolution(_) => 4,
        Error::Invariant(_) => 5,
        Error::Convergence { .. } => 1,
    }
}

fn run(cli: Cli) -> perclap::Result<()> {
    let (name, common, overlay) = flags(&cli.command);
    let base = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let cfg = base.merged(&overlay);
    cfg.apply_budget();
    commands::dispatch(name, &cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: cannot start {t} worker threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, Error::Budget { .. }) {
                eprintln!("hint: raise the limit with --vertex-budget or {BUDGET_ENV}");
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
