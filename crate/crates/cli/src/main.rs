use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use saddopt::analysis::{bound_report, build_lti_system, mc_verify_lti, Scalars};
use saddopt::digraph::{build_exponential_digraph, build_geometric_digraph, column_stochastic_weights, Digraph};
use saddopt::engine::{Algorithm, StepSchedule};
use saddopt::harness::{self, ExperimentConfig, SweepParameter};
use saddopt::spectral::{graph_constants, lemma1_envelope_check, perron, CONSTANTS_TOL};
use saddopt::Error;
use serde_json::json;

const EXIT_CONFIG: u8 = 2;
const EXIT_ABORTED: u8 = 3;

#[derive(Parser)]
#[command(name = "saddopt", version, about = "Stochastic gradient tracking over directed graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Graph utilities.
    Graph {
        #[command(subcommand)]
        action: GraphCommand,
    },
    /// Perron vector, contraction factor and graph constants of a graph file.
    Constants {
        #[arg(long)]
        graph: PathBuf,
    },
    /// Constant-step bounds: step limits, rate, spectral radius, residual ball.
    Bound {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        mu: f64,
        #[arg(long)]
        ell: f64,
        #[arg(long)]
        sigma2: f64,
        #[arg(long)]
        alpha: f64,
    },
    /// Run one experiment (all replicas).
    Run(RunArgs),
    /// Run one experiment per parameter value.
    Sweep {
        #[command(flatten)]
        common: RunArgs,
        #[arg(long)]
        parameter: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Run several algorithms on the same configuration.
    Compare {
        #[command(flatten)]
        common: RunArgs,
        /// Comma-separated algorithm names.
        #[arg(long, value_delimiter = ',', default_value = "saddopt,addopt,sgp,gp")]
        algs: Vec<String>,
    },
    /// Monte-Carlo check of the three-state error inequality.
    VerifyLti {
        #[command(flatten)]
        common: RunArgs,
        #[arg(long, default_value_t = 1000)]
        replicas: usize,
        #[arg(long, value_delimiter = ',', default_value = "1,5,10,50,200")]
        checkpoints: Vec<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum GraphKind {
    Exponential,
    Geometric,
}

#[derive(Subcommand)]
enum GraphCommand {
    /// Generate a graph and print (or save) it as JSON.
    Gen {
        #[arg(long, value_enum)]
        kind: GraphKind,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.5)]
        radius: f64,
        #[arg(long, default_value_t = 0.0)]
        drop_prob: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Reject step sizes outside the analysed ranges.
    #[arg(long)]
    enforce_bounds: bool,
    /// Overrides the config's algorithm.
    #[arg(long)]
    alg: Option<String>,
}

impl RunArgs {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(alg) = &self.alg {
            cfg.algorithm = alg.parse()?;
        }
        Ok(cfg)
    }
}

enum Failure {
    Error(Error),
    Aborted,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn is_input_error(e: &Error) -> bool {
    !matches!(
        e,
        Error::PerronNotConverged { .. } | Error::SolverNotConverged { .. } | Error::NonFinite { .. } | Error::NonPositiveWeight { .. }
    ) && !matches!(e, Error::Io(_) | Error::Csv(_))
}

fn print_json(value: &impl serde::Serialize) -> Result<(), Error> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn load_graph(path: &Path) -> Result<Digraph, Error> {
    Digraph::load(path).map_err(|e| match e {
        Error::Io(io) => Error::Config {
            field: "graph".into(),
            message: format!("{}: {io}", path.display()),
        },
        other => other,
    })
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Graph {
            action:
                GraphCommand::Gen {
                    kind,
                    n,
                    radius,
                    drop_prob,
                    seed,
                    out,
                },
        } => {
            let g = match kind {
                GraphKind::Exponential => build_exponential_digraph(n)?,
                GraphKind::Geometric => build_geometric_digraph(n, radius, drop_prob, seed)?,
            };
            match out {
                Some(path) => g.save(path)?,
                None => println!("{}", g.to_json()?),
            }
        }
        Command::Constants { graph } => {
            let g = load_graph(&graph)?;
            let b = column_stochastic_weights(&g)?;
            let pd = perron(&b)?;
            let gc = graph_constants(&pd, &b, CONSTANTS_TOL);
            let envelope = lemma1_envelope_check(&b, &pd, &gc, 1000);
            print_json(&json!({
                "n": g.n(),
                "pi": pd.pi.as_slice(),
                "sigma_b": pd.sigma_b,
                "pi_min": pd.pi_min,
                "pi_max": pd.pi_max,
                "perron_residual": pd.residual,
                "constants": gc,
                "envelope": envelope,
            }))?;
        }
        Command::Bound {
            graph,
            mu,
            ell,
            sigma2,
            alpha,
        } => {
            let g = load_graph(&graph)?;
            let b = column_stochastic_weights(&g)?;
            let pd = perron(&b)?;
            let gc = graph_constants(&pd, &b, CONSTANTS_TOL);
            let sc = Scalars::new(mu, ell, sigma2)?;
            print_json(&bound_report(alpha, &gc, &pd, &sc)?)?;
        }
        Command::Run(args) => {
            let cfg = args.load()?;
            let report = harness::run_experiment(&cfg, args.out_dir.as_deref(), args.enforce_bounds)?;
            print_json(&report.summary)?;
            if report.aborted() {
                return Err(Failure::Aborted);
            }
        }
        Command::Sweep {
            common,
            parameter,
            values,
        } => {
            let cfg = common.load()?;
            let parameter: SweepParameter = parameter.parse()?;
            let report = harness::sweep(&cfg, parameter, &values, common.out_dir.as_deref(), common.enforce_bounds)?;
            print_json(&report)?;
            if report.entries.iter().any(|e| !e.summary.aborted_replicas.is_empty()) {
                return Err(Failure::Aborted);
            }
        }
        Command::Compare { common, algs } => {
            let cfg = common.load()?;
            let algs = algs.iter().map(|a| a.parse()).collect::<Result<Vec<Algorithm>, _>>()?;
            let (cmp, reports) =
                harness::compare_algorithms(&cfg, &algs, common.out_dir.as_deref(), common.enforce_bounds)?;
            print_json(&cmp)?;
            if reports.iter().any(|r| r.aborted()) {
                return Err(Failure::Aborted);
            }
        }
        Command::VerifyLti {
            common,
            replicas,
            checkpoints,
        } => {
            let cfg = common.load()?;
            let StepSchedule::Constant { alpha } = cfg.schedule else {
                return Err(Error::Config {
                    field: "schedule".into(),
                    message: "the error-system check needs a constant step".into(),
                }
                .into());
            };
            let prep = harness::prepare(&cfg)?;
            if common.enforce_bounds {
                harness::enforce_bounds(&prep)?;
            }
            let p = &prep.problem;
            let lti = build_lti_system(alpha, &p.constants, &p.perron, &prep.scalars)?;
            let result = mc_verify_lti(&lti, p, &prep.x0, cfg.seed, replicas, &checkpoints)?;
            let out = json!({ "alpha": alpha, "lti_valid": lti.valid, "verification": result });
            if let Some(dir) = &common.out_dir {
                std::fs::create_dir_all(dir).map_err(Error::from)?;
                std::fs::write(dir.join("verify_lti.json"), serde_json::to_string_pretty(&out).map_err(Error::from)?)
                    .map_err(Error::from)?;
            }
            print_json(&out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Aborted) => {
            eprintln!("error: run aborted on a non-finite iterate");
            ExitCode::from(EXIT_ABORTED)
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            if is_input_error(&e) {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
