//! `qmsft`: JSON and CSV reports for decoherence-free functional inequalities.

mod commands;
mod model;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use qmsft::Error;

#[derive(Parser, Debug)]
#[command(name = "qmsft", version, about = "Decoherence-free log-Sobolev analysis of quantum Markov semigroups")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0x51)]
    pub seed: u64,
    /// Relative tolerance for property checks.
    #[arg(long, global = true, default_value_t = 1e-8)]
    pub tol: f64,
    /// Worker threads (defaults to the available parallelism).
    #[arg(long, global = true, env = "QMSFT_WORKERS")]
    pub workers: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Model JSON file, or one of the built-ins `wcd` and `depolarizing`.
    pub model: String,
    /// Number of qubits for the built-in `wcd`.
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    /// Comma-separated spectrum of σ for the built-in `depolarizing`.
    #[arg(long, value_delimiter = ',', default_value = "0.75,0.25")]
    pub sigma: Vec<f64>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Norms,
    Entropy,
    Hc,
    Nogo,
    All,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum VariantArg {
    Exact,
    TripleBar,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Block structure, spectral gap, universal constants and decoherence times.
    Analyze {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.01")]
        eps: Vec<f64>,
    },
    /// Run property suites; exit 1 if any check fails.
    Verify {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum, default_value_t = Suite::All)]
        suite: Suite,
        /// Random samples per check.
        #[arg(long, default_value_t = 20)]
        samples: usize,
        /// Multiplier on the universal log-Sobolev constant in the hypercontractivity suite.
        #[arg(long, default_value_t = 1.0)]
        c_scale: f64,
        /// Restarts for the log-Sobolev search.
        #[arg(long, default_value_t = 16)]
        restarts: usize,
    },
    /// Amalgamated norm of a matrix given as a grid of [re, im] pairs.
    Norm {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long = "X", alias = "x")]
        x: PathBuf,
        #[arg(long)]
        q: f64,
        #[arg(long)]
        p: f64,
        #[arg(long, value_enum, default_value_t = VariantArg::Exact)]
        variant: VariantArg,
    },
    /// The no-go sequence and the uniform-convexity defect along it.
    Nogo {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_delimiter = ',', default_value = "10,100,1000,10000")]
        k: Vec<u64>,
        /// Perturbation size for the numeric ratio.
        #[arg(long, default_value_t = qmsft::inequalities::NOGO_EPS)]
        epsilon: f64,
        /// Exponents for the uniform-convexity defect.
        #[arg(long, value_delimiter = ',', default_value = "1.5")]
        p: Vec<f64>,
    },
    /// Decoherence decay table for weakly collective decoherence.
    Wcd {
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.01")]
        eps: Vec<f64>,
        /// Largest simulated time.
        #[arg(long, default_value_t = 5.0)]
        t_max: f64,
        #[arg(long, default_value_t = 21)]
        points: usize,
        /// Random initial states.
        #[arg(long, default_value_t = 20)]
        states: usize,
    },
}

/// Why a command stopped.
#[derive(Debug)]
pub enum Failure {
    /// A property check failed.
    Property,
    /// Unreadable or malformed input.
    Input(String),
    Numerical(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            Failure::Input(e.to_string())
        } else {
            Failure::Numerical(e)
        }
    }
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Property => 1,
            Failure::Input(_) => 2,
            Failure::Numerical(Error::NotConverged { .. }) => 4,
            Failure::Numerical(_) => 3,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(w) = cli.global.workers {
        if w == 0 {
            eprintln!("error: --workers must be positive");
            return ExitCode::from(2);
        }
        qmsft::par::set_workers(w);
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Property => eprintln!("one or more checks failed"),
                Failure::Input(msg) => eprintln!("error: {msg}"),
                Failure::Numerical(e) => eprintln!("numerical failure: {e}"),
            }
            ExitCode::from(f.exit_code())
        }
    }
}
