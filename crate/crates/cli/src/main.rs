mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use hestats::fv::ErrorClass;

/// Statistical learning on homomorphically encrypted data.
#[derive(Parser)]
#[command(name = "hestats", version, about)]
struct Cli {
    /// Log progress to stderr (RUST_LOG also works).
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Scheme parameter helpers.
    #[command(subcommand)]
    Params(ParamsCmd),
    /// Generate a key set and its public part.
    Keygen(KeygenArgs),
    /// Print the header of any container file.
    Inspect { file: PathBuf },
    /// Quantise a CSV table into a dataset container.
    Encode(EncodeArgs),
    /// Encrypt every cell of a dataset container.
    EncryptData {
        #[arg(long)]
        public: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Decrypt every cell of a bundle (dataset, fit or prediction).
    Decrypt {
        #[arg(long)]
        keys: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Completely random forests.
    #[command(subcommand)]
    Crf(CrfCmd),
    /// Semi-parametric naive Bayes.
    #[command(subcommand)]
    Snb(SnbCmd),
    /// Multinomial naive Bayes.
    #[command(subcommand)]
    Mnb(MnbCmd),
    /// Repeated train/test experiments and synthetic data.
    #[command(subcommand)]
    Bench(BenchCmd),
    /// Split a dataset into shards and fit them through a directory queue.
    #[command(subcommand)]
    Shard(ShardCmd),
}

#[derive(Subcommand)]
enum ParamsCmd {
    /// Smallest tier meeting a security level, message bound and depth.
    Suggest {
        #[arg(long, default_value_t = 128)]
        lambda: u32,
        /// Largest absolute value any result must hold.
        #[arg(long)]
        max: u64,
        #[arg(long)]
        depth: u32,
        /// Widest sum per level (rows summed, squared plaintext scale factors).
        #[arg(long, default_value_t = 1)]
        fan_in: u64,
    },
}

#[derive(Args)]
struct ParamArgs {
    /// Ring degree; with --plain-modulus and --q-bits picks parameters directly.
    #[arg(long, requires_all = ["plain_modulus", "q_bits"])]
    degree: Option<usize>,
    #[arg(long)]
    plain_modulus: Option<u64>,
    #[arg(long)]
    q_bits: Option<u32>,
    /// Otherwise suggest parameters for this security level...
    #[arg(long, default_value_t = 128)]
    lambda: u32,
    /// ...message bound...
    #[arg(long, conflicts_with = "degree")]
    max: Option<u64>,
    /// ...and depth...
    #[arg(long, conflicts_with = "degree")]
    depth: Option<u32>,
    /// ...and widest sum per level.
    #[arg(long, default_value_t = 1, conflicts_with = "degree")]
    fan_in: u64,
}

#[derive(Args)]
struct KeygenArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Secret key set output.
    #[arg(long)]
    out_secret: PathBuf,
    /// Public and relinearisation key output.
    #[arg(long)]
    out_public: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Encoding {
    Onehot,
    Ordinal,
    Centered,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "y")]
    response: String,
    #[arg(long, default_value_t = 5)]
    bins: usize,
    #[arg(long, value_enum, default_value_t = Encoding::Onehot)]
    method: Encoding,
    /// Reuse a partition spec (e.g. the training one for test rows).
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Write the derived partition spec here.
    #[arg(long, conflicts_with = "spec")]
    spec_out: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum CrfCmd {
    /// Grow a forest over the variables of a dataset.
    Grow {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 100)]
        trees: usize,
        #[arg(long, default_value_t = 3)]
        depth: u32,
        #[arg(long, default_value_t = 1.0)]
        subset: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Count training rows per leaf and class.
    Fit {
        #[arg(long)]
        forest: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Stochastic fraction resample size (0 disables it).
        #[arg(long, default_value_t = 0)]
        resample: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        public: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Add fits of disjoint shards.
    Combine {
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        fits: Vec<PathBuf>,
    },
    /// Per-row class votes.
    Predict {
        #[arg(long)]
        forest: PathBuf,
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        public: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Class probabilities from (decrypted) votes, as CSV.
    Prob {
        #[arg(long)]
        votes: PathBuf,
        #[arg(long)]
        keys: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum SnbCmd {
    Fit {
        #[arg(long)]
        data: PathBuf,
        /// Joint intercept and slope per predictor (default).
        #[arg(long, conflicts_with = "unpaired")]
        paired: bool,
        /// Separate one-step intercept and slopes.
        #[arg(long)]
        unpaired: bool,
        #[arg(long)]
        public: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    Predict {
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        public: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Probabilities from raw predictions, as CSV.
    Assemble {
        #[arg(long)]
        raw: PathBuf,
        #[arg(long)]
        keys: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum MnbCmd {
    Fit {
        #[arg(long)]
        data: PathBuf,
        /// Laplace pseudocount.
        #[arg(long, default_value_t = 1)]
        laplace: u32,
        #[arg(long)]
        public: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    Predict {
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        public: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    Assemble {
        #[arg(long)]
        raw: PathBuf,
        #[arg(long)]
        keys: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum BenchCmd {
    /// Run an experiment described by a key = value file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Override the config's thread count.
        #[arg(long)]
        jobs: Option<usize>,
        /// Override the config's confusion threshold.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Write a synthetic two-class CSV.
    Synth {
        #[arg(long, default_value = "separable")]
        kind: String,
        #[arg(long, default_value_t = 200)]
        rows: usize,
        #[arg(long, default_value_t = 4)]
        predictors: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum ShardCmd {
    Split {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 32)]
        rows: usize,
        #[arg(long)]
        dir: PathBuf,
    },
    Run {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        forest: PathBuf,
        #[arg(long, default_value_t = 0)]
        resample: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        public: Option<PathBuf>,
        /// Fit at most this many shards, then stop (rerun to continue).
        #[arg(long)]
        stop_after: Option<usize>,
    },
}

/// A failed command: message plus the class that picks the exit status.
pub struct Failure {
    pub class: ErrorClass,
    pub msg: String,
}

macro_rules! failure_from {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure { class: e.class(), msg: e.to_string() }
            }
        }
    )*};
}
failure_from!(
    hestats::fv::FheError,
    hestats::encode::EncodeError,
    hestats::crf::CrfError,
    hestats::nb::NbError,
    hestats::bench::BenchError
);

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure { class: ErrorClass::Corrupt, msg: format!("i/o: {e}") }
    }
}

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Validation => 2,
        ErrorClass::Budget => 3,
        ErrorClass::Corrupt => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(exit_code(f.class))
        }
    }
}
