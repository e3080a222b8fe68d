use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "vecrisk", version, about = "Regularized vector-valued learning with SGD")]
pub struct Cli {
    /// Worker threads for evaluation, repetitions and Monte-Carlo trials
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    pub threads: u16,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model with SGD and write the final iterate
    Train(TrainArgs),
    /// Evaluate a saved model: prints `objective=<v> loss=<v>`
    Eval(EvalArgs),
    /// Run a curve experiment and write its CSV
    Curve(CurveArgs),
    /// Check the Rademacher sandwich bounds and write a CSV report
    Rademacher(RademacherArgs),
    /// Run the randomized property suites
    Check(CheckArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Sparse text data file (`label idx:val ...`, 1-based indices)
    #[arg(long, conflicts_with = "synth")]
    pub data: Option<PathBuf>,

    /// Synthetic data, e.g. `n=1000,d=10,c=5,noise=0.05,task=mcc,seed=1`
    #[arg(long)]
    pub synth: Option<String>,

    /// Task of the data file (or of the synthetic data when `task=` is not given)
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,

    /// Keep inputs as read instead of scaling each row to unit norm
    #[arg(long)]
    pub no_normalize: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Mcc,
    Mlc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossArg {
    Mcsvm,
    Mlogistic,
    Topk,
    Subset,
    Ranking,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaseArg {
    Hinge,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegArg {
    Frobenius,
    L2p,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScheduleArg {
    /// eta_t = 1 / (t sigma)
    Theorem,
    /// eta_t = 1 / (lambda t + 1)
    Experiment,
}

#[derive(Debug, Args)]
pub struct LossArgs {
    /// Loss function
    #[arg(long, value_enum)]
    pub loss: Option<LossArg>,

    /// Scalar base loss for mcsvm, subset and ranking
    #[arg(long, value_enum, default_value = "hinge")]
    pub base: BaseArg,

    /// Order of the top-k loss, 1 <= k < c
    #[arg(long, default_value_t = 1)]
    pub k: usize,
}

#[derive(Debug, Args)]
pub struct RegArgs {
    /// Regularizer
    #[arg(long, value_enum)]
    pub reg: Option<RegArg>,

    /// Group-norm exponent for l2p, in (1, 2]
    #[arg(long)]
    pub p: Option<f64>,

    /// Regularization strength; selects the theorem schedule by default
    #[arg(long, conflicts_with = "lambda")]
    pub sigma: Option<f64>,

    /// Regularization strength; selects the experiment schedule by default
    #[arg(long)]
    pub lambda: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,

    #[command(flatten)]
    pub loss: LossArgs,

    #[command(flatten)]
    pub reg: RegArgs,

    /// Step-size schedule (default: theorem with --sigma, experiment with --lambda)
    #[arg(long, value_enum)]
    pub schedule: Option<ScheduleArg>,

    /// Number of SGD steps
    #[arg(long, conflicts_with = "passes")]
    pub steps: Option<u64>,

    /// Number of passes; one pass is n steps
    #[arg(long)]
    pub passes: Option<u64>,

    /// Seed for example sampling and the holdout split
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Fraction of the data held out and evaluated alongside training
    #[arg(long)]
    pub split: Option<f64>,

    /// Record the objective every this many steps (default: once per pass)
    #[arg(long)]
    pub record_every: Option<u64>,

    /// Where to write the trained model
    #[arg(long)]
    pub model_out: Option<PathBuf>,

    /// Where to write the run log CSV
    #[arg(long)]
    pub log_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model file written by `train`
    #[arg(long)]
    pub model: PathBuf,

    #[command(flatten)]
    pub data: DataArgs,

    /// Loss and regularizer default to those stored in the model
    #[command(flatten)]
    pub loss: LossArgs,

    #[command(flatten)]
    pub reg: RegArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CurveKindArg {
    Passes,
    Samplesize,
    Gap,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    /// Curve to compute
    #[arg(long, value_enum)]
    pub kind: CurveKindArg,

    #[command(flatten)]
    pub data: DataArgs,

    /// Comma-separated, strictly increasing pass counts or training sizes
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<u64>>,

    /// Repetitions per grid value
    #[arg(long, default_value_t = 10)]
    pub reps: usize,

    /// Base seed for splits, subsamples and SGD
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Passes per run for samplesize and gap curves
    #[arg(long, default_value_t = 5)]
    pub passes: u64,

    /// Regularization strength, also used in the step-size schedule
    #[arg(long, default_value_t = 0.01)]
    pub lambda: f64,

    /// Share of the pool held out for testing
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,

    /// Output CSV (standard output if omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RademacherArgs {
    /// Sample size n
    #[arg(long)]
    pub n: usize,

    /// Number of components c
    #[arg(long)]
    pub c: usize,

    /// Input dimension d
    #[arg(long)]
    pub d: usize,

    /// Bound on the regularized risk at the optimum, Lambda
    #[arg(long)]
    pub lambda_cap: f64,

    /// Regularization strength sigma
    #[arg(long)]
    pub sigma: f64,

    /// Monte-Carlo sign draws; 0 enumerates all signs when nc <= 20
    #[arg(long)]
    pub trials: u64,

    /// Seed for the sign draws and random samples
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Number of random samples checked against the upper bound
    #[arg(long, default_value_t = 1)]
    pub random_samples: usize,

    /// Input norm bound kappa
    #[arg(long, default_value_t = 1.0)]
    pub kappa: f64,

    /// Test hook: multiply the lower bound by this factor
    #[arg(long, default_value_t = 1.0)]
    pub inflate_lower: f64,

    /// Output CSV (standard output if omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SuiteArg {
    Lipschitz,
    Convexity,
    Gradients,
    SgdBound,
    All,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// Suite to run
    #[arg(long, value_enum, default_value = "all")]
    pub suite: SuiteArg,

    /// Random instances per check
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,

    /// Seed for the random instances
    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    /// Test hook: register every loss with half its Lipschitz constant
    #[arg(long)]
    pub mis_register: bool,
}
