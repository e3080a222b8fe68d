mod args;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use vecrisk::container::{load_model, save_model, ModelFile};
use vecrisk::dataio::{normalize_rows, parse_sparse_text, split, synth_gen, Dataset, ParseOptions, SynthSpec};
use vecrisk::experiments::{default_size_grid, emit_csv, run_curve, CurveKind, CurveSpec};
use vecrisk::losses::{BaseLoss, LossKind, LossSpec};
use vecrisk::optimizer::{average_loss, evaluate_objective, train, RunRecord, StepSchedule, TrainConfig};
use vecrisk::rademacher::{sandwich_check, write_sandwich_csv, SampleKind, SandwichParams};
use vecrisk::regularizers::RegularizerSpec;
use vecrisk::rng::derive_seed;
use vecrisk::suites::{run_suite, Suite, SuiteConfig};
use vecrisk::{Error, Task};

use args::*;

const DEFAULT_PASS_GRID: [u64; 5] = [1, 2, 4, 8, 16];

/// Failure classes and their exit codes.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
    Property(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Property(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Property(m) => m,
        }
    }
}

type CmdResult = Result<(), Failure>;

fn usage(e: impl ToString) -> Failure {
    Failure::Usage(e.to_string())
}

fn data(e: impl ToString) -> Failure {
    Failure::Data(e.to_string())
}

/// Library errors from validating flags are usage errors; everything else is
/// about the data.
fn classify(e: Error) -> Failure {
    match e {
        Error::InvalidInput(m) => Failure::Usage(m),
        Error::Certificate { .. } => Failure::Property(e.to_string()),
        other => Failure::Data(other.to_string()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads as usize).build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let result = pool.install(|| match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Curve(a) => cmd_curve(&a),
        Command::Rademacher(a) => cmd_rademacher(&a),
        Command::Check(a) => cmd_check(&a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn task_of(arg: TaskArg) -> Task {
    match arg {
        TaskArg::Mcc => Task::Multiclass,
        TaskArg::Mlc => Task::Multilabel,
    }
}

fn parse_synth(text: &str, default_task: Task) -> Result<SynthSpec, Failure> {
    let (mut n, mut d, mut c) = (None, None, None);
    let mut spec = SynthSpec { n: 0, dim: 0, components: 0, task: default_task, noise: 0.0, seed: 0 };
    for item in text.split(',').filter(|s| !s.is_empty()) {
        let (key, value) = item.split_once('=').ok_or_else(|| usage(format!("bad --synth item `{item}`")))?;
        let bad = || usage(format!("bad --synth value `{item}`"));
        match key {
            "n" => n = Some(value.parse().map_err(|_| bad())?),
            "d" => d = Some(value.parse().map_err(|_| bad())?),
            "c" => c = Some(value.parse().map_err(|_| bad())?),
            "noise" => spec.noise = value.parse().map_err(|_| bad())?,
            "seed" => spec.seed = value.parse().map_err(|_| bad())?,
            "task" => spec.task = value.parse().map_err(|_| bad())?,
            _ => return Err(usage(format!("unknown --synth key `{key}`"))),
        }
    }
    match (n, d, c) {
        (Some(n), Some(d), Some(c)) => {
            spec.n = n;
            spec.dim = d;
            spec.components = c;
            Ok(spec)
        }
        _ => Err(usage("--synth needs n, d and c")),
    }
}

fn load_data(args: &DataArgs, default_task: Task, options: &ParseOptions) -> Result<Dataset, Failure> {
    let task = args.task.map(task_of).unwrap_or(default_task);
    let ds = match (&args.data, &args.synth) {
        (Some(path), None) => parse_sparse_text(path, task, options).map_err(data)?,
        (None, Some(text)) => synth_gen(&parse_synth(text, task)?).map_err(classify)?,
        _ => return Err(usage("exactly one of --data or --synth is required")),
    };
    Ok(if args.no_normalize { ds } else { normalize_rows(&ds) })
}

fn loss_kind(args: &LossArgs) -> Result<Option<LossKind>, Failure> {
    let base = match args.base {
        BaseArg::Hinge => BaseLoss::Hinge,
        BaseArg::Logistic => BaseLoss::Logistic,
    };
    Ok(args.loss.map(|l| match l {
        LossArg::Mcsvm => LossKind::McSvm(base),
        LossArg::Mlogistic => LossKind::MultinomialLogistic,
        LossArg::Topk => LossKind::TopKSvm { k: args.k },
        LossArg::Subset => LossKind::Subset(base),
        LossArg::Ranking => LossKind::Ranking(base),
    }))
    .and_then(|kind| match kind {
        Some(LossKind::TopKSvm { k: 0 }) => Err(usage("--k must be at least 1")),
        other => Ok(other),
    })
}

fn check_loss_fits(kind: LossKind, ds: &Dataset) -> CmdResult {
    if kind.task() != ds.task() {
        return Err(usage(format!("loss {kind} needs {} data, got {}", kind.task().name(), ds.task().name())));
    }
    if let LossKind::TopKSvm { k } = kind {
        if k >= ds.components() {
            return Err(usage(format!("--k must be below the number of classes ({})", ds.components())));
        }
    }
    Ok(())
}

enum Strength {
    Sigma(f64),
    Lambda(f64),
}

/// The regularizer from flags, or `None` when `--reg` is absent.
fn regularizer(args: &RegArgs) -> Result<Option<(RegularizerSpec, Strength)>, Failure> {
    let Some(reg) = args.reg else {
        return Ok(None);
    };
    let strength = match (args.sigma, args.lambda) {
        (Some(s), None) => Strength::Sigma(s),
        (None, Some(l)) => Strength::Lambda(l),
        _ => return Err(usage("one of --sigma or --lambda is required")),
    };
    let value = match strength {
        Strength::Sigma(v) | Strength::Lambda(v) => v,
    };
    let spec = match (reg, args.p) {
        (RegArg::Frobenius, None) => RegularizerSpec::frobenius(value),
        (RegArg::Frobenius, Some(_)) => return Err(usage("--p only applies to --reg l2p")),
        (RegArg::L2p, Some(p)) => RegularizerSpec::l2p(p, value),
        (RegArg::L2p, None) => return Err(usage("--reg l2p needs --p")),
    }
    .map_err(classify)?;
    Ok(Some((spec, strength)))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn write_log<W: Write>(records: &[RunRecord], mut out: W) -> io::Result<()> {
    writeln!(out, "step,empirical_objective,holdout_objective,iterate_frobenius_norm")?;
    for r in records {
        let holdout = r.holdout_objective.map(|v| format!("{v:?}")).unwrap_or_default();
        writeln!(out, "{},{:?},{},{:?}", r.step, r.empirical_objective, holdout, r.iterate_frobenius_norm)?;
    }
    out.flush()
}

fn cmd_train(a: &TrainArgs) -> CmdResult {
    let kind = loss_kind(&a.loss)?.ok_or_else(|| usage("--loss is required"))?;
    let (reg, strength) = regularizer(&a.reg)?.ok_or_else(|| usage("--reg is required"))?;
    if a.steps.is_none() && a.passes.is_none() {
        return Err(usage("one of --steps or --passes is required"));
    }
    let schedule = match (a.schedule, &strength) {
        (Some(ScheduleArg::Theorem), _) | (None, Strength::Sigma(_)) => StepSchedule::theorem(reg.sigma()),
        (Some(ScheduleArg::Experiment), _) | (None, Strength::Lambda(_)) => StepSchedule::experiment(reg.sigma()),
    }
    .map_err(classify)?;

    let ds = load_data(&a.data, kind.task(), &ParseOptions::default())?;
    check_loss_fits(kind, &ds)?;
    let (train_set, holdout) = match a.split {
        None => (ds, None),
        Some(f) if f > 0.0 && f < 1.0 => {
            let (tr, te) = split(&ds, 1.0 - f, derive_seed(a.seed, 1)).map_err(classify)?;
            (tr, Some(te))
        }
        Some(f) => return Err(usage(format!("--split must lie in (0, 1), got {f}"))),
    };

    let n = train_set.len() as u64;
    let total_steps = match (a.steps, a.passes) {
        (Some(t), _) | (None, Some(t)) if t == 0 => return Err(usage("--steps and --passes must be positive")),
        (Some(t), _) => t,
        (None, Some(p)) => p.checked_mul(n).ok_or_else(|| usage("--passes too large"))?,
        (None, None) => unreachable!(),
    };
    let record_every = a.record_every.unwrap_or(n);
    if record_every == 0 {
        return Err(usage("--record-every must be positive"));
    }
    let config = TrainConfig::new(LossSpec::new(kind), reg, schedule, total_steps, a.seed).record_every(record_every);
    let outcome = train(&train_set, holdout.as_ref(), &config).map_err(classify)?;

    if let Some(path) = &a.model_out {
        let mut model = ModelFile::new(train_set.task(), outcome.weights.clone());
        model.loss = Some(kind);
        model.regularizer = Some(reg);
        model.steps = Some(total_steps);
        model.seed = Some(a.seed);
        model.normalized = Some(!a.data.no_normalize);
        model.label_ids = train_set.label_ids().to_vec();
        save_model(&model, path).map_err(data)?;
    }
    if let Some(path) = &a.log_out {
        write_log(&outcome.records, create(path)?).map_err(data)?;
    }

    let last = outcome.records.last().expect("at least one record");
    print!("steps={} objective={} norm={}", last.step, last.empirical_objective, last.iterate_frobenius_norm);
    if let Some(h) = last.holdout_objective {
        print!(" holdout={h}");
    }
    if let Some(c) = outcome.certificate {
        print!(" certificate_bound={}", c.bound);
    }
    println!();
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> CmdResult {
    let model = load_model(&a.model).map_err(|e| data(format!("{}: {e}", a.model.display())))?;
    let kind = match loss_kind(&a.loss)? {
        Some(k) => k,
        None => model.loss.ok_or_else(|| usage("model stores no loss; pass --loss"))?,
    };
    let reg = match regularizer(&a.reg)? {
        Some((r, _)) => r,
        None => model.regularizer.ok_or_else(|| usage("model stores no regularizer; pass --reg"))?,
    };
    let w = &model.weights;
    let options = ParseOptions {
        dim: Some(w.dim()),
        components: Some(w.components()),
        label_ids: (!model.label_ids.is_empty()).then(|| model.label_ids.clone()),
    };
    let ds = load_data(&a.data, model.task, &options)?;
    if ds.dim() != w.dim() || ds.components() != w.components() || ds.task() != model.task {
        return Err(data(format!(
            "data ({} d={} c={}) does not match the model ({} d={} c={})",
            ds.task().name(),
            ds.dim(),
            ds.components(),
            model.task.name(),
            w.dim(),
            w.components()
        )));
    }
    check_loss_fits(kind, &ds)?;
    let loss = LossSpec::new(kind);
    let avg = average_loss(w, ds.examples(), &loss).map_err(data)?;
    let objective = evaluate_objective(w, ds.examples(), &loss, &reg).map_err(data)?;
    println!("objective={objective} loss={avg}");
    Ok(())
}

fn output(path: &Option<std::path::PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn cmd_curve(a: &CurveArgs) -> CmdResult {
    let kind = match a.kind {
        CurveKindArg::Passes => CurveKind::Passes,
        CurveKindArg::Samplesize => CurveKind::SampleSize,
        CurveKindArg::Gap => CurveKind::Gap,
    };
    let pool = load_data(&a.data, Task::Multiclass, &ParseOptions::default())?;
    let grid = match (&a.grid, kind) {
        (Some(grid), _) => grid.clone(),
        (None, CurveKind::Passes) => DEFAULT_PASS_GRID.to_vec(),
        (None, _) => default_size_grid(pool.len(), a.test_fraction),
    };
    if grid.is_empty() {
        return Err(usage("the pool is too small for a sample-size grid"));
    }
    let mut spec = CurveSpec::default_objective(kind, grid, a.reps, a.seed);
    spec.base.reg = RegularizerSpec::frobenius(a.lambda).map_err(classify)?;
    spec.base.schedule = StepSchedule::experiment(a.lambda).map_err(classify)?;
    spec.passes = a.passes;
    spec.test_fraction = a.test_fraction;

    check_loss_fits(spec.base.loss.kind(), &pool)?;
    let points = run_curve(&spec, &pool).map_err(classify)?;
    let mut out = output(&a.out)?;
    emit_csv(&points, kind, &mut out).map_err(data)?;
    out.flush().map_err(data)
}

fn cmd_rademacher(a: &RademacherArgs) -> CmdResult {
    if a.n == 0 || a.c == 0 || a.d == 0 {
        return Err(usage("--n, --c and --d must be positive"));
    }
    for (name, v) in [
        ("--lambda-cap", a.lambda_cap),
        ("--sigma", a.sigma),
        ("--kappa", a.kappa),
        ("--inflate-lower", a.inflate_lower),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(usage(format!("{name} must be positive, got {v}")));
        }
    }
    let mut params = SandwichParams::new(a.n, a.c, a.d, a.lambda_cap, a.sigma, a.trials, a.seed);
    params.kappa = a.kappa;
    params.random_samples = a.random_samples;
    params.lower_bound_scale = a.inflate_lower;
    let report = sandwich_check(&params).map_err(classify)?;

    let mut out = output(&a.out)?;
    write_sandwich_csv(&report, &mut out).map_err(data)?;
    out.flush().map_err(data)?;
    if a.out.is_some() {
        for row in &report.rows {
            let kind = match row.kind {
                SampleKind::Extremal => "extremal",
                SampleKind::Random => "random",
            };
            println!(
                "{} {kind} nc={} estimate={} std_error={} lower={} upper={}",
                if row.pass { "PASS" } else { "FAIL" },
                row.pairs,
                row.estimate.mean,
                row.estimate.std_error,
                row.lower_bound,
                row.upper_bound
            );
        }
    }
    if report.all_pass() {
        Ok(())
    } else {
        Err(Failure::Property("sandwich bounds violated".into()))
    }
}

fn cmd_check(a: &CheckArgs) -> CmdResult {
    let suites: Vec<Suite> = match a.suite {
        SuiteArg::Lipschitz => vec![Suite::Lipschitz],
        SuiteArg::Convexity => vec![Suite::Convexity],
        SuiteArg::Gradients => vec![Suite::Gradients],
        SuiteArg::SgdBound => vec![Suite::SgdBound],
        SuiteArg::All => Suite::ALL.to_vec(),
    };
    let config = SuiteConfig { trials: a.trials, seed: a.seed, mis_register: a.mis_register };
    let mut failed = Vec::new();
    for suite in suites {
        let reports = run_suite(suite, &config).map_err(classify)?;
        for r in &reports {
            println!("{r}");
        }
        let ok = reports.iter().all(|r| r.passed());
        println!("{} {suite}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            failed.push(suite.name());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Property(format!("failing suites: {}", failed.join(", "))))
    }
}
