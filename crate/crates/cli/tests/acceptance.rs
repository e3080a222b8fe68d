//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng as _;

use vecrisk::dataio::{
    normalize_rows, parse_sparse_text_from, synth_gen, write_sparse_text, Dataset, ParseOptions, SynthSpec,
};
use vecrisk::experiments::{run_gap_curve, run_passes_curve, run_samplesize_curve, CurveKind, CurveSpec};
use vecrisk::losses::{BaseLoss, LossKind, LossSpec};
use vecrisk::optimizer::{train, StepSchedule, TrainConfig};
use vecrisk::rademacher::{exhaustive_mean_abs_sum, sandwich_check, SandwichParams};
use vecrisk::regularizers::RegularizerSpec;
use vecrisk::rng::{derive_seed, rng_from_seed};
use vecrisk::stats::spearman;
use vecrisk::suites::{convexity_suite, gradient_suite, lipschitz_suite, CheckReport, SuiteConfig};
use vecrisk::{Label, LabeledExample, SparseVector, Task};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Outcome {
        Outcome { pass, detail: detail.into() }
    }
}

fn summarize(reports: &[CheckReport]) -> Outcome {
    let failing: Vec<String> = reports.iter().filter(|r| !r.passed()).map(|r| r.to_string()).collect();
    let trials: u64 = reports.iter().map(|r| r.trials).sum();
    if failing.is_empty() {
        let worst = reports.iter().map(|r| r.worst_excess).fold(f64::NEG_INFINITY, f64::max);
        Outcome::new(true, format!("{} checks, {trials} trials, worst excess {worst:e}", reports.len()))
    } else {
        Outcome::new(false, failing.join("; "))
    }
}

fn lipschitz() -> Outcome {
    let reports = lipschitz_suite(&SuiteConfig::new(1000, 1)).unwrap();
    let per_loss = reports.iter().filter(|r| r.check != "subgradient-norm").count();
    let mut out = summarize(&reports);
    if per_loss != 8 || reports.iter().any(|r| r.check != "subgradient-norm" && r.trials != 1000) {
        out = Outcome::new(false, format!("expected 8 losses x 1000 trials, got {per_loss} reports"));
    }
    out
}

fn convexity() -> Outcome {
    summarize(&convexity_suite(&SuiteConfig::new(1000, 2)).unwrap())
}

fn gradients() -> Outcome {
    summarize(&gradient_suite(&SuiteConfig::new(100, 3)).unwrap())
}

fn certificate() -> Outcome {
    let losses = [
        LossKind::McSvm(BaseLoss::Hinge),
        LossKind::McSvm(BaseLoss::Logistic),
        LossKind::MultinomialLogistic,
        LossKind::TopKSvm { k: 1 },
        LossKind::TopKSvm { k: 2 },
        LossKind::TopKSvm { k: 3 },
        LossKind::Subset(BaseLoss::Hinge),
        LossKind::Subset(BaseLoss::Logistic),
        LossKind::Ranking(BaseLoss::Hinge),
        LossKind::Ranking(BaseLoss::Logistic),
    ];
    let sigma = 0.01;
    let mut worst_ratio: f64 = 0.0;
    for (i, kind) in losses.into_iter().enumerate() {
        let spec = SynthSpec { n: 2000, dim: 20, components: 5, task: kind.task(), noise: 0.05, seed: 40 + i as u64 };
        let ds = normalize_rows(&synth_gen(&spec).unwrap());
        let cfg = TrainConfig::new(
            LossSpec::new(kind),
            RegularizerSpec::frobenius(sigma).unwrap(),
            StepSchedule::theorem(sigma).unwrap(),
            10 * ds.len() as u64,
            derive_seed(4, i as u64),
        );
        // train checks the bound after every step and fails on the first violation
        match train(&ds, None, &cfg) {
            Ok(out) => {
                let cert = out.certificate.expect("frobenius + theorem schedule is certified");
                if cert.max_observed > cert.bound + 1e-9 {
                    return Outcome::new(false, format!("{kind}: {} > {}", cert.max_observed, cert.bound));
                }
                worst_ratio = worst_ratio.max(cert.max_observed / cert.bound);
            }
            Err(e) => return Outcome::new(false, format!("{kind}: {e}")),
        }
    }
    Outcome::new(true, format!("10 runs, max ||w_t|| / bound = {worst_ratio:.4}"))
}

fn sandwich() -> Outcome {
    let mut details = Vec::new();
    for (n, c) in [(1, 1), (2, 2), (3, 4), (5, 4), (10, 2), (20, 1)] {
        let report = sandwich_check(&SandwichParams::new(n, c, 4, 0.5, 0.1, 0, 10 + n as u64)).unwrap();
        if !report.all_pass() || !report.rows.iter().all(|r| r.estimate.exact) {
            return Outcome::new(false, format!("exact nc={}: {report:?}", n * c));
        }
    }
    details.push("exact nc<=20 ok".to_string());
    for (n, c) in [(20, 5), (80, 5), (320, 5)] {
        let report = sandwich_check(&SandwichParams::new(n, c, 4, 0.5, 0.1, 100_000, 20 + n as u64)).unwrap();
        if !report.all_pass() {
            return Outcome::new(false, format!("monte-carlo nc={}: {report:?}", n * c));
        }
        let r = &report.rows[0];
        details.push(format!(
            "nc={} est={:.5} in [{:.5}, {:.5}]",
            n * c,
            r.estimate.mean,
            r.lower_bound,
            r.upper_bound
        ));
    }
    for m in 1..=10u32 {
        let e = exhaustive_mean_abs_sum(m);
        if e < (m as f64 / 2.0).sqrt() {
            return Outcome::new(false, format!("Khintchine floor fails at m={m}: {e}"));
        }
    }
    details.push("Khintchine m=1..10 ok".to_string());
    Outcome::new(true, details.join(", "))
}

fn synth_pool(n: usize, seed: u64) -> Dataset {
    normalize_rows(
        &synth_gen(&SynthSpec { n, dim: 20, components: 5, task: Task::Multiclass, noise: 0.05, seed }).unwrap(),
    )
}

fn plateau() -> Outcome {
    let pool = synth_pool(2000, 1);
    let spec = CurveSpec::default_objective(CurveKind::Passes, vec![1, 5, 10], 10, 7);
    let points = run_passes_curve(&spec, &pool).unwrap();
    let (m1, m5, m10) = (points[0].test().mean, points[1].test().mean, points[2].test().mean);
    let slack = 0.1 * (m1 - m5) + 1e-3;
    let pass = m5 <= m1 && (m10 - m5).abs() <= slack;
    Outcome::new(
        pass,
        format!("means 1/5/10 passes = {m1:.6}/{m5:.6}/{m10:.6}, |m10-m5| = {:.6} vs {slack:.6}", (m10 - m5).abs()),
    )
}

fn sample_size() -> Outcome {
    let pool = synth_pool(8000, 2);
    let grid = vec![100, 200, 400, 800, 1600, 3200];
    let spec = CurveSpec::default_objective(CurveKind::SampleSize, grid.clone(), 10, 11);
    let points = run_samplesize_curve(&spec, &pool).unwrap();
    let gap_spec = CurveSpec { kind: CurveKind::Gap, ..spec };
    let gaps = run_gap_curve(&gap_spec, &pool).unwrap();

    let xs: Vec<f64> = grid.iter().map(|&g| g as f64).collect();
    let train: Vec<f64> = points.iter().map(|p| p.train().mean).collect();
    let test: Vec<f64> = points.iter().map(|p| p.test().mean).collect();
    let gap: Vec<f64> = gaps.iter().map(|p| p.gap().mean).collect();
    let (rt, rs, rg) = (spearman(&xs, &train), spearman(&xs, &test), spearman(&xs, &gap));
    let pass = rt >= 0.8 && rs <= -0.8 && rg <= -0.8 && gap.iter().all(|&g| g > 0.0);
    Outcome::new(
        pass,
        format!(
            "rho train={rt:.2} test={rs:.2} gap={rg:.2}, min gap={:.4}",
            gap.iter().fold(f64::INFINITY, |a, &b| a.min(b))
        ),
    )
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_vecrisk")).args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?} exited with {}: {}", out.status, String::from_utf8_lossy(&out.stderr)))
    }
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let train_args = |model: &str, log: &str, threads: &str| {
        vec![
            "train",
            "--synth",
            "n=1000,d=10,c=5,noise=0.05,seed=3",
            "--loss",
            "mlogistic",
            "--reg",
            "frobenius",
            "--lambda",
            "0.01",
            "--passes",
            "5",
            "--seed",
            "7",
            "--split",
            "0.2",
            "--threads",
            threads,
            "--model-out",
            model,
            "--log-out",
            log,
        ]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>()
    };
    let curve_args = |out: &str, threads: &str| {
        vec![
            "curve",
            "--kind",
            "gap",
            "--synth",
            "n=2000,d=20,c=5,noise=0.05,seed=3",
            "--grid",
            "100,200,400",
            "--reps",
            "5",
            "--seed",
            "3",
            "--threads",
            threads,
            "--out",
            out,
        ]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>()
    };
    let runs = [
        train_args(&p("m1"), &p("l1"), "1"),
        train_args(&p("m2"), &p("l2"), "1"),
        train_args(&p("m3"), &p("l3"), "4"),
        curve_args(&p("c1"), "1"),
        curve_args(&p("c2"), "1"),
        curve_args(&p("c3"), "4"),
    ];
    for args in &runs {
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        if let Err(e) = run_cli(&refs) {
            return Outcome::new(false, e);
        }
    }
    let read = |name: &str| std::fs::read(Path::new(&p(name))).unwrap();
    for group in [["m1", "m2", "m3"], ["l1", "l2", "l3"], ["c1", "c2", "c3"]] {
        let first = read(group[0]);
        if first.is_empty() || group[1..].iter().any(|g| read(g) != first) {
            return Outcome::new(false, format!("outputs {group:?} differ"));
        }
    }
    Outcome::new(true, "model, log and curve CSV bitwise identical across repeats and thread counts")
}

fn random_dataset(task: Task, seed: u64) -> Dataset {
    let mut rng = rng_from_seed(seed);
    let n = rng.gen_range(1..40);
    let dim = rng.gen_range(1..30);
    let c = rng.gen_range(2..8);
    let mut ids: Vec<String> = Vec::new();
    while ids.len() < c {
        let id =
            if rng.gen_bool(0.5) { rng.gen_range(0..500).to_string() } else { format!("lbl{}", rng.gen_range(0..500)) };
        if !ids.contains(&id) {
            ids.push(id);
        }
    }
    let examples = (0..n)
        .map(|_| {
            let mut entries = Vec::new();
            for i in 0..dim {
                if rng.gen_bool(0.3) {
                    let mag = 10f64.powi(rng.gen_range(-30..30));
                    let v = rng.gen_range(-1.0..1.0) * mag;
                    if v != 0.0 {
                        entries.push((i, v));
                    }
                }
            }
            let label = match task {
                Task::Multiclass => Label::Class(rng.gen_range(0..c)),
                Task::Multilabel => {
                    let mut signs: Vec<i8> = (0..c).map(|_| if rng.gen_bool(0.4) { 1 } else { -1 }).collect();
                    if entries.is_empty() {
                        signs[rng.gen_range(0..c)] = 1;
                    }
                    Label::Signs(signs)
                }
            };
            LabeledExample::new(SparseVector::new(dim, entries).unwrap(), label)
        })
        .collect();
    Dataset::new(examples, dim, c, task, ids).unwrap()
}

fn round_trip() -> Outcome {
    for i in 0..100u64 {
        let task = if i % 2 == 0 { Task::Multiclass } else { Task::Multilabel };
        let ds = random_dataset(task, derive_seed(9, i));
        let mut buf = Vec::new();
        write_sparse_text(&ds, &mut buf).unwrap();
        match parse_sparse_text_from(buf.as_slice(), task, &ParseOptions::matching(&ds)) {
            Ok(back) if back == ds => {}
            Ok(_) => return Outcome::new(false, format!("dataset {i} ({}) changed", task.name())),
            Err(e) => return Outcome::new(false, format!("dataset {i} ({}): {e}", task.name())),
        }
    }
    Outcome::new(true, "50 mcc + 50 mlc datasets identical after write and parse")
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("1 lipschitz suite", Duration::from_secs(30), lipschitz),
        ("2 convexity and subgradient suites", Duration::from_secs(30), convexity),
        ("3 gradient checks", Duration::from_secs(10), gradients),
        ("4 sgd iterate-norm certificate", Duration::from_secs(60), certificate),
        ("5 rademacher sandwich", Duration::from_secs(60), sandwich),
        ("6 plateau over passes", Duration::from_secs(180), plateau),
        ("7 sample-size trends", Duration::from_secs(300), sample_size),
        ("8 cli determinism", Duration::from_secs(60), determinism),
        ("9 parser round trip", Duration::from_secs(10), round_trip),
    ];
    let mut failures = 0;
    for (name, limit, run) in criteria {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let in_time = elapsed <= limit;
        let pass = outcome.pass && in_time;
        if !pass {
            failures += 1;
        }
        println!(
            "{} criterion {name}: {} [{:.2}s of {}s]",
            if pass { "PASS" } else { "FAIL" },
            outcome.detail,
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
