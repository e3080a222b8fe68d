//! Randomized property suites for the losses, regularizers and the SGD
//! iterate bounds.
//!
//! Each suite runs a number of independent checks and returns one
//! [`CheckReport`] per check. A check records how many trials it ran, how many
//! violated the inequality beyond [`TOLERANCE`], the largest excess seen and a
//! dump of the first violating instance.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;

use crate::dataio::{synth_gen, SynthSpec};
use crate::error::{invalid, Error, Result};
use crate::losses::{BaseLoss, LossKind, LossSpec};
use crate::model::{frobenius_norm, inf_norm_diff, predict, Label, LabeledExample, SparseVector, Task, WeightMatrix};
use crate::optimizer::{sgd_step, train, StepSchedule, TrainConfig};
use crate::regularizers::RegularizerSpec;
use crate::rng::{derive_seed, rng_from_seed, Rng};

pub const TOLERANCE: f64 = 1e-9;
pub const FD_STEP: f64 = 1e-6;
pub const FD_REL_TOLERANCE: f64 = 1e-5;

const ENTRY_RANGE: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Lipschitz,
    Convexity,
    Gradients,
    SgdBound,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Lipschitz, Suite::Convexity, Suite::Gradients, Suite::SgdBound];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Lipschitz => "lipschitz",
            Suite::Convexity => "convexity",
            Suite::Gradients => "gradients",
            Suite::SgdBound => "sgd-bound",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Suite> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown suite {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteConfig {
    pub trials: usize,
    pub seed: u64,
    /// Registers every loss with half its certified constant. The Lipschitz
    /// suite must then fail; this exercises the failure path.
    pub mis_register: bool,
}

impl SuiteConfig {
    pub fn new(trials: usize, seed: u64) -> SuiteConfig {
        SuiteConfig { trials, seed, mis_register: false }
    }

    fn loss_spec(&self, kind: LossKind) -> LossSpec {
        let spec = LossSpec::new(kind);
        if self.mis_register {
            spec.with_lipschitz(spec.lipschitz_inf() / 2.0)
        } else {
            spec
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub suite: Suite,
    pub check: String,
    pub trials: u64,
    pub violations: u64,
    /// Largest `lhs - rhs` over all trials; positive means the inequality failed.
    pub worst_excess: f64,
    pub counterexample: Option<String>,
}

impl CheckReport {
    fn new(suite: Suite, check: impl Into<String>) -> CheckReport {
        CheckReport {
            suite,
            check: check.into(),
            trials: 0,
            violations: 0,
            worst_excess: f64::NEG_INFINITY,
            counterexample: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    /// Records `lhs <= rhs + tol`. `describe` is only called for the first failure.
    fn record(&mut self, lhs: f64, rhs: f64, tol: f64, describe: impl FnOnce() -> String) {
        let excess = lhs - rhs;
        if excess.is_nan() || excess > self.worst_excess {
            self.worst_excess = excess;
        }
        if excess.is_nan() || excess > tol {
            self.violations += 1;
            if self.counterexample.is_none() {
                self.counterexample = Some(format!("{} (lhs={lhs:e}, rhs={rhs:e})", describe()));
            }
        }
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        write!(
            f,
            "{status} {}/{}: {} trials, {} violations, worst excess {:e}",
            self.suite, self.check, self.trials, self.violations, self.worst_excess
        )?;
        if let Some(ex) = &self.counterexample {
            write!(f, "\n  counterexample: {ex}")?;
        }
        Ok(())
    }
}

/// The eight (loss, base) combinations checked by the suites.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossFamily {
    McSvm(BaseLoss),
    MultinomialLogistic,
    TopK,
    Subset(BaseLoss),
    Ranking(BaseLoss),
}

impl LossFamily {
    pub const ALL: [LossFamily; 8] = [
        LossFamily::McSvm(BaseLoss::Hinge),
        LossFamily::McSvm(BaseLoss::Logistic),
        LossFamily::MultinomialLogistic,
        LossFamily::TopK,
        LossFamily::Subset(BaseLoss::Hinge),
        LossFamily::Subset(BaseLoss::Logistic),
        LossFamily::Ranking(BaseLoss::Hinge),
        LossFamily::Ranking(BaseLoss::Logistic),
    ];

    pub fn name(self) -> String {
        match self {
            LossFamily::McSvm(b) => format!("mcsvm-{}", b.name()),
            LossFamily::MultinomialLogistic => "mlogistic".into(),
            LossFamily::TopK => "topk".into(),
            LossFamily::Subset(b) => format!("subset-{}", b.name()),
            LossFamily::Ranking(b) => format!("ranking-{}", b.name()),
        }
    }

    /// A concrete loss for `c` components; top-k draws `k` in `[1, c)`.
    fn instantiate(self, c: usize, rng: &mut Rng) -> LossKind {
        match self {
            LossFamily::McSvm(b) => LossKind::McSvm(b),
            LossFamily::MultinomialLogistic => LossKind::MultinomialLogistic,
            LossFamily::TopK => LossKind::TopKSvm { k: rng.gen_range(1..c) },
            LossFamily::Subset(b) => LossKind::Subset(b),
            LossFamily::Ranking(b) => LossKind::Ranking(b),
        }
    }
}

fn uniform_matrix(d: usize, c: usize, range: f64, rng: &mut Rng) -> WeightMatrix {
    let mut w = WeightMatrix::zeros(d, c);
    for v in w.as_mut_slice() {
        *v = rng.gen_range(-range..=range);
    }
    w
}

fn random_input(d: usize, rng: &mut Rng) -> SparseVector {
    let mut entries = Vec::new();
    for i in 0..d {
        if rng.gen_bool(0.75) {
            entries.push((i, rng.gen_range(-ENTRY_RANGE..=ENTRY_RANGE)));
        }
    }
    SparseVector::new(d, entries).expect("indices in range")
}

fn random_label(task: Task, c: usize, rng: &mut Rng) -> Label {
    match task {
        Task::Multiclass => Label::Class(rng.gen_range(0..c)),
        Task::Multilabel => {
            let mut signs: Vec<i8> = (0..c).map(|_| if rng.gen_bool(0.5) { 1 } else { -1 }).collect();
            let pos = rng.gen_range(0..c);
            let neg = (pos + rng.gen_range(1..c)) % c;
            signs[pos] = 1;
            signs[neg] = -1;
            Label::Signs(signs)
        }
    }
}

/// Copies one column onto another so that scores tie and kinks are exercised.
fn tie_columns(w: &mut WeightMatrix, rng: &mut Rng) {
    let c = w.components();
    let from = rng.gen_range(0..c);
    let to = rng.gen_range(0..c);
    for i in 0..w.dim() {
        w[(i, to)] = w[(i, from)];
    }
}

struct Instance {
    kind: LossKind,
    w: WeightMatrix,
    w2: WeightMatrix,
    z: LabeledExample,
}

impl Instance {
    fn draw(family: LossFamily, rng: &mut Rng) -> Instance {
        let d = rng.gen_range(1..=6);
        let c = rng.gen_range(3..=6);
        let kind = family.instantiate(c, rng);
        let mut w = uniform_matrix(d, c, ENTRY_RANGE, rng);
        if rng.gen_bool(0.2) {
            tie_columns(&mut w, rng);
        }
        let w2 = if rng.gen_bool(0.2) {
            // differ in a single column only
            let mut w2 = w.clone();
            let j = rng.gen_range(0..c);
            for i in 0..d {
                w2[(i, j)] = rng.gen_range(-ENTRY_RANGE..=ENTRY_RANGE);
            }
            w2
        } else {
            uniform_matrix(d, c, ENTRY_RANGE, rng)
        };
        let z = LabeledExample::new(random_input(d, rng), random_label(kind.task(), c, rng));
        Instance { kind, w, w2, z }
    }

    fn describe(&self) -> String {
        format!(
            "loss={} d={} c={} w={:?} w'={:?} x={:?} label={:?}",
            self.kind,
            self.w.dim(),
            self.w.components(),
            self.w.to_column_major(),
            self.w2.to_column_major(),
            self.z.x.to_dense(),
            self.z.label
        )
    }
}

fn check_rng(config: &SuiteConfig, check: u64, trial: usize) -> Rng {
    rng_from_seed(derive_seed(derive_seed(config.seed, check), trial as u64))
}

pub fn run_suite(suite: Suite, config: &SuiteConfig) -> Result<Vec<CheckReport>> {
    if config.trials == 0 {
        return invalid("a suite needs at least one trial");
    }
    match suite {
        Suite::Lipschitz => lipschitz_suite(config),
        Suite::Convexity => convexity_suite(config),
        Suite::Gradients => gradient_suite(config),
        Suite::SgdBound => sgd_bound_suite(config),
    }
}

pub fn run_all(config: &SuiteConfig) -> Result<Vec<CheckReport>> {
    let mut out = Vec::new();
    for suite in Suite::ALL {
        out.extend(run_suite(suite, config)?);
    }
    Ok(out)
}

/// `|f(w) - f(w')| <= L ||h^w(x) - h^w'(x)||_inf` per family, and
/// `||subgrad||_F <= L ||x||` over all families.
pub fn lipschitz_suite(config: &SuiteConfig) -> Result<Vec<CheckReport>> {
    let mut reports = Vec::new();
    let mut norm_report = CheckReport::new(Suite::Lipschitz, "subgradient-norm");
    for (fi, family) in LossFamily::ALL.into_iter().enumerate() {
        let mut report = CheckReport::new(Suite::Lipschitz, family.name());
        for trial in 0..config.trials {
            let mut rng = check_rng(config, fi as u64, trial);
            let inst = Instance::draw(family, &mut rng);
            let loss = config.loss_spec(inst.kind);
            let l = loss.lipschitz_inf();
            let gap = (loss.value(&inst.w, &inst.z)? - loss.value(&inst.w2, &inst.z)?).abs();
            let dist = inf_norm_diff(&predict(&inst.w, &inst.z.x)?, &predict(&inst.w2, &inst.z.x)?)?;
            report.trials += 1;
            report.record(gap, l * dist, TOLERANCE, || inst.describe());

            let g = loss.subgradient(&inst.w, &inst.z)?;
            norm_report.trials += 1;
            norm_report.record(frobenius_norm(&g), l * inst.z.x.norm(), TOLERANCE, || inst.describe());
        }
        reports.push(report);
    }
    reports.push(norm_report);
    Ok(reports)
}

fn combine(a: &WeightMatrix, b: &WeightMatrix, theta: f64) -> WeightMatrix {
    let mut m = a.clone();
    m.scale(theta);
    m.axpy(1.0 - theta, b);
    m
}

fn difference(a: &WeightMatrix, b: &WeightMatrix) -> WeightMatrix {
    let mut m = a.clone();
    m.axpy(-1.0, b);
    m
}

/// Convexity along segments and the subgradient inequality for every loss,
/// plus strong convexity of both regularizers.
pub fn convexity_suite(config: &SuiteConfig) -> Result<Vec<CheckReport>> {
    let mut reports = Vec::new();
    for (fi, family) in LossFamily::ALL.into_iter().enumerate() {
        let mut report = CheckReport::new(Suite::Convexity, family.name());
        for trial in 0..config.trials {
            let mut rng = check_rng(config, 100 + fi as u64, trial);
            let inst = Instance::draw(family, &mut rng);
            let loss = config.loss_spec(inst.kind);
            let theta = rng.gen_range(0.0..1.0);
            let f1 = loss.value(&inst.w, &inst.z)?;
            let f2 = loss.value(&inst.w2, &inst.z)?;
            let mid = loss.value(&combine(&inst.w, &inst.w2, theta), &inst.z)?;
            report.trials += 1;
            report.record(mid, theta * f1 + (1.0 - theta) * f2, TOLERANCE, || {
                format!("segment theta={theta:?} {}", inst.describe())
            });

            let g = loss.subgradient(&inst.w, &inst.z)?;
            let linear = f1 + g.dot(&difference(&inst.w2, &inst.w));
            report.record(linear, f2, TOLERANCE, || format!("subgradient {}", inst.describe()));
        }
        reports.push(report);
    }

    for (ri, name) in ["frobenius", "l2p"].into_iter().enumerate() {
        let mut report = CheckReport::new(Suite::Convexity, format!("regularizer-{name}"));
        for trial in 0..config.trials {
            let mut rng = check_rng(config, 200 + ri as u64, trial);
            let sigma = rng.gen_range(0.01..2.0);
            let reg = if ri == 0 {
                RegularizerSpec::frobenius(sigma)?
            } else {
                RegularizerSpec::l2p(rng.gen_range(1.05..=2.0), sigma)?
            };
            let d = rng.gen_range(1..=6);
            let c = rng.gen_range(1..=6);
            let mut w = uniform_matrix(d, c, ENTRY_RANGE, &mut rng);
            if rng.gen_bool(0.2) {
                // a zero column sits where the group norm is least smooth
                let j = rng.gen_range(0..c);
                for i in 0..d {
                    w[(i, j)] = 0.0;
                }
            }
            let w2 = uniform_matrix(d, c, ENTRY_RANGE, &mut rng);
            let mu = reg.strong_convexity();
            let dist = reg.norm(&difference(&w, &w2));
            let describe =
                || format!("{reg} sigma={sigma:?} w={:?} w'={:?}", w.to_column_major(), w2.to_column_major());

            let mid = reg.value(&combine(&w, &w2, 0.5));
            let chord = 0.5 * (reg.value(&w) + reg.value(&w2)) - mu / 8.0 * dist * dist;
            report.trials += 1;
            report.record(mid, chord, TOLERANCE, || format!("midpoint {}", describe()));

            let lower = reg.value(&w) + reg.gradient(&w).dot(&difference(&w2, &w)) + mu / 2.0 * dist * dist;
            report.record(lower, reg.value(&w2), TOLERANCE, || format!("gradient {}", describe()));

            let zero = WeightMatrix::zeros(d, c);
            let at_zero = reg.value(&zero).abs() + frobenius_norm(&reg.gradient(&zero));
            report.record(at_zero, 0.0, 0.0, || format!("origin {}", describe()));
        }
        reports.push(report);
    }
    Ok(reports)
}

fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic.iter().zip(numeric).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nb = numeric.iter().map(|b| b * b).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Central differences of `f` at `w`, in the internal storage order.
pub fn finite_difference(
    w: &WeightMatrix,
    step: f64,
    mut f: impl FnMut(&WeightMatrix) -> Result<f64>,
) -> Result<Vec<f64>> {
    let mut probe = w.clone();
    let mut out = Vec::with_capacity(w.as_slice().len());
    for k in 0..w.as_slice().len() {
        let orig = probe.as_slice()[k];
        probe.as_mut_slice()[k] = orig + step;
        let up = f(&probe)?;
        probe.as_mut_slice()[k] = orig - step;
        let down = f(&probe)?;
        probe.as_mut_slice()[k] = orig;
        out.push((up - down) / (2.0 * step));
    }
    Ok(out)
}

/// Analytic gradients of the smooth losses and of the group-norm regularizer
/// against central finite differences.
pub fn gradient_suite(config: &SuiteConfig) -> Result<Vec<CheckReport>> {
    let mut reports = Vec::new();
    for (li, kind) in [LossKind::MultinomialLogistic, LossKind::Ranking(BaseLoss::Logistic)].into_iter().enumerate() {
        let mut report = CheckReport::new(Suite::Gradients, kind.to_string());
        let loss = config.loss_spec(kind);
        for trial in 0..config.trials {
            let mut rng = check_rng(config, 300 + li as u64, trial);
            let d = rng.gen_range(1..=6);
            let c = rng.gen_range(2..=6);
            let w = uniform_matrix(d, c, 2.0, &mut rng);
            let z = LabeledExample::new(random_input(d, &mut rng), random_label(kind.task(), c, &mut rng));
            let analytic = loss.subgradient(&w, &z)?;
            let numeric = finite_difference(&w, FD_STEP, |m| loss.value(m, &z))?;
            report.trials += 1;
            report.record(relative_error(analytic.as_slice(), &numeric), 0.0, FD_REL_TOLERANCE, || {
                format!("w={:?} x={:?} label={:?}", w.to_column_major(), z.x.to_dense(), z.label)
            });
        }
        reports.push(report);
    }

    let mut report = CheckReport::new(Suite::Gradients, "regularizer-l2p");
    for trial in 0..config.trials {
        let mut rng = check_rng(config, 310, trial);
        let p = rng.gen_range(1.1..=2.0);
        let reg = RegularizerSpec::l2p(p, rng.gen_range(0.1..2.0))?;
        let d = rng.gen_range(1..=6);
        let c = rng.gen_range(1..=6);
        // keep columns away from the origin, where curvature blows up for p < 2
        let w = loop {
            let w = uniform_matrix(d, c, 2.0, &mut rng);
            if w.column_norms().iter().all(|&n| n >= 0.1) {
                break w;
            }
        };
        let analytic = reg.gradient(&w);
        let numeric = finite_difference(&w, FD_STEP, |m| Ok(reg.value(m)))?;
        report.trials += 1;
        report.record(relative_error(analytic.as_slice(), &numeric), 0.0, FD_REL_TOLERANCE, || {
            format!("{reg} w={:?}", w.to_column_major())
        });
    }
    reports.push(report);
    Ok(reports)
}

/// Short SGD runs under the theorem schedule: every iterate stays within
/// `L kappa / sigma` and every step moves at most `eta (L kappa + sigma ||w||)`.
pub fn sgd_bound_suite(config: &SuiteConfig) -> Result<Vec<CheckReport>> {
    let mut norm_report = CheckReport::new(Suite::SgdBound, "iterate-norm");
    let mut step_report = CheckReport::new(Suite::SgdBound, "single-step");
    let mut train_report = CheckReport::new(Suite::SgdBound, "trainer-certificate");
    for trial in 0..config.trials {
        let mut rng = check_rng(config, 400, trial);
        let family = LossFamily::ALL[trial % LossFamily::ALL.len()];
        let c = rng.gen_range(3..=5);
        let kind = family.instantiate(c, &mut rng);
        let n = rng.gen_range(5..=30);
        let data = synth_gen(&SynthSpec {
            n,
            dim: rng.gen_range(1..=5),
            components: c,
            task: kind.task(),
            noise: 0.1,
            seed: rng.gen(),
        })?;
        let sigma = rng.gen_range(0.05..1.0);
        let loss = config.loss_spec(kind);
        let reg = RegularizerSpec::frobenius(sigma)?;
        let schedule = StepSchedule::theorem(sigma)?;
        let l = loss.lipschitz_inf();
        let kappa = data.kappa();
        let bound = l * kappa / sigma;
        let steps = 4 * n as u64;
        let describe = |t: u64| format!("loss={kind} sigma={sigma:?} n={n} kappa={kappa:?} step={t}");

        let mut w = WeightMatrix::zeros(data.dim(), c);
        for t in 1..=steps {
            let z = &data.examples()[rng.gen_range(0..n)];
            let eta = schedule.eta(t);
            let before = frobenius_norm(&w);
            let next = sgd_step(&w, z, &loss, &reg, eta)?;
            step_report.trials += 1;
            step_report.record(
                frobenius_norm(&difference(&next, &w)),
                eta * (l * kappa + sigma * before),
                TOLERANCE,
                || describe(t),
            );
            w = next;
            norm_report.trials += 1;
            norm_report.record(frobenius_norm(&w), bound, TOLERANCE, || describe(t));
        }

        let cfg = TrainConfig::new(loss, reg, schedule, steps, rng.gen());
        train_report.trials += 1;
        match train(&data, None, &cfg) {
            Ok(outcome) => {
                let observed = outcome.certificate.map_or(f64::NAN, |c| c.max_observed);
                train_report.record(observed, bound, TOLERANCE, || describe(steps));
            }
            Err(Error::Certificate { step, norm, bound }) => {
                train_report.record(norm, bound, TOLERANCE, || describe(step));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(vec![norm_report, step_report, train_report])
}
