//! Stochastic subgradient descent on `F_S(w) = (1/n) sum_i loss(w; z_i) + r(w)`.
//!
//! Indices are drawn i.i.d. uniformly from `[n]` (with replacement); a "pass" is
//! simply `n` steps. The run starts at `w = 0` and returns the last iterate.
//!
//! With the Frobenius regularizer and any schedule satisfying `eta_t * sigma <= 1`,
//! every iterate stays in the ball of radius `L * kappa / sigma`, where `L` is the
//! loss's certified Lipschitz constant and `kappa` the largest input norm. The
//! trainer checks this after every step and aborts with
//! [`Error::Certificate`] if it is ever violated.

use std::time::{Duration, Instant};

use rand::Rng as _;
use rayon::prelude::*;

use crate::dataio::Dataset;
use crate::error::{invalid, Error, Result};
use crate::losses::LossSpec;
use crate::model::{frobenius_norm, predict, LabeledExample, WeightMatrix};
use crate::regularizers::{RegularizerKind, RegularizerSpec};
use crate::rng::rng_from_seed;
use crate::stats::compensated_sum;

/// Slack allowed on the iterate-norm certificate.
pub const CERTIFICATE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule {
    /// `eta_t = 1 / (t * sigma)`
    Theorem { sigma: f64 },
    /// `eta_t = 1 / (lambda * t + 1)`
    Experiment { lambda: f64 },
}

impl StepSchedule {
    pub fn theorem(sigma: f64) -> Result<StepSchedule> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return invalid(format!("schedule sigma must be positive, got {sigma}"));
        }
        Ok(StepSchedule::Theorem { sigma })
    }

    pub fn experiment(lambda: f64) -> Result<StepSchedule> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return invalid(format!("schedule lambda must be positive, got {lambda}"));
        }
        Ok(StepSchedule::Experiment { lambda })
    }

    /// Step size for the 1-based step `t`.
    pub fn eta(&self, t: u64) -> f64 {
        let t = t as f64;
        match *self {
            StepSchedule::Theorem { sigma } => 1.0 / (t * sigma),
            StepSchedule::Experiment { lambda } => 1.0 / (lambda * t + 1.0),
        }
    }

    /// Whether `eta_t * sigma <= 1` for every `t >= 1`.
    fn contracts(&self, sigma: f64) -> bool {
        match *self {
            StepSchedule::Theorem { sigma: s } => sigma <= s,
            StepSchedule::Experiment { lambda } => sigma <= lambda + 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub loss: LossSpec,
    pub reg: RegularizerSpec,
    pub schedule: StepSchedule,
    pub total_steps: u64,
    pub seed: u64,
    pub record_every: u64,
}

impl TrainConfig {
    /// Records only the final step unless [`TrainConfig::record_every`] is set.
    pub fn new(
        loss: LossSpec,
        reg: RegularizerSpec,
        schedule: StepSchedule,
        total_steps: u64,
        seed: u64,
    ) -> TrainConfig {
        TrainConfig { loss, reg, schedule, total_steps, seed, record_every: total_steps.max(1) }
    }

    pub fn record_every(mut self, every: u64) -> TrainConfig {
        self.record_every = every;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    /// Number of SGD steps taken so far.
    pub step: u64,
    pub empirical_objective: f64,
    pub holdout_objective: Option<f64>,
    pub iterate_frobenius_norm: f64,
    pub elapsed: Duration,
}

impl RunRecord {
    /// Equality on everything except wall-clock time.
    pub fn same_values(&self, other: &RunRecord) -> bool {
        self.step == other.step
            && self.empirical_objective.to_bits() == other.empirical_objective.to_bits()
            && self.holdout_objective.map(f64::to_bits) == other.holdout_objective.map(f64::to_bits)
            && self.iterate_frobenius_norm.to_bits() == other.iterate_frobenius_norm.to_bits()
    }
}

/// The iterate-norm bound `L * kappa / sigma` and the largest norm observed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormCertificate {
    pub bound: f64,
    pub max_observed: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: WeightMatrix,
    pub records: Vec<RunRecord>,
    /// Present when the regularizer and schedule admit the bound.
    pub certificate: Option<NormCertificate>,
}

/// `w - eta * (loss'(w; z) + r'(w))`; `w` itself is left untouched.
pub fn sgd_step(
    w: &WeightMatrix,
    z: &LabeledExample,
    loss: &LossSpec,
    reg: &RegularizerSpec,
    eta: f64,
) -> Result<WeightMatrix> {
    if !(eta >= 0.0 && eta.is_finite()) {
        return invalid(format!("step size must be nonnegative, got {eta}"));
    }
    let mut next = w.clone();
    step_in_place(&mut next, z, loss, reg, eta)?;
    Ok(next)
}

fn step_in_place(
    w: &mut WeightMatrix,
    z: &LabeledExample,
    loss: &LossSpec,
    reg: &RegularizerSpec,
    eta: f64,
) -> Result<()> {
    let scores = predict(w, &z.x)?.scores;
    let psi = loss.score_subgradient(&scores, &z.label)?;
    let c = w.components();
    let reg_grad = match reg.kind() {
        RegularizerKind::Frobenius => None,
        RegularizerKind::L2p(_) => Some(reg.gradient(w)),
    };
    let sigma = reg.sigma();
    let mut features = z.x.iter().peekable();
    for (i, row) in w.as_mut_slice().chunks_exact_mut(c).enumerate() {
        let xi = match features.peek() {
            Some(&(k, v)) if k == i => {
                features.next();
                Some(v)
            }
            _ => None,
        };
        for (j, wij) in row.iter_mut().enumerate() {
            let rg = match &reg_grad {
                None => sigma * *wij,
                Some(g) => g.as_slice()[i * c + j],
            };
            let g = match xi {
                Some(v) => rg + v * psi[j],
                None => rg,
            };
            *wij -= eta * g;
        }
    }
    Ok(())
}

/// `(1/n) sum_i loss(w; z_i) + r(w)` with a fixed-order compensated reduction.
pub fn evaluate_objective(
    w: &WeightMatrix,
    data: &[LabeledExample],
    loss: &LossSpec,
    reg: &RegularizerSpec,
) -> Result<f64> {
    Ok(average_loss(w, data, loss)? + reg.value(w))
}

/// `(1/n) sum_i loss(w; z_i)`; per-example values may be computed in parallel.
pub fn average_loss(w: &WeightMatrix, data: &[LabeledExample], loss: &LossSpec) -> Result<f64> {
    if data.is_empty() {
        return invalid("cannot evaluate an objective on an empty dataset");
    }
    let values: Vec<f64> = data.par_iter().map(|z| loss.value(w, z)).collect::<Result<_>>()?;
    Ok(compensated_sum(values) / data.len() as f64)
}

/// Runs `config.total_steps` SGD steps from `w = 0` over `data`.
pub fn train(data: &Dataset, holdout: Option<&Dataset>, config: &TrainConfig) -> Result<TrainOutcome> {
    if data.is_empty() {
        return invalid("training data is empty");
    }
    if config.total_steps == 0 || config.record_every == 0 {
        return invalid("total_steps and record_every must be positive");
    }
    if config.loss.task() != data.task() {
        return invalid(format!("loss {} does not apply to {} data", config.loss.kind(), data.task().name()));
    }
    if let Some(h) = holdout {
        if h.dim() != data.dim() || h.components() != data.components() || h.task() != data.task() {
            return invalid("holdout data does not match the training data shape");
        }
    }
    let certificate_bound = match config.reg.kind() {
        RegularizerKind::Frobenius if config.schedule.contracts(config.reg.sigma()) => {
            Some(config.loss.lipschitz_inf() * data.kappa() / config.reg.sigma())
        }
        _ => None,
    };

    let examples = data.examples();
    let n = examples.len();
    let mut rng = rng_from_seed(config.seed);
    let mut w = WeightMatrix::zeros(data.dim(), data.components());
    let mut records = Vec::new();
    let mut max_observed: f64 = 0.0;
    let start = Instant::now();

    for t in 1..=config.total_steps {
        let z = &examples[rng.gen_range(0..n)];
        step_in_place(&mut w, z, &config.loss, &config.reg, config.schedule.eta(t))?;

        let record_now = t % config.record_every == 0 || t == config.total_steps;
        if certificate_bound.is_some() || record_now {
            let norm = frobenius_norm(&w);
            if let Some(bound) = certificate_bound {
                max_observed = max_observed.max(norm);
                if norm > bound + CERTIFICATE_SLACK {
                    return Err(Error::Certificate { step: t, norm, bound });
                }
            }
            if record_now {
                records.push(RunRecord {
                    step: t,
                    empirical_objective: evaluate_objective(&w, examples, &config.loss, &config.reg)?,
                    holdout_objective: holdout
                        .map(|h| evaluate_objective(&w, h.examples(), &config.loss, &config.reg))
                        .transpose()?,
                    iterate_frobenius_norm: norm,
                    elapsed: start.elapsed(),
                });
            }
        }
    }

    Ok(TrainOutcome {
        weights: w,
        records,
        certificate: certificate_bound.map(|bound| NormCertificate { bound, max_observed }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{synth_gen, SynthSpec};
    use crate::losses::{BaseLoss, LossKind};
    use crate::model::{Label, SparseVector, Task};

    fn mlog() -> LossSpec {
        LossSpec::new(LossKind::MultinomialLogistic)
    }

    fn data(n: usize, task: Task, seed: u64) -> Dataset {
        synth_gen(&SynthSpec { n, dim: 6, components: 4, task, noise: 0.1, seed }).unwrap()
    }

    #[test]
    fn schedules() {
        let th = StepSchedule::theorem(0.5).unwrap();
        assert_eq!(th.eta(1), 2.0);
        assert_eq!(th.eta(4), 0.5);
        let ex = StepSchedule::experiment(0.01).unwrap();
        assert_eq!(ex.eta(100), 0.5);
        for s in [th, ex] {
            assert!((1..1000).all(|t| s.eta(t) > 0.0 && s.eta(t + 1) <= s.eta(t)));
        }
        assert!(StepSchedule::theorem(0.0).is_err());
        assert!(StepSchedule::experiment(-1.0).is_err());
    }

    #[test]
    fn zero_step_and_zero_model() {
        let ds = data(5, Task::Multiclass, 1);
        let reg = RegularizerSpec::frobenius(0.3).unwrap();
        let z = &ds.examples()[0];
        let w = WeightMatrix::from_column_major(6, 4, &(0..24).map(|v| v as f64 / 10.0).collect::<Vec<_>>()).unwrap();
        assert_eq!(sgd_step(&w, z, &mlog(), &reg, 0.0).unwrap(), w);

        let zero = WeightMatrix::zeros(6, 4);
        let next = sgd_step(&zero, z, &mlog(), &reg, 0.7).unwrap();
        let mut expected = mlog().subgradient(&zero, z).unwrap();
        expected.scale(-0.7);
        assert_eq!(next, expected);
    }

    #[test]
    fn hand_evaluated_softmax_step() {
        let x = SparseVector::from_dense(&[1.0]).unwrap();
        let z = LabeledExample::new(x, Label::Class(0));
        let reg = RegularizerSpec::frobenius(1.0).unwrap();
        let eta = StepSchedule::theorem(1.0).unwrap().eta(1);
        let w = sgd_step(&WeightMatrix::zeros(1, 2), &z, &mlog(), &reg, eta).unwrap();
        assert_eq!(w.as_slice(), &[0.5, -0.5]);
    }

    #[test]
    fn l2p_step_uses_regularizer_gradient() {
        let ds = data(3, Task::Multiclass, 2);
        let z = &ds.examples()[1];
        let reg = RegularizerSpec::l2p(1.5, 0.2).unwrap();
        let w = WeightMatrix::from_column_major(6, 4, &(0..24).map(|v| (v as f64 - 12.0) / 7.0).collect::<Vec<_>>())
            .unwrap();
        let got = sgd_step(&w, z, &mlog(), &reg, 0.3).unwrap();
        let mut full = mlog().subgradient(&w, z).unwrap();
        full.axpy(1.0, &reg.gradient(&w));
        let mut expected = w.clone();
        expected.axpy(-0.3, &full);
        for (a, b) in got.as_slice().iter().zip(expected.as_slice()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn single_step_run_reproduces_sgd_step() {
        let ds = data(20, Task::Multiclass, 3);
        let reg = RegularizerSpec::frobenius(0.1).unwrap();
        let schedule = StepSchedule::theorem(0.1).unwrap();
        let config = TrainConfig::new(mlog(), reg, schedule, 1, 99);
        let out = train(&ds, None, &config).unwrap();
        let i = rng_from_seed(99).gen_range(0..ds.len());
        let expected = sgd_step(&WeightMatrix::zeros(6, 4), &ds.examples()[i], &mlog(), &reg, schedule.eta(1)).unwrap();
        assert_eq!(out.weights, expected);
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].step, 1);
    }

    #[test]
    fn equal_seeds_give_identical_runs() {
        let ds = data(50, Task::Multilabel, 4);
        let (train_part, holdout) = crate::dataio::split(&ds, 0.8, 1).unwrap();
        let loss = LossSpec::new(LossKind::Ranking(BaseLoss::Logistic));
        let reg = RegularizerSpec::frobenius(0.05).unwrap();
        let config = TrainConfig::new(loss, reg, StepSchedule::theorem(0.05).unwrap(), 333, 17).record_every(40);
        let a = train(&train_part, Some(&holdout), &config).unwrap();
        let b = train(&train_part, Some(&holdout), &config).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.records.len(), 9);
        assert_eq!(a.records.last().unwrap().step, 333);
        assert!(a.records.iter().zip(&b.records).all(|(x, y)| x.same_values(y)));
        assert!(a.records.iter().all(|r| r.holdout_objective.is_some()));
    }

    #[test]
    fn rejects_bad_inputs() {
        let ds = data(10, Task::Multiclass, 5);
        let reg = RegularizerSpec::frobenius(0.1).unwrap();
        let sched = StepSchedule::theorem(0.1).unwrap();
        let subset = LossSpec::new(LossKind::Subset(BaseLoss::Hinge));
        assert!(train(&ds, None, &TrainConfig::new(subset, reg, sched, 10, 0)).is_err());
        assert!(train(&ds, None, &TrainConfig::new(mlog(), reg, sched, 0, 0)).is_err());
        let empty = ds.select(&[]);
        assert!(train(&empty, None, &TrainConfig::new(mlog(), reg, sched, 10, 0)).is_err());
        assert!(evaluate_objective(&WeightMatrix::zeros(6, 4), &[], &mlog(), &reg).is_err());
    }

    #[test]
    fn objective_examples() {
        let ds = data(30, Task::Multiclass, 6);
        let reg = RegularizerSpec::frobenius(0.5).unwrap();
        let zero = WeightMatrix::zeros(6, 4);
        let f = evaluate_objective(&zero, ds.examples(), &mlog(), &reg).unwrap();
        assert!((f - 4f64.ln()).abs() < 1e-14);

        let w = WeightMatrix::from_column_major(6, 4, &(0..24).map(|v| (v as f64).sin()).collect::<Vec<_>>()).unwrap();
        let one = &ds.examples()[..1];
        let f = evaluate_objective(&w, one, &mlog(), &reg).unwrap();
        assert_eq!(f, mlog().value(&w, &one[0]).unwrap() + reg.value(&w));

        // naive two-pass oracle: sum, then divide and add
        let mut total = 0.0;
        for z in ds.examples() {
            total += mlog().value(&w, z).unwrap();
        }
        let naive = total / ds.len() as f64 + reg.value(&w);
        let f = evaluate_objective(&w, ds.examples(), &mlog(), &reg).unwrap();
        assert!((f - naive).abs() <= 1e-12 * naive.abs());
    }

    #[test]
    fn certificate_reported_for_frobenius_theorem_runs() {
        let ds = data(100, Task::Multiclass, 7);
        let loss = LossSpec::new(LossKind::McSvm(BaseLoss::Hinge));
        let reg = RegularizerSpec::frobenius(0.01).unwrap();
        let config = TrainConfig::new(loss, reg, StepSchedule::theorem(0.01).unwrap(), 1000, 3).record_every(100);
        let out = train(&ds, None, &config).unwrap();
        let cert = out.certificate.unwrap();
        assert!((cert.bound - 2.0 * ds.kappa() / 0.01).abs() < 1e-9);
        assert!(cert.max_observed <= cert.bound + CERTIFICATE_SLACK);
        assert!(out.records.iter().all(|r| r.iterate_frobenius_norm <= cert.bound + CERTIFICATE_SLACK));

        let l2p = RegularizerSpec::l2p(1.5, 0.01).unwrap();
        let config = TrainConfig::new(loss, l2p, StepSchedule::theorem(0.01).unwrap(), 10, 3);
        assert!(train(&ds, None, &config).unwrap().certificate.is_none());
    }

    #[test]
    fn misregistered_constant_trips_the_certificate() {
        // with L/4 registered the first step alone lands outside the claimed ball
        let ds = data(50, Task::Multiclass, 8);
        let loss = LossSpec::new(LossKind::MultinomialLogistic).with_lipschitz(0.5);
        let reg = RegularizerSpec::frobenius(0.01).unwrap();
        let config = TrainConfig::new(loss, reg, StepSchedule::theorem(0.01).unwrap(), 200, 3);
        assert!(matches!(train(&ds, None, &config), Err(Error::Certificate { .. })));
    }
}
