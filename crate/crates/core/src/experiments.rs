//! Error-versus-passes, error-versus-sample-size and generalization-gap curves.
//!
//! Each repetition gets its own seed `derive_seed(base_seed, repetition)`, from
//! which the split/subsample seed (`derive_seed(rep_seed, 0)` or
//! `derive_seed(rep_seed, 1 + grid_value)`) and the SGD seed are derived.
//! Repetitions may run on any number of rayon workers; results are gathered
//! by `(grid value, repetition)` before aggregation so the output never
//! depends on scheduling.

use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;

use crate::dataio::{normalize_rows, parse_sparse_text, split, synth_gen, Dataset, ParseOptions, SynthSpec};
use crate::error::{invalid, Error, Result};
use crate::losses::{LossKind, LossSpec};
use crate::model::Task;
use crate::optimizer::{train, StepSchedule, TrainConfig};
use crate::regularizers::RegularizerSpec;
use crate::rng::derive_seed;
use crate::stats::Summary;

/// Regularization strength and schedule parameter of the default objective.
pub const DEFAULT_LAMBDA: f64 = 0.01;
/// Passes per run for the sample-size and gap curves.
pub const DEFAULT_PASSES: u64 = 5;
pub const DEFAULT_TEST_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveKind {
    Passes,
    SampleSize,
    Gap,
}

impl FromStr for CurveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<CurveKind> {
        match s {
            "passes" => Ok(CurveKind::Passes),
            "samplesize" => Ok(CurveKind::SampleSize),
            "gap" => Ok(CurveKind::Gap),
            _ => invalid(format!("unknown curve kind `{s}`")),
        }
    }
}

impl fmt::Display for CurveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CurveKind::Passes => "passes",
            CurveKind::SampleSize => "samplesize",
            CurveKind::Gap => "gap",
        })
    }
}

/// Where the example pool comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synth(SynthSpec),
    File { path: PathBuf, task: Task },
}

impl DataSource {
    pub fn load(&self, normalize: bool) -> Result<Dataset> {
        let ds = match self {
            DataSource::Synth(spec) => synth_gen(spec)?,
            DataSource::File { path, task } => parse_sparse_text(path, *task, &ParseOptions::default())?,
        };
        Ok(if normalize { normalize_rows(&ds) } else { ds })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveSpec {
    pub kind: CurveKind,
    pub repetitions: usize,
    /// Pass counts (passes curve) or training-set sizes (other kinds).
    pub grid: Vec<u64>,
    /// Loss, regularizer, schedule and base seed; step counts are set per run.
    pub base: TrainConfig,
    /// Passes per run for the sample-size and gap curves.
    pub passes: u64,
    /// Share of the pool held out for testing.
    pub test_fraction: f64,
}

impl CurveSpec {
    /// Multinomial logistic loss, `(lambda/2)||w||^2` with `lambda = 0.01`,
    /// `eta_t = 1 / (lambda t + 1)`, five passes, 20% held out.
    pub fn default_objective(kind: CurveKind, grid: Vec<u64>, repetitions: usize, seed: u64) -> CurveSpec {
        let base = TrainConfig::new(
            LossSpec::new(LossKind::MultinomialLogistic),
            RegularizerSpec::frobenius(DEFAULT_LAMBDA).expect("positive lambda"),
            StepSchedule::experiment(DEFAULT_LAMBDA).expect("positive lambda"),
            1,
            seed,
        );
        CurveSpec { kind, repetitions, grid, base, passes: DEFAULT_PASSES, test_fraction: DEFAULT_TEST_FRACTION }
    }

    fn validate(&self, expected: &[CurveKind]) -> Result<()> {
        if !expected.contains(&self.kind) {
            return invalid(format!("curve kind {} not accepted here", self.kind));
        }
        if self.repetitions == 0 {
            return invalid("repetitions must be positive");
        }
        if self.grid.is_empty() || self.grid[0] == 0 || self.grid.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("grid must be nonempty, positive and strictly increasing");
        }
        if self.passes == 0 {
            return invalid("passes must be positive");
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return invalid(format!("test fraction must lie in (0, 1), got {}", self.test_fraction));
        }
        Ok(())
    }

    fn repetition_seed(&self, repetition: usize) -> u64 {
        derive_seed(self.base.seed, repetition as u64)
    }
}

/// Aggregated measurements at one grid value.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub grid: u64,
    /// Per-repetition training objective `F_S(w_T)`, in repetition order.
    pub train_values: Vec<f64>,
    /// Per-repetition held-out objective, in repetition order.
    pub test_values: Vec<f64>,
}

impl CurvePoint {
    pub fn repetitions(&self) -> usize {
        self.test_values.len()
    }

    pub fn gap_values(&self) -> Vec<f64> {
        self.test_values.iter().zip(&self.train_values).map(|(t, s)| t - s).collect()
    }

    pub fn train(&self) -> Summary {
        Summary::of(&self.train_values)
    }

    pub fn test(&self) -> Summary {
        Summary::of(&self.test_values)
    }

    pub fn gap(&self) -> Summary {
        Summary::of(&self.gap_values())
    }
}

/// Test objective recorded at every pass boundary in the grid, over repetitions.
pub fn run_passes_curve(spec: &CurveSpec, pool: &Dataset) -> Result<Vec<CurvePoint>> {
    spec.validate(&[CurveKind::Passes])?;
    let max_passes = *spec.grid.last().expect("validated nonempty");
    let runs: Vec<Vec<(f64, f64)>> = (0..spec.repetitions)
        .into_par_iter()
        .map(|r| {
            let rep_seed = spec.repetition_seed(r);
            let (train_part, test_part) = split(pool, 1.0 - spec.test_fraction, derive_seed(rep_seed, 0))?;
            let n = train_part.len() as u64;
            let config = TrainConfig {
                total_steps: max_passes * n,
                record_every: n,
                seed: derive_seed(rep_seed, 1),
                ..spec.base
            };
            let outcome = train(&train_part, Some(&test_part), &config)?;
            spec.grid
                .iter()
                .map(|&pass| {
                    let rec = outcome
                        .records
                        .iter()
                        .find(|rec| rec.step == pass * n)
                        .expect("a record is taken at every pass boundary");
                    Ok((rec.empirical_objective, rec.holdout_objective.expect("holdout supplied")))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    Ok(spec
        .grid
        .iter()
        .enumerate()
        .map(|(g, &pass)| CurvePoint {
            grid: pass,
            train_values: runs.iter().map(|run| run[g].0).collect(),
            test_values: runs.iter().map(|run| run[g].1).collect(),
        })
        .collect())
}

/// Doubling sizes `100, 200, 400, ...` that fit in the training share of a
/// pool of `pool_len` examples; the whole share when it holds fewer than 100.
pub fn default_size_grid(pool_len: usize, test_fraction: f64) -> Vec<u64> {
    let available = ((1.0 - test_fraction) * pool_len as f64).floor() as u64;
    let grid: Vec<u64> =
        std::iter::successors(Some(100u64), |g| g.checked_mul(2)).take_while(|&g| g <= available).collect();
    if grid.is_empty() && available > 0 {
        vec![available]
    } else {
        grid
    }
}

/// Train and test objectives after `passes * n` steps on `n` pool examples.
pub fn run_samplesize_curve(spec: &CurveSpec, pool: &Dataset) -> Result<Vec<CurvePoint>> {
    spec.validate(&[CurveKind::SampleSize, CurveKind::Gap])?;
    let (train_pool, test_set) = split(pool, 1.0 - spec.test_fraction, derive_seed(spec.base.seed, u64::MAX))?;
    let largest = *spec.grid.last().expect("validated nonempty");
    if largest as usize > train_pool.len() {
        return invalid(format!(
            "grid value {largest} exceeds the {} examples available for training",
            train_pool.len()
        ));
    }

    let jobs: Vec<(usize, usize)> =
        (0..spec.grid.len()).flat_map(|g| (0..spec.repetitions).map(move |r| (g, r))).collect();
    let results: Vec<(f64, f64)> = jobs
        .par_iter()
        .map(|&(g, r)| {
            let size = spec.grid[g];
            let rep_seed = spec.repetition_seed(r);
            let subset = subsample(&train_pool, size as usize, derive_seed(rep_seed, 1 + size));
            let config = TrainConfig {
                total_steps: spec.passes * size,
                record_every: spec.passes * size,
                seed: derive_seed(rep_seed, u64::MAX - size),
                ..spec.base
            };
            let outcome = train(&subset, Some(&test_set), &config)?;
            let last = outcome.records.last().expect("final step is always recorded");
            Ok((last.empirical_objective, last.holdout_objective.expect("holdout supplied")))
        })
        .collect::<Result<_>>()?;

    Ok(spec
        .grid
        .iter()
        .enumerate()
        .map(|(g, &size)| {
            let block = &results[g * spec.repetitions..(g + 1) * spec.repetitions];
            CurvePoint {
                grid: size,
                train_values: block.iter().map(|v| v.0).collect(),
                test_values: block.iter().map(|v| v.1).collect(),
            }
        })
        .collect())
}

/// Same runs as [`run_samplesize_curve`]; the gap is read from each point.
pub fn run_gap_curve(spec: &CurveSpec, pool: &Dataset) -> Result<Vec<CurvePoint>> {
    if spec.kind != CurveKind::Gap {
        return invalid(format!("curve kind {} not accepted here", spec.kind));
    }
    run_samplesize_curve(spec, pool)
}

/// Dispatches on `spec.kind`.
pub fn run_curve(spec: &CurveSpec, pool: &Dataset) -> Result<Vec<CurvePoint>> {
    match spec.kind {
        CurveKind::Passes => run_passes_curve(spec, pool),
        CurveKind::SampleSize => run_samplesize_curve(spec, pool),
        CurveKind::Gap => run_gap_curve(spec, pool),
    }
}

fn subsample(pool: &Dataset, size: usize, seed: u64) -> Dataset {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.shuffle(&mut crate::rng::rng_from_seed(seed));
    order.truncate(size);
    pool.select(&order)
}

pub const CURVE_CSV_HEADER: &str = "grid,metric,mean,std,repetitions";

/// Writes one row per (point, metric): `test` for passes curves, `train,test`
/// for sample-size curves and `train,test,gap` for gap curves.
pub fn emit_csv<W: Write>(points: &[CurvePoint], kind: CurveKind, mut out: W) -> Result<()> {
    writeln!(out, "{CURVE_CSV_HEADER}")?;
    for p in points {
        let metrics: Vec<(&str, Summary)> = match kind {
            CurveKind::Passes => vec![("test", p.test())],
            CurveKind::SampleSize => vec![("train", p.train()), ("test", p.test())],
            CurveKind::Gap => vec![("train", p.train()), ("test", p.test()), ("gap", p.gap())],
        };
        for (name, s) in metrics {
            writeln!(out, "{},{},{:.16e},{:.16e},{}", p.grid, name, s.mean, s.std, s.count)?;
        }
    }
    Ok(())
}
