//! Empirical Rademacher complexity of the extended linear class
//! `{(x, j) -> <w_j, x> : ||w||_{2,2} <= R}` over a sample of `(x, j)` pairs.
//!
//! For a Frobenius ball the inner supremum has a closed form,
//!
//! ```text
//! sup_{||w|| <= R} sum_i eps_i <w_{j_i}, x_i> = R * || sum_i eps_i p_{j_i}(x_i) ||_{2,2}
//! ```
//!
//! where `p_j(x)` is the `d x c` matrix holding `x` in column `j`. The expectation
//! over signs is either enumerated exactly (`m <= 20`) or estimated by Monte Carlo
//! with one derived seed per trial, so results do not depend on the worker count.

use std::io::Write;

use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::model::SparseVector;
use crate::rng::{derive_seed, rng_from_seed};
use crate::stats::{compensated_sum, Summary};

/// Largest sample size enumerated exhaustively.
pub const MAX_EXACT_PAIRS: usize = 20;

/// Width, in standard errors, of the acceptance band for Monte-Carlo estimates.
pub const STD_ERROR_BAND: f64 = 3.0;

/// Pairs `(x_i, j_i)` on which the extended class is evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedSample {
    dim: usize,
    components: usize,
    pairs: Vec<(SparseVector, usize)>,
}

impl ExtendedSample {
    pub fn new(dim: usize, components: usize, pairs: Vec<(SparseVector, usize)>) -> Result<ExtendedSample> {
        if components == 0 {
            return invalid("extended sample needs at least one component");
        }
        for (x, j) in &pairs {
            if x.dim() != dim {
                return invalid(format!("pair input has dimension {}, expected {dim}", x.dim()));
            }
            if *j >= components {
                return invalid(format!("component {j} out of range for c={components}"));
            }
        }
        Ok(ExtendedSample { dim, components, pairs })
    }

    /// Every pair `(x_i, j)` for `j` in `[0, c)`: `n * c` pairs in total.
    pub fn from_inputs(inputs: &[SparseVector], components: usize) -> Result<ExtendedSample> {
        let Some(first) = inputs.first() else {
            return invalid("extended sample needs at least one input");
        };
        let pairs = inputs.iter().flat_map(|x| (0..components).map(move |j| (x.clone(), j))).collect();
        ExtendedSample::new(first.dim(), components, pairs)
    }

    /// `m` copies of the same pair, the extremal sample for the lower bound.
    pub fn repeated(x: SparseVector, j: usize, components: usize, m: usize) -> Result<ExtendedSample> {
        let dim = x.dim();
        ExtendedSample::new(dim, components, vec![(x, j); m])
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// `max_i ||x_i||_2`, the dual-norm bound of the pair embeddings.
    pub fn max_input_norm(&self) -> f64 {
        self.pairs.iter().map(|(x, _)| x.norm()).fold(0.0, f64::max)
    }

    /// `|| sum_i signs_i p_{j_i}(x_i) ||_{2,2}` using `buf` as scratch.
    fn aggregate_norm(&self, signs: impl Iterator<Item = f64>, buf: &mut Vec<f64>) -> f64 {
        let c = self.components;
        buf.clear();
        buf.resize(self.dim * c, 0.0);
        for ((x, j), s) in self.pairs.iter().zip(signs) {
            for (i, v) in x.iter() {
                buf[i * c + j] += s * v;
            }
        }
        buf.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RademacherEstimate {
    pub mean: f64,
    pub std_error: f64,
    /// Monte-Carlo trials, or the number of enumerated sign patterns when exact.
    pub trials: u64,
    pub exact: bool,
}

/// Closed-form supremum of the signed correlation over the Frobenius ball of radius `radius`.
pub fn sup_ball(sample: &ExtendedSample, signs: &[i8], radius: f64) -> Result<f64> {
    if signs.len() != sample.len() {
        return invalid(format!("{} signs for {} pairs", signs.len(), sample.len()));
    }
    if radius.is_nan() || radius < 0.0 {
        return invalid(format!("radius must be nonnegative, got {radius}"));
    }
    let mut buf = Vec::new();
    Ok(radius * sample.aggregate_norm(signs.iter().map(|&s| f64::from(s)), &mut buf))
}

/// Estimates `E_eps[sup_w (1/m) sum_i eps_i <w_{j_i}, x_i>]`.
///
/// `trials == 0` requests exhaustive enumeration, allowed for `m <= 20`.
pub fn estimate_complexity(sample: &ExtendedSample, radius: f64, trials: u64, seed: u64) -> Result<RademacherEstimate> {
    let m = sample.len();
    if m == 0 {
        return invalid("cannot estimate complexity on an empty sample");
    }
    if radius.is_nan() || radius < 0.0 {
        return invalid(format!("radius must be nonnegative, got {radius}"));
    }
    let scale = radius / m as f64;

    if trials == 0 {
        if m > MAX_EXACT_PAIRS {
            return invalid(format!("exact enumeration needs m <= {MAX_EXACT_PAIRS}, got {m}"));
        }
        let patterns = 1u64 << m;
        let values: Vec<f64> = (0..patterns)
            .into_par_iter()
            .map_init(Vec::new, |buf, mask| {
                let signs = (0..m).map(|i| if mask >> i & 1 == 1 { 1.0 } else { -1.0 });
                scale * sample.aggregate_norm(signs, buf)
            })
            .collect();
        return Ok(RademacherEstimate {
            mean: compensated_sum(values) / patterns as f64,
            std_error: 0.0,
            trials: patterns,
            exact: true,
        });
    }

    let values: Vec<f64> = (0..trials)
        .into_par_iter()
        .map_init(
            || (Vec::new(), Vec::new()),
            |(buf, signs), trial| {
                let mut rng = rng_from_seed(derive_seed(seed, trial));
                signs.clear();
                let mut bits = 0u64;
                for i in 0..m {
                    if i % 64 == 0 {
                        bits = rng.gen();
                    }
                    signs.push(if bits >> (i % 64) & 1 == 1 { 1.0 } else { -1.0 });
                }
                scale * sample.aggregate_norm(signs.iter().copied(), buf)
            },
        )
        .collect();
    let summary = Summary::of(&values);
    Ok(RademacherEstimate { mean: summary.mean, std_error: summary.std / (trials as f64).sqrt(), trials, exact: false })
}

/// `E|eps_1 + ... + eps_m|` by walking all `2^m` sign patterns.
pub fn exhaustive_mean_abs_sum(m: u32) -> f64 {
    assert!(m <= 30, "exhaustive enumeration limited to m <= 30");
    let patterns = 1u64 << m;
    let total: u64 = (0..patterns)
        .map(|mask| {
            let plus = mask.count_ones() as i64;
            (2 * plus - m as i64).unsigned_abs()
        })
        .sum();
    total as f64 / patterns as f64
}

/// Parameters of [`sandwich_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SandwichParams {
    pub n: usize,
    pub components: usize,
    pub dim: usize,
    /// Sublevel `Lambda`; the class is the ball `(sigma/2)||w||^2 <= Lambda`.
    pub lambda_cap: f64,
    pub sigma: f64,
    /// Norm of every generated input.
    pub kappa: f64,
    /// Monte-Carlo trials; 0 requests exact enumeration.
    pub trials: u64,
    /// Random samples checked against the upper bound, besides the extremal one.
    pub random_samples: usize,
    pub seed: u64,
    /// Multiplies the analytic lower bound. Anything other than 1 is a fault
    /// injection used to test the failure path.
    pub lower_bound_scale: f64,
}

impl SandwichParams {
    pub fn new(
        n: usize,
        components: usize,
        dim: usize,
        lambda_cap: f64,
        sigma: f64,
        trials: u64,
        seed: u64,
    ) -> SandwichParams {
        SandwichParams {
            n,
            components,
            dim,
            lambda_cap,
            sigma,
            kappa: 1.0,
            trials,
            random_samples: 1,
            seed,
            lower_bound_scale: 1.0,
        }
    }

    /// Ball radius `sqrt(2 Lambda / sigma)`.
    pub fn radius(&self) -> f64 {
        (2.0 * self.lambda_cap / self.sigma).sqrt()
    }

    pub fn pairs(&self) -> usize {
        self.n * self.components
    }

    /// `sqrt(1 / (2nc)) * R * kappa`.
    pub fn lower_bound(&self) -> f64 {
        (1.0 / (2.0 * self.pairs() as f64)).sqrt() * self.radius() * self.kappa * self.lower_bound_scale
    }

    /// `sqrt(2 Lambda / (nc sigma)) * kappa`.
    pub fn upper_bound(&self) -> f64 {
        (2.0 * self.lambda_cap / (self.pairs() as f64 * self.sigma)).sqrt() * self.kappa
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleKind {
    /// All pairs identical; checked against both bounds.
    Extremal,
    /// Random inputs of norm `kappa` across all components; checked against the upper bound.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SandwichRow {
    pub kind: SampleKind,
    pub pairs: usize,
    pub estimate: RademacherEstimate,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichReport {
    pub radius: f64,
    pub rows: Vec<SandwichRow>,
}

impl SandwichReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

fn random_input(rng: &mut crate::rng::Rng, dim: usize, kappa: f64) -> Result<SparseVector> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 0.0 {
            let scaled: Vec<f64> = v.iter().map(|a| a * kappa / norm).collect();
            return SparseVector::from_dense(&scaled);
        }
    }
}

/// Checks `lower <= R_nc <= upper` on the extremal sample and `R_nc <= upper`
/// on random samples, each within a band of [`STD_ERROR_BAND`] standard errors.
pub fn sandwich_check(params: &SandwichParams) -> Result<SandwichReport> {
    let p = params;
    if p.n == 0 || p.components == 0 || p.dim == 0 {
        return invalid("n, c and d must be positive");
    }
    for (name, v) in [("lambda-cap", p.lambda_cap), ("sigma", p.sigma), ("kappa", p.kappa)] {
        if !(v > 0.0 && v.is_finite()) {
            return invalid(format!("{name} must be positive, got {v}"));
        }
    }
    let m = p.pairs();
    let radius = p.radius();
    let lower = p.lower_bound();
    let upper = p.upper_bound();
    // relative slack for exact comparisons that are tight (m = 1 attains the upper bound)
    let tol = 1e-12 * upper;
    let mut rows = Vec::with_capacity(1 + p.random_samples);

    let mut e1 = vec![0.0; p.dim];
    e1[0] = p.kappa;
    let extremal = ExtendedSample::repeated(SparseVector::from_dense(&e1)?, 0, p.components, m)?;
    let est = estimate_complexity(&extremal, radius, p.trials, derive_seed(p.seed, 0))?;
    let band = STD_ERROR_BAND * est.std_error;
    rows.push(SandwichRow {
        kind: SampleKind::Extremal,
        pairs: m,
        estimate: est,
        lower_bound: lower,
        upper_bound: upper,
        pass: est.mean + band + tol >= lower && est.mean - band <= upper + tol,
    });

    for s in 0..p.random_samples {
        let mut rng = rng_from_seed(derive_seed(p.seed, 2 * s as u64 + 1));
        let inputs = (0..p.n).map(|_| random_input(&mut rng, p.dim, p.kappa)).collect::<Result<Vec<_>>>()?;
        let sample = ExtendedSample::from_inputs(&inputs, p.components)?;
        let est = estimate_complexity(&sample, radius, p.trials, derive_seed(p.seed, 2 * s as u64 + 2))?;
        let band = STD_ERROR_BAND * est.std_error;
        rows.push(SandwichRow {
            kind: SampleKind::Random,
            pairs: m,
            estimate: est,
            lower_bound: lower,
            upper_bound: upper,
            pass: est.mean - band <= upper + tol,
        });
    }
    Ok(SandwichReport { radius, rows })
}

pub const SANDWICH_CSV_HEADER: &str = "nc,trials,estimate,std_error,lower_bound,upper_bound,pass";

/// One row per sample: the extremal sample first, then the random samples.
pub fn write_sandwich_csv<W: Write>(report: &SandwichReport, mut out: W) -> Result<()> {
    writeln!(out, "{SANDWICH_CSV_HEADER}")?;
    for r in &report.rows {
        writeln!(
            out,
            "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            r.pairs, r.estimate.trials, r.estimate.mean, r.estimate.std_error, r.lower_bound, r.upper_bound, r.pass
        )?;
    }
    Ok(())
}
