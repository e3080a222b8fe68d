//! Vector-valued losses with values, subgradients and certified Lipschitz constants
//! with respect to the infinity norm on the score vector.
//!
//! Every loss depends on `w` only through the scores `t = h^w(x)`, so each one is
//! implemented on scores first. The gradient with respect to `w` is then the
//! outer product `x ⊗ psi` where `psi` is the score-space subgradient.
//!
//! Conventions shared by all losses:
//! - ties in an argmax or a top-k selection go to the smallest index;
//! - at a kink the subgradient of minimal magnitude is returned (hinge at `t = 1`
//!   and the outer `max{0, .}` of the top-k loss both give zero).

use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::model::{predict, Label, LabeledExample, SparseVector, Task, WeightMatrix};

/// Scalar margin loss `l(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaseLoss {
    /// `max{0, 1 - t}`
    Hinge,
    /// `log(1 + exp(-t))`
    Logistic,
}

impl BaseLoss {
    pub fn value(self, t: f64) -> f64 {
        match self {
            BaseLoss::Hinge => (1.0 - t).max(0.0),
            BaseLoss::Logistic => {
                if t > 0.0 {
                    (-t).exp().ln_1p()
                } else {
                    -t + t.exp().ln_1p()
                }
            }
        }
    }

    /// Derivative, or the minimal-magnitude subgradient at the hinge kink.
    pub fn derivative(self, t: f64) -> f64 {
        match self {
            BaseLoss::Hinge => {
                if t < 1.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            // -1 / (1 + e^t), written to avoid overflow for large |t|
            BaseLoss::Logistic => {
                if t > 0.0 {
                    let e = (-t).exp();
                    -e / (1.0 + e)
                } else {
                    -1.0 / (1.0 + t.exp())
                }
            }
        }
    }

    pub fn lipschitz(self) -> f64 {
        1.0
    }

    pub fn name(self) -> &'static str {
        match self {
            BaseLoss::Hinge => "hinge",
            BaseLoss::Logistic => "logistic",
        }
    }
}

impl FromStr for BaseLoss {
    type Err = Error;

    fn from_str(s: &str) -> Result<BaseLoss> {
        match s {
            "hinge" => Ok(BaseLoss::Hinge),
            "logistic" => Ok(BaseLoss::Logistic),
            _ => invalid(format!("unknown base loss `{s}` (expected hinge or logistic)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Multi-class SVM: `max_{y' != y} l(<w_y - w_y', x>)`.
    McSvm(BaseLoss),
    /// `log sum_j exp(<w_j - w_y, x>)`.
    MultinomialLogistic,
    /// Average of the `k` largest `1[y != j] + <w_j - w_y, x>`, hinged at zero.
    TopKSvm { k: usize },
    /// Multi-label worst per-label loss: `max_j l(y_j <w_j, x>)`.
    Subset(BaseLoss),
    /// Multi-label pairwise loss averaged over (relevant, irrelevant) pairs.
    Ranking(BaseLoss),
}

impl LossKind {
    pub fn task(self) -> Task {
        match self {
            LossKind::McSvm(_) | LossKind::MultinomialLogistic | LossKind::TopKSvm { .. } => Task::Multiclass,
            LossKind::Subset(_) | LossKind::Ranking(_) => Task::Multilabel,
        }
    }

    /// Lipschitz constant w.r.t. `||.||_inf` on the scores.
    pub fn certified_lipschitz(self) -> f64 {
        match self {
            LossKind::McSvm(base) => 2.0 * base.lipschitz(),
            LossKind::MultinomialLogistic => 2.0,
            LossKind::TopKSvm { .. } => 2.0,
            LossKind::Subset(base) => base.lipschitz(),
            LossKind::Ranking(base) => 2.0 * base.lipschitz(),
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossKind::McSvm(b) => write!(f, "mcsvm-{}", b.name()),
            LossKind::MultinomialLogistic => write!(f, "mlogistic"),
            LossKind::TopKSvm { k } => write!(f, "topk-{k}"),
            LossKind::Subset(b) => write!(f, "subset-{}", b.name()),
            LossKind::Ranking(b) => write!(f, "ranking-{}", b.name()),
        }
    }
}

impl FromStr for LossKind {
    type Err = Error;

    /// Parses the `Display` form, e.g. `mcsvm-hinge`, `mlogistic`, `topk-3`.
    fn from_str(s: &str) -> Result<LossKind> {
        let (head, tail) = s.split_once('-').unwrap_or((s, ""));
        match (head, tail) {
            ("mlogistic", "") => Ok(LossKind::MultinomialLogistic),
            ("mcsvm", b) => Ok(LossKind::McSvm(b.parse()?)),
            ("subset", b) => Ok(LossKind::Subset(b.parse()?)),
            ("ranking", b) => Ok(LossKind::Ranking(b.parse()?)),
            ("topk", k) => k
                .parse()
                .map(|k| LossKind::TopKSvm { k })
                .map_err(|_| Error::InvalidInput(format!("bad top-k order in `{s}`"))),
            _ => invalid(format!("unknown loss `{s}`")),
        }
    }
}

/// A loss together with the Lipschitz constant the rest of the system relies on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec {
    kind: LossKind,
    lipschitz_inf: f64,
}

impl LossSpec {
    pub fn new(kind: LossKind) -> LossSpec {
        LossSpec { kind, lipschitz_inf: kind.certified_lipschitz() }
    }

    /// Overrides the registered constant. Used to exercise the failure path of
    /// the property suites; never needed for ordinary use.
    pub fn with_lipschitz(mut self, lipschitz_inf: f64) -> LossSpec {
        self.lipschitz_inf = lipschitz_inf;
        self
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn lipschitz_inf(&self) -> f64 {
        self.lipschitz_inf
    }

    pub fn task(&self) -> Task {
        self.kind.task()
    }

    /// Loss value as a function of the score vector.
    pub fn value_at_scores(&self, scores: &[f64], label: &Label) -> Result<f64> {
        match self.kind {
            LossKind::McSvm(base) => {
                let y = class_label(label, scores.len(), 2)?;
                Ok(mc_svm_scores(scores, y, base).0)
            }
            LossKind::MultinomialLogistic => {
                let y = class_label(label, scores.len(), 1)?;
                Ok(log_sum_exp_shifted(scores, y))
            }
            LossKind::TopKSvm { k } => {
                let y = class_label(label, scores.len(), 2)?;
                check_k(k, scores.len())?;
                Ok(topk_scores(scores, y, k).0.max(0.0))
            }
            LossKind::Subset(base) => {
                let signs = sign_label(label, scores.len())?;
                Ok(subset_scores(scores, signs, base).0)
            }
            LossKind::Ranking(base) => {
                let signs = sign_label(label, scores.len())?;
                let (pos, neg) = split_signs(signs)?;
                let norm = (pos.len() * neg.len()) as f64;
                let mut total = 0.0;
                for &jp in &pos {
                    for &jn in &neg {
                        total += base.value(scores[jp] - scores[jn]);
                    }
                }
                Ok(total / norm)
            }
        }
    }

    /// Subgradient `psi` of the loss with respect to the score vector.
    pub fn score_subgradient(&self, scores: &[f64], label: &Label) -> Result<Vec<f64>> {
        let c = scores.len();
        let mut psi = vec![0.0; c];
        match self.kind {
            LossKind::McSvm(base) => {
                let y = class_label(label, c, 2)?;
                let (_, worst) = mc_svm_scores(scores, y, base);
                let g = base.derivative(scores[y] - scores[worst]);
                psi[y] += g;
                psi[worst] -= g;
            }
            LossKind::MultinomialLogistic => {
                let y = class_label(label, c, 1)?;
                let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
                let z: f64 = exps.iter().sum();
                for (p, e) in psi.iter_mut().zip(&exps) {
                    *p = e / z;
                }
                psi[y] -= 1.0;
            }
            LossKind::TopKSvm { k } => {
                let y = class_label(label, c, 2)?;
                check_k(k, c)?;
                let (avg, top) = topk_scores(scores, y, k);
                if avg > 0.0 {
                    let share = 1.0 / k as f64;
                    for &j in &top {
                        psi[j] += share;
                    }
                    psi[y] -= top.len() as f64 * share;
                }
            }
            LossKind::Subset(base) => {
                let signs = sign_label(label, c)?;
                let (_, worst) = subset_scores(scores, signs, base);
                let s = f64::from(signs[worst]);
                psi[worst] = s * base.derivative(s * scores[worst]);
            }
            LossKind::Ranking(base) => {
                let signs = sign_label(label, c)?;
                let (pos, neg) = split_signs(signs)?;
                let norm = (pos.len() * neg.len()) as f64;
                for &jp in &pos {
                    for &jn in &neg {
                        let g = base.derivative(scores[jp] - scores[jn]) / norm;
                        psi[jp] += g;
                        psi[jn] -= g;
                    }
                }
            }
        }
        Ok(psi)
    }

    pub fn value(&self, w: &WeightMatrix, z: &LabeledExample) -> Result<f64> {
        self.value_at_scores(&predict(w, &z.x)?.scores, &z.label)
    }

    /// Subgradient with respect to `w`, shaped like `w`.
    pub fn subgradient(&self, w: &WeightMatrix, z: &LabeledExample) -> Result<WeightMatrix> {
        let psi = self.score_subgradient(&predict(w, &z.x)?.scores, &z.label)?;
        Ok(outer(&z.x, &psi, w.dim()))
    }
}

fn outer(x: &SparseVector, psi: &[f64], dim: usize) -> WeightMatrix {
    let mut g = WeightMatrix::zeros(dim, psi.len());
    g.add_outer(x, psi);
    g
}

fn class_label(label: &Label, c: usize, min_c: usize) -> Result<usize> {
    match label {
        Label::Class(y) if *y < c => {
            if c < min_c {
                invalid(format!("loss needs at least {min_c} classes, model has {c}"))
            } else {
                Ok(*y)
            }
        }
        Label::Class(y) => invalid(format!("class {y} out of range for {c} components")),
        Label::Signs(_) => invalid("multi-class loss given a sign-vector label"),
    }
}

fn sign_label(label: &Label, c: usize) -> Result<&[i8]> {
    match label {
        Label::Signs(s) if s.len() == c => Ok(s),
        Label::Signs(s) => invalid(format!("sign vector has length {}, model has {c} components", s.len())),
        Label::Class(_) => invalid("multi-label loss given a class-index label"),
    }
}

fn split_signs(signs: &[i8]) -> Result<(Vec<usize>, Vec<usize>)> {
    let pos: Vec<usize> = (0..signs.len()).filter(|&j| signs[j] > 0).collect();
    let neg: Vec<usize> = (0..signs.len()).filter(|&j| signs[j] < 0).collect();
    if pos.is_empty() || neg.is_empty() {
        return invalid("ranking loss needs at least one relevant and one irrelevant label");
    }
    Ok((pos, neg))
}

fn check_k(k: usize, c: usize) -> Result<()> {
    if k == 0 || k >= c {
        return invalid(format!("top-k order must satisfy 1 <= k < c, got k={k}, c={c}"));
    }
    Ok(())
}

/// Returns the value and the maximizing `y'` (smallest index on ties).
fn mc_svm_scores(scores: &[f64], y: usize, base: BaseLoss) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, usize::MAX);
    for (j, &s) in scores.iter().enumerate() {
        if j == y {
            continue;
        }
        let v = base.value(scores[y] - s);
        if v > best.0 {
            best = (v, j);
        }
    }
    best
}

fn log_sum_exp_shifted(scores: &[f64], y: usize) -> f64 {
    let shifted: Vec<f64> = scores.iter().map(|s| s - scores[y]).collect();
    let mut top = 0;
    for (j, &s) in shifted.iter().enumerate() {
        if s > shifted[top] {
            top = j;
        }
    }
    let max = shifted[top];
    // log1p keeps precision when the other terms are tiny, which is where the
    // gradient is tiny too
    let rest: f64 = shifted.iter().enumerate().filter(|&(j, _)| j != top).map(|(_, s)| (s - max).exp()).sum();
    (max + rest.ln_1p()).max(0.0)
}

/// Pre-hinge top-k average and the selected index set (ties to smaller index).
fn topk_scores(scores: &[f64], y: usize, k: usize) -> (f64, Vec<usize>) {
    let a: Vec<f64> = scores.iter().enumerate().map(|(j, s)| if j == y { 0.0 } else { 1.0 + s - scores[y] }).collect();
    let mut order: Vec<usize> = (0..a.len()).collect();
    // stable sort keeps ascending indices among equal entries
    order.sort_by(|&i, &j| a[j].total_cmp(&a[i]));
    order.truncate(k);
    let avg = order.iter().map(|&j| a[j]).sum::<f64>() / k as f64;
    (avg, order)
}

fn subset_scores(scores: &[f64], signs: &[i8], base: BaseLoss) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, 0);
    for (j, (&s, &y)) in scores.iter().zip(signs).enumerate() {
        let v = base.value(f64::from(y) * s);
        if v > best.0 {
            best = (v, j);
        }
    }
    best
}

fn class_example(z: &LabeledExample) -> Result<&LabeledExample> {
    match z.label {
        Label::Class(_) => Ok(z),
        Label::Signs(_) => invalid("expected a class-index label"),
    }
}

fn sign_example(z: &LabeledExample) -> Result<&LabeledExample> {
    match z.label {
        Label::Signs(_) => Ok(z),
        Label::Class(_) => invalid("expected a sign-vector label"),
    }
}

pub fn mc_svm_value(w: &WeightMatrix, z: &LabeledExample, base: BaseLoss) -> Result<f64> {
    LossSpec::new(LossKind::McSvm(base)).value(w, class_example(z)?)
}

pub fn mc_svm_subgrad(w: &WeightMatrix, z: &LabeledExample, base: BaseLoss) -> Result<WeightMatrix> {
    LossSpec::new(LossKind::McSvm(base)).subgradient(w, class_example(z)?)
}

pub fn multinomial_logistic_value(w: &WeightMatrix, z: &LabeledExample) -> Result<f64> {
    LossSpec::new(LossKind::MultinomialLogistic).value(w, class_example(z)?)
}

pub fn multinomial_logistic_subgrad(w: &WeightMatrix, z: &LabeledExample) -> Result<WeightMatrix> {
    LossSpec::new(LossKind::MultinomialLogistic).subgradient(w, class_example(z)?)
}

pub fn topk_svm_value(w: &WeightMatrix, z: &LabeledExample, k: usize) -> Result<f64> {
    LossSpec::new(LossKind::TopKSvm { k }).value(w, class_example(z)?)
}

pub fn topk_svm_subgrad(w: &WeightMatrix, z: &LabeledExample, k: usize) -> Result<WeightMatrix> {
    LossSpec::new(LossKind::TopKSvm { k }).subgradient(w, class_example(z)?)
}

pub fn subset_value(w: &WeightMatrix, z: &LabeledExample, base: BaseLoss) -> Result<f64> {
    LossSpec::new(LossKind::Subset(base)).value(w, sign_example(z)?)
}

pub fn subset_subgrad(w: &WeightMatrix, z: &LabeledExample, base: BaseLoss) -> Result<WeightMatrix> {
    LossSpec::new(LossKind::Subset(base)).subgradient(w, sign_example(z)?)
}

pub fn ranking_value(w: &WeightMatrix, z: &LabeledExample, base: BaseLoss) -> Result<f64> {
    LossSpec::new(LossKind::Ranking(base)).value(w, sign_example(z)?)
}

pub fn ranking_subgrad(w: &WeightMatrix, z: &LabeledExample, base: BaseLoss) -> Result<WeightMatrix> {
    LossSpec::new(LossKind::Ranking(base)).subgradient(w, sign_example(z)?)
}
