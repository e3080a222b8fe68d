//! Datasets in the sparse text format (one example per line, 1-based feature
//! indices), row normalization, seeded splits and a synthetic generator.
//!
//! ```text
//! # multi-class: one label id per line
//! 2 1:0.5 3:1.5
//! # multi-label: comma-separated relevant label ids
//! 1,3 2:1.0
//! ```
//!
//! Label ids are arbitrary tokens. They are mapped to dense indices `[0, c)` in
//! order of first appearance unless an explicit id list is supplied; the list is
//! kept on the [`Dataset`] so models can be evaluated on other files with the
//! same mapping.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::model::{predict, Label, LabeledExample, SparseVector, Task, WeightMatrix};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    examples: Vec<LabeledExample>,
    dim: usize,
    components: usize,
    task: Task,
    kappa: f64,
    label_ids: Vec<String>,
}

impl Dataset {
    /// Validates every example against `dim`, `components` and `task`.
    pub fn new(
        examples: Vec<LabeledExample>,
        dim: usize,
        components: usize,
        task: Task,
        label_ids: Vec<String>,
    ) -> Result<Dataset> {
        if label_ids.len() != components {
            return invalid(format!("{} label ids for {components} components", label_ids.len()));
        }
        for (n, z) in examples.iter().enumerate() {
            if z.x.dim() != dim {
                return invalid(format!("example {n} has dimension {}, expected {dim}", z.x.dim()));
            }
            match (&z.label, task) {
                (Label::Class(y), Task::Multiclass) if *y < components => {}
                (Label::Signs(s), Task::Multilabel) if s.len() == components => {}
                _ => {
                    return invalid(format!(
                        "example {n} has a label incompatible with {} and c={components}",
                        task.name()
                    ))
                }
            }
        }
        let kappa = examples.iter().map(|z| z.x.norm()).fold(0.0, f64::max);
        Ok(Dataset { examples, dim, components, task, kappa, label_ids })
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn task(&self) -> Task {
        self.task
    }

    /// Largest Euclidean norm of any input.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// On-disk label id of each dense label index.
    pub fn label_ids(&self) -> &[String] {
        &self.label_ids
    }

    /// The examples at `indices`, in that order; shape and label map are kept.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let examples: Vec<LabeledExample> = indices.iter().map(|&i| self.examples[i].clone()).collect();
        let kappa = examples.iter().map(|z| z.x.norm()).fold(0.0, f64::max);
        Dataset { examples, kappa, ..self.shape_only() }
    }

    fn shape_only(&self) -> Dataset {
        Dataset {
            examples: Vec::new(),
            dim: self.dim,
            components: self.components,
            task: self.task,
            kappa: 0.0,
            label_ids: self.label_ids.clone(),
        }
    }
}

/// Overrides applied while parsing.
#[derive(Debug, Clone, Default)]
pub struct ParseOptions {
    pub dim: Option<usize>,
    pub components: Option<usize>,
    /// Fixed label id list; ids outside it are a parse error.
    pub label_ids: Option<Vec<String>>,
}

impl ParseOptions {
    /// Options that reproduce the shape and label map of `ds`.
    pub fn matching(ds: &Dataset) -> ParseOptions {
        ParseOptions {
            dim: Some(ds.dim()),
            components: Some(ds.components()),
            label_ids: Some(ds.label_ids().to_vec()),
        }
    }
}

/// Label ids `"1", ..., "c"`.
pub fn one_based_label_ids(components: usize) -> Vec<String> {
    (1..=components).map(|j| j.to_string()).collect()
}

pub fn parse_sparse_text(path: impl AsRef<Path>, task: Task, options: &ParseOptions) -> Result<Dataset> {
    let file = File::open(path)?;
    parse_sparse_text_from(BufReader::new(file), task, options)
}

struct RawLine {
    labels: Vec<usize>,
    features: Vec<(usize, f64)>,
}

pub fn parse_sparse_text_from<R: BufRead>(reader: R, task: Task, options: &ParseOptions) -> Result<Dataset> {
    let fixed = options.label_ids.is_some();
    let mut ids: Vec<String> = options.label_ids.clone().unwrap_or_default();
    let mut lookup: HashMap<String, usize> = ids.iter().enumerate().map(|(k, id)| (id.clone(), k)).collect();
    if lookup.len() != ids.len() {
        return invalid("label id list contains duplicates");
    }
    let mut rows = Vec::new();
    let mut max_index = 0usize;

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let parse_err = |message: String| Error::Parse { line: lineno, message };
        let content = match line.find('#') {
            Some(pos) => &line[..pos],
            None => &line[..],
        };
        let mut tokens = content.split_whitespace().peekable();
        let Some(&first) = tokens.peek() else { continue };

        let mut labels = Vec::new();
        if !first.contains(':') {
            tokens.next();
            if task == Task::Multiclass && first.contains(',') {
                return Err(parse_err(format!("multi-class line has several labels `{first}`")));
            }
            for id in first.split(',') {
                if id.is_empty() {
                    return Err(parse_err(format!("empty label id in `{first}`")));
                }
                let k = match lookup.get(id) {
                    Some(&k) => k,
                    None if fixed => return Err(parse_err(format!("unknown label id `{id}`"))),
                    None => {
                        ids.push(id.to_string());
                        lookup.insert(id.to_string(), ids.len() - 1);
                        ids.len() - 1
                    }
                };
                labels.push(k);
            }
        } else if task == Task::Multiclass {
            return Err(parse_err("missing class label".into()));
        }

        let mut features = Vec::new();
        for tok in tokens {
            let (idx, val) =
                tok.split_once(':').ok_or_else(|| parse_err(format!("malformed feature token `{tok}`")))?;
            let idx: usize = idx.parse().map_err(|_| parse_err(format!("bad feature index in `{tok}`")))?;
            if idx == 0 {
                return Err(parse_err(format!("feature indices are 1-based, got `{tok}`")));
            }
            let val: f64 = val.parse().map_err(|_| parse_err(format!("bad feature value in `{tok}`")))?;
            if !val.is_finite() {
                return Err(parse_err(format!("non-finite feature value in `{tok}`")));
            }
            features.push((idx - 1, val));
        }
        features.sort_by_key(|&(i, _)| i);
        if let Some(pair) = features.windows(2).find(|p| p[0].0 == p[1].0) {
            return Err(parse_err(format!("duplicate feature index {}", pair[0].0 + 1)));
        }
        if let Some(&(i, _)) = features.last() {
            max_index = max_index.max(i + 1);
        }
        rows.push(RawLine { labels, features });
    }

    if rows.is_empty() {
        return invalid("dataset file contains no examples");
    }
    let dim = match options.dim {
        Some(d) if d < max_index => {
            return invalid(format!("dimension override {d} below max feature index {max_index}"))
        }
        Some(d) => d,
        None => max_index.max(1),
    };
    let components = match options.components {
        Some(c) if c < ids.len() => {
            return invalid(format!("component override {c} below {} distinct labels", ids.len()))
        }
        Some(c) => c,
        None => ids.len(),
    };
    pad_label_ids(&mut ids, components);

    let mut examples = Vec::with_capacity(rows.len());
    for row in rows {
        let x = SparseVector::new(dim, row.features)?;
        let label = match task {
            Task::Multiclass => Label::Class(row.labels[0]),
            Task::Multilabel => {
                let mut signs = vec![-1i8; components];
                for k in row.labels {
                    signs[k] = 1;
                }
                Label::Signs(signs)
            }
        };
        examples.push(LabeledExample::new(x, label));
    }
    Dataset::new(examples, dim, components, task, ids)
}

/// Extends `ids` to `components` entries with unused decimal ids.
fn pad_label_ids(ids: &mut Vec<String>, components: usize) {
    let mut next = 1usize;
    while ids.len() < components {
        let candidate = next.to_string();
        if !ids.contains(&candidate) {
            ids.push(candidate);
        }
        next += 1;
    }
}

/// Writes `ds` in the sparse text format with shortest round-trip floats.
pub fn write_sparse_text<W: Write>(ds: &Dataset, mut out: W) -> Result<()> {
    for (n, z) in ds.examples().iter().enumerate() {
        let mut line = match &z.label {
            Label::Class(y) => ds.label_ids()[*y].clone(),
            Label::Signs(signs) => {
                let relevant: Vec<&str> =
                    signs.iter().enumerate().filter(|(_, &s)| s > 0).map(|(j, _)| ds.label_ids()[j].as_str()).collect();
                if relevant.is_empty() && z.x.nnz() == 0 {
                    return invalid(format!("example {n} has neither relevant labels nor features"));
                }
                relevant.join(",")
            }
        };
        for (i, v) in z.x.iter() {
            if !line.is_empty() {
                line.push(' ');
            }
            line.push_str(&format!("{}:{:?}", i + 1, v));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn write_sparse_text_file(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut file = std::io::BufWriter::new(File::create(path)?);
    write_sparse_text(ds, &mut file)?;
    file.flush()?;
    Ok(())
}

/// Scales every nonzero input to unit Euclidean norm.
pub fn normalize_rows(ds: &Dataset) -> Dataset {
    let examples: Vec<LabeledExample> = ds
        .examples()
        .iter()
        .map(|z| {
            let norm = z.x.norm();
            let x = if norm > 0.0 { z.x.divided(norm) } else { z.x.clone() };
            LabeledExample::new(x, z.label.clone())
        })
        .collect();
    let kappa = examples.iter().map(|z| z.x.norm()).fold(0.0, f64::max);
    Dataset { examples, kappa, ..ds.shape_only() }
}

/// Seeded shuffle; the first `floor(fraction * n)` examples form the first part.
pub fn split(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return invalid(format!("train fraction must lie in (0, 1), got {train_fraction}"));
    }
    let n = ds.len();
    let n_train = (train_fraction * n as f64).floor() as usize;
    if n_train == 0 || n_train == n {
        return invalid(format!("splitting {n} examples at {train_fraction} leaves one side empty"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(seed));
    Ok((ds.select(&order[..n_train]), ds.select(&order[n_train..])))
}

/// Parameters of [`synth_gen`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub n: usize,
    pub dim: usize,
    pub components: usize,
    pub task: Task,
    pub noise: f64,
    pub seed: u64,
}

fn unit_gaussian(rng: &mut crate::rng::Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 0.0 {
            return v.into_iter().map(|a| a / norm).collect();
        }
    }
}

/// Draws a hidden model with unit-norm columns, unit-norm inputs, and labels
/// read off the hidden model, then corrupts each label with probability `noise`.
///
/// Returns the dataset and the hidden model.
pub fn synth_gen_with_truth(spec: &SynthSpec) -> Result<(Dataset, WeightMatrix)> {
    let SynthSpec { n, dim, components: c, task, noise, seed } = *spec;
    if n == 0 || dim == 0 {
        return invalid("synthetic n and d must be positive");
    }
    if c < 2 {
        return invalid("synthetic data needs at least two components");
    }
    if !(0.0..=1.0).contains(&noise) {
        return invalid(format!("noise must lie in [0, 1], got {noise}"));
    }
    let mut rng = rng_from_seed(seed);
    let columns: Vec<Vec<f64>> = (0..c).map(|_| unit_gaussian(&mut rng, dim)).collect();
    let truth = WeightMatrix::from_columns(&columns)?;

    let mut examples = Vec::with_capacity(n);
    for _ in 0..n {
        let x = SparseVector::from_dense(&unit_gaussian(&mut rng, dim))?.with_dim(dim)?;
        let scores = predict(&truth, &x)?.scores;
        let label = match task {
            Task::Multiclass => {
                let mut y = argmax(&scores);
                if rng.gen::<f64>() < noise {
                    let other = rng.gen_range(0..c - 1);
                    y = if other >= y { other + 1 } else { other };
                }
                Label::Class(y)
            }
            Task::Multilabel => {
                let mut signs: Vec<i8> = scores.iter().map(|&s| if s >= 0.0 { 1 } else { -1 }).collect();
                for s in signs.iter_mut() {
                    if rng.gen::<f64>() < noise {
                        *s = -*s;
                    }
                }
                if signs.iter().all(|&s| s > 0) {
                    signs[argmin(&scores)] = -1;
                } else if signs.iter().all(|&s| s < 0) {
                    signs[argmax(&scores)] = 1;
                }
                Label::Signs(signs)
            }
        };
        examples.push(LabeledExample::new(x, label));
    }
    let ds = Dataset::new(examples, dim, c, task, one_based_label_ids(c))?;
    Ok((ds, truth))
}

pub fn synth_gen(spec: &SynthSpec) -> Result<Dataset> {
    synth_gen_with_truth(spec).map(|(ds, _)| ds)
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (j, &s) in v.iter().enumerate() {
        if s > v[best] {
            best = j;
        }
    }
    best
}

fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (j, &s) in v.iter().enumerate() {
        if s < v[best] {
            best = j;
        }
    }
    best
}
