//! Versioned model file: a short text header followed by the weights as
//! column-major little-endian `f64`.
//!
//! ```text
//! vecrisk-model
//! version 1
//! task mcc
//! dim 20
//! components 5
//! loss mlogistic
//! regularizer frobenius
//! sigma 0.01
//! labels 1 2 3 4 5
//! end
//! <dim * components * 8 bytes>
//! ```
//!
//! Only `task`, `dim` and `components` are required. Floats in the header use
//! the shortest representation that parses back to the same bits.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::losses::{LossKind, LossSpec};
use crate::model::{Task, WeightMatrix};
use crate::regularizers::{RegularizerKind, RegularizerSpec};

pub const MAGIC: &str = "vecrisk-model";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub task: Task,
    pub weights: WeightMatrix,
    pub loss: Option<LossKind>,
    pub regularizer: Option<RegularizerSpec>,
    pub steps: Option<u64>,
    pub seed: Option<u64>,
    pub normalized: Option<bool>,
    pub label_ids: Vec<String>,
}

impl ModelFile {
    pub fn new(task: Task, weights: WeightMatrix) -> ModelFile {
        ModelFile {
            task,
            weights,
            loss: None,
            regularizer: None,
            steps: None,
            seed: None,
            normalized: None,
            label_ids: Vec::new(),
        }
    }

    /// The loss with its certified constant, if one was recorded.
    pub fn loss_spec(&self) -> Option<LossSpec> {
        self.loss.map(LossSpec::new)
    }
}

pub fn write_model<W: Write>(model: &ModelFile, mut out: W) -> Result<()> {
    let w = &model.weights;
    if !model.label_ids.is_empty() && model.label_ids.len() != w.components() {
        return invalid(format!("{} label ids for {} components", model.label_ids.len(), w.components()));
    }
    if model.label_ids.iter().any(|id| id.is_empty() || id.chars().any(char::is_whitespace)) {
        return invalid("label ids must be nonempty and free of whitespace");
    }
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "version {FORMAT_VERSION}")?;
    writeln!(out, "task {}", model.task.name())?;
    writeln!(out, "dim {}", w.dim())?;
    writeln!(out, "components {}", w.components())?;
    if let Some(loss) = model.loss {
        writeln!(out, "loss {loss}")?;
    }
    if let Some(reg) = model.regularizer {
        match reg.kind() {
            RegularizerKind::Frobenius => writeln!(out, "regularizer frobenius")?,
            RegularizerKind::L2p(p) => writeln!(out, "regularizer l2p {p:?}")?,
        }
        writeln!(out, "sigma {:?}", reg.sigma())?;
    }
    if let Some(steps) = model.steps {
        writeln!(out, "steps {steps}")?;
    }
    if let Some(seed) = model.seed {
        writeln!(out, "seed {seed}")?;
    }
    if let Some(normalized) = model.normalized {
        writeln!(out, "normalized {normalized}")?;
    }
    if !model.label_ids.is_empty() {
        writeln!(out, "labels {}", model.label_ids.join(" "))?;
    }
    writeln!(out, "end")?;
    let mut bytes = Vec::with_capacity(8 * w.dim() * w.components());
    for v in w.to_column_major() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&bytes)?;
    out.flush()?;
    Ok(())
}

pub fn save_model(model: &ModelFile, path: impl AsRef<Path>) -> Result<()> {
    write_model(model, BufWriter::new(File::create(path)?))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelFile> {
    read_model(BufReader::new(File::open(path)?))
}

fn parse_err<T>(line: usize, message: impl Into<String>) -> Result<T> {
    Err(Error::Parse { line, message: message.into() })
}

fn parse_value<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    match value.parse() {
        Ok(v) => Ok(v),
        Err(_) => parse_err(line, format!("bad value for {key}: {value:?}")),
    }
}

pub fn read_model<R: BufRead>(mut input: R) -> Result<ModelFile> {
    let mut lineno = 0;
    let mut next_line = |input: &mut R| -> Result<(usize, String)> {
        let mut buf = String::new();
        lineno += 1;
        if input.read_line(&mut buf)? == 0 {
            return parse_err(lineno, "unexpected end of header");
        }
        if !buf.ends_with('\n') {
            return parse_err(lineno, "unterminated header line");
        }
        buf.pop();
        Ok((lineno, buf))
    };

    let (ln, magic) = next_line(&mut input)?;
    if magic != MAGIC {
        return parse_err(ln, "not a model file");
    }
    let (ln, version) = next_line(&mut input)?;
    match version.strip_prefix("version ") {
        Some(v) if v == FORMAT_VERSION.to_string() => {}
        _ => return parse_err(ln, format!("unsupported format version line {version:?}")),
    }

    let mut task = None;
    let mut dim = None;
    let mut components = None;
    let mut loss = None;
    let mut reg_kind = None;
    let mut sigma = None;
    let mut steps = None;
    let mut seed = None;
    let mut normalized = None;
    let mut label_ids = Vec::new();
    loop {
        let (ln, line) = next_line(&mut input)?;
        if line == "end" {
            break;
        }
        let (key, value) = line.split_once(' ').unwrap_or((line.as_str(), ""));
        match key {
            "task" => task = Some(parse_value::<Task>(ln, key, value)?),
            "dim" => dim = Some(parse_value::<usize>(ln, key, value)?),
            "components" => components = Some(parse_value::<usize>(ln, key, value)?),
            "loss" => loss = Some(parse_value::<LossKind>(ln, key, value)?),
            "regularizer" => {
                reg_kind = Some(match value.split_once(' ') {
                    None if value == "frobenius" => RegularizerKind::Frobenius,
                    Some(("l2p", p)) => RegularizerKind::L2p(parse_value(ln, "p", p)?),
                    _ => return parse_err(ln, format!("bad regularizer {value:?}")),
                })
            }
            "sigma" => sigma = Some((ln, parse_value::<f64>(ln, key, value)?)),
            "steps" => steps = Some(parse_value(ln, key, value)?),
            "seed" => seed = Some(parse_value(ln, key, value)?),
            "normalized" => normalized = Some(parse_value(ln, key, value)?),
            "labels" => label_ids = value.split(' ').map(str::to_string).collect(),
            _ => return parse_err(ln, format!("unknown header key {key:?}")),
        }
    }

    let (Some(task), Some(dim), Some(components)) = (task, dim, components) else {
        return parse_err(lineno, "header lacks task, dim or components");
    };
    if !label_ids.is_empty() && label_ids.len() != components {
        return parse_err(lineno, format!("{} label ids for {components} components", label_ids.len()));
    }
    let regularizer = match (reg_kind, sigma) {
        (Some(kind), Some((ln, s))) => match RegularizerSpec::new(kind, s) {
            Ok(spec) => Some(spec),
            Err(e) => return parse_err(ln, e.to_string()),
        },
        (None, None) => None,
        _ => return parse_err(lineno, "regularizer and sigma must appear together"),
    };

    let count = dim
        .checked_mul(components)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::InvalidInput("model dimensions overflow".into()))?;
    let mut bytes = Vec::with_capacity(count.min(1 << 24));
    input.read_to_end(&mut bytes)?;
    if bytes.len() != count {
        return invalid(format!("expected {count} bytes of weights, found {}", bytes.len()));
    }
    let values: Vec<f64> =
        bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("chunk of 8"))).collect();
    let weights = WeightMatrix::from_column_major(dim, components, &values)?;
    Ok(ModelFile { task, weights, loss, regularizer, steps, seed, normalized, label_ids })
}
