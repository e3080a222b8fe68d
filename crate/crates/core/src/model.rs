//! Core numeric types: sparse inputs, the dense `d x c` weight matrix, predictions
//! and the group norms used by the regularizers.

use std::ops::{Index, IndexMut};

use crate::error::{invalid, Result};

/// A sparse input vector with 0-based, strictly increasing indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector {
    dim: usize,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseVector {
    /// Builds a vector from `(index, value)` pairs, which may arrive in any order.
    pub fn new(dim: usize, mut entries: Vec<(usize, f64)>) -> Result<SparseVector> {
        if dim == 0 {
            return invalid("sparse vector dimension must be positive");
        }
        entries.sort_by_key(|&(i, _)| i);
        for pair in entries.windows(2) {
            if pair[0].0 == pair[1].0 {
                return invalid(format!("duplicate index {}", pair[0].0));
            }
        }
        for &(i, v) in &entries {
            if i >= dim {
                return invalid(format!("index {i} out of range for dimension {dim}"));
            }
            if !v.is_finite() {
                return invalid(format!("non-finite value at index {i}"));
            }
        }
        let (indices, values) = entries.into_iter().unzip();
        Ok(SparseVector { dim, indices, values })
    }

    pub fn from_dense(values: &[f64]) -> Result<SparseVector> {
        let entries = values.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, v)| (i, *v)).collect();
        SparseVector::new(values.len(), entries)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }

    /// Multiplies every stored value by `factor`.
    pub fn scaled(&self, factor: f64) -> SparseVector {
        SparseVector {
            dim: self.dim,
            indices: self.indices.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    /// Divides every stored value by `divisor`.
    pub fn divided(&self, divisor: f64) -> SparseVector {
        SparseVector {
            dim: self.dim,
            indices: self.indices.clone(),
            values: self.values.iter().map(|v| v / divisor).collect(),
        }
    }

    /// Same entries, larger ambient dimension.
    pub fn with_dim(&self, dim: usize) -> Result<SparseVector> {
        if self.indices.last().is_some_and(|&i| i >= dim) {
            return invalid(format!("dimension {dim} too small for stored indices"));
        }
        Ok(SparseVector { dim, ..self.clone() })
    }
}

/// Dense `d x c` model `W = (w_1, ..., w_c)`.
///
/// Entries of one feature row are contiguous (`data[i * c + j]`), so adding
/// `x ⊗ psi` for a sparse `x` touches `nnz(x)` contiguous runs of length `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    dim: usize,
    components: usize,
    data: Vec<f64>,
}

impl WeightMatrix {
    pub fn zeros(dim: usize, components: usize) -> WeightMatrix {
        WeightMatrix { dim, components, data: vec![0.0; dim * components] }
    }

    /// Builds a matrix from its columns `w_1, ..., w_c`.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<WeightMatrix> {
        let components = columns.len();
        if components == 0 {
            return invalid("weight matrix needs at least one column");
        }
        let dim = columns[0].len();
        if columns.iter().any(|col| col.len() != dim) {
            return invalid("columns have unequal lengths");
        }
        let mut w = WeightMatrix::zeros(dim, components);
        for (j, col) in columns.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                w[(i, j)] = v;
            }
        }
        w.check_finite()?;
        Ok(w)
    }

    /// Builds a matrix from a column-major buffer (`values[j * d + i]`).
    pub fn from_column_major(dim: usize, components: usize, values: &[f64]) -> Result<WeightMatrix> {
        if values.len() != dim * components {
            return invalid(format!(
                "expected {} values for a {dim}x{components} matrix, got {}",
                dim * components,
                values.len()
            ));
        }
        let mut w = WeightMatrix::zeros(dim, components);
        for j in 0..components {
            for i in 0..dim {
                w[(i, j)] = values[j * dim + i];
            }
        }
        w.check_finite()?;
        Ok(w)
    }

    pub fn to_column_major(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.data.len());
        for j in 0..self.components {
            out.extend(self.column(j));
        }
        out
    }

    fn check_finite(&self) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            invalid("weight matrix entries must be finite")
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Contiguous row of feature `i` across all components.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.components..(i + 1) * self.components]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().skip(j).step_by(self.components).copied()
    }

    pub fn same_shape(&self, other: &WeightMatrix) -> bool {
        self.dim == other.dim && self.components == other.components
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &WeightMatrix) {
        assert!(self.same_shape(other), "axpy on mismatched shapes");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    /// `self += x ⊗ psi`, i.e. column `j` gains `psi[j] * x`.
    pub fn add_outer(&mut self, x: &SparseVector, psi: &[f64]) {
        debug_assert_eq!(psi.len(), self.components);
        for (i, v) in x.iter() {
            let row = &mut self.data[i * self.components..(i + 1) * self.components];
            for (r, p) in row.iter_mut().zip(psi) {
                *r += v * p;
            }
        }
    }

    /// Frobenius inner product.
    pub fn dot(&self, other: &WeightMatrix) -> f64 {
        assert!(self.same_shape(other), "dot on mismatched shapes");
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// Euclidean norms of the columns.
    pub fn column_norms(&self) -> Vec<f64> {
        let mut sq = vec![0.0; self.components];
        for row in self.data.chunks_exact(self.components.max(1)) {
            for (s, v) in sq.iter_mut().zip(row) {
                *s += v * v;
            }
        }
        sq.into_iter().map(f64::sqrt).collect()
    }
}

impl Index<(usize, usize)> for WeightMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        assert!(i < self.dim && j < self.components, "index ({i}, {j}) out of bounds");
        &self.data[i * self.components + j]
    }
}

impl IndexMut<(usize, usize)> for WeightMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        assert!(i < self.dim && j < self.components, "index ({i}, {j}) out of bounds");
        &mut self.data[i * self.components + j]
    }
}

/// Scores `h^w(x) = (<w_1, x>, ..., <w_c, x>)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub scores: Vec<f64>,
}

/// Multi-class (single class per example) or multi-label (sign vector per example).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Multiclass,
    Multilabel,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Multiclass => "mcc",
            Task::Multilabel => "mlc",
        }
    }
}

impl std::str::FromStr for Task {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Task> {
        match s {
            "mcc" => Ok(Task::Multiclass),
            "mlc" => Ok(Task::Multilabel),
            _ => invalid(format!("unknown task `{s}` (expected mcc or mlc)")),
        }
    }
}

/// The output part of a training example.
#[derive(Debug, Clone, PartialEq)]
pub enum Label {
    /// Single class in `[0, c)` for multi-class problems.
    Class(usize),
    /// `+1` (relevant) / `-1` (irrelevant) per component for multi-label problems.
    Signs(Vec<i8>),
}

impl Label {
    pub fn signs(values: Vec<i8>) -> Result<Label> {
        if values.iter().any(|&s| s != 1 && s != -1) {
            return invalid("sign vector entries must be +1 or -1");
        }
        Ok(Label::Signs(values))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub x: SparseVector,
    pub label: Label,
}

impl LabeledExample {
    pub fn new(x: SparseVector, label: Label) -> LabeledExample {
        LabeledExample { x, label }
    }
}

pub fn predict(w: &WeightMatrix, x: &SparseVector) -> Result<Prediction> {
    if x.dim() != w.dim() {
        return invalid(format!("input dimension {} does not match model dimension {}", x.dim(), w.dim()));
    }
    let mut scores = vec![0.0; w.components()];
    for (i, v) in x.iter() {
        for (s, wij) in scores.iter_mut().zip(w.row(i)) {
            *s += v * wij;
        }
    }
    Ok(Prediction { scores })
}

/// `||w||_{2,2} = (sum_j ||w_j||_2^2)^{1/2}`.
pub fn frobenius_norm(w: &WeightMatrix) -> f64 {
    w.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Group norm `||w||_{2,p} = (sum_j ||w_j||_2^p)^{1/p}` for `p` in `(1, 2]`.
pub fn l2p_norm(w: &WeightMatrix, p: f64) -> Result<f64> {
    if !(p > 1.0 && p <= 2.0) {
        return invalid(format!("p must lie in (1, 2], got {p}"));
    }
    Ok(group_norm(&w.column_norms(), p))
}

pub(crate) fn group_norm(column_norms: &[f64], p: f64) -> f64 {
    if p == 2.0 {
        return column_norms.iter().map(|n| n * n).sum::<f64>().sqrt();
    }
    column_norms.iter().map(|n| n.powf(p)).sum::<f64>().powf(1.0 / p)
}

/// `max_j |a_j - b_j|`.
pub fn inf_norm_diff(a: &Prediction, b: &Prediction) -> Result<f64> {
    if a.scores.len() != b.scores.len() {
        return invalid(format!("prediction lengths differ: {} vs {}", a.scores.len(), b.scores.len()));
    }
    Ok(a.scores.iter().zip(&b.scores).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dense_predict(w: &WeightMatrix, x: &[f64]) -> Vec<f64> {
        (0..w.components()).map(|j| x.iter().enumerate().map(|(i, v)| v * w[(i, j)]).sum()).collect()
    }

    #[test]
    fn zero_model_predicts_zero() {
        let w = WeightMatrix::zeros(4, 3);
        let x = SparseVector::new(4, vec![(1, 2.0), (3, -1.0)]).unwrap();
        assert_eq!(predict(&w, &x).unwrap().scores, vec![0.0; 3]);
    }

    #[test]
    fn identity_columns() {
        let w = WeightMatrix::from_columns(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let x = SparseVector::from_dense(&[1.0, 1.0]).unwrap();
        assert_eq!(predict(&w, &x).unwrap().scores, vec![1.0, 1.0]);
    }

    #[test]
    fn sparse_dot_products() {
        let w = WeightMatrix::from_columns(&[vec![1.0, 2.0, 0.0], vec![0.0, 0.0, 3.0]]).unwrap();
        let x = SparseVector::new(3, vec![(0, 2.0), (2, 1.0)]).unwrap();
        assert_eq!(predict(&w, &x).unwrap().scores, vec![2.0, 3.0]);
        assert_eq!(predict(&w, &x).unwrap().scores, dense_predict(&w, &x.to_dense()));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let w = WeightMatrix::zeros(3, 2);
        let x = SparseVector::new(4, vec![(3, 1.0)]).unwrap();
        assert!(predict(&w, &x).is_err());
    }

    #[test]
    fn sparse_vector_rejects_bad_entries() {
        assert!(SparseVector::new(3, vec![(1, 1.0), (1, 2.0)]).is_err());
        assert!(SparseVector::new(3, vec![(3, 1.0)]).is_err());
        assert!(SparseVector::new(3, vec![(0, f64::NAN)]).is_err());
        let v = SparseVector::new(5, vec![(4, 1.0), (0, 2.0)]).unwrap();
        assert_eq!(v.iter().collect::<Vec<_>>(), vec![(0, 2.0), (4, 1.0)]);
    }

    #[test]
    fn frobenius_examples() {
        assert_eq!(frobenius_norm(&WeightMatrix::zeros(3, 3)), 0.0);
        let w = WeightMatrix::from_columns(&[vec![3.0, 0.0], vec![0.0, 4.0]]).unwrap();
        assert_eq!(frobenius_norm(&w), 5.0);
        let w = WeightMatrix::from_columns(&[vec![1.0; 4]]).unwrap();
        assert_eq!(frobenius_norm(&w), 2.0);
    }

    #[test]
    fn l2p_examples() {
        assert_eq!(l2p_norm(&WeightMatrix::zeros(2, 2), 1.5).unwrap(), 0.0);
        let w = WeightMatrix::from_columns(&[vec![0.6, 0.8], vec![0.0, 1.0]]).unwrap();
        let expected = 2f64.powf(2.0 / 3.0);
        assert!((l2p_norm(&w, 1.5).unwrap() - expected).abs() < 1e-14);
        assert!(l2p_norm(&w, 1.0).is_err());
        assert!(l2p_norm(&w, 2.5).is_err());
    }

    #[test]
    fn inf_norm_examples() {
        let p = |v: &[f64]| Prediction { scores: v.to_vec() };
        assert_eq!(inf_norm_diff(&p(&[1.0, 2.0]), &p(&[1.0, 2.0])).unwrap(), 0.0);
        assert_eq!(inf_norm_diff(&p(&[1.0, -2.0]), &p(&[0.0, 0.0])).unwrap(), 2.0);
        assert_eq!(inf_norm_diff(&p(&[0.5, 3.0, -1.0]), &p(&[0.5, 1.0, -1.0])).unwrap(), 2.0);
        assert!(inf_norm_diff(&p(&[1.0]), &p(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn column_major_round_trip() {
        let w = WeightMatrix::from_columns(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let cm = w.to_column_major();
        assert_eq!(cm, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(WeightMatrix::from_column_major(3, 2, &cm).unwrap(), w);
    }

    fn matrix(d: usize, c: usize) -> impl Strategy<Value = WeightMatrix> {
        prop::collection::vec(-5.0f64..5.0, d * c).prop_map(move |v| WeightMatrix::from_column_major(d, c, &v).unwrap())
    }

    fn sparse(d: usize) -> impl Strategy<Value = SparseVector> {
        prop::collection::vec(prop_oneof![Just(0.0), -3.0f64..3.0], d)
            .prop_map(|v| SparseVector::from_dense(&v).unwrap())
    }

    proptest! {
        #[test]
        fn predict_is_linear(w in matrix(5, 3), v in matrix(5, 3), x in sparse(5), a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let mut combo = w.clone();
            combo.scale(a);
            combo.axpy(b, &v);
            let lhs = predict(&combo, &x).unwrap().scores;
            let pw = predict(&w, &x).unwrap().scores;
            let pv = predict(&v, &x).unwrap().scores;
            for j in 0..3 {
                let rhs = a * pw[j] + b * pv[j];
                let scale = 1.0f64.max(rhs.abs()).max((a * pw[j]).abs()).max((b * pv[j]).abs());
                prop_assert!((lhs[j] - rhs).abs() <= 1e-12 * scale);
            }
        }

        #[test]
        fn predict_matches_dense_oracle(w in matrix(6, 4), x in sparse(6)) {
            prop_assert_eq!(predict(&w, &x).unwrap().scores, dense_predict(&w, &x.to_dense()));
        }

        #[test]
        fn l2p_at_two_is_frobenius(w in matrix(4, 3)) {
            let f = frobenius_norm(&w);
            prop_assert!((l2p_norm(&w, 2.0).unwrap() - f).abs() <= 1e-12 * f.max(1e-300));
        }

        #[test]
        fn norms_are_norms(w in matrix(4, 3), v in matrix(4, 3), a in -4.0f64..4.0, p in 1.01f64..2.0) {
            let mut sum = w.clone();
            sum.axpy(1.0, &v);
            let mut scaled = w.clone();
            scaled.scale(a);
            let fro = frobenius_norm;
            prop_assert!(fro(&sum) <= fro(&w) + fro(&v) + 1e-10);
            prop_assert!((fro(&scaled) - a.abs() * fro(&w)).abs() <= 1e-10);
            let gp = |m: &WeightMatrix| l2p_norm(m, p).unwrap();
            prop_assert!(gp(&sum) <= gp(&w) + gp(&v) + 1e-10);
            prop_assert!((gp(&scaled) - a.abs() * gp(&w)).abs() <= 1e-10);
        }
    }
}
