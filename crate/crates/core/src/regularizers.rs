//! Strongly convex regularizers `r(w) = (sigma / 2) ||w||^2` for the Frobenius
//! norm and the `(2, p)` group norm.

use std::fmt;

use crate::error::{invalid, Result};
use crate::model::{frobenius_norm, group_norm, WeightMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegularizerKind {
    Frobenius,
    /// `p` in `(1, 2]`.
    L2p(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizerSpec {
    kind: RegularizerKind,
    sigma: f64,
}

impl RegularizerSpec {
    pub fn frobenius(sigma: f64) -> Result<RegularizerSpec> {
        RegularizerSpec::new(RegularizerKind::Frobenius, sigma)
    }

    pub fn l2p(p: f64, sigma: f64) -> Result<RegularizerSpec> {
        RegularizerSpec::new(RegularizerKind::L2p(p), sigma)
    }

    pub fn new(kind: RegularizerKind, sigma: f64) -> Result<RegularizerSpec> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return invalid(format!("regularization strength must be positive, got {sigma}"));
        }
        if let RegularizerKind::L2p(p) = kind {
            if !(p > 1.0 && p <= 2.0) {
                return invalid(format!("p must lie in (1, 2], got {p}"));
            }
        }
        Ok(RegularizerSpec { kind, sigma })
    }

    pub fn kind(&self) -> RegularizerKind {
        self.kind
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Modulus of strong convexity w.r.t. [`RegularizerSpec::norm`].
    pub fn strong_convexity(&self) -> f64 {
        match self.kind {
            RegularizerKind::Frobenius => self.sigma,
            RegularizerKind::L2p(p) => self.sigma * (p - 1.0),
        }
    }

    /// The norm in which the regularizer is strongly convex.
    pub fn norm(&self, w: &WeightMatrix) -> f64 {
        match self.kind {
            RegularizerKind::Frobenius => frobenius_norm(w),
            RegularizerKind::L2p(p) => group_norm(&w.column_norms(), p),
        }
    }

    pub fn value(&self, w: &WeightMatrix) -> f64 {
        let n = self.norm(w);
        0.5 * self.sigma * n * n
    }

    pub fn gradient(&self, w: &WeightMatrix) -> WeightMatrix {
        match self.kind {
            RegularizerKind::Frobenius => {
                let mut g = w.clone();
                g.scale(self.sigma);
                g
            }
            RegularizerKind::L2p(p) => {
                let cols = w.column_norms();
                let total = group_norm(&cols, p);
                let mut g = WeightMatrix::zeros(w.dim(), w.components());
                if total == 0.0 {
                    return g;
                }
                // sigma * ||w||_{2,p}^{2-p} * ||w_j||^{p-2} per column; empty columns stay zero
                let lead = self.sigma * total.powf(2.0 - p);
                let factors: Vec<f64> =
                    cols.iter().map(|&n| if n > 0.0 { lead * n.powf(p - 2.0) } else { 0.0 }).collect();
                for (grow, wrow) in
                    g.as_mut_slice().chunks_exact_mut(w.components()).zip(w.as_slice().chunks_exact(w.components()))
                {
                    for ((gv, wv), f) in grow.iter_mut().zip(wrow).zip(&factors) {
                        *gv = f * wv;
                    }
                }
                g
            }
        }
    }
}

impl fmt::Display for RegularizerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            RegularizerKind::Frobenius => write!(f, "frobenius"),
            RegularizerKind::L2p(p) => write!(f, "l2p-{p:?}"),
        }
    }
}

pub fn reg_value(spec: &RegularizerSpec, w: &WeightMatrix) -> f64 {
    spec.value(w)
}

pub fn reg_grad(spec: &RegularizerSpec, w: &WeightMatrix) -> WeightMatrix {
    spec.gradient(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_parameters() {
        assert!(RegularizerSpec::frobenius(0.0).is_err());
        assert!(RegularizerSpec::frobenius(-1.0).is_err());
        assert!(RegularizerSpec::l2p(1.0, 1.0).is_err());
        assert!(RegularizerSpec::l2p(2.1, 1.0).is_err());
    }

    #[test]
    fn zero_model() {
        for spec in [RegularizerSpec::frobenius(0.3).unwrap(), RegularizerSpec::l2p(1.5, 0.3).unwrap()] {
            let w = WeightMatrix::zeros(3, 4);
            assert_eq!(spec.value(&w), 0.0);
            assert!(spec.gradient(&w).as_slice().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn frobenius_value_example() {
        let w = WeightMatrix::from_columns(&[vec![3.0, 0.0], vec![0.0, 4.0]]).unwrap();
        let spec = RegularizerSpec::frobenius(0.01).unwrap();
        assert!((spec.value(&w) - 0.125).abs() < 1e-15);
        let g = spec.gradient(&w);
        for (a, b) in g.as_slice().iter().zip(w.as_slice()) {
            assert_eq!(*a, 0.01 * b);
        }
    }

    #[test]
    fn l2p_at_two_matches_frobenius() {
        let w = WeightMatrix::from_columns(&[vec![1.0, -2.0], vec![0.5, 4.0], vec![0.0, 0.0]]).unwrap();
        let f = RegularizerSpec::frobenius(0.7).unwrap();
        let l = RegularizerSpec::l2p(2.0, 0.7).unwrap();
        assert!((f.value(&w) - l.value(&w)).abs() < 1e-12);
        for (a, b) in f.gradient(&w).as_slice().iter().zip(l.gradient(&w).as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn l2p_zero_column_gets_zero_gradient() {
        let w = WeightMatrix::from_columns(&[vec![1.0, 1.0], vec![0.0, 0.0]]).unwrap();
        let g = RegularizerSpec::l2p(1.3, 1.0).unwrap().gradient(&w);
        assert!(g.column(1).all(|v| v == 0.0));
        assert!(g.column(0).all(|v| v.is_finite() && v > 0.0));
    }
}
