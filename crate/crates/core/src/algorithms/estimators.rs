use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// How the ABPBE estimator recursions are driven.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BankVariant {
    /// Recursions whose fixed points are the exact `A = E[φ(φ′ − φ)ᵀ]`,
    /// `∂A/∂s_i`, `∂b/∂s_i` with `b = E[φ(g − η)]`, and the matching `w`
    /// derivatives, so the r and s directions are MSPBE gradients.
    #[default]
    Gradient,
    /// Driving terms as printed in the original algorithm listing:
    /// `φ(φ − φ′)ᵀ` for `A` and its derivative, and `g ∂φ/∂s_i` for `b^s`.
    Printed,
}

/// Fast-time-scale estimates used by ABPBE: `A`, `∂A/∂s_i`, `∂b/∂s_i`,
/// `w`, `∂w/∂r_i`, `∂w/∂s_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorBank {
    pub a: DMatrix<f64>,
    pub a_s: Vec<DMatrix<f64>>,
    pub b_s: Vec<DVector<f64>>,
    pub w: DVector<f64>,
    pub w_r: Vec<DVector<f64>>,
    pub w_s: Vec<DVector<f64>>,
    /// Number of recursion steps applied so far.
    pub updates: u64,
}

impl EstimatorBank {
    pub fn zeros(num_features: usize, num_params: usize) -> Self {
        Self {
            a: DMatrix::zeros(num_features, num_features),
            a_s: vec![DMatrix::zeros(num_features, num_features); num_params],
            b_s: vec![DVector::zeros(num_features); num_params],
            w: DVector::zeros(num_features),
            w_r: vec![DVector::zeros(num_features); num_features],
            w_s: vec![DVector::zeros(num_features); num_params],
            updates: 0,
        }
    }

    pub fn num_features(&self) -> usize {
        self.w.len()
    }

    pub fn num_params(&self) -> usize {
        self.a_s.len()
    }

    /// Name of the first estimator family holding a non-finite entry.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        let finite_m = |m: &DMatrix<f64>| m.iter().all(|v| v.is_finite());
        let finite_v = |v: &DVector<f64>| v.iter().all(|x| x.is_finite());
        if !finite_m(&self.a) {
            Some("A")
        } else if !self.a_s.iter().all(finite_m) {
            Some("A^s")
        } else if !self.b_s.iter().all(finite_v) {
            Some("b^s")
        } else if !finite_v(&self.w) {
            Some("w")
        } else if !self.w_r.iter().all(finite_v) {
            Some("w^r")
        } else if !self.w_s.iter().all(finite_v) {
            Some("w^s")
        } else {
            None
        }
    }
}
