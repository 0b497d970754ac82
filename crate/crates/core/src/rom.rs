//! Tensorial reduced model with Rayleigh damping.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::ident::IdentifiedTensors;
use crate::newmark::TimeHistory;
use crate::tensor::SymTensor;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum RomError {
    #[error("Rayleigh fit needs two distinct positive frequencies, got {0} and {1}")]
    CoincidentFrequencies(f64, f64),
    #[error("damping ratio must be non-negative and finite, got {0}")]
    InvalidDamping(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// One local reduced model: basis, diagonal stiffness, tensors and
/// Rayleigh coefficients. The reduced mass is the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct RomOperators {
    pub v: DMatrix<f64>,
    /// Diagonal of the reduced linear stiffness, `ω²`.
    pub k1: Vec<f64>,
    pub k2: SymTensor,
    pub k3: SymTensor,
    pub alpha: f64,
    pub beta: f64,
    /// Normalized parameter point the model belongs to.
    pub p_hat: Vec<f64>,
}

impl RomOperators {
    pub fn new(
        v: DMatrix<f64>,
        k1: Vec<f64>,
        tensors: &IdentifiedTensors,
        alpha: f64,
        beta: f64,
        p_hat: Vec<f64>,
    ) -> Result<Self, RomError> {
        let m = v.ncols();
        if k1.len() != m || tensors.dim() != m {
            return Err(RomError::Dimension(format!(
                "basis has {m} columns, stiffness {} entries, tensors dimension {}",
                k1.len(),
                tensors.dim()
            )));
        }
        Ok(Self { v, k1, k2: tensors.k2.clone(), k3: tensors.k3.clone(), alpha, beta, p_hat })
    }

    pub fn m(&self) -> usize {
        self.k1.len()
    }

    pub fn n(&self) -> usize {
        self.v.nrows()
    }

    pub fn reduced_force(&self, eta: &DVector<f64>) -> DVector<f64> {
        let mut f = DVector::from_fn(self.m(), |i, _| self.k1[i] * eta[i]);
        self.k2.add_force(eta, &mut f);
        self.k3.add_force(eta, &mut f);
        f
    }

    /// `K̃1 + 2 K̃2·η + 3 K̃3:ηη`.
    pub fn reduced_tangent(&self, eta: &DVector<f64>) -> DMatrix<f64> {
        let mut j = DMatrix::from_diagonal(&DVector::from_column_slice(&self.k1));
        self.k2.add_tangent(eta, &mut j);
        self.k3.add_tangent(eta, &mut j);
        j
    }

    /// Diagonal reduced damping `α + β ω_j²`.
    pub fn damping(&self) -> Vec<f64> {
        assemble_damping(&self.k1, self.alpha, self.beta)
    }

    /// Same model with the nonlinear tensors zeroed.
    pub fn linearize(&self) -> Self {
        let mut lin = self.clone();
        lin.k2.scale(0.0);
        lin.k3.scale(0.0);
        lin
    }
}

/// Rayleigh coefficients giving damping ratio `zeta` at `w1` and `w2`.
pub fn rayleigh_params(w1: f64, w2: f64, zeta: f64) -> Result<(f64, f64), RomError> {
    if !(w1 > 0.0 && w2 > 0.0 && w1.is_finite() && w2.is_finite()) || w1 == w2 {
        return Err(RomError::CoincidentFrequencies(w1, w2));
    }
    if !(zeta.is_finite() && zeta >= 0.0) {
        return Err(RomError::InvalidDamping(zeta));
    }
    Ok((2.0 * zeta * w1 * w2 / (w1 + w2), 2.0 * zeta / (w1 + w2)))
}

pub fn assemble_damping(k1: &[f64], alpha: f64, beta: f64) -> Vec<f64> {
    k1.iter().map(|k| alpha + beta * k).collect()
}

/// Full-order displacements `q = V η` for every stored step.
pub fn reconstruct(v: &DMatrix<f64>, history: &TimeHistory) -> Vec<DVector<f64>> {
    history.q.iter().map(|eta| v * eta).collect()
}

/// Traces of selected full-order DOFs of `V η(t)`.
pub fn reconstruct_dofs(v: &DMatrix<f64>, history: &TimeHistory, dofs: &[usize]) -> Vec<Vec<f64>> {
    dofs.iter()
        .map(|&d| {
            let row = v.row(d);
            history.q.iter().map(|eta| row.dot(&eta.transpose())).collect()
        })
        .collect()
}
