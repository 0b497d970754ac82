//! Radial basis function interpolation of reduced operators over the
//! normalized parameter space.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rom::RomOperators;
use crate::sampling::distance;
use crate::tensor::{unique_count, SymTensor};

mod dd;

use dd::{Dd, DdLu};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum PromError {
    #[error("shape parameter must be positive and finite, got {0}")]
    InvalidShape(f64),
    #[error("at least one center is required")]
    NoCenters,
    #[error("centers {0} and {1} coincide")]
    DuplicateCenters(usize, usize),
    #[error("kernel matrix is singular for eps = {eps}; try a larger shape parameter")]
    Singular { eps: f64 },
    #[error("training data has {found} columns for {expected} centers")]
    DataShape { expected: usize, found: usize },
    #[error("evaluated model violates structure: {0}")]
    StructureViolation(String),
    #[error("empty grid or data set: {0}")]
    Empty(&'static str),
    #[error("inconsistent training models: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    InverseMultiquadric,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RbfKernel {
    pub kind: KernelKind,
    pub eps: f64,
}

impl RbfKernel {
    pub fn new(kind: KernelKind, eps: f64) -> Result<Self, PromError> {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(PromError::InvalidShape(eps));
        }
        Ok(Self { kind, eps })
    }

    pub fn eval(&self, delta: f64) -> f64 {
        let r2 = (self.eps * delta).powi(2);
        match self.kind {
            KernelKind::InverseMultiquadric => 1.0 / (1.0 + r2).sqrt(),
            KernelKind::Gaussian => (-r2).exp(),
        }
    }

    /// `c(δ)` with `∇γ(‖p − c‖) = c(δ) (p − c)`; finite at `δ = 0`.
    pub fn radial_gradient_factor(&self, delta: f64) -> f64 {
        let e2 = self.eps * self.eps;
        let r2 = e2 * delta * delta;
        match self.kind {
            KernelKind::InverseMultiquadric => -e2 * (1.0 + r2).powf(-1.5),
            KernelKind::Gaussian => -2.0 * e2 * (-r2).exp(),
        }
    }

    /// `(ε‖p − c‖)²` without cancellation in the differences.
    fn scaled_r2(&self, p: &[f64], c: &[f64]) -> Dd {
        let d2 = p.iter().zip(c).fold(Dd::ZERO, |s, (&a, &b)| {
            let d = Dd::diff(a, b);
            s + d * d
        });
        Dd::square(self.eps) * d2
    }

    fn eval_dd(&self, p: &[f64], c: &[f64]) -> Dd {
        let r2 = self.scaled_r2(p, c);
        match self.kind {
            KernelKind::InverseMultiquadric => (Dd::ONE + r2).recip_sqrt(),
            KernelKind::Gaussian => (-r2).exp(),
        }
    }

    fn gradient_factor_dd(&self, p: &[f64], c: &[f64]) -> Dd {
        let e2 = Dd::square(self.eps);
        match self.kind {
            KernelKind::InverseMultiquadric => {
                let g = self.eval_dd(p, c);
                -(e2 * g * g * g)
            }
            KernelKind::Gaussian => -(e2.mul_f64(2.0) * self.eval_dd(p, c)),
        }
    }
}

/// The interpolated reduced operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorId {
    K1,
    K2,
    K3,
    V,
    Alpha,
    Beta,
}

impl OperatorId {
    pub const ALL: [OperatorId; 6] =
        [OperatorId::K1, OperatorId::K2, OperatorId::K3, OperatorId::V, OperatorId::Alpha, OperatorId::Beta];

    pub fn name(self) -> &'static str {
        match self {
            OperatorId::K1 => "K1",
            OperatorId::K2 => "K2",
            OperatorId::K3 => "K3",
            OperatorId::V => "V",
            OperatorId::Alpha => "alpha",
            OperatorId::Beta => "beta",
        }
    }

    /// Unique-entry count of the operator for basis size `m` and `n` DOFs.
    pub fn entry_count(self, n: usize, m: usize) -> usize {
        match self {
            OperatorId::K1 => m,
            OperatorId::K2 => unique_count(m, 3),
            OperatorId::K3 => unique_count(m, 4),
            OperatorId::V => n * m,
            OperatorId::Alpha | OperatorId::Beta => 1,
        }
    }

    /// Flattened unique entries of this operator in `ops`.
    pub fn extract(self, ops: &RomOperators) -> Vec<f64> {
        match self {
            OperatorId::K1 => ops.k1.clone(),
            OperatorId::K2 => ops.k2.unique().to_vec(),
            OperatorId::K3 => ops.k3.unique().to_vec(),
            OperatorId::V => ops.v.as_slice().to_vec(),
            OperatorId::Alpha => vec![ops.alpha],
            OperatorId::Beta => vec![ops.beta],
        }
    }
}

/// Interpolant `g(p̂) ≈ W γ(p̂)` of one operator.
///
/// Weights are held as unevaluated sums `weights + weights_lo` and applied in
/// double-double arithmetic, so values and gradients stay accurate when the
/// kernel matrix is far too ill-conditioned for plain `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct RbfInterpolant {
    pub operator: OperatorId,
    pub kernel: RbfKernel,
    pub centers: Vec<Vec<f64>>,
    /// `N_e × N_t`, leading part.
    pub weights: DMatrix<f64>,
    /// `N_e × N_t`, trailing part.
    pub weights_lo: DMatrix<f64>,
    /// 2-norm condition number of the kernel matrix, saturating at `1/u`.
    pub condition: f64,
}

/// Condition number above which fitting logs a warning.
pub const CONDITION_WARNING: f64 = 1e12;

/// Relative pivot size below which the kernel matrix counts as singular.
const PIVOT_TOLERANCE: f64 = 1e-30;

pub fn kernel_matrix(centers: &[Vec<f64>], kernel: &RbfKernel) -> DMatrix<f64> {
    let n = centers.len();
    DMatrix::from_fn(n, n, |i, j| kernel.eval(distance(&centers[i], &centers[j])))
}

/// Factorization of a kernel matrix, reused for every operator.
pub struct KernelSolver {
    lu: DdLu,
    pub condition: f64,
}

impl KernelSolver {
    pub fn new(centers: &[Vec<f64>], kernel: RbfKernel) -> Result<Self, PromError> {
        Self::build(centers, kernel, log::Level::Warn)
    }

    fn build(centers: &[Vec<f64>], kernel: RbfKernel, level: log::Level) -> Result<Self, PromError> {
        let nt = centers.len();
        if nt == 0 {
            return Err(PromError::NoCenters);
        }
        for i in 0..nt {
            for j in i + 1..nt {
                if distance(&centers[i], &centers[j]) == 0.0 {
                    return Err(PromError::DuplicateCenters(i, j));
                }
            }
        }
        let mut gamma = vec![Dd::ZERO; nt * nt];
        for i in 0..nt {
            for j in i..nt {
                let g = kernel.eval_dd(&centers[i], &centers[j]);
                gamma[i * nt + j] = g;
                gamma[j * nt + i] = g;
            }
        }
        let sv = DMatrix::from_fn(nt, nt, |i, j| gamma[i * nt + j].hi).singular_values();
        let smax = sv.max();
        let condition = smax / sv.min().max(smax * f64::EPSILON);
        if condition > CONDITION_WARNING {
            log::log!(
                level,
                "RBF kernel matrix condition {condition:.2e} at eps = {}; larger shape parameters improve conditioning",
                kernel.eps
            );
        }
        let lu = DdLu::factor(nt, gamma, PIVOT_TOLERANCE).ok_or(PromError::Singular { eps: kernel.eps })?;
        Ok(Self { lu, condition })
    }

    /// Solves `Γ wᵢ = gᵢ` for every row of `values` (`N_e × N_t`); returns
    /// the leading and trailing parts of `W`.
    pub fn weights(&self, values: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let (ne, nt) = values.shape();
        let mut hi = DMatrix::zeros(ne, nt);
        let mut lo = DMatrix::zeros(ne, nt);
        for r in 0..ne {
            let b: Vec<Dd> = values.row(r).iter().map(|&x| Dd::from(x)).collect();
            for (j, w) in self.lu.solve(&b).into_iter().enumerate() {
                hi[(r, j)] = w.hi;
                lo[(r, j)] = w.lo;
            }
        }
        (hi, lo)
    }
}

/// `(W_hi + W_lo) x`, accumulated in double-double.
fn apply(hi: &DMatrix<f64>, lo: &DMatrix<f64>, x: &[Dd]) -> DVector<f64> {
    DVector::from_iterator(
        hi.nrows(),
        (0..hi.nrows()).map(|r| {
            x.iter()
                .enumerate()
                .fold(Dd::ZERO, |s, (j, &xj)| s + Dd::new(hi[(r, j)], lo[(r, j)]) * xj)
                .to_f64()
        }),
    )
}

/// Fits one interpolant; `values` is `N_e × N_t` (one column per center).
pub fn fit_weights(
    operator: OperatorId,
    values: &DMatrix<f64>,
    centers: &[Vec<f64>],
    kernel: RbfKernel,
) -> Result<RbfInterpolant, PromError> {
    if values.ncols() != centers.len() {
        return Err(PromError::DataShape { expected: centers.len(), found: values.ncols() });
    }
    let solver = KernelSolver::new(centers, kernel)?;
    let (weights, weights_lo) = solver.weights(values);
    Ok(RbfInterpolant { operator, kernel, centers: centers.to_vec(), weights, weights_lo, condition: solver.condition })
}

impl RbfInterpolant {
    pub fn kernel_vector(&self, p_hat: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.centers.len(), self.centers.iter().map(|c| self.kernel.eval(distance(p_hat, c))))
    }

    fn kernel_vector_dd(&self, p_hat: &[f64]) -> Vec<Dd> {
        self.centers.iter().map(|c| self.kernel.eval_dd(p_hat, c)).collect()
    }

    pub fn evaluate(&self, p_hat: &[f64]) -> DVector<f64> {
        apply(&self.weights, &self.weights_lo, &self.kernel_vector_dd(p_hat))
    }

    /// `∂g/∂p̂`, shape `N_e × n_p`.
    pub fn gradient(&self, p_hat: &[f64]) -> DMatrix<f64> {
        let factors: Vec<Dd> = self.centers.iter().map(|c| self.kernel.gradient_factor_dd(p_hat, c)).collect();
        let cols: Vec<DVector<f64>> = (0..p_hat.len())
            .map(|k| {
                let d: Vec<Dd> =
                    self.centers.iter().zip(&factors).map(|(c, &f)| f * Dd::diff(p_hat[k], c[k])).collect();
                apply(&self.weights, &self.weights_lo, &d)
            })
            .collect();
        DMatrix::from_columns(&cols)
    }
}

/// What evaluation does with a structurally invalid model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StructurePolicy {
    #[default]
    Error,
    Warn,
}

/// One interpolant per reduced operator over shared centers.
#[derive(Debug, Clone, PartialEq)]
pub struct PromModel {
    pub n: usize,
    pub m: usize,
    pub centers: Vec<Vec<f64>>,
    /// In [`OperatorId::ALL`] order.
    pub interpolants: Vec<RbfInterpolant>,
}

/// Stacks one operator of every model as columns (`N_e × N_t`).
pub fn training_matrix(op: OperatorId, models: &[RomOperators]) -> DMatrix<f64> {
    let cols: Vec<DVector<f64>> = models.iter().map(|r| DVector::from_vec(op.extract(r))).collect();
    DMatrix::from_columns(&cols)
}

fn check_models(models: &[RomOperators]) -> Result<(usize, usize), PromError> {
    let first = models.first().ok_or(PromError::Empty("training models"))?;
    let (n, m) = (first.n(), first.m());
    for (i, r) in models.iter().enumerate() {
        if r.n() != n || r.m() != m {
            return Err(PromError::Inconsistent(format!("model {i} has (n, m) = ({}, {}), expected ({n}, {m})", r.n(), r.m())));
        }
    }
    Ok((n, m))
}

impl PromModel {
    /// Fits every operator with its own shape parameter (`eps` in
    /// [`OperatorId::ALL`] order).
    pub fn fit(models: &[RomOperators], kind: KernelKind, eps: &[f64; 6]) -> Result<Self, PromError> {
        let (n, m) = check_models(models)?;
        let centers: Vec<Vec<f64>> = models.iter().map(|r| r.p_hat.clone()).collect();
        let interpolants = OperatorId::ALL
            .par_iter()
            .zip(eps.par_iter())
            .map(|(&op, &e)| fit_weights(op, &training_matrix(op, models), &centers, RbfKernel::new(kind, e)?))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { n, m, centers, interpolants })
    }

    pub fn interpolant(&self, op: OperatorId) -> &RbfInterpolant {
        &self.interpolants[OperatorId::ALL.iter().position(|&o| o == op).expect("known operator")]
    }

    pub fn epsilons(&self) -> [f64; 6] {
        let mut e = [0.0; 6];
        for (slot, it) in e.iter_mut().zip(&self.interpolants) {
            *slot = it.kernel.eps;
        }
        e
    }

    /// Reduced model at `p_hat`, checked for positive stiffness and damping
    /// coefficients. Damping is rebuilt from the interpolated `α`, `β`, `K̃1`.
    pub fn evaluate(&self, p_hat: &[f64], policy: StructurePolicy) -> Result<RomOperators, PromError> {
        if p_hat.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            log::warn!("evaluating the parametric model outside the unit hypercube at {p_hat:?}");
        }
        let g = |op| self.interpolant(op).evaluate(p_hat);
        let k1: Vec<f64> = g(OperatorId::K1).iter().copied().collect();
        let k2 = SymTensor::from_unique(self.m, 3, g(OperatorId::K2).iter().copied().collect());
        let k3 = SymTensor::from_unique(self.m, 4, g(OperatorId::K3).iter().copied().collect());
        let v = DMatrix::from_column_slice(self.n, self.m, g(OperatorId::V).as_slice());
        let alpha = g(OperatorId::Alpha)[0];
        let beta = g(OperatorId::Beta)[0];
        let mut problems = Vec::new();
        if let Some((j, k)) = k1.iter().enumerate().find(|(_, &k)| k <= 0.0 || k.is_nan()) {
            problems.push(format!("stiffness diagonal entry {j} is {k:.3e}"));
        }
        if alpha <= 0.0 || alpha.is_nan() {
            problems.push(format!("alpha = {alpha:.3e}"));
        }
        if beta <= 0.0 || beta.is_nan() {
            problems.push(format!("beta = {beta:.3e}"));
        }
        if !problems.is_empty() {
            let msg = format!("at {p_hat:?}: {}", problems.join(", "));
            match policy {
                StructurePolicy::Error => return Err(PromError::StructureViolation(msg)),
                StructurePolicy::Warn => log::warn!("structure violation {msg}"),
            }
        }
        Ok(RomOperators { v, k1, k2, k3, alpha, beta, p_hat: p_hat.to_vec() })
    }

    /// Parameter gradients of every operator, in [`OperatorId::ALL`] order.
    pub fn gradient(&self, p_hat: &[f64]) -> Vec<(OperatorId, DMatrix<f64>)> {
        self.interpolants.iter().map(|it| (it.operator, it.gradient(p_hat))).collect()
    }
}

/// Validation error aggregation over the validation set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorMetric {
    /// Square root of the sum of relative errors.
    #[default]
    Verbatim,
    /// Root mean square of relative errors.
    Rms,
}

/// Validation curves and the selected shape parameter per operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub kernel: KernelKind,
    pub metric: ErrorMetric,
    pub eps_grid: Vec<f64>,
    /// `(operator, e_rel(ε) over the grid)`; `None` where the kernel matrix
    /// is numerically singular.
    pub curves: Vec<(OperatorId, Vec<Option<f64>>)>,
    /// `(operator, selected ε)`.
    pub selected: Vec<(OperatorId, f64)>,
}

impl ValidationReport {
    pub fn selected_array(&self) -> [f64; 6] {
        let mut e = [0.0; 6];
        for (slot, op) in e.iter_mut().zip(OperatorId::ALL) {
            *slot = self.selected.iter().find(|(o, _)| *o == op).map(|(_, x)| *x).expect("all operators selected");
        }
        e
    }
}

/// `n` log-spaced values from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect()
}

pub fn relative_error(exact: &DVector<f64>, approx: &DVector<f64>) -> f64 {
    let d = (exact - approx).norm();
    let e = exact.norm();
    if e > 0.0 {
        d / e
    } else {
        d
    }
}

/// Per-operator validation of the shape parameter over `eps_grid`.
pub fn validate_eps(
    train: &[RomOperators],
    validation: &[RomOperators],
    kind: KernelKind,
    eps_grid: &[f64],
    metric: ErrorMetric,
) -> Result<ValidationReport, PromError> {
    if eps_grid.is_empty() {
        return Err(PromError::Empty("shape-parameter grid"));
    }
    if validation.is_empty() {
        return Err(PromError::Empty("validation models"));
    }
    let (n, m) = check_models(train)?;
    for r in validation {
        if r.n() != n || r.m() != m {
            return Err(PromError::Inconsistent("validation models differ in size from training models".into()));
        }
    }
    let centers: Vec<Vec<f64>> = train.iter().map(|r| r.p_hat.clone()).collect();
    let data: Vec<DMatrix<f64>> = OperatorId::ALL.iter().map(|&op| training_matrix(op, train)).collect();
    let exact: Vec<Vec<DVector<f64>>> = OperatorId::ALL
        .iter()
        .map(|&op| validation.iter().map(|r| DVector::from_vec(op.extract(r))).collect())
        .collect();
    // one factorization per ε, shared by every operator
    let per_eps: Vec<Option<[f64; 6]>> = eps_grid
        .par_iter()
        .map(|&eps| {
            let kernel = RbfKernel::new(kind, eps)?;
            let solver = match KernelSolver::build(&centers, kernel, log::Level::Debug) {
                Ok(s) => s,
                Err(PromError::Singular { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            let gammas: Vec<Vec<Dd>> =
                validation.iter().map(|r| centers.iter().map(|c| kernel.eval_dd(&r.p_hat, c)).collect()).collect();
            let mut out = [0.0; 6];
            for (k, slot) in out.iter_mut().enumerate() {
                let (hi, lo) = solver.weights(&data[k]);
                let mut acc = 0.0;
                for (gamma, ex) in gammas.iter().zip(&exact[k]) {
                    let e = relative_error(ex, &apply(&hi, &lo, gamma));
                    acc += match metric {
                        ErrorMetric::Verbatim => e,
                        ErrorMetric::Rms => e * e,
                    };
                }
                *slot = match metric {
                    ErrorMetric::Verbatim => acc.sqrt(),
                    ErrorMetric::Rms => (acc / validation.len() as f64).sqrt(),
                };
            }
            Ok(Some(out))
        })
        .collect::<Result<_, PromError>>()?;
    let mut curves = Vec::with_capacity(6);
    let mut selected = Vec::with_capacity(6);
    for (k, &op) in OperatorId::ALL.iter().enumerate() {
        let curve: Vec<Option<f64>> = per_eps.iter().map(|e| e.map(|e| e[k]).filter(|x| x.is_finite())).collect();
        let best = (0..curve.len())
            .filter_map(|i| curve[i].map(|e| (i, e)))
            .fold(None, |b: Option<(usize, f64)>, (i, e)| if b.is_none_or(|(_, be)| e < be) { Some((i, e)) } else { b })
            .ok_or(PromError::Singular { eps: eps_grid[0] })?;
        selected.push((op, eps_grid[best.0]));
        curves.push((op, curve));
    }
    Ok(ValidationReport { kernel: kind, metric, eps_grid: eps_grid.to_vec(), curves, selected })
}
