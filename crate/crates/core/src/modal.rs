//! Per-sample local bases: vibration modes, static modal derivatives and
//! dual modes.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fe::{static_solve, BlackBox, FeAssembly, FeError, StaticSettings};
use crate::linalg::{lowest_modes, sorted_svd, LinalgError};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum ModalError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("no vibration mode survives selection (f_max = {f_max} Hz, first frequency {first_hz:.3} Hz)")]
    EmptySelection { f_max: f64, first_hz: f64 },
    #[error("finite-difference step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("modal derivative ({i},{j}) is not finite")]
    NonFiniteDerivative { i: usize, j: usize },
    #[error("requested {requested} mode pairs but only {available} exist")]
    TooManyPairs { requested: usize, available: usize },
    #[error("static solve for {label} failed: {source}")]
    Static { label: String, source: FeError },
    #[error("black box showed no nonlinear static response; dual modes are all zero")]
    NoNonlinearResponse,
    #[error("invalid setting: {0}")]
    InvalidSetting(String),
    #[error(transparent)]
    Fe(#[from] FeError),
}

/// Mass-normalized vibration modes in ascending frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSet {
    pub phi: DMatrix<f64>,
    /// Angular frequencies (rad/s).
    pub omega: Vec<f64>,
    /// 1-based position of each mode in the full spectrum.
    pub mode_numbers: Vec<usize>,
}

impl ModeSet {
    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn frequencies_hz(&self) -> Vec<f64> {
        self.omega.iter().map(|w| w / (2.0 * std::f64::consts::PI)).collect()
    }

    fn subset(&self, keep: &[usize]) -> Self {
        Self {
            phi: self.phi.select_columns(keep),
            omega: keep.iter().map(|&k| self.omega[k]).collect(),
            mode_numbers: keep.iter().map(|&k| self.mode_numbers[k]).collect(),
        }
    }
}

/// The `k` lowest modes of the pencil `(K1, M)`.
pub fn solve_vms(m: &DMatrix<f64>, k1: &DMatrix<f64>, k: usize) -> Result<ModeSet, ModalError> {
    let (omega2, phi) = lowest_modes(m, k1, k)?;
    Ok(ModeSet {
        phi,
        omega: omega2.iter().map(|w2| w2.max(0.0).sqrt()).collect(),
        mode_numbers: (1..=omega2.len()).collect(),
    })
}

/// Participation `φ_iᵀ p` of a load pattern in each mass-normalized mode.
pub fn mpf(ms: &ModeSet, pattern: &DVector<f64>) -> Vec<f64> {
    ms.phi.column_iter().map(|c| c.dot(pattern)).collect()
}

/// Keeps modes under `f_max` (Hz) whose participation exceeds
/// `mpf_tol · max|MPF|`.
pub fn select_vms(ms: &ModeSet, mpfs: &[f64], f_max: f64, mpf_tol: f64) -> Result<ModeSet, ModalError> {
    let peak = mpfs.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
    let hz = ms.frequencies_hz();
    let keep: Vec<usize> = (0..ms.len())
        .filter(|&k| hz[k] <= f_max && (mpfs[k].abs() > mpf_tol * peak || (mpf_tol == 0.0 && peak == 0.0)))
        .collect();
    if keep.is_empty() {
        return Err(ModalError::EmptySelection { f_max, first_hz: hz.first().copied().unwrap_or(f64::NAN) });
    }
    Ok(ms.subset(&keep))
}

/// Static modal derivative `θ_ij` from central differences of the tangent
/// along `φ_i`, applied to `φ_j`.
///
/// The perturbation is `ε φ_i` with `ε = h / max|φ_i|`, so `h` is the largest
/// imposed nodal displacement.
pub fn compute_smd<B: BlackBox + ?Sized>(
    model: &B,
    phi_i: &DVector<f64>,
    phi_j: &DVector<f64>,
    h: f64,
) -> Result<DVector<f64>, ModalError> {
    let k1 = factor_k1(model)?;
    smd_with_factor(model, &k1, phi_i, phi_j, h)
}

fn factor_k1<B: BlackBox + ?Sized>(model: &B) -> Result<Cholesky<f64, Dyn>, ModalError> {
    Cholesky::new(model.linear_stiffness()).ok_or(ModalError::Linalg(LinalgError::NotSpd("stiffness")))
}

fn smd_with_factor<B: BlackBox + ?Sized>(
    model: &B,
    k1: &Cholesky<f64, Dyn>,
    phi_i: &DVector<f64>,
    phi_j: &DVector<f64>,
    h: f64,
) -> Result<DVector<f64>, ModalError> {
    if !(h.is_finite() && h > 0.0) {
        return Err(ModalError::InvalidStep(h));
    }
    let scale = phi_i.amax();
    if scale == 0.0 {
        return Err(ModalError::InvalidSetting("zero mode shape".into()));
    }
    let eps = h / scale;
    let kp = model.tangent_stiffness(&(phi_i * eps))?;
    let km = model.tangent_stiffness(&(phi_i * -eps))?;
    let rhs = -((kp - km) * phi_j) / (2.0 * eps);
    let theta = k1.solve(&rhs);
    if theta.iter().any(|x| !x.is_finite()) {
        return Err(ModalError::NonFiniteDerivative { i: 0, j: 0 });
    }
    Ok(theta)
}

/// Ranks unordered mode pairs `(i, j)`, `i ≤ j`, by `|MPF_i · MPF_j|`.
pub fn select_smds(mpfs: &[f64], k_pairs: usize) -> Result<Vec<(usize, usize)>, ModalError> {
    let n = mpfs.len();
    let available = n * (n + 1) / 2;
    if k_pairs > available {
        return Err(ModalError::TooManyPairs { requested: k_pairs, available });
    }
    let mut pairs: Vec<(usize, usize, f64)> = Vec::with_capacity(available);
    for i in 0..n {
        for j in i..n {
            pairs.push((i, j, (mpfs[i] * mpfs[j]).abs()));
        }
    }
    // stable sort keeps the lexicographic generation order on ties
    pairs.sort_by(|a, b| b.2.total_cmp(&a.2));
    Ok(pairs.into_iter().take(k_pairs).map(|(i, j, _)| (i, j)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompanionKind {
    Smd,
    DualMode,
}

/// Origin of one companion vector; mode numbers are 1-based global indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompanionLabel {
    Smd(usize, usize),
    DualMode(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompanionSet {
    pub theta: DMatrix<f64>,
    pub labels: Vec<CompanionLabel>,
    pub kind: CompanionKind,
}

impl CompanionSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Modal derivatives for the given column pairs of `ms`.
pub fn compute_smds<B: BlackBox + ?Sized>(
    model: &B,
    ms: &ModeSet,
    pairs: &[(usize, usize)],
    h: f64,
) -> Result<CompanionSet, ModalError> {
    if pairs.is_empty() {
        return Err(ModalError::InvalidSetting("at least one modal-derivative pair is required".into()));
    }
    let k1 = factor_k1(model)?;
    let mut theta = DMatrix::zeros(model.dim(), pairs.len());
    let mut labels = Vec::with_capacity(pairs.len());
    for (c, &(i, j)) in pairs.iter().enumerate() {
        let (gi, gj) = (ms.mode_numbers[i], ms.mode_numbers[j]);
        let v = smd_with_factor(model, &k1, &ms.phi.column(i).into_owned(), &ms.phi.column(j).into_owned(), h)
            .map_err(|e| match e {
                ModalError::NonFiniteDerivative { .. } => ModalError::NonFiniteDerivative { i: gi, j: gj },
                e => e,
            })?;
        if v.norm() == 0.0 {
            return Err(ModalError::NoNonlinearResponse);
        }
        theta.set_column(c, &v);
        labels.push(CompanionLabel::Smd(gi, gj));
    }
    Ok(CompanionSet { theta, labels, kind: CompanionKind::Smd })
}

/// Settings of the dual-mode construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualModeSettings {
    /// Also load along `φ_i + φ_j` for every pair of modes.
    pub include_pairs: bool,
    /// POD energy retained from the nonlinear residual snapshots.
    pub energy_threshold: f64,
    pub statics: StaticSettings,
}

impl Default for DualModeSettings {
    fn default() -> Self {
        Self { include_pairs: false, energy_threshold: 1.0 - 1e-8, statics: StaticSettings::default() }
    }
}

/// Modal amplitudes bringing the largest transverse entry of `s_i φ_i` to
/// `target · t`.
pub fn dual_mode_scales(a: &FeAssembly, ms: &ModeSet, target: f64) -> Result<Vec<f64>, ModalError> {
    if !(target.is_finite() && target > 0.0) {
        return Err(ModalError::InvalidSetting(format!("dual-mode target must be positive, got {target}")));
    }
    ms.phi
        .column_iter()
        .map(|c| {
            let w = a.max_transverse(&c.into_owned());
            if w == 0.0 {
                Err(ModalError::InvalidSetting("mode without transverse motion".into()))
            } else {
                Ok(target * a.thickness() / w)
            }
        })
        .collect()
}

/// Dual modes: POD of the nonlinear part of static responses to modal loads
/// `±K1 φ_i s_i` (and `±K1 (φ_i + φ_j) s` for pairs, with `s` the mean of the
/// two scales).
pub fn compute_dual_modes<B: BlackBox + ?Sized>(
    model: &B,
    ms: &ModeSet,
    scales: &[f64],
    settings: &DualModeSettings,
) -> Result<CompanionSet, ModalError> {
    if scales.len() != ms.len() {
        return Err(ModalError::InvalidSetting(format!(
            "{} scales supplied for {} modes",
            scales.len(),
            ms.len()
        )));
    }
    if scales.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
        return Err(ModalError::InvalidSetting("dual-mode scales must be positive".into()));
    }
    let e = settings.energy_threshold;
    if !(e > 0.0 && e <= 1.0) {
        return Err(ModalError::InvalidSetting(format!("energy threshold must lie in (0, 1], got {e}")));
    }
    let k1 = model.linear_stiffness();
    let mut directions: Vec<(String, DVector<f64>)> = Vec::new();
    for i in 0..ms.len() {
        directions.push((format!("mode {}", ms.mode_numbers[i]), ms.phi.column(i) * scales[i]));
    }
    if settings.include_pairs {
        for i in 0..ms.len() {
            for j in i + 1..ms.len() {
                let s = 0.5 * (scales[i] + scales[j]);
                directions.push((
                    format!("modes {}+{}", ms.mode_numbers[i], ms.mode_numbers[j]),
                    (ms.phi.column(i) + ms.phi.column(j)) * s,
                ));
            }
        }
    }
    let n = model.dim();
    let zero = DVector::zeros(n);
    let mut snaps = DMatrix::zeros(n, 2 * directions.len());
    let mut lin_norm = 0.0_f64;
    for (k, (label, q_lin)) in directions.iter().enumerate() {
        for (s, sign) in [(0, 1.0), (1, -1.0)] {
            let target = q_lin * sign;
            let load = &k1 * &target;
            let q = static_solve(model, &load, &zero, &settings.statics).map_err(|source| ModalError::Static {
                label: format!("{}{label}", if sign > 0.0 { "+" } else { "-" }),
                source,
            })?;
            snaps.set_column(2 * k + s, &(q - &target));
        }
        lin_norm = lin_norm.max(q_lin.norm());
    }
    let (u, sigma) = sorted_svd(&snaps);
    let total: f64 = sigma.iter().map(|s| s * s).sum();
    if sigma.first().copied().unwrap_or(0.0) <= 1e-12 * lin_norm {
        return Err(ModalError::NoNonlinearResponse);
    }
    let mut acc = 0.0;
    let mut keep = 0;
    for s in &sigma {
        acc += s * s;
        keep += 1;
        if acc / total >= e {
            break;
        }
    }
    Ok(CompanionSet {
        theta: u.columns(0, keep).into_owned(),
        labels: (0..keep).map(CompanionLabel::DualMode).collect(),
        kind: CompanionKind::DualMode,
    })
}
