//! Global reduction basis: two-level POD of the per-sample bases, mass
//! orthogonalization at each sample and MAC-based mode tracking.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::linalg::{fix_column_signs, pencil_eigen, sorted_svd, LinalgError};
use crate::modal::{CompanionSet, ModeSet};
use crate::sampling::{distance, SampleSet};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum BasisError {
    #[error("sample {sample} has {found} rows, expected {expected} (meshes differ)")]
    RowMismatch { sample: usize, expected: usize, found: usize },
    #[error("snapshot matrix is zero")]
    ZeroMatrix,
    #[error("energy threshold must lie in (0, 1], got {0}")]
    InvalidThreshold(f64),
    #[error("companion vectors are linearly dependent on the mode block")]
    DegenerateBasis,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("basis column {0} has zero mass norm")]
    ZeroColumn(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(
        "duplicate MAC assignment reordering sample {sample} against reference {reference}: \
         column order {assignment:?} is not a permutation; refine the parameter sampling"
    )]
    DuplicateAssignment { sample: usize, reference: usize, assignment: Vec<usize>, mac: DMatrix<f64> },
}

/// Column-stacked snapshots of all samples, unit-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMatrices {
    pub phi_g: DMatrix<f64>,
    pub theta_g: DMatrix<f64>,
    /// Sample of origin of each column.
    pub phi_origin: Vec<usize>,
    pub theta_origin: Vec<usize>,
}

pub fn assemble_snapshots(modes: &[ModeSet], companions: &[CompanionSet]) -> Result<SnapshotMatrices, BasisError> {
    if modes.len() != companions.len() {
        return Err(BasisError::Dimension(format!(
            "{} mode sets but {} companion sets",
            modes.len(),
            companions.len()
        )));
    }
    let n = modes.first().map(|m| m.phi.nrows()).ok_or(BasisError::ZeroMatrix)?;
    let (phi_g, phi_origin) = stack(modes.iter().map(|m| &m.phi), n)?;
    let (theta_g, theta_origin) = stack(companions.iter().map(|c| &c.theta), n)?;
    Ok(SnapshotMatrices { phi_g, theta_g, phi_origin, theta_origin })
}

fn stack<'a>(blocks: impl Iterator<Item = &'a DMatrix<f64>>, n: usize) -> Result<(DMatrix<f64>, Vec<usize>), BasisError> {
    let mut cols = Vec::new();
    let mut origin = Vec::new();
    for (s, b) in blocks.enumerate() {
        if b.nrows() != n {
            return Err(BasisError::RowMismatch { sample: s, expected: n, found: b.nrows() });
        }
        for c in b.column_iter() {
            let norm = c.norm();
            cols.push(if norm > 0.0 { c / norm } else { c.into_owned() });
            origin.push(s);
        }
    }
    Ok((DMatrix::from_columns(&cols), origin))
}

/// Leading left singular vectors of a snapshot matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Pod {
    pub vectors: DMatrix<f64>,
    pub m: usize,
    /// Cumulative energy `e_k`, one entry per singular value.
    pub energy: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// Smallest `m` whose cumulative energy reaches `threshold`.
pub fn pod_truncate(a: &DMatrix<f64>, threshold: f64) -> Result<Pod, BasisError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(BasisError::InvalidThreshold(threshold));
    }
    if a.ncols() == 0 || a.iter().all(|&x| x == 0.0) {
        return Err(BasisError::ZeroMatrix);
    }
    let (u, sigma) = sorted_svd(a);
    let total: f64 = sigma.iter().map(|s| s * s).sum();
    let mut acc = 0.0;
    let energy: Vec<f64> = sigma
        .iter()
        .map(|s| {
            acc += s * s;
            (acc / total).min(1.0)
        })
        .collect();
    let rank_tol = sigma[0] * 1e-10;
    let rank = sigma.iter().filter(|&&s| s > rank_tol).count();
    // energy reaches 1 only up to round-off; cap at the numerical rank
    let m = if threshold >= 1.0 {
        rank
    } else {
        energy.iter().position(|&e| e >= threshold).map_or(rank, |k| k + 1).min(rank)
    };
    Ok(Pod { vectors: u.columns(0, m).into_owned(), m, energy, sigma })
}

/// Global reduction basis `V = [L_Φ, L_Θ]` with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalBasis {
    pub v: DMatrix<f64>,
    pub m_phi: usize,
    pub m_theta: usize,
    pub energy_phi: Vec<f64>,
    pub energy_theta: Vec<f64>,
    pub sigma_phi: Vec<f64>,
    pub sigma_theta: Vec<f64>,
}

impl GlobalBasis {
    pub fn m(&self) -> usize {
        self.m_phi + self.m_theta
    }
}

/// Two independent truncations; the companion block is then orthonormalized
/// against the mode block so that `VᵀV = I` without changing the span.
pub fn build_global_rb(s: &SnapshotMatrices, e_phi: f64, e_theta: f64) -> Result<GlobalBasis, BasisError> {
    let pp = pod_truncate(&s.phi_g, e_phi)?;
    let pt = pod_truncate(&s.theta_g, e_theta)?;
    let n = pp.vectors.nrows();
    let mut v = DMatrix::zeros(n, pp.m + pt.m);
    v.columns_mut(0, pp.m).copy_from(&pp.vectors);
    for k in 0..pt.m {
        let mut c = pt.vectors.column(k).into_owned();
        for _ in 0..2 {
            for j in 0..pp.m + k {
                let proj = v.column(j).dot(&c);
                c.axpy(-proj, &v.column(j), 1.0);
            }
        }
        let norm = c.norm();
        if norm < 1e-8 {
            return Err(BasisError::DegenerateBasis);
        }
        v.set_column(pp.m + k, &(c / norm));
    }
    Ok(GlobalBasis {
        v,
        m_phi: pp.m,
        m_theta: pt.m,
        energy_phi: pp.energy,
        energy_theta: pt.energy,
        sigma_phi: pp.sigma,
        sigma_theta: pt.sigma,
    })
}

/// Rotates `V` into the mass-normalized eigenbasis of the reduced pencil at
/// one sample. Returns `V^i` and the reduced angular frequencies.
pub fn mass_orthogonalize(
    v: &DMatrix<f64>,
    m: &DMatrix<f64>,
    k1: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, Vec<f64>), BasisError> {
    if v.nrows() != m.nrows() || m.shape() != k1.shape() {
        return Err(BasisError::Dimension(format!(
            "basis {:?}, mass {:?}, stiffness {:?}",
            v.shape(),
            m.shape(),
            k1.shape()
        )));
    }
    let mr = v.transpose() * m * v;
    let kr = v.transpose() * k1 * v;
    let mr = (&mr + mr.transpose()) * 0.5;
    let kr = (&kr + kr.transpose()) * 0.5;
    let (omega2, phi) = pencil_eigen(&mr, &kr)?;
    let mut vi = v * phi;
    fix_column_signs(&mut vi);
    Ok((vi, omega2.iter().map(|w| w.max(0.0).sqrt()).collect()))
}

/// Mass-weighted MAC between the columns of `vi` (rows) and `vj` (columns).
pub fn mac_matrix(vi: &DMatrix<f64>, vj: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<DMatrix<f64>, BasisError> {
    if vi.nrows() != vj.nrows() || vi.nrows() != m.nrows() {
        return Err(BasisError::Dimension(format!("MAC of {:?} and {:?}", vi.shape(), vj.shape())));
    }
    let mvi = m * vi;
    let mvj = m * vj;
    let cross = vi.transpose() * &mvj;
    let ni: Vec<f64> = (0..vi.ncols()).map(|a| vi.column(a).dot(&mvi.column(a))).collect();
    let nj: Vec<f64> = (0..vj.ncols()).map(|b| vj.column(b).dot(&mvj.column(b))).collect();
    if let Some(k) = ni.iter().position(|&x| x <= 0.0) {
        return Err(BasisError::ZeroColumn(k));
    }
    if let Some(k) = nj.iter().position(|&x| x <= 0.0) {
        return Err(BasisError::ZeroColumn(k));
    }
    Ok(DMatrix::from_fn(vi.ncols(), vj.ncols(), |a, b| {
        (cross[(a, b)] * cross[(a, b)] / (ni[a] * nj[b])).clamp(0.0, 1.0)
    }))
}

/// Per-sample bases after mode tracking.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalBasisSet {
    pub bases: Vec<DMatrix<f64>>,
    pub omegas: Vec<Vec<f64>>,
    /// `permutations[s][i]`: original column delivered at position `i`.
    pub permutations: Vec<Vec<usize>>,
    /// Sign applied to each delivered column.
    pub signs: Vec<Vec<f64>>,
    /// Reference sample each basis was ordered against (`None` for the start).
    pub references: Vec<Option<usize>>,
    /// MAC value of every matched column pair.
    pub matched_mac: Vec<Vec<f64>>,
    pub start: usize,
}

/// Orders every basis consistently with its nearest already-ordered
/// neighbour in parameter space, starting from `start`.
pub fn reorder_all(
    bases: Vec<DMatrix<f64>>,
    omegas: Vec<Vec<f64>>,
    masses: &[DMatrix<f64>],
    samples: &SampleSet,
    start: usize,
) -> Result<LocalBasisSet, BasisError> {
    let ns = bases.len();
    if ns == 0 || masses.len() != ns || samples.len() != ns || omegas.len() != ns || start >= ns {
        return Err(BasisError::Dimension(format!(
            "{ns} bases, {} masses, {} samples, {} frequency sets, start {start}",
            masses.len(),
            samples.len(),
            omegas.len()
        )));
    }
    let m = bases[0].ncols();
    let mut out = LocalBasisSet {
        permutations: vec![(0..m).collect(); ns],
        signs: vec![vec![1.0; m]; ns],
        references: vec![None; ns],
        matched_mac: vec![vec![1.0; m]; ns],
        bases,
        omegas,
        start,
    };
    let mut ordered = vec![false; ns];
    ordered[start] = true;
    for _ in 1..ns {
        let mut best: Option<(usize, usize, f64)> = None;
        for u in (0..ns).filter(|&u| !ordered[u]) {
            for o in (0..ns).filter(|&o| ordered[o]) {
                let d = distance(&samples.points[u], &samples.points[o]);
                if best.is_none_or(|(_, _, bd)| d < bd) {
                    best = Some((u, o, d));
                }
            }
        }
        let (u, o, _) = best.expect("an unordered basis remains");
        let reference = &out.bases[o];
        let mac = mac_matrix(reference, &out.bases[u], &masses[o])?;
        let assignment: Vec<usize> = (0..m)
            .map(|i| {
                let row = mac.row(i);
                (0..m).fold(0, |b, j| if row[j] > row[b] { j } else { b })
            })
            .collect();
        let mut seen = vec![false; m];
        for &b in &assignment {
            if std::mem::replace(&mut seen[b], true) {
                return Err(BasisError::DuplicateAssignment { sample: u, reference: o, assignment, mac });
            }
        }
        let mr = &masses[o] * reference;
        let mut nb = DMatrix::zeros(reference.nrows(), m);
        let mut signs = vec![1.0; m];
        for (i, &b) in assignment.iter().enumerate() {
            let col = out.bases[u].column(b);
            let s = if mr.column(i).dot(&col) < 0.0 { -1.0 } else { 1.0 };
            nb.set_column(i, &(col * s));
            signs[i] = s;
        }
        out.omegas[u] = assignment.iter().map(|&b| out.omegas[u][b]).collect();
        out.matched_mac[u] = assignment.iter().enumerate().map(|(i, &b)| mac[(i, b)]).collect();
        out.bases[u] = nb;
        out.permutations[u] = assignment;
        out.signs[u] = signs;
        out.references[u] = Some(o);
        ordered[u] = true;
    }
    Ok(out)
}
