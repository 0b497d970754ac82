//! Non-intrusive identification of reduced stiffness tensors.
//!
//! Both methods probe the black box at displacements `V η` and read back
//! either the projected tangent `Vᵀ Kt(Vη) V` (EED) or the projected force
//! `Vᵀ f(Vη)` (ED). With the fully symmetric convention
//! `f̃(η) = K̃1 η + K̃2:ηη + K̃3:ηηη` the tangent is
//! `K̃1 + 2 K̃2·η + 3 K̃3:ηη`, and every unique entry follows in closed form
//! from a fixed probe layout.

use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fe::{BlackBox, FeAssembly, FeError};
use crate::tensor::{binomial, SymTensor};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum IdentError {
    #[error("basis has {found} rows, black box has {expected} DOFs")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("expected {expected} probe scales, found {found}")]
    ScaleCount { expected: usize, found: usize },
    #[error("probe scale {index} must be positive and finite, got {value}")]
    InvalidScale { index: usize, value: f64 },
    #[error("basis column {0} has no transverse component")]
    ZeroColumn(usize),
    #[error("probe target must be positive, got {0}")]
    InvalidTarget(f64),
    #[error("black box returned non-finite values at probe {0}")]
    NonFinite(String),
    #[error(transparent)]
    Fe(#[from] FeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IdentMethod {
    /// Enforced displacements, force evaluations.
    Ed,
    /// Enhanced enforced displacements, tangent evaluations.
    Eed,
}

/// Identified quadratic and cubic reduced tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentifiedTensors {
    pub k2: SymTensor,
    pub k3: SymTensor,
    pub method: IdentMethod,
    pub scales: Vec<f64>,
    /// Relative size of the inconsistency removed when forming the symmetric
    /// tensors (asymmetry for EED, spread of redundant estimates for ED).
    pub asymmetry: f64,
    pub evaluations: usize,
}

impl IdentifiedTensors {
    pub fn dim(&self) -> usize {
        self.k2.dim()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeLabel {
    Plus(usize),
    Minus(usize),
    /// `s_i e_i + s_j e_j` (EED) or `s_i e_i ± s_j e_j` (ED).
    Pair(usize, usize, bool),
    Triple(usize, usize, usize),
}

/// Reduced coordinates of every probe, in evaluation order.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbePlan {
    pub probes: Vec<(ProbeLabel, DVector<f64>)>,
    pub scales: Vec<f64>,
}

impl ProbePlan {
    pub fn len(&self) -> usize {
        self.probes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probes.is_empty()
    }
}

pub fn eed_count(m: usize) -> usize {
    2 * m + m * m.saturating_sub(1) / 2
}

pub fn ed_count(m: usize) -> usize {
    2 * m + 2 * binomial(m, 2) + binomial(m, 3)
}

fn unit(m: usize, terms: &[(usize, f64)]) -> DVector<f64> {
    let mut e = DVector::zeros(m);
    for &(i, s) in terms {
        e[i] = s;
    }
    e
}

pub fn eed_plan(scales: &[f64]) -> ProbePlan {
    let m = scales.len();
    let mut probes = Vec::with_capacity(eed_count(m));
    for (i, &s) in scales.iter().enumerate() {
        probes.push((ProbeLabel::Plus(i), unit(m, &[(i, s)])));
        probes.push((ProbeLabel::Minus(i), unit(m, &[(i, -s)])));
    }
    for i in 0..m {
        for j in i + 1..m {
            probes.push((ProbeLabel::Pair(i, j, true), unit(m, &[(i, scales[i]), (j, scales[j])])));
        }
    }
    ProbePlan { probes, scales: scales.to_vec() }
}

pub fn ed_plan(scales: &[f64]) -> ProbePlan {
    let m = scales.len();
    let mut probes = Vec::with_capacity(ed_count(m));
    for (i, &s) in scales.iter().enumerate() {
        probes.push((ProbeLabel::Plus(i), unit(m, &[(i, s)])));
        probes.push((ProbeLabel::Minus(i), unit(m, &[(i, -s)])));
    }
    for i in 0..m {
        for j in i + 1..m {
            for plus in [true, false] {
                let sj = if plus { scales[j] } else { -scales[j] };
                probes.push((ProbeLabel::Pair(i, j, plus), unit(m, &[(i, scales[i]), (j, sj)])));
            }
        }
    }
    for a in 0..m {
        for b in a + 1..m {
            for c in b + 1..m {
                probes.push((ProbeLabel::Triple(a, b, c), unit(m, &[(a, scales[a]), (b, scales[b]), (c, scales[c])])));
            }
        }
    }
    ProbePlan { probes, scales: scales.to_vec() }
}

/// Per-direction probe amplitudes: the largest transverse entry of
/// `s_i v_i` equals `target · t`.
pub fn plan_scales(v: &DMatrix<f64>, a: &FeAssembly, target: f64) -> Result<Vec<f64>, IdentError> {
    if !(target.is_finite() && target > 0.0) {
        return Err(IdentError::InvalidTarget(target));
    }
    if v.nrows() != a.n_free() {
        return Err(IdentError::DimensionMismatch { expected: a.n_free(), found: v.nrows() });
    }
    v.column_iter()
        .enumerate()
        .map(|(i, c)| {
            let w = a.max_transverse(&c.into_owned());
            if w > 0.0 {
                Ok(target * a.thickness() / w)
            } else {
                Err(IdentError::ZeroColumn(i))
            }
        })
        .collect()
}

fn check_inputs<B: BlackBox + ?Sized>(bb: &B, v: &DMatrix<f64>, scales: &[f64]) -> Result<(), IdentError> {
    if v.nrows() != bb.dim() {
        return Err(IdentError::DimensionMismatch { expected: bb.dim(), found: v.nrows() });
    }
    if scales.len() != v.ncols() {
        return Err(IdentError::ScaleCount { expected: v.ncols(), found: scales.len() });
    }
    for (index, &value) in scales.iter().enumerate() {
        if !(value.is_finite() && value > 0.0) {
            return Err(IdentError::InvalidScale { index, value });
        }
    }
    Ok(())
}

/// Identification from `2m + m(m−1)/2` tangent evaluations.
pub fn identify_eed<B: BlackBox + ?Sized>(
    bb: &B,
    v: &DMatrix<f64>,
    scales: &[f64],
) -> Result<IdentifiedTensors, IdentError> {
    check_inputs(bb, v, scales)?;
    let m = v.ncols();
    let plan = eed_plan(scales);
    let vt = v.transpose();
    let k1 = &vt * bb.linear_stiffness() * v;
    let results: Vec<DMatrix<f64>> = plan
        .probes
        .par_iter()
        .map(|(label, eta)| {
            let kt = bb.tangent_stiffness(&(v * eta))?;
            let r = &vt * kt * v;
            if r.iter().any(|x| !x.is_finite()) {
                return Err(IdentError::NonFinite(format!("{label:?}")));
            }
            Ok(r)
        })
        .collect::<Result<_, _>>()?;

    let mut d2 = vec![0.0; m * m * m];
    let mut d3 = vec![0.0; m * m * m * m];
    let idx3 = |a: usize, b: usize, c: usize| (a * m + b) * m + c;
    let idx4 = |a: usize, b: usize, c: usize, d: usize| ((a * m + b) * m + c) * m + d;
    // slices K2(:,:,i) and K3(:,:,i,i)
    let mut k2s = Vec::with_capacity(m);
    let mut k3s = Vec::with_capacity(m);
    for (i, &s) in scales.iter().enumerate() {
        let (ap, am) = (&results[2 * i], &results[2 * i + 1]);
        let k2i = (ap - am) / (4.0 * s);
        let k3ii = (ap + am - &k1 * 2.0) / (6.0 * s * s);
        for a in 0..m {
            for b in 0..m {
                d2[idx3(a, b, i)] = k2i[(a, b)];
                d3[idx4(a, b, i, i)] = k3ii[(a, b)];
            }
        }
        k2s.push(k2i);
        k3s.push(k3ii);
    }
    let mut p = 2 * m;
    for i in 0..m {
        for j in i + 1..m {
            let (si, sj) = (scales[i], scales[j]);
            let known = &k1 + (&k2s[i] * si + &k2s[j] * sj) * 2.0 + (&k3s[i] * (si * si) + &k3s[j] * (sj * sj)) * 3.0;
            let k3ij = (&results[p] - known) / (6.0 * si * sj);
            for a in 0..m {
                for b in 0..m {
                    d3[idx4(a, b, i, j)] = k3ij[(a, b)];
                    d3[idx4(a, b, j, i)] = k3ij[(a, b)];
                }
            }
            p += 1;
        }
    }
    let (t, asym) = symmetrize_and_check(m, &d2, &d3);
    Ok(IdentifiedTensors {
        k2: t.0,
        k3: t.1,
        method: IdentMethod::Eed,
        scales: scales.to_vec(),
        asymmetry: asym,
        evaluations: plan.len(),
    })
}

/// Symmetrizes dense raw tensors; the diagnostic is the larger relative
/// asymmetry of the two.
pub fn symmetrize_and_check(m: usize, dense2: &[f64], dense3: &[f64]) -> ((SymTensor, SymTensor), f64) {
    let (k2, a2) = SymTensor::symmetrize_dense(m, 3, dense2);
    let (k3, a3) = SymTensor::symmetrize_dense(m, 4, dense3);
    ((k2, k3), a2.max(a3))
}

/// Running mean of redundant estimates of unique entries.
struct Accumulator {
    sum: Vec<f64>,
    sq: Vec<f64>,
    count: Vec<u32>,
}

impl Accumulator {
    fn new(len: usize) -> Self {
        Self { sum: vec![0.0; len], sq: vec![0.0; len], count: vec![0; len] }
    }

    fn add(&mut self, k: usize, x: f64) {
        self.sum[k] += x;
        self.sq[k] += x * x;
        self.count[k] += 1;
    }

    fn mean(&self, k: usize) -> f64 {
        if self.count[k] == 0 {
            0.0
        } else {
            self.sum[k] / self.count[k] as f64
        }
    }

    fn is_set(&self, k: usize) -> bool {
        self.count[k] > 0
    }

    /// Sum of squared deviations from the means.
    fn spread(&self) -> f64 {
        (0..self.sum.len())
            .filter(|&k| self.count[k] > 1)
            .map(|k| (self.sq[k] - self.sum[k] * self.sum[k] / self.count[k] as f64).max(0.0))
            .sum()
    }

    fn into_tensor(self, m: usize, order: usize) -> SymTensor {
        let data = (0..self.sum.len()).map(|k| self.mean(k)).collect();
        SymTensor::from_unique(m, order, data)
    }
}

/// Identification from `2m + 2·C(m,2) + C(m,3)` force evaluations.
pub fn identify_ed<B: BlackBox + ?Sized>(
    bb: &B,
    v: &DMatrix<f64>,
    scales: &[f64],
) -> Result<IdentifiedTensors, IdentError> {
    check_inputs(bb, v, scales)?;
    let m = v.ncols();
    let plan = ed_plan(scales);
    let vt = v.transpose();
    let k1 = &vt * bb.linear_stiffness() * v;
    // nonlinear part R(η) = f̃(η) − K̃1 η
    let res: Vec<DVector<f64>> = plan
        .probes
        .par_iter()
        .map(|(label, eta)| {
            let f = &vt * bb.internal_force(&(v * eta))?;
            if f.iter().any(|x| !x.is_finite()) {
                return Err(IdentError::NonFinite(format!("{label:?}")));
            }
            Ok(f - &k1 * eta)
        })
        .collect::<Result<_, _>>()?;

    let shape2 = SymTensor::zeros(m, 3);
    let shape3 = SymTensor::zeros(m, 4);
    let mut t2 = Accumulator::new(shape2.unique().len());
    let mut t3 = Accumulator::new(shape3.unique().len());
    let r2 = |idx: [usize; 3]| shape2.rank(&idx);
    let r3 = |idx: [usize; 4]| shape3.rank(&idx);

    // single-direction probes: D2_i = K2(:,i,i), D3_i = K3(:,i,i,i)
    let mut d2 = Vec::with_capacity(m);
    let mut d3 = Vec::with_capacity(m);
    for (i, &s) in scales.iter().enumerate() {
        let (rp, rm) = (&res[2 * i], &res[2 * i + 1]);
        let a = (rp + rm) / (2.0 * s * s);
        let b = (rp - rm) / (2.0 * s * s * s);
        for p in 0..m {
            t2.add(r2([p, i, i]), a[p]);
            t3.add(r3([p, i, i, i]), b[p]);
        }
        d2.push(a);
        d3.push(b);
    }
    // pair probes: E gives K3(:,i,j,j); O gives P_ij = 2 K2(:,i,j) + 3 s_i K3(:,i,i,j)
    let mut pmat = vec![DVector::zeros(0); m * m];
    let mut k = 2 * m;
    for i in 0..m {
        for j in i + 1..m {
            let (si, sj) = (scales[i], scales[j]);
            let (rp, rm) = (&res[k], &res[k + 1]);
            k += 2;
            let e = (rp + rm) * 0.5;
            let o = (rp - rm) * 0.5;
            let tijj = (e - &d2[i] * (si * si) - &d2[j] * (sj * sj) - &d3[i] * (si * si * si)) / (3.0 * si * sj * sj);
            for p in 0..m {
                t3.add(r3([p, i, j, j]), tijj[p]);
            }
            pmat[i * m + j] = (o - &d3[j] * (sj * sj * sj)) / (si * sj);
        }
    }
    // entries with the smaller pair index doubled
    for i in 0..m {
        for j in i + 1..m {
            let pij = &pmat[i * m + j];
            let si = scales[i];
            t3.add(r3([i, i, i, j]), (pij[i] - 2.0 * d2[i][j]) / (3.0 * si));
            t3.add(r3([i, i, j, j]), (pij[j] - 2.0 * d2[j][i]) / (3.0 * si));
        }
    }
    for a in 0..m {
        for b in a + 1..m {
            for c in b + 1..m {
                let t_abbc = t3.mean(r3([a, b, b, c]));
                let t2abc = (pmat[b * m + c][a] - 3.0 * scales[b] * t_abbc) / 2.0;
                t2.add(r2([a, b, c]), t2abc);
                let sa = scales[a];
                t3.add(r3([a, a, b, c]), (pmat[a * m + b][c] - 2.0 * t2abc) / (3.0 * sa));
                t3.add(r3([a, a, b, c]), (pmat[a * m + c][b] - 2.0 * t2abc) / (3.0 * sa));
            }
        }
    }
    // triple probes: the only unknowns left are entries with four distinct indices
    let mut consistency = 0.0;
    if m >= 3 {
        let partial2 = SymTensor::from_unique(m, 3, (0..t2.sum.len()).map(|q| t2.mean(q)).collect());
        let partial3 = SymTensor::from_unique(m, 4, (0..t3.sum.len()).map(|q| t3.mean(q)).collect());
        let mut four = Accumulator::new(t3.sum.len());
        for (q, (label, eta)) in plan.probes.iter().enumerate().skip(k) {
            let ProbeLabel::Triple(a, b, c) = *label else { unreachable!("triples close the plan") };
            let mut pred = DVector::zeros(m);
            partial2.add_force(eta, &mut pred);
            partial3.add_force(eta, &mut pred);
            let diff = &res[q] - pred;
            let denom = 6.0 * scales[a] * scales[b] * scales[c];
            for p in 0..m {
                if p == a || p == b || p == c {
                    consistency += (diff[p] / denom).powi(2);
                } else {
                    four.add(r3([p, a, b, c]), diff[p] / denom);
                }
            }
        }
        for q in 0..four.sum.len() {
            if four.is_set(q) {
                debug_assert!(!t3.is_set(q));
                t3.sum[q] = four.sum[q];
                t3.sq[q] = four.sq[q];
                t3.count[q] = four.count[q];
            }
        }
    }
    let spread = t2.spread() + t3.spread() + consistency;
    let k2 = t2.into_tensor(m, 3);
    let k3 = t3.into_tensor(m, 4);
    let norm = (k2.frobenius().powi(2) + k3.frobenius().powi(2)).sqrt();
    let asymmetry = if norm > 0.0 { spread.sqrt() / norm } else { spread.sqrt() };
    Ok(IdentifiedTensors {
        k2,
        k3,
        method: IdentMethod::Ed,
        scales: scales.to_vec(),
        asymmetry,
        evaluations: plan.len(),
    })
}

/// Black box wrapper that counts force and tangent evaluations.
pub struct CountingBlackBox<'a, B: BlackBox + ?Sized> {
    inner: &'a B,
    forces: AtomicUsize,
    tangents: AtomicUsize,
}

impl<'a, B: BlackBox + ?Sized> CountingBlackBox<'a, B> {
    pub fn new(inner: &'a B) -> Self {
        Self { inner, forces: AtomicUsize::new(0), tangents: AtomicUsize::new(0) }
    }

    pub fn force_evaluations(&self) -> usize {
        self.forces.load(Ordering::Relaxed)
    }

    pub fn tangent_evaluations(&self) -> usize {
        self.tangents.load(Ordering::Relaxed)
    }
}

impl<B: BlackBox + ?Sized> BlackBox for CountingBlackBox<'_, B> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn mass_matrix(&self) -> DMatrix<f64> {
        self.inner.mass_matrix()
    }

    fn linear_stiffness(&self) -> DMatrix<f64> {
        self.inner.linear_stiffness()
    }

    fn internal_force(&self, q: &DVector<f64>) -> Result<DVector<f64>, FeError> {
        self.forces.fetch_add(1, Ordering::Relaxed);
        self.inner.internal_force(q)
    }

    fn tangent_stiffness(&self, q: &DVector<f64>) -> Result<DMatrix<f64>, FeError> {
        self.tangents.fetch_add(1, Ordering::Relaxed);
        self.inner.tangent_stiffness(q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fe::{build_assembly, reduced_tensors_direct, AxialRestraint, GeometryParams, SectionMaterial};
    use crate::linalg::lowest_modes;
    use rand::{Rng, SeedableRng};

    fn beam_basis(m: usize) -> (FeAssembly, DMatrix<f64>) {
        let a = build_assembly(GeometryParams::new(1.4, 0.25), 20, SectionMaterial::default(), AxialRestraint::EndsOnly)
            .unwrap();
        let (_, v) = lowest_modes(&a.mass_matrix(), &a.linear_stiffness(), m).unwrap();
        (a, v)
    }

    fn rel(a: &SymTensor, b: &SymTensor) -> f64 {
        let d: f64 = a.unique().iter().zip(b.unique()).zip(a.tuples()).map(|((x, y), _)| (x - y).powi(2)).sum();
        let n: f64 = b.unique().iter().map(|y| y * y).sum();
        (d / n).sqrt()
    }

    struct Linear(DMatrix<f64>);

    impl BlackBox for Linear {
        fn dim(&self) -> usize {
            self.0.nrows()
        }
        fn mass_matrix(&self) -> DMatrix<f64> {
            DMatrix::identity(self.dim(), self.dim())
        }
        fn linear_stiffness(&self) -> DMatrix<f64> {
            self.0.clone()
        }
        fn internal_force(&self, q: &DVector<f64>) -> Result<DVector<f64>, FeError> {
            Ok(&self.0 * q)
        }
        fn tangent_stiffness(&self, _: &DVector<f64>) -> Result<DMatrix<f64>, FeError> {
            Ok(self.0.clone())
        }
    }

    #[test]
    fn probe_counts() {
        assert_eq!(eed_count(23), 299);
        assert_eq!(eed_count(10), 65);
        for m in 1..12 {
            assert_eq!(eed_plan(&vec![1.0; m]).len(), eed_count(m));
            assert_eq!(ed_plan(&vec![1.0; m]).len(), ed_count(m));
        }
        assert_eq!(ed_count(4), 8 + 12 + 4);
    }

    #[test]
    fn scale_planning_arithmetic() {
        let (a, v) = beam_basis(3);
        let s1 = plan_scales(&v, &a, 1.0).unwrap();
        let s2 = plan_scales(&v, &a, 2.0).unwrap();
        for (i, (x, y)) in s1.iter().zip(&s2).enumerate() {
            assert!((y - 2.0 * x).abs() < 1e-15 * y);
            let w = a.max_transverse(&(v.column(i) * *x));
            assert!((w - a.thickness()).abs() < 1e-15);
        }
        assert!(matches!(plan_scales(&v, &a, 0.0), Err(IdentError::InvalidTarget(_))));
    }

    #[test]
    fn linear_black_box_gives_zero_tensors() {
        let k = DMatrix::from_fn(6, 6, |i, j| if i == j { 5.0 } else { 0.3 });
        let v = DMatrix::from_fn(6, 3, |i, j| ((i + 2 * j) as f64).cos());
        let lin = Linear(k);
        let e = identify_eed(&lin, &v, &[0.1, 0.2, 0.3]).unwrap();
        let d = identify_ed(&lin, &v, &[0.1, 0.2, 0.3]).unwrap();
        let scale = 1e-12 * (v.transpose() * &lin.0 * &v).norm();
        for t in [&e.k2, &e.k3, &d.k2, &d.k3] {
            assert!(t.frobenius() < scale / 1e-3, "{}", t.frobenius());
        }
    }

    #[test]
    fn eed_matches_direct_projection() {
        let (a, v) = beam_basis(6);
        let s = plan_scales(&v, &a, 1.0).unwrap();
        let id = identify_eed(&a, &v, &s).unwrap();
        let (k2, k3) = reduced_tensors_direct(&a, &v).unwrap();
        assert!(rel(&id.k2, &k2) < 1e-8, "{}", rel(&id.k2, &k2));
        assert!(rel(&id.k3, &k3) < 1e-8, "{}", rel(&id.k3, &k3));
        assert!(id.asymmetry < 1e-8);
        assert_eq!(id.evaluations, eed_count(6));
    }

    #[test]
    fn ed_single_mode_recovers_closed_form() {
        let (a, v) = beam_basis(1);
        let s = plan_scales(&v, &a, 1.0).unwrap();
        let id = identify_ed(&a, &v, &s).unwrap();
        let (k2, k3) = reduced_tensors_direct(&a, &v).unwrap();
        assert_eq!(id.evaluations, 2);
        assert!((id.k2.get(&[0, 0, 0]) - k2.get(&[0, 0, 0])).abs() < 1e-8 * k2.frobenius());
        assert!((id.k3.get(&[0, 0, 0, 0]) - k3.get(&[0, 0, 0, 0])).abs() < 1e-8 * k3.frobenius());
    }

    #[test]
    fn ed_and_eed_agree() {
        let (a, v) = beam_basis(4);
        let s = plan_scales(&v, &a, 1.0).unwrap();
        let e = identify_eed(&a, &v, &s).unwrap();
        let d = identify_ed(&a, &v, &s).unwrap();
        assert!(rel(&d.k2, &e.k2) < 1e-8, "{}", rel(&d.k2, &e.k2));
        assert!(rel(&d.k3, &e.k3) < 1e-8, "{}", rel(&d.k3, &e.k3));
        assert!(d.asymmetry < 1e-6);
    }

    #[test]
    fn identified_model_reproduces_projected_force() {
        let (a, v) = beam_basis(5);
        let s = plan_scales(&v, &a, 1.0).unwrap();
        let id = identify_eed(&a, &v, &s).unwrap();
        let k1 = v.transpose() * a.linear_stiffness() * &v;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let eta = DVector::from_fn(5, |i, _| rng.gen_range(-1.0..1.0) * 2.0 * s[i]);
            let exact = v.transpose() * a.internal_force(&(&v * &eta)).unwrap();
            let mut model = &k1 * &eta;
            id.k2.add_force(&eta, &mut model);
            id.k3.add_force(&eta, &mut model);
            assert!((&model - &exact).norm() < 1e-8 * exact.norm());
        }
    }

    #[test]
    fn scale_invariance() {
        let (a, v) = beam_basis(4);
        let base = identify_eed(&a, &v, &plan_scales(&v, &a, 1.0).unwrap()).unwrap();
        for target in [0.5, 2.0, 4.0] {
            let other = identify_eed(&a, &v, &plan_scales(&v, &a, target).unwrap()).unwrap();
            assert!(rel(&other.k2, &base.k2) < 1e-8);
            assert!(rel(&other.k3, &base.k3) < 1e-8);
        }
    }

    #[test]
    fn counter_audits_evaluations() {
        let (a, v) = beam_basis(3);
        let s = plan_scales(&v, &a, 1.0).unwrap();
        let c = CountingBlackBox::new(&a);
        identify_eed(&c, &v, &s).unwrap();
        assert_eq!(c.tangent_evaluations(), eed_count(3));
        assert_eq!(c.force_evaluations(), 0);
        let c = CountingBlackBox::new(&a);
        identify_ed(&c, &v, &s).unwrap();
        assert_eq!(c.force_evaluations(), ed_count(3));
    }

    #[test]
    fn symmetrize_reports_perturbation() {
        let m = 3;
        let t2 = SymTensor::from_unique(m, 3, (0..10).map(|x| x as f64 + 1.0).collect());
        let t3 = SymTensor::from_unique(m, 4, (0..15).map(|x| (x as f64).sin()).collect());
        let (d2, d3) = (t2.to_dense(), t3.to_dense());
        let ((s2, s3), diag) = symmetrize_and_check(m, &d2, &d3);
        assert!(diag < 1e-15);
        for (x, y) in s2.unique().iter().zip(t2.unique()).chain(s3.unique().iter().zip(t3.unique())) {
            assert!((x - y).abs() <= 1e-15 * y.abs().max(1.0));
        }
        let mut p = d2.clone();
        p[1] += 1e-3;
        let (_, d_small) = symmetrize_and_check(m, &p, &d3);
        p[1] += 1e-3;
        let (_, d_big) = symmetrize_and_check(m, &p, &d3);
        assert!((d_big / d_small - 2.0).abs() < 1e-3, "{}", d_big / d_small);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (a, v) = beam_basis(2);
        assert!(matches!(identify_eed(&a, &v, &[1.0]), Err(IdentError::ScaleCount { .. })));
        assert!(matches!(identify_ed(&a, &v, &[1.0, -1.0]), Err(IdentError::InvalidScale { .. })));
        assert!(matches!(identify_eed(&a, &DMatrix::zeros(4, 2), &[1.0, 1.0]), Err(IdentError::DimensionMismatch { .. })));
    }
}
