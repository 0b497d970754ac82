//! Implicit Newmark integration shared by full-order and reduced models.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fe::{FeAssembly, FeError, LoadDescriptor};
use crate::rom::RomOperators;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum NewmarkError {
    #[error("Newton iterations diverged at step {step} (t = {time:.6e} s, residual {residual:.3e})")]
    Divergence { step: usize, time: f64, residual: f64 },
    #[error("time step and span must be positive, got dt = {dt}, span = {span}")]
    InvalidTime { dt: f64, span: f64 },
    #[error("initial state has length {found}, model has {expected}")]
    InitialState { expected: usize, found: usize },
    #[error(transparent)]
    Fe(#[from] FeError),
}

/// Which of the benchmarked models produced a history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Hfm,
    Rom,
    Interpolated,
    Closest,
    Recomputed,
    Linear,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Hfm => "hfm",
            ModelKind::Rom => "rom",
            ModelKind::Interpolated => "interpolated",
            ModelKind::Closest => "closest",
            ModelKind::Recomputed => "recomputed",
            ModelKind::Linear => "linear",
        }
    }
}

/// Uniformly sampled trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeHistory {
    pub time: Vec<f64>,
    pub q: Vec<DVector<f64>>,
    pub v: Vec<DVector<f64>>,
    pub a: Vec<DVector<f64>>,
    pub kind: ModelKind,
}

impl TimeHistory {
    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn trace(&self, dof: usize) -> Vec<f64> {
        self.q.iter().map(|q| q[dof]).collect()
    }
}

/// Second-order model `M q̈ + C q̇ + f(q) = F(t)`.
pub trait DynamicModel {
    fn dim(&self) -> usize;
    fn mass(&self) -> &DMatrix<f64>;
    fn damping(&self) -> &DMatrix<f64>;
    fn force(&self, q: &DVector<f64>) -> Result<DVector<f64>, FeError>;
    fn tangent(&self, q: &DVector<f64>) -> Result<DMatrix<f64>, FeError>;
    fn load(&self, t: f64) -> DVector<f64>;
}

/// Full-order arch with Rayleigh damping `αM + βK1`.
pub struct FullOrderModel<'a> {
    assembly: &'a FeAssembly,
    mass: DMatrix<f64>,
    damping: DMatrix<f64>,
    load: LoadDescriptor,
}

impl<'a> FullOrderModel<'a> {
    pub fn new(assembly: &'a FeAssembly, alpha: f64, beta: f64, load: LoadDescriptor) -> Self {
        let mass = assembly.mass_matrix();
        let damping = &mass * alpha + assembly.linear_stiffness() * beta;
        Self { assembly, mass, damping, load }
    }
}

impl DynamicModel for FullOrderModel<'_> {
    fn dim(&self) -> usize {
        self.assembly.n_free()
    }
    fn mass(&self) -> &DMatrix<f64> {
        &self.mass
    }
    fn damping(&self) -> &DMatrix<f64> {
        &self.damping
    }
    fn force(&self, q: &DVector<f64>) -> Result<DVector<f64>, FeError> {
        self.assembly.internal_force(q)
    }
    fn tangent(&self, q: &DVector<f64>) -> Result<DMatrix<f64>, FeError> {
        self.assembly.tangent_stiffness(q)
    }
    fn load(&self, t: f64) -> DVector<f64> {
        self.load.external_load(t)
    }
}

/// Reduced model driven by the projected load `Vᵀ F(t)`.
pub struct ReducedModel<'a> {
    ops: &'a RomOperators,
    mass: DMatrix<f64>,
    damping: DMatrix<f64>,
    load: LoadDescriptor,
}

impl<'a> ReducedModel<'a> {
    /// `load` acts on full-order DOFs and is projected onto the basis.
    pub fn new(ops: &'a RomOperators, load: &LoadDescriptor) -> Self {
        let m = ops.m();
        let projected = ops.v.transpose() * load.pattern();
        Self {
            ops,
            mass: DMatrix::identity(m, m),
            damping: DMatrix::from_diagonal(&DVector::from_vec(ops.damping())),
            load: load.with_pattern(projected),
        }
    }
}

impl DynamicModel for ReducedModel<'_> {
    fn dim(&self) -> usize {
        self.ops.m()
    }
    fn mass(&self) -> &DMatrix<f64> {
        &self.mass
    }
    fn damping(&self) -> &DMatrix<f64> {
        &self.damping
    }
    fn force(&self, q: &DVector<f64>) -> Result<DVector<f64>, FeError> {
        Ok(self.ops.reduced_force(q))
    }
    fn tangent(&self, q: &DVector<f64>) -> Result<DMatrix<f64>, FeError> {
        Ok(self.ops.reduced_tangent(q))
    }
    fn load(&self, t: f64) -> DVector<f64> {
        self.load.external_load(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewmarkSettings {
    pub gamma: f64,
    pub beta: f64,
    pub tol_rel: f64,
    pub max_iterations: usize,
}

impl Default for NewmarkSettings {
    fn default() -> Self {
        Self { gamma: 0.5, beta: 0.25, tol_rel: 1e-8, max_iterations: 20 }
    }
}

/// Integrates from rest (or from `initial = (q0, v0)`) over `[0, span]`.
pub fn newmark_integrate<D: DynamicModel + ?Sized>(
    model: &D,
    span: f64,
    dt: f64,
    settings: &NewmarkSettings,
    initial: Option<(DVector<f64>, DVector<f64>)>,
    kind: ModelKind,
) -> Result<TimeHistory, NewmarkError> {
    if !(dt > 0.0 && dt.is_finite() && span > 0.0 && span.is_finite()) {
        return Err(NewmarkError::InvalidTime { dt, span });
    }
    let n = model.dim();
    let (mut q, mut v) = initial.unwrap_or_else(|| (DVector::zeros(n), DVector::zeros(n)));
    for x in [&q, &v] {
        if x.len() != n {
            return Err(NewmarkError::InitialState { expected: n, found: x.len() });
        }
    }
    let steps = (span / dt).round() as usize;
    let m = model.mass();
    let c = model.damping();
    let m_lu = m.clone().lu();
    let rhs0 = model.load(0.0) - c * &v - model.force(&q)?;
    let mut a = m_lu.solve(&rhs0).unwrap_or_else(|| DVector::zeros(n));

    let (g, b) = (settings.gamma, settings.beta);
    let c0 = 1.0 / (b * dt * dt);
    let c1 = g / (b * dt);
    let lead = m * c0 + c * c1;

    let mut hist = TimeHistory {
        time: Vec::with_capacity(steps + 1),
        q: Vec::with_capacity(steps + 1),
        v: Vec::with_capacity(steps + 1),
        a: Vec::with_capacity(steps + 1),
        kind,
    };
    hist.time.push(0.0);
    hist.q.push(q.clone());
    hist.v.push(v.clone());
    hist.a.push(a.clone());

    for step in 1..=steps {
        let t = step as f64 * dt;
        let f_ext = model.load(t);
        let mut qn = &q + &v * dt + &a * (0.5 * dt * dt);
        let accel = |qn: &DVector<f64>| (qn - &q - &v * dt) * c0 - &a * (0.5 / b - 1.0);
        let mut converged = false;
        let mut last = f64::INFINITY;
        let (mut an, mut vn) = (a.clone(), v.clone());
        for _ in 0..=settings.max_iterations {
            an = accel(&qn);
            vn = &v + (&a * (1.0 - g) + &an * g) * dt;
            let fi = model.force(&qn)?;
            let ma = m * &an;
            let cv = c * &vn;
            let r = &ma + &cv + &fi - &f_ext;
            let scale = f_ext.norm().max(fi.norm()).max(ma.norm()).max(cv.norm());
            last = r.norm();
            if last <= settings.tol_rel * scale || last == 0.0 {
                converged = true;
                break;
            }
            let jac = &lead + model.tangent(&qn)?;
            let Some(dq) = jac.lu().solve(&(-r)) else { break };
            // increment at round-off of the state: residual is at its floor
            if dq.norm() <= 1e-14 * qn.norm() {
                qn += dq;
                an = accel(&qn);
                vn = &v + (&a * (1.0 - g) + &an * g) * dt;
                converged = true;
                break;
            }
            qn += dq;
        }
        if !converged || qn.iter().any(|x| !x.is_finite()) {
            return Err(NewmarkError::Divergence { step, time: t, residual: last });
        }
        q = qn;
        v = vn;
        a = an;
        hist.time.push(t);
        hist.q.push(q.clone());
        hist.v.push(v.clone());
        hist.a.push(a.clone());
    }
    Ok(hist)
}
