//! Desk-scale high-fidelity model: a clamped von Kármán shallow-arch beam.
//!
//! The pipeline only talks to the model through [`BlackBox`]; the element
//! internals are used by the test-only [`reduced_tensors_direct`] oracle.

mod direct;
mod element;
mod load;
mod statics;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

pub use direct::reduced_tensors_direct;
pub use load::LoadDescriptor;
pub use statics::{static_solve, StaticSettings};

use element::{element_force_tangent, element_mass, Element};

pub const DOFS_PER_NODE: usize = 3;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum FeError {
    #[error("material/section constant `{name}` must be positive and finite, got {value}")]
    InvalidConstant { name: &'static str, value: f64 },
    #[error("at least {min} elements are required, got {found}")]
    TooFewElements { min: usize, found: usize },
    #[error("geometry parameter `{name}` is not finite")]
    NonFiniteParameter { name: &'static str },
    #[error("vector length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("basis has {found} rows but the assembly has {expected} free DOFs")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("static solve did not converge after {bisections} load-step bisections (reached load factor {load_factor:.4}, residual {residual:.3e})")]
    NonConvergence {
        bisections: usize,
        load_factor: f64,
        residual: f64,
    },
    #[error("invalid load descriptor: {0}")]
    InvalidLoad(String),
}

/// Shape parameters of the arch: midspan rise in thickness multiples and a
/// linear skew factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryParams {
    pub rise: f64,
    pub skew: f64,
}

impl GeometryParams {
    pub fn new(rise: f64, skew: f64) -> Self {
        Self { rise, skew }
    }

    pub fn from_slice(p: &[f64]) -> Self {
        Self {
            rise: p.first().copied().unwrap_or(0.0),
            skew: p.get(1).copied().unwrap_or(0.0),
        }
    }
}

/// Material and cross-section constants (SI units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionMaterial {
    /// Span (m).
    pub length: f64,
    /// Section width (m).
    pub width: f64,
    /// Section thickness (m).
    pub thickness: f64,
    /// Young's modulus (Pa).
    pub youngs_modulus: f64,
    /// Density (kg/m³).
    pub density: f64,
}

impl Default for SectionMaterial {
    fn default() -> Self {
        Self {
            length: 0.4,
            width: 0.02,
            thickness: 0.8e-3,
            youngs_modulus: 70e9,
            density: 2700.0,
        }
    }
}

impl SectionMaterial {
    pub fn area(&self) -> f64 {
        self.width * self.thickness
    }

    pub fn second_moment(&self) -> f64 {
        self.width * self.thickness.powi(3) / 12.0
    }

    fn validate(&self) -> Result<(), FeError> {
        for (name, value) in [
            ("length", self.length),
            ("width", self.width),
            ("thickness", self.thickness),
            ("youngs_modulus", self.youngs_modulus),
            ("density", self.density),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(FeError::InvalidConstant { name, value });
            }
        }
        Ok(())
    }
}

/// Boundary restraints beyond the always-clamped beam ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxialRestraint {
    /// Only the end nodes hold `u = 0`.
    #[default]
    EndsOnly,
    /// Every node holds `u = 0` (pure bending model).
    AllNodes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DofKind {
    Axial,
    Transverse,
    Rotation,
}

/// Initial shape `z0(x)` and its slope.
pub fn initial_shape(x: f64, params: &GeometryParams, sm: &SectionMaterial) -> (f64, f64) {
    let l = sm.length;
    let a = params.rise * sm.thickness;
    let s = (PI * x / l).sin();
    let c = (PI * x / l).cos();
    let skew = 1.0 + params.skew * (2.0 * x / l - 1.0);
    let z = a * s * skew;
    let dz = a * (PI / l * c * skew + s * 2.0 * params.skew / l);
    (z, dz)
}

/// Black-box evaluation contract of a structural model.
///
/// Anything that can report mass, linear stiffness, internal force and
/// tangent stiffness on free DOFs can drive the reduction pipeline.
pub trait BlackBox: Sync {
    fn dim(&self) -> usize;
    fn mass_matrix(&self) -> DMatrix<f64>;
    fn linear_stiffness(&self) -> DMatrix<f64>;
    fn internal_force(&self, q: &DVector<f64>) -> Result<DVector<f64>, FeError>;
    fn tangent_stiffness(&self, q: &DVector<f64>) -> Result<DMatrix<f64>, FeError>;
}

/// Assembled clamped arch. Immutable once built.
#[derive(Debug, Clone)]
pub struct FeAssembly {
    params: GeometryParams,
    section: SectionMaterial,
    node_x: Vec<f64>,
    node_z0: Vec<f64>,
    connectivity: Vec<[usize; 2]>,
    elements: Vec<Element>,
    /// Global DOF -> free DOF index.
    free_index: Vec<Option<usize>>,
    /// Free DOF -> global DOF.
    free_dofs: Vec<usize>,
    clamped: Vec<usize>,
}

/// Builds the arch mesh with `n_elements` equal elements and both ends clamped.
pub fn build_assembly(
    params: GeometryParams,
    n_elements: usize,
    section: SectionMaterial,
    restraint: AxialRestraint,
) -> Result<FeAssembly, FeError> {
    section.validate()?;
    if n_elements < 4 {
        return Err(FeError::TooFewElements { min: 4, found: n_elements });
    }
    if !params.rise.is_finite() {
        return Err(FeError::NonFiniteParameter { name: "rise" });
    }
    if !params.skew.is_finite() {
        return Err(FeError::NonFiniteParameter { name: "skew" });
    }
    let n_nodes = n_elements + 1;
    let le = section.length / n_elements as f64;
    let node_x: Vec<f64> = (0..n_nodes).map(|k| k as f64 * le).collect();
    let shape: Vec<(f64, f64)> = node_x.iter().map(|&x| initial_shape(x, &params, &section)).collect();
    let connectivity: Vec<[usize; 2]> = (0..n_elements).map(|e| [e, e + 1]).collect();
    let elements = connectivity
        .iter()
        .map(|&[a, b]| Element::new([a, b], le, [shape[a].0, shape[b].0], [shape[a].1, shape[b].1]))
        .collect();

    let n_total = n_nodes * DOFS_PER_NODE;
    let mut clamped: Vec<usize> = Vec::new();
    for node in [0, n_nodes - 1] {
        for k in 0..DOFS_PER_NODE {
            clamped.push(node * DOFS_PER_NODE + k);
        }
    }
    if restraint == AxialRestraint::AllNodes {
        for node in 1..n_nodes - 1 {
            clamped.push(node * DOFS_PER_NODE);
        }
    }
    clamped.sort_unstable();
    let mut free_index = vec![None; n_total];
    let mut free_dofs = Vec::with_capacity(n_total - clamped.len());
    for (g, slot) in free_index.iter_mut().enumerate() {
        if clamped.binary_search(&g).is_err() {
            *slot = Some(free_dofs.len());
            free_dofs.push(g);
        }
    }
    Ok(FeAssembly {
        params,
        section,
        node_x,
        node_z0: shape.iter().map(|s| s.0).collect(),
        connectivity,
        elements,
        free_index,
        free_dofs,
        clamped,
    })
}

impl FeAssembly {
    pub fn params(&self) -> &GeometryParams {
        &self.params
    }

    pub fn section(&self) -> &SectionMaterial {
        &self.section
    }

    pub fn thickness(&self) -> f64 {
        self.section.thickness
    }

    pub fn n_free(&self) -> usize {
        self.free_dofs.len()
    }

    pub fn n_total_dofs(&self) -> usize {
        self.free_index.len()
    }

    pub fn n_elements(&self) -> usize {
        self.connectivity.len()
    }

    pub fn connectivity(&self) -> &[[usize; 2]] {
        &self.connectivity
    }

    pub fn node_x(&self) -> &[f64] {
        &self.node_x
    }

    pub fn node_z0(&self) -> &[f64] {
        &self.node_z0
    }

    pub fn clamped_dofs(&self) -> &[usize] {
        &self.clamped
    }

    pub fn dof_kind(&self, free: usize) -> DofKind {
        match self.free_dofs[free] % DOFS_PER_NODE {
            0 => DofKind::Axial,
            1 => DofKind::Transverse,
            _ => DofKind::Rotation,
        }
    }

    /// Free-DOF index of `(node, local dof)` if not clamped.
    pub fn free_dof(&self, node: usize, local: usize) -> Option<usize> {
        self.free_index.get(node * DOFS_PER_NODE + local).copied().flatten()
    }

    pub fn transverse_dofs(&self) -> Vec<usize> {
        (0..self.n_free()).filter(|&i| self.dof_kind(i) == DofKind::Transverse).collect()
    }

    pub fn axial_dofs(&self) -> Vec<usize> {
        (0..self.n_free()).filter(|&i| self.dof_kind(i) == DofKind::Axial).collect()
    }

    /// Transverse DOF of the node closest to midspan.
    pub fn midspan_transverse_dof(&self) -> usize {
        let node = self.node_x.len() / 2;
        self.free_dof(node, 1).expect("midspan node is never clamped")
    }

    /// Largest absolute transverse component of a free-DOF vector.
    pub fn max_transverse(&self, v: &DVector<f64>) -> f64 {
        self.transverse_dofs().iter().map(|&i| v[i].abs()).fold(0.0, f64::max)
    }

    fn element_free_map(&self, el: &Element) -> [Option<usize>; 6] {
        let mut map = [None; 6];
        for (a, &node) in el.nodes.iter().enumerate() {
            for k in 0..DOFS_PER_NODE {
                map[a * DOFS_PER_NODE + k] = self.free_index[node * DOFS_PER_NODE + k];
            }
        }
        map
    }

    fn gather(&self, map: &[Option<usize>; 6], q: &DVector<f64>) -> [f64; 6] {
        let mut d = [0.0; 6];
        for (a, slot) in map.iter().enumerate() {
            if let Some(i) = slot {
                d[a] = q[*i];
            }
        }
        d
    }

    fn check_len(&self, q: &DVector<f64>) -> Result<(), FeError> {
        if q.len() != self.n_free() {
            return Err(FeError::LengthMismatch { expected: self.n_free(), found: q.len() });
        }
        Ok(())
    }

    fn axial_rigidity(&self) -> f64 {
        self.section.youngs_modulus * self.section.area()
    }

    fn bending_rigidity(&self) -> f64 {
        self.section.youngs_modulus * self.section.second_moment()
    }

    /// Consistent mass on free DOFs.
    pub fn mass_matrix(&self) -> DMatrix<f64> {
        let n = self.n_free();
        let rho_a = self.section.density * self.section.area();
        let mut m = DMatrix::zeros(n, n);
        for el in &self.elements {
            let me = element_mass(el, rho_a);
            let map = self.element_free_map(el);
            for a in 0..6 {
                let Some(i) = map[a] else { continue };
                for b in 0..6 {
                    if let Some(j) = map[b] {
                        m[(i, j)] += me[a][b];
                    }
                }
            }
        }
        m
    }

    /// Consistent mass on all DOFs, before boundary conditions.
    pub fn full_mass_matrix(&self) -> DMatrix<f64> {
        let n = self.n_total_dofs();
        let rho_a = self.section.density * self.section.area();
        let mut m = DMatrix::zeros(n, n);
        for el in &self.elements {
            let me = element_mass(el, rho_a);
            for a in 0..6 {
                let i = el.nodes[a / 3] * DOFS_PER_NODE + a % 3;
                for b in 0..6 {
                    let j = el.nodes[b / 3] * DOFS_PER_NODE + b % 3;
                    m[(i, j)] += me[a][b];
                }
            }
        }
        m
    }

    pub fn internal_force(&self, q: &DVector<f64>) -> Result<DVector<f64>, FeError> {
        self.check_len(q)?;
        let (ea, ei) = (self.axial_rigidity(), self.bending_rigidity());
        let mut f = DVector::zeros(self.n_free());
        for el in &self.elements {
            let map = self.element_free_map(el);
            let d = self.gather(&map, q);
            let fe = element_force_tangent(el, &d, ea, ei, None);
            for a in 0..6 {
                if let Some(i) = map[a] {
                    f[i] += fe[a];
                }
            }
        }
        Ok(f)
    }

    pub fn tangent_stiffness(&self, q: &DVector<f64>) -> Result<DMatrix<f64>, FeError> {
        self.check_len(q)?;
        let (ea, ei) = (self.axial_rigidity(), self.bending_rigidity());
        let n = self.n_free();
        let mut k = DMatrix::zeros(n, n);
        for el in &self.elements {
            let map = self.element_free_map(el);
            let d = self.gather(&map, q);
            let mut ke = [[0.0; 6]; 6];
            element_force_tangent(el, &d, ea, ei, Some(&mut ke));
            for a in 0..6 {
                let Some(i) = map[a] else { continue };
                for b in 0..6 {
                    if let Some(j) = map[b] {
                        k[(i, j)] += ke[a][b];
                    }
                }
            }
        }
        Ok(k)
    }

    pub fn linear_stiffness(&self) -> DMatrix<f64> {
        self.tangent_stiffness(&DVector::zeros(self.n_free()))
            .expect("zero vector has the right length")
    }

    /// Consistent nodal load of a uniform pressure of 1 Pa acting in `+z`
    /// over the section width.
    pub fn uniform_pressure_pattern(&self) -> DVector<f64> {
        let mut f = DVector::zeros(self.n_free());
        let b = self.section.width;
        for el in &self.elements {
            let map = self.element_free_map(el);
            for g in &el.gauss {
                for a in 0..6 {
                    if let Some(i) = map[a] {
                        f[i] += g.weight * b * g.nw[a];
                    }
                }
            }
        }
        f
    }
}

impl BlackBox for FeAssembly {
    fn dim(&self) -> usize {
        self.n_free()
    }

    fn mass_matrix(&self) -> DMatrix<f64> {
        FeAssembly::mass_matrix(self)
    }

    fn linear_stiffness(&self) -> DMatrix<f64> {
        FeAssembly::linear_stiffness(self)
    }

    fn internal_force(&self, q: &DVector<f64>) -> Result<DVector<f64>, FeError> {
        FeAssembly::internal_force(self, q)
    }

    fn tangent_stiffness(&self, q: &DVector<f64>) -> Result<DMatrix<f64>, FeError> {
        FeAssembly::tangent_stiffness(self, q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::symmetric_eigenvalues;

    fn arch(rise: f64, skew: f64, n: usize) -> FeAssembly {
        build_assembly(GeometryParams::new(rise, skew), n, SectionMaterial::default(), AxialRestraint::EndsOnly)
            .unwrap()
    }

    #[test]
    fn flat_beam_has_zero_shape() {
        let a = arch(0.0, 0.0, 8);
        assert!(a.node_z0().iter().all(|&z| z == 0.0));
    }

    #[test]
    fn unit_rise_is_symmetric_with_peak_thickness() {
        let a = arch(1.0, 0.0, 8);
        let t = a.thickness();
        let z = a.node_z0();
        assert!((z[4] - t).abs() < 1e-15);
        for k in 0..=8 {
            assert!((z[k] - z[8 - k]).abs() < 1e-15);
        }
    }

    #[test]
    fn skew_breaks_symmetry() {
        let sm = SectionMaterial::default();
        let p = GeometryParams::new(1.0, 0.5);
        let (a, _) = initial_shape(sm.length / 4.0, &p, &sm);
        let (b, _) = initial_shape(3.0 * sm.length / 4.0, &p, &sm);
        // t·sin(π/4)·(1 ∓ 0.25)
        let s = sm.thickness * (PI / 4.0).sin();
        assert!((a - 0.75 * s).abs() < 1e-15);
        assert!((b - 1.25 * s).abs() < 1e-15);
        assert!((a - b).abs() > 1e-5);
    }

    #[test]
    fn slope_matches_finite_difference_of_shape() {
        let sm = SectionMaterial::default();
        let p = GeometryParams::new(1.3, -0.4);
        for &x in &[0.0, 0.07, 0.2, 0.33] {
            let h = 1e-6;
            let (zp, _) = initial_shape(x + h, &p, &sm);
            let (zm, _) = initial_shape(x - h, &p, &sm);
            let (_, dz) = initial_shape(x, &p, &sm);
            assert!(((zp - zm) / (2.0 * h) - dz).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut sm = SectionMaterial::default();
        sm.youngs_modulus = 0.0;
        assert!(matches!(
            build_assembly(GeometryParams::new(0.0, 0.0), 8, sm, AxialRestraint::EndsOnly),
            Err(FeError::InvalidConstant { name: "youngs_modulus", .. })
        ));
        assert!(matches!(
            build_assembly(GeometryParams::new(0.0, 0.0), 3, SectionMaterial::default(), AxialRestraint::EndsOnly),
            Err(FeError::TooFewElements { .. })
        ));
        let a = arch(0.5, 0.0, 6);
        assert!(matches!(
            a.internal_force(&DVector::zeros(3)),
            Err(FeError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn free_dof_count_and_topology() {
        let a = arch(1.0, 0.2, 10);
        let b = arch(0.3, -0.4, 10);
        assert_eq!(a.n_free(), 11 * 3 - 6);
        assert_eq!(a.connectivity(), b.connectivity());
        assert_eq!(a.clamped_dofs(), b.clamped_dofs());
    }

    #[test]
    fn mass_is_symmetric_positive_definite() {
        let a = arch(1.2, 0.3, 12);
        let m = a.mass_matrix();
        assert_eq!((&m - m.transpose()).norm(), 0.0);
        let ev = symmetric_eigenvalues(&m);
        assert!(ev.iter().all(|&l| l > 0.0));
    }

    #[test]
    fn mass_recovers_beam_mass() {
        let a = arch(0.8, 0.1, 16);
        let m = a.full_mass_matrix();
        let ones: DVector<f64> = DVector::from_fn(a.n_total_dofs(), |g, _| if g % 3 == 1 { 1.0 } else { 0.0 });
        let total = (ones.transpose() * &m * &ones)[(0, 0)];
        let sm = a.section();
        let exact = sm.density * sm.width * sm.thickness * sm.length;
        assert!(((total - exact) / exact).abs() < 0.01);
    }

    #[test]
    fn linear_stiffness_is_tangent_at_zero_and_spd() {
        let a = arch(1.0, 0.2, 12);
        let k1 = a.linear_stiffness();
        let kt = a.tangent_stiffness(&DVector::zeros(a.n_free())).unwrap();
        assert_eq!(k1, kt);
        assert!((&k1 - k1.transpose()).norm() <= 1e-12 * k1.norm());
        assert!(symmetric_eigenvalues(&k1).iter().all(|&l| l > 0.0));
    }

    #[test]
    fn flat_beam_decouples_membrane_and_bending() {
        let a = arch(0.0, 0.0, 10);
        let k1 = a.linear_stiffness();
        for i in a.axial_dofs() {
            for j in 0..a.n_free() {
                if a.dof_kind(j) != DofKind::Axial {
                    assert_eq!(k1[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn unloaded_reference_has_zero_force() {
        let a = arch(1.0, 0.4, 10);
        let f = a.internal_force(&DVector::zeros(a.n_free())).unwrap();
        assert_eq!(f.norm(), 0.0);
    }

    #[test]
    fn pressure_pattern_sums_to_total_load() {
        let a = arch(0.0, 0.0, 10);
        let f = a.uniform_pressure_pattern();
        let total: f64 = a.transverse_dofs().iter().map(|&i| f[i]).sum();
        let sm = a.section();
        // clamped end nodes carry half an element each
        let expected = sm.width * sm.length * (1.0 - 1.0 / 10.0);
        assert!((total - expected).abs() < 1e-12);
    }
}
