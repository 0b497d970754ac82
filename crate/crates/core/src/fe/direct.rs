//! Intrusive projection of the element nonlinear stiffness onto a basis.
//!
//! Test-only oracle: the reduction pipeline never calls it.

use nalgebra::DMatrix;

use super::element::dot6;
use super::{FeAssembly, FeError};
use crate::tensor::SymTensor;

/// Reduced quadratic and cubic stiffness tensors of `a` on the columns of `v`,
/// contracted element by element from the exact von Kármán integrands.
///
/// With `L = (u' + z0' w')` and `S = w'` evaluated on each basis vector, the
/// membrane energy gives per integration point
/// `K2_ijk = EA/2 (L_i S_j S_k + S_i L_j S_k + S_i S_j L_k)` and
/// `K3_ijkl = EA/2 S_i S_j S_k S_l`, both fully symmetric.
pub fn reduced_tensors_direct(a: &FeAssembly, v: &DMatrix<f64>) -> Result<(SymTensor, SymTensor), FeError> {
    if v.nrows() != a.n_free() {
        return Err(FeError::DimensionMismatch { expected: a.n_free(), found: v.nrows() });
    }
    let m = v.ncols();
    let ea = a.section.youngs_modulus * a.section.area();
    let mut k2 = SymTensor::zeros(m, 3);
    let mut k3 = SymTensor::zeros(m, 4);
    let t2: Vec<[usize; 3]> = k2.tuples().iter().map(|t| [t[0], t[1], t[2]]).collect();
    let t3: Vec<[usize; 4]> = k3.tuples().iter().map(|t| [t[0], t[1], t[2], t[3]]).collect();
    let mut lin = vec![0.0; m];
    let mut slope = vec![0.0; m];
    for el in &a.elements {
        let map = a.element_free_map(el);
        let local: Vec<[f64; 6]> = (0..m)
            .map(|c| {
                let mut d = [0.0; 6];
                for (k, slot) in map.iter().enumerate() {
                    if let Some(i) = slot {
                        d[k] = v[(*i, c)];
                    }
                }
                d
            })
            .collect();
        for g in &el.gauss {
            for c in 0..m {
                let s = dot6(&g.bs, &local[c]);
                slope[c] = s;
                lin[c] = dot6(&g.bu, &local[c]) + g.z0_slope * s;
            }
            let w = 0.5 * ea * g.weight;
            for (x, &[i, j, k]) in k2.unique_mut().iter_mut().zip(&t2) {
                *x += w
                    * (lin[i] * slope[j] * slope[k] + slope[i] * lin[j] * slope[k] + slope[i] * slope[j] * lin[k]);
            }
            for (x, &[i, j, k, l]) in k3.unique_mut().iter_mut().zip(&t3) {
                *x += w * slope[i] * slope[j] * slope[k] * slope[l];
            }
        }
    }
    Ok((k2, k3))
}
