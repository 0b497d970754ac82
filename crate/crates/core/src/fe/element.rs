//! Element-level kinematics of the 2-node von Kármán beam.
//!
//! Axial displacement `u` is interpolated linearly, transverse displacement
//! `w` with Hermite cubics on `(w, w')`. Element DOF order is
//! `[u1, w1, θ1, u2, w2, θ2]`.

/// Five-point Gauss–Legendre rule mapped to `[0, 1]`.
///
/// The membrane energy density `ε²` reaches degree 8 in the element
/// coordinate, which this rule integrates exactly (degree 9).
pub(crate) const GAUSS_POINTS: [(f64, f64); 5] = {
    const A: f64 = 0.906_179_845_938_664; // ±sqrt(5 + 2 sqrt(10/7)) / 3
    const B: f64 = 0.538_469_310_105_683_1;
    const WA: f64 = 0.236_926_885_056_189_1;
    const WB: f64 = 0.478_628_670_499_366_5;
    const W0: f64 = 0.568_888_888_888_888_9;
    [
        (0.5 * (1.0 - A), 0.5 * WA),
        (0.5 * (1.0 - B), 0.5 * WB),
        (0.5, 0.5 * W0),
        (0.5 * (1.0 + B), 0.5 * WB),
        (0.5 * (1.0 + A), 0.5 * WA),
    ]
};

/// Shape-function data at one integration point of one element.
#[derive(Debug, Clone)]
pub(crate) struct GaussPoint {
    /// Quadrature weight times element length.
    pub weight: f64,
    /// `u'` operator.
    pub bu: [f64; 6],
    /// `w'` operator.
    pub bs: [f64; 6],
    /// `w''` operator.
    pub bk: [f64; 6],
    /// `u` interpolation.
    pub nu: [f64; 6],
    /// `w` interpolation.
    pub nw: [f64; 6],
    /// Initial-shape slope `z0'` at the point.
    pub z0_slope: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct Element {
    pub nodes: [usize; 2],
    pub gauss: Vec<GaussPoint>,
}

impl Element {
    /// `z0` and `z0'` are nodal values of the initial shape; inside the
    /// element the shape is Hermite-interpolated like `w`.
    pub fn new(nodes: [usize; 2], length: f64, z0: [f64; 2], z0_slope: [f64; 2]) -> Self {
        let le = length;
        let gauss = GAUSS_POINTS
            .iter()
            .map(|&(xi, w)| {
                let (n, dn, d2n) = hermite(xi, le);
                let bu = [-1.0 / le, 0.0, 0.0, 1.0 / le, 0.0, 0.0];
                let nu = [1.0 - xi, 0.0, 0.0, xi, 0.0, 0.0];
                let nw = [0.0, n[0], n[1], 0.0, n[2], n[3]];
                let bs = [0.0, dn[0] / le, dn[1] / le, 0.0, dn[2] / le, dn[3] / le];
                let le2 = le * le;
                let bk = [0.0, d2n[0] / le2, d2n[1] / le2, 0.0, d2n[2] / le2, d2n[3] / le2];
                let z0_dofs = [z0[0], z0_slope[0], z0[1], z0_slope[1]];
                let z0p = (0..4).map(|a| dn[a] * z0_dofs[a]).sum::<f64>() / le;
                GaussPoint {
                    weight: w * le,
                    bu,
                    bs,
                    bk,
                    nu,
                    nw,
                    z0_slope: z0p,
                }
            })
            .collect();
        Self { nodes, gauss }
    }
}

/// Hermite cubics and their first/second derivatives with respect to `ξ`.
fn hermite(xi: f64, le: f64) -> ([f64; 4], [f64; 4], [f64; 4]) {
    let x2 = xi * xi;
    let x3 = x2 * xi;
    let n = [
        1.0 - 3.0 * x2 + 2.0 * x3,
        le * (xi - 2.0 * x2 + x3),
        3.0 * x2 - 2.0 * x3,
        le * (-x2 + x3),
    ];
    let dn = [
        -6.0 * xi + 6.0 * x2,
        le * (1.0 - 4.0 * xi + 3.0 * x2),
        6.0 * xi - 6.0 * x2,
        le * (-2.0 * xi + 3.0 * x2),
    ];
    let d2n = [-6.0 + 12.0 * xi, le * (-4.0 + 6.0 * xi), 6.0 - 12.0 * xi, le * (-2.0 + 6.0 * xi)];
    (n, dn, d2n)
}

#[inline]
pub(crate) fn dot6(a: &[f64; 6], b: &[f64; 6]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Element internal force and (optionally) tangent for element displacements `d`.
pub(crate) fn element_force_tangent(
    el: &Element,
    d: &[f64; 6],
    ea: f64,
    ei: f64,
    mut tangent: Option<&mut [[f64; 6]; 6]>,
) -> [f64; 6] {
    let mut f = [0.0; 6];
    for g in &el.gauss {
        let slope = dot6(&g.bs, d);
        let strain = dot6(&g.bu, d) + g.z0_slope * slope + 0.5 * slope * slope;
        let curvature = dot6(&g.bk, d);
        let c = g.z0_slope + slope;
        let mut be = [0.0; 6];
        for a in 0..6 {
            be[a] = g.bu[a] + c * g.bs[a];
            f[a] += g.weight * (ea * strain * be[a] + ei * curvature * g.bk[a]);
        }
        if let Some(k) = tangent.as_deref_mut() {
            for a in 0..6 {
                for b in 0..6 {
                    k[a][b] += g.weight
                        * (ea * be[a] * be[b] + ea * strain * g.bs[a] * g.bs[b] + ei * g.bk[a] * g.bk[b]);
                }
            }
        }
    }
    f
}

/// Consistent element mass for `ρA`.
pub(crate) fn element_mass(el: &Element, rho_a: f64) -> [[f64; 6]; 6] {
    let mut m = [[0.0; 6]; 6];
    for g in &el.gauss {
        for a in 0..6 {
            for b in 0..6 {
                m[a][b] += g.weight * rho_a * (g.nu[a] * g.nu[b] + g.nw[a] * g.nw[b]);
            }
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rule_integrates_degree_nine() {
        for deg in 0..=9 {
            let s: f64 = GAUSS_POINTS.iter().map(|&(x, w)| w * x.powi(deg)).sum();
            assert!((s - 1.0 / (deg as f64 + 1.0)).abs() < 1e-15, "degree {deg}");
        }
    }

    #[test]
    fn hermite_partition_of_unity() {
        for &(xi, _) in &GAUSS_POINTS {
            let (n, dn, _) = hermite(xi, 0.3);
            assert!((n[0] + n[2] - 1.0).abs() < 1e-15);
            assert!((dn[0] + dn[2]).abs() < 1e-15);
        }
    }
}
