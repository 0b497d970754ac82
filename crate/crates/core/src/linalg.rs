//! Dense linear-algebra helpers shared by the modal and basis stages.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix `{0}` is not symmetric positive definite")]
    NotSpd(&'static str),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

pub fn symmetric_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(a.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Largest-magnitude entry positive (first one wins on ties).
pub fn fix_sign(mut v: nalgebra::DVectorViewMut<'_, f64>) {
    let mut best = 0;
    let mut best_abs = -1.0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > best_abs {
            best_abs = x.abs();
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.neg_mut();
    }
}

pub fn fix_column_signs(a: &mut DMatrix<f64>) {
    for mut c in a.column_iter_mut() {
        let mut best = 0;
        let mut best_abs = -1.0;
        for (i, x) in c.iter().enumerate() {
            if x.abs() > best_abs {
                best_abs = x.abs();
                best = i;
            }
        }
        if c[best] < 0.0 {
            c.neg_mut();
        }
    }
}

fn cholesky(a: &DMatrix<f64>, name: &'static str) -> Result<Cholesky<f64, Dyn>, LinalgError> {
    Cholesky::new(a.clone()).ok_or(LinalgError::NotSpd(name))
}

fn check_square_pair(m: &DMatrix<f64>, k: &DMatrix<f64>) -> Result<(), LinalgError> {
    if !m.is_square() || m.shape() != k.shape() {
        return Err(LinalgError::Dimension(format!(
            "mass {:?} and stiffness {:?} must be square and equal in shape",
            m.shape(),
            k.shape()
        )));
    }
    Ok(())
}

/// Lowest `count` eigenpairs of `K φ = ω² M φ`, mass-normalized, ascending.
///
/// Uses the inverted pencil `L⁻¹ M L⁻ᵀ` with `K = L Lᵀ`, whose dominant
/// eigenvalues `1/ω²` are the wanted ones; this keeps the low modes at full
/// relative accuracy when the stiffness spectrum is very wide.
pub fn lowest_modes(
    m: &DMatrix<f64>,
    k: &DMatrix<f64>,
    count: usize,
) -> Result<(Vec<f64>, DMatrix<f64>), LinalgError> {
    check_square_pair(m, k)?;
    let n = m.nrows();
    let count = count.min(n);
    cholesky(m, "mass")?;
    let lk = cholesky(k, "stiffness")?;
    let l = lk.l();
    // B = L⁻¹ M L⁻ᵀ
    let x = l.solve_lower_triangular(m).expect("Cholesky factor is invertible");
    let b = l.solve_lower_triangular(&x.transpose()).expect("Cholesky factor is invertible");
    let b = (&b + b.transpose()) * 0.5;
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &c| eig.eigenvalues[c].total_cmp(&eig.eigenvalues[a]));
    let lt = l.transpose();
    let mut phi = DMatrix::zeros(n, count);
    let mut omega2 = Vec::with_capacity(count);
    for (col, &j) in order.iter().take(count).enumerate() {
        let y = eig.eigenvectors.column(j).into_owned();
        let v = lt.solve_upper_triangular(&y).expect("Cholesky factor is invertible");
        let mut v = refine_mode(m, k, v);
        let mass = v.dot(&(m * &v));
        v /= mass.sqrt();
        let kv = k * &v;
        omega2.push(v.dot(&kv));
        phi.set_column(col, &v);
    }
    fix_column_signs(&mut phi);
    Ok((omega2, phi))
}

/// One Rayleigh-quotient inverse-iteration step on a converged eigenvector.
fn refine_mode(m: &DMatrix<f64>, k: &DMatrix<f64>, v: DVector<f64>) -> DVector<f64> {
    let mv = m * &v;
    let rq = v.dot(&(k * &v)) / v.dot(&mv);
    // slight shift below the Rayleigh quotient keeps the shifted matrix regular
    let shifted = k - m * (rq * (1.0 - 1e-10));
    match shifted.lu().solve(&mv) {
        Some(w) if w.iter().all(|x| x.is_finite()) && w.norm() > 0.0 => {
            let s = w.dot(&mv).signum();
            w * s
        }
        _ => v,
    }
}

/// All eigenpairs of a small pencil `(K, M)` by Cholesky reduction of `M`
/// to a standard symmetric problem. Ascending, mass-normalized.
pub fn pencil_eigen(m: &DMatrix<f64>, k: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>), LinalgError> {
    check_square_pair(m, k)?;
    let n = m.nrows();
    let lm = cholesky(m, "reduced mass")?;
    cholesky(k, "reduced stiffness")?;
    let l = lm.l();
    let x = l.solve_lower_triangular(k).expect("Cholesky factor is invertible");
    let a = l.solve_lower_triangular(&x.transpose()).expect("Cholesky factor is invertible");
    let a = (&a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &c| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[c]));
    let lt = l.transpose();
    let mut phi = DMatrix::zeros(n, n);
    let mut omega2 = Vec::with_capacity(n);
    for (col, &j) in order.iter().enumerate() {
        let y = eig.eigenvectors.column(j).into_owned();
        let v = lt.solve_upper_triangular(&y).expect("Cholesky factor is invertible");
        omega2.push(eig.eigenvalues[j]);
        phi.set_column(col, &v);
    }
    Ok((omega2, phi))
}

/// Thin SVD with singular values sorted in descending order and left
/// singular vectors sign-fixed.
pub fn sorted_svd(a: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let mut us = DMatrix::zeros(a.nrows(), order.len());
    let mut sigma = Vec::with_capacity(order.len());
    for (c, &j) in order.iter().enumerate() {
        us.set_column(c, &u.column(j));
        sigma.push(svd.singular_values[j]);
    }
    fix_column_signs(&mut us);
    (us, sigma)
}

/// Orthogonal projector onto the column space, `A A⁺`.
pub fn range_projector(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (u, sigma) = sorted_svd(a);
    let tol = sigma.first().copied().unwrap_or(0.0) * 1e-12 * a.nrows().max(a.ncols()) as f64;
    let r = sigma.iter().filter(|&&s| s > tol).count();
    let ur = u.columns(0, r);
    &ur * ur.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize, seed: u64) -> DMatrix<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(n, n) * n as f64
    }

    #[test]
    fn pencil_routes_agree() {
        let m = spd(7, 1);
        let k = spd(7, 2);
        let (w1, p1) = lowest_modes(&m, &k, 7).unwrap();
        let (w2, p2) = pencil_eigen(&m, &k).unwrap();
        for i in 0..7 {
            assert!((w1[i] - w2[i]).abs() < 1e-10 * w2[i]);
            let a = p1.column(i).dot(&(&m * p2.column(i))).abs();
            assert!((a - 1.0).abs() < 1e-9);
        }
        let mm = p2.transpose() * &m * &p2;
        assert!((mm - DMatrix::identity(7, 7)).amax() < 1e-12);
    }

    #[test]
    fn rejects_indefinite() {
        let m = DMatrix::identity(3, 3);
        let k = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0, 2.0]));
        assert!(matches!(lowest_modes(&m, &k, 2), Err(LinalgError::NotSpd(_))));
        assert!(matches!(pencil_eigen(&m, &k), Err(LinalgError::NotSpd(_))));
    }

    #[test]
    fn svd_sorted_descending() {
        let a = DMatrix::from_fn(6, 4, |i, j| ((i * 4 + j) as f64).sin());
        let (u, s) = sorted_svd(&a);
        assert!(s.windows(2).all(|w| w[0] >= w[1]));
        let utu = u.transpose() * &u;
        assert!((utu - DMatrix::identity(4, 4)).amax() < 1e-12);
    }
}
