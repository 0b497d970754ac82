//! Fully symmetric tensors stored by unique (sorted) index tuples.
//!
//! A tensor `T` of order `K` acts on a reduced state as
//! `f_i = Σ T_{i j..} η_j ..` (order-3: quadratic forces, order-4: cubic
//! forces). Only entries with non-decreasing indices are stored; contraction
//! runs over precomputed orbit tables that carry the permutation
//! multiplicities.

use nalgebra::{DMatrix, DVector};

/// Number of unique entries of a symmetric order-`k` tensor in dimension `m`.
pub fn unique_count(m: usize, k: usize) -> usize {
    binomial(m + k - 1, k)
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) as u128 / (i + 1) as u128;
    }
    r as usize
}

/// Number of distinct orderings of a small multiset.
fn orderings(rest: &[usize]) -> f64 {
    let n = rest.len();
    const FACT: [f64; 5] = [1.0, 1.0, 2.0, 6.0, 24.0];
    let mut denom = 1.0;
    let mut sorted = rest.to_vec();
    sorted.sort_unstable();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && sorted[j] == sorted[i] {
            j += 1;
        }
        denom *= FACT[j - i];
        i = j;
    }
    FACT[n] / denom
}

/// Removes one occurrence of `value` from a sorted tuple.
fn remove_one(tuple: &[usize], value: usize) -> Vec<usize> {
    let mut out = tuple.to_vec();
    let pos = out.iter().position(|&x| x == value).expect("value in tuple");
    out.remove(pos);
    out
}

fn distinct(tuple: &[usize]) -> Vec<usize> {
    let mut d = tuple.to_vec();
    d.dedup();
    d
}

#[derive(Debug, Clone, PartialEq)]
struct ForceTerm {
    entry: usize,
    out: usize,
    coeff: f64,
    rest: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
struct TangentTerm {
    entry: usize,
    row: usize,
    col: usize,
    coeff: f64,
    rest: Vec<usize>,
}

/// Symmetric tensor of order `order` (3 or 4) in dimension `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTensor {
    m: usize,
    order: usize,
    data: Vec<f64>,
    tuples: Vec<Vec<usize>>,
    force_terms: Vec<ForceTerm>,
    tangent_terms: Vec<TangentTerm>,
}

impl SymTensor {
    pub fn zeros(m: usize, order: usize) -> Self {
        assert!(order == 3 || order == 4, "only order 3 and 4 tensors are supported");
        let tuples = enumerate_tuples(m, order);
        let mut force_terms = Vec::new();
        let mut tangent_terms = Vec::new();
        for (e, t) in tuples.iter().enumerate() {
            for i in distinct(t) {
                let rest = remove_one(t, i);
                force_terms.push(ForceTerm { entry: e, out: i, coeff: orderings(&rest), rest: rest.clone() });
                for j in distinct(&rest) {
                    let rest2 = remove_one(&rest, j);
                    tangent_terms.push(TangentTerm {
                        entry: e,
                        row: i,
                        col: j,
                        coeff: (order - 1) as f64 * orderings(&rest2),
                        rest: rest2,
                    });
                }
            }
        }
        Self { m, order, data: vec![0.0; tuples.len()], tuples, force_terms, tangent_terms }
    }

    pub fn from_unique(m: usize, order: usize, data: Vec<f64>) -> Self {
        let mut t = Self::zeros(m, order);
        assert_eq!(data.len(), t.data.len(), "unique entry count mismatch");
        t.data = data;
        t
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Unique entries in colexicographic order of sorted index tuples.
    pub fn unique(&self) -> &[f64] {
        &self.data
    }

    pub fn unique_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn tuples(&self) -> &[Vec<usize>] {
        &self.tuples
    }

    /// Position of an arbitrary index tuple in unique storage.
    pub fn rank(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.order);
        let mut s = idx.to_vec();
        s.sort_unstable();
        s.iter().enumerate().map(|(p, &v)| binomial(v + p, p + 1)).sum()
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.rank(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f64) {
        let r = self.rank(idx);
        self.data[r] = value;
    }

    pub fn scale(&mut self, c: f64) {
        self.data.iter_mut().for_each(|x| *x *= c);
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0.0)
    }

    /// Dense row-major expansion of length `m^order`.
    pub fn to_dense(&self) -> Vec<f64> {
        let m = self.m;
        let len = m.pow(self.order as u32);
        let mut out = vec![0.0; len];
        let mut idx = vec![0usize; self.order];
        for (flat, slot) in out.iter_mut().enumerate() {
            let mut r = flat;
            for p in (0..self.order).rev() {
                idx[p] = r % m;
                r /= m;
            }
            *slot = self.get(&idx);
        }
        out
    }

    /// Frobenius norm of the dense expansion.
    pub fn frobenius(&self) -> f64 {
        self.tuples
            .iter()
            .zip(&self.data)
            .map(|(t, v)| orderings(t) * v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Averages a dense tensor over all index permutations.
    ///
    /// Returns the symmetric tensor and the relative Frobenius norm of the
    /// removed antisymmetric part.
    pub fn symmetrize_dense(m: usize, order: usize, dense: &[f64]) -> (Self, f64) {
        assert_eq!(dense.len(), m.pow(order as u32));
        let mut t = Self::zeros(m, order);
        let mut counts = vec![0.0; t.data.len()];
        let mut idx = vec![0usize; order];
        for (flat, &v) in dense.iter().enumerate() {
            let mut r = flat;
            for p in (0..order).rev() {
                idx[p] = r % m;
                r /= m;
            }
            let k = t.rank(&idx);
            t.data[k] += v;
            counts[k] += 1.0;
        }
        for (x, c) in t.data.iter_mut().zip(&counts) {
            *x /= c;
        }
        let mut dev = 0.0;
        let mut idx = vec![0usize; order];
        for (flat, &v) in dense.iter().enumerate() {
            let mut r = flat;
            for p in (0..order).rev() {
                idx[p] = r % m;
                r /= m;
            }
            let d = v - t.get(&idx);
            dev += d * d;
        }
        let norm = t.frobenius();
        let diag = if norm > 0.0 { dev.sqrt() / norm } else { dev.sqrt() };
        (t, diag)
    }

    /// Adds `Σ T_{i ..} η ..` to `out`.
    pub fn add_force(&self, eta: &DVector<f64>, out: &mut DVector<f64>) {
        for term in &self.force_terms {
            let v = self.data[term.entry];
            if v == 0.0 {
                continue;
            }
            let p: f64 = term.rest.iter().map(|&r| eta[r]).product();
            out[term.out] += term.coeff * v * p;
        }
    }

    /// Adds the Jacobian of [`Self::add_force`] with respect to `η`.
    pub fn add_tangent(&self, eta: &DVector<f64>, out: &mut DMatrix<f64>) {
        for term in &self.tangent_terms {
            let v = self.data[term.entry];
            if v == 0.0 {
                continue;
            }
            let p: f64 = term.rest.iter().map(|&r| eta[r]).product();
            out[(term.row, term.col)] += term.coeff * v * p;
        }
    }
}

fn enumerate_tuples(m: usize, order: usize) -> Vec<Vec<usize>> {
    fn rec(m: usize, order: usize, upper: usize, acc: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if acc.len() == order {
            let mut t = acc.clone();
            t.reverse();
            out.push(t);
            return;
        }
        for v in 0..=upper.min(m.saturating_sub(1)) {
            acc.push(v);
            rec(m, order, v, acc, out);
            acc.pop();
        }
    }
    if m == 0 {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(unique_count(m, order));
    let mut acc = Vec::with_capacity(order);
    rec(m, order, m - 1, &mut acc, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unique_counts() {
        assert_eq!(unique_count(4, 3), 20);
        assert_eq!(unique_count(4, 4), 35);
        assert_eq!(SymTensor::zeros(5, 3).unique().len(), 35);
        assert_eq!(SymTensor::zeros(5, 4).unique().len(), 70);
    }

    #[test]
    fn rank_matches_enumeration_order() {
        for order in [3, 4] {
            let t = SymTensor::zeros(6, order);
            for (k, tup) in t.tuples().iter().enumerate() {
                assert_eq!(t.rank(tup), k);
            }
        }
    }

    fn dense_force(dense: &[f64], m: usize, order: usize, eta: &DVector<f64>) -> DVector<f64> {
        let mut f = DVector::zeros(m);
        for (flat, &v) in dense.iter().enumerate() {
            let mut idx = vec![0; order];
            let mut r = flat;
            for p in (0..order).rev() {
                idx[p] = r % m;
                r /= m;
            }
            let prod: f64 = idx[1..].iter().map(|&j| eta[j]).product();
            f[idx[0]] += v * prod;
        }
        f
    }

    proptest! {
        #[test]
        fn contraction_matches_dense(seed in any::<u64>(), m in 1usize..5, order in 3usize..5) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = unique_count(m, order);
            let t = SymTensor::from_unique(m, order, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect());
            let eta = DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0));
            let dense = t.to_dense();
            let mut f = DVector::zeros(m);
            t.add_force(&eta, &mut f);
            let fd = dense_force(&dense, m, order, &eta);
            prop_assert!((&f - &fd).norm() <= 1e-12 * (1.0 + fd.norm()));

            // tangent against central differences (exact for polynomials up to rounding)
            let mut j = DMatrix::zeros(m, m);
            t.add_tangent(&eta, &mut j);
            let h = 1e-4;
            for c in 0..m {
                let mut ep = eta.clone();
                ep[c] += h;
                let mut em = eta.clone();
                em[c] -= h;
                let col = (dense_force(&dense, m, order, &ep) - dense_force(&dense, m, order, &em)) / (2.0 * h);
                for r in 0..m {
                    prop_assert!((col[r] - j[(r, c)]).abs() < 1e-6);
                }
            }
            prop_assert!((&j - j.transpose()).norm() < 1e-12 * (1.0 + j.norm()));

            let (back, asym) = SymTensor::symmetrize_dense(m, order, &dense);
            prop_assert!(asym < 1e-14);
            prop_assert!((back.frobenius() - t.frobenius()).abs() < 1e-12 * (1.0 + t.frobenius()));
        }
    }

    #[test]
    fn perturbed_entry_gives_proportional_asymmetry() {
        let m = 3;
        let t = SymTensor::from_unique(m, 3, (0..10).map(|k| k as f64 + 1.0).collect());
        let base = t.to_dense();
        let mut d1 = base.clone();
        d1[1] += 1e-3;
        let mut d2 = base.clone();
        d2[1] += 2e-3;
        let (_, a1) = SymTensor::symmetrize_dense(m, 3, &d1);
        let (_, a2) = SymTensor::symmetrize_dense(m, 3, &d2);
        assert!(a1 > 0.0);
        assert!((a2 / a1 - 2.0).abs() < 1e-3);
    }

    #[test]
    fn frobenius_matches_dense() {
        let t = SymTensor::from_unique(3, 4, (0..15).map(|k| (k as f64).sin()).collect());
        let d: f64 = t.to_dense().iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((d - t.frobenius()).abs() < 1e-13);
    }
}
