//! Double-double arithmetic (about 106 significant bits) for the kernel
//! solve and evaluation, where flat shape parameters drive the kernel
//! matrix condition past what plain `f64` resolves.

use std::ops::{Add, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub(crate) struct Dd {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

const LN2: Dd = Dd { hi: std::f64::consts::LN_2, lo: 2.319_046_813_846_299_6e-17 };

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub fn new(hi: f64, lo: f64) -> Self {
        let (hi, lo) = two_sum(hi, lo);
        Self { hi, lo }
    }

    /// `a − b` without rounding.
    pub fn diff(a: f64, b: f64) -> Self {
        let (hi, lo) = two_sum(a, -b);
        Self { hi, lo }
    }

    pub fn square(a: f64) -> Self {
        let (hi, lo) = two_prod(a, a);
        Self { hi, lo }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn mul_f64(self, b: f64) -> Self {
        let (p, e) = two_prod(self.hi, b);
        let (hi, lo) = quick_two_sum(p, e + self.lo * b);
        Self { hi, lo }
    }

    pub fn div(self, y: Dd) -> Self {
        let q1 = self.hi / y.hi;
        let r = self - y.mul_f64(q1);
        let q2 = r.hi / y.hi;
        let r = r - y.mul_f64(q2);
        let q3 = r.hi / y.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo } + Dd::from(q3)
    }

    /// `1/√x` for `x > 0`: one Newton step from the `f64` estimate.
    pub fn recip_sqrt(self) -> Self {
        let y = Dd::from(1.0 / self.hi.sqrt());
        let e = Dd::ONE - self * y * y;
        y + y * e.mul_f64(0.5)
    }

    pub fn exp(self) -> Self {
        if self.hi < -745.0 {
            return Dd::ZERO;
        }
        let k = (self.hi / LN2.hi).round();
        // r = (x − k ln2) / 2¹⁰, |r| ≤ 3.4e-4
        let r = (self - LN2.mul_f64(k)).mul_f64(1.0 / 1024.0);
        let mut term = r;
        let mut sum = r;
        for n in 2..=12 {
            term = (term * r).div(Dd::from(n as f64));
            sum = sum + term;
            if term.hi.abs() < 1e-36 {
                break;
            }
        }
        // e^r − 1 squared up ten times: (1 + s)² − 1 = s (2 + s)
        for _ in 0..10 {
            sum = sum * (sum + Dd::from(2.0));
        }
        let e = sum + Dd::ONE;
        let scale = 2f64.powi(k as i32);
        Dd { hi: e.hi * scale, lo: e.lo * scale }
    }
}

impl From<f64> for Dd {
    fn from(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, y: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, y.hi);
        let (t, f) = two_sum(self.lo, y.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, y: Dd) -> Dd {
        self + (-y)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, y: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, y.hi);
        let (hi, lo) = quick_two_sum(p, e + (self.hi * y.lo + self.lo * y.hi));
        Dd { hi, lo }
    }
}

/// LU factorization with partial pivoting in double-double.
#[derive(Debug, Clone)]
pub(crate) struct DdLu {
    n: usize,
    /// Row-major packed `L` (unit diagonal, below) and `U`.
    a: Vec<Dd>,
    perm: Vec<usize>,
}

impl DdLu {
    /// `None` if a pivot falls below `tiny` times the largest entry.
    pub fn factor(n: usize, mut a: Vec<Dd>, tiny: f64) -> Option<Self> {
        let scale = a.iter().map(|x| x.hi.abs()).fold(0.0, f64::max);
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let p = (k..n).max_by(|&i, &j| a[i * n + k].hi.abs().total_cmp(&a[j * n + k].hi.abs()))?;
            if !(a[p * n + k].hi.abs() > tiny * scale) {
                return None;
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let piv = a[k * n + k];
            for i in k + 1..n {
                let l = a[i * n + k].div(piv);
                a[i * n + k] = l;
                for j in k + 1..n {
                    a[i * n + j] = a[i * n + j] - l * a[k * n + j];
                }
            }
        }
        Some(Self { n, a, perm })
    }

    pub fn solve(&self, b: &[Dd]) -> Vec<Dd> {
        let n = self.n;
        let mut x: Vec<Dd> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                x[i] = x[i] - self.a[i * n + j] * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                x[i] = x[i] - self.a[i * n + j] * x[j];
            }
            x[i] = x[i].div(self.a[i * n + i]);
        }
        x
    }
}
