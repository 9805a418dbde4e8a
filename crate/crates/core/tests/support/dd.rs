//! Double-double arithmetic (~106-bit significand) for gradient oracles.
//!
//! Central differences of an O(1) loss evaluated in `f64` carry a roundoff
//! floor near 1e-11, which swamps relative comparisons for gradients below
//! 1e-7. Oracles here evaluate the loss in double-double and return the
//! difference from a baseline, so the `f64` handed to the finite-difference
//! routine keeps full relative precision.

#![allow(dead_code)]

use std::ops::{Add, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

const LN2: Dd = Dd {
    hi: std::f64::consts::LN_2,
    lo: 2.319_046_813_846_299_6e-17,
};

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

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub fn from(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn div_f64(self, b: f64) -> Dd {
        let q1 = self.hi / b;
        let r = self - Dd::from(b) * Dd::from(q1);
        let q2 = r.hi / b;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo }
    }

    pub fn div(self, b: Dd) -> Dd {
        let q1 = self.hi / b.hi;
        let r = self - b * Dd::from(q1);
        let q2 = r.hi / b.hi;
        let r = r - b * Dd::from(q2);
        let q3 = r.hi / b.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo } + Dd::from(q3)
    }

    pub fn max(self, other: Dd) -> Dd {
        if other > self {
            other
        } else {
            self
        }
    }

    pub fn exp(self) -> Dd {
        if self.hi == 0.0 {
            return Dd::ONE;
        }
        let k = (self.hi / LN2.hi).round();
        let r = self - LN2 * Dd::from(k);
        // scale down by 2^10 so the Taylor series converges in ~20 terms
        let r = Dd {
            hi: r.hi / 1024.0,
            lo: r.lo / 1024.0,
        };
        let mut sum = Dd::ONE;
        let mut term = Dd::ONE;
        for n in 1..=22 {
            term = (term * r).div_f64(n as f64);
            sum = sum + term;
        }
        for _ in 0..10 {
            sum = sum * sum;
        }
        let scale = 2f64.powi(k as i32);
        Dd {
            hi: sum.hi * scale,
            lo: sum.lo * scale,
        }
    }

    pub fn ln(self) -> Dd {
        assert!(self.hi > 0.0, "log of non-positive value");
        let mut y = Dd::from(self.hi.ln());
        for _ in 0..3 {
            // Newton step on exp(y) = x
            y = y + self * (-y).exp() - Dd::ONE;
        }
        y
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, b: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, b.hi);
        let (t, f) = two_sum(self.lo, b.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, b: Dd) -> Dd {
        self + (-b)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, b: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, b.hi);
        let e = e + (self.hi * b.lo + self.lo * b.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }
}

/// Row-wise `softmax` in double-double.
pub fn softmax(row: &[Dd]) -> Vec<Dd> {
    let max = row.iter().copied().fold(row[0], Dd::max);
    let exps: Vec<Dd> = row.iter().map(|&v| (v - max).exp()).collect();
    let sum = exps.iter().copied().fold(Dd::ZERO, |a, b| a + b);
    exps.into_iter().map(|e| e.div(sum)).collect()
}

/// `−ln softmax(row)[target]` computed as `logsumexp(row) − row[target]`.
pub fn softmax_cross_entropy(row: &[Dd], target: usize) -> Dd {
    let max = row.iter().copied().fold(row[0], Dd::max);
    let sum = row
        .iter()
        .map(|&v| (v - max).exp())
        .fold(Dd::ZERO, |a, b| a + b);
    sum.ln() + max - row[target]
}

/// ReLU MLP forward pass over one input row, weights stored `in × out`.
pub fn mlp_forward(net: &lecomh::nnet::Mlp, x: &[Dd]) -> Vec<Dd> {
    let mut a = x.to_vec();
    let n = net.num_layers();
    for l in 0..n {
        let w = &net.weights()[l];
        let mut z: Vec<Dd> = net.biases()[l].iter().map(|&b| Dd::from(b)).collect();
        for (i, ai) in a.iter().enumerate() {
            for (j, zj) in z.iter_mut().enumerate() {
                *zj = *zj + *ai * Dd::from(w.get(i, j));
            }
        }
        if l + 1 < n {
            for v in z.iter_mut() {
                if v.hi < 0.0 || (v.hi == 0.0 && v.lo < 0.0) {
                    *v = Dd::ZERO;
                }
            }
        }
        a = z;
    }
    a
}
