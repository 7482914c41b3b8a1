//! Exact rational re-derivations of the step-value normalizers, written
//! straight from their definitions for cross-checking the library.
#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

pub fn q(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub fn to_f64(x: &BigRational) -> f64 {
    x.to_f64().unwrap()
}

/// `gamma = p / r` as an exact fraction.
#[derive(Clone, Copy, Debug)]
pub struct Gamma {
    pub p: i64,
    pub r: i64,
}

impl Gamma {
    pub fn as_f64(self) -> f64 {
        self.p as f64 / self.r as f64
    }

    fn floor_times(self, x: i64) -> i64 {
        (self.p * x).div_euclid(self.r)
    }
}

/// Holm-type shape `(floor(g j) + 1) / (J + floor(g j) + 1 - j)`.
pub fn holm(j_total: i64, g: Gamma) -> Vec<BigRational> {
    (1..=j_total)
        .map(|j| {
            let f = g.floor_times(j);
            q(f + 1, j_total + f + 1 - j)
        })
        .collect()
}

/// k-FWER shape `k / (J - (j - k)^+)`.
pub fn kfwe(j_total: i64, k: i64) -> Vec<BigRational> {
    (1..=j_total)
        .map(|j| q(k, j_total - (j - k).max(0)))
        .collect()
}

pub fn linear(j_total: i64) -> Vec<BigRational> {
    (1..=j_total).map(|j| q(j, j_total)).collect()
}

/// 1-based access with `delta_0 = 0`.
fn at(delta: &[BigRational], j: i64) -> BigRational {
    if j == 0 {
        BigRational::zero()
    } else {
        delta[(j - 1) as usize].clone()
    }
}

pub fn d1(g: Gamma, delta: &[BigRational]) -> BigRational {
    let jt = delta.len() as i64;
    let mut best = BigRational::zero();
    for v in 0..=jt {
        let mut t_bar = (g.floor_times(jt) + 1).min(v);
        if g.p > 0 {
            t_bar = t_bar.min((g.p * (jt - v)).div_euclid(g.r - g.p) + 1);
        }
        let j_bar = |t: i64| {
            let mut m = jt.min(jt + t - v);
            if g.p > 0 {
                // ceil(t r / p) - 1
                let c = (t * g.r + g.p - 1).div_euclid(g.p);
                m = m.min(c - 1);
            }
            m
        };
        let mut sum = BigRational::zero();
        let mut prev = BigRational::zero();
        for t in 1..=t_bar {
            let eps = at(delta, j_bar(t));
            sum += (&eps - &prev) / q(t, 1);
            prev = eps;
        }
        let s = sum * q(v, 1);
        if s > best {
            best = s;
        }
    }
    best
}

pub fn d2(g: Gamma, delta: &[BigRational]) -> BigRational {
    let jt = delta.len() as i64;
    let mut best = BigRational::zero();
    for v in 1..=jt {
        let mut sum = at(delta, 1);
        for s in (v - jt + 2)..=v {
            let idx = jt - v + s;
            let level = g.floor_times(idx) + 1;
            if v >= level {
                sum += (at(delta, idx) - at(delta, idx - 1)) / q(s.max(level), 1);
            }
        }
        let s2 = sum * q(v, 1);
        if s2 > best {
            best = s2;
        }
    }
    best
}

pub fn d3(k: i64, delta: &[BigRational]) -> BigRational {
    let jt = delta.len() as i64;
    let mut best = BigRational::zero();
    for v in k..=jt {
        let mut sum = at(delta, jt - v + k) / q(k, 1);
        for s in (k + 1)..=v {
            sum += (at(delta, jt - v + s) - at(delta, jt - v + s - 1)) / q(s, 1);
        }
        let s3 = sum * q(v, 1);
        if s3 > best {
            best = s3;
        }
    }
    best
}
