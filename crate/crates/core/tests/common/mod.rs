//! Exact rational reference computations, written from the model definitions
//! (joint likelihoods and per-SU rewards), not from the library's log-domain
//! closed forms.

#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

pub type Q = BigRational;

pub fn q(x: f64) -> Q {
    BigRational::from_float(x).expect("finite")
}

pub fn int(n: usize) -> Q {
    Q::from_integer(BigInt::from(n))
}

pub fn pow(x: &Q, k: usize) -> Q {
    let mut out = Q::one();
    for _ in 0..k {
        out *= x;
    }
    out
}

pub fn f(x: &Q) -> f64 {
    x.to_f64().expect("representable")
}

pub fn binom(n: usize, k: usize) -> Q {
    let mut out = Q::one();
    for i in 0..k {
        out = out * int(n - i) / int(i + 1);
    }
    out
}

/// Sensing parameters as exact rationals.
#[derive(Clone)]
pub struct Exact {
    pub p_idle: Q,
    pub p_fa: Q,
    pub p_md: Q,
}

impl Exact {
    pub fn new(p_idle: f64, p_fa: f64, p_md: f64) -> Self {
        Self {
            p_idle: q(p_idle),
            p_fa: q(p_fa),
            p_md: q(p_md),
        }
    }

    /// Pr(idle, one specific pattern with k busy decisions out of n).
    pub fn joint_idle(&self, n: usize, k: usize) -> Q {
        &self.p_idle * pow(&self.p_fa, k) * pow(&(Q::one() - &self.p_fa), n - k)
    }

    /// Pr(busy, one specific pattern with k busy decisions out of n).
    pub fn joint_busy(&self, n: usize, k: usize) -> Q {
        (Q::one() - &self.p_idle) * pow(&(Q::one() - &self.p_md), k) * pow(&self.p_md, n - k)
    }

    /// (P^I, P^B) given k busy decisions out of n.
    pub fn posterior(&self, n: usize, k: usize) -> (Q, Q) {
        let i = self.joint_idle(n, k);
        let b = self.joint_busy(n, k);
        let total = &i + &b;
        (i / &total, b / total)
    }

    /// Pr(exactly k of n decisions are busy).
    pub fn count_pmf(&self, n: usize, k: usize) -> Q {
        binom(n, k) * (self.joint_idle(n, k) + self.joint_busy(n, k))
    }

    /// C_p at which a shared transmission after k busy decisions breaks even
    /// for one SU: P^I / n = P^B C_p.
    pub fn break_even(&self, n: usize, k: usize) -> Q {
        let (i, b) = self.posterior(n, k);
        i / (int(n) * b)
    }

    /// Condition I interval (lower, upper) at unit rate.
    pub fn condition_i(&self, n: usize) -> (Q, Q) {
        (self.break_even(n, 1), self.break_even(n, 0))
    }

    /// Smallest C_b removing both the all-idle deviation (report busy, m
    /// attackers transmit alone) and exclusive transmission after one busy
    /// decision.
    pub fn direct_threshold(&self, n: usize, m: usize, cp: &Q) -> Q {
        let (i0, b0) = self.posterior(n, 0);
        let (i1, b1) = self.posterior(n, 1);
        let mq = int(m);
        // m (i0/n - b0 cp) >= i0 - m b0 (cp + cb)
        let all_idle = (&i0 - &mq * &i0 / int(n)) / (&mq * &b0);
        // i1 - m b1 (cp + cb) <= 0
        let single = &i1 / (&mq * &b1) - cp;
        let z = Q::zero();
        [all_idle, single, z].into_iter().max().expect("non-empty")
    }

    /// Discounted aggregate reward of m honest attackers: share the channel
    /// whenever all n decisions are idle.
    pub fn lr_honest(&self, n: usize, m: usize, cp: &Q, delta: &Q) -> Q {
        let per_slot = &self.joint_idle(n, 0) / int(n) - self.joint_busy(n, 0) * cp;
        int(m) * per_slot / (Q::one() - delta)
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}
