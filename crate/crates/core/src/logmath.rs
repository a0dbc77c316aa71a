//! Log-domain helpers shared by the posterior and threshold code.

/// Natural log of the binomial coefficient C(n, k).
///
/// Exact integer arithmetic up to n = 60, log-gamma differences above that.
pub fn ln_choose(n: usize, k: usize) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    let k = k.min(n - k);
    if k == 0 {
        return 0.0;
    }
    if n <= 60 {
        // C(60, 30) < 2^64; the running product stays exact.
        let mut c: u64 = 1;
        for i in 0..k as u64 {
            c = c * (n as u64 - i) / (i + 1);
        }
        (c as f64).ln()
    } else {
        libm::lgamma(n as f64 + 1.0) - libm::lgamma(k as f64 + 1.0) - libm::lgamma((n - k) as f64 + 1.0)
    }
}

/// `count * ln(p)` with the convention 0 * ln(0) = 0.
pub fn count_ln(count: usize, p: f64) -> f64 {
    if count == 0 {
        0.0
    } else {
        count as f64 * p.ln()
    }
}

/// ln(exp(a) + exp(b)).
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// exp(a) - exp(b) without forming either exponential on its own when they are close.
pub fn diff_exp(a: f64, b: f64) -> f64 {
    if b == f64::NEG_INFINITY {
        return a.exp();
    }
    if a == f64::NEG_INFINITY {
        return -b.exp();
    }
    if a >= b {
        -a.exp() * (b - a).exp_m1()
    } else {
        b.exp() * (a - b).exp_m1()
    }
}

/// Logistic function 1 / (1 + exp(-x)), accurate in both tails.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Pairwise summation; the result depends only on the order of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n if n <= 8 => xs.iter().sum(),
        n => {
            let (l, r) = xs.split_at(n / 2);
            pairwise_sum(l) + pairwise_sum(r)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_choose_small_and_large_agree() {
        assert_eq!(ln_choose(6, 0), 0.0);
        assert!((ln_choose(6, 2) - 15f64.ln()).abs() < 1e-15);
        assert!((ln_choose(60, 30) - 118264581564861424f64.ln()).abs() < 1e-12);
        // both branches around the cutover
        let a = ln_choose(61, 20);
        let b = ln_choose(60, 20) + (61f64 / 41.0).ln();
        assert!((a - b).abs() < 1e-10, "{a} {b}");
        assert_eq!(ln_choose(3, 4), f64::NEG_INFINITY);
    }

    #[test]
    fn diff_exp_matches_naive_when_safe() {
        for (a, b) in [(1.0, 0.5), (0.5, 1.0), (-3.0, -3.0), (2.0, f64::NEG_INFINITY)] {
            let naive = f64::exp(a) - f64::exp(b);
            assert!((diff_exp(a, b) - naive).abs() < 1e-14, "{a} {b}");
        }
    }

    #[test]
    fn sigmoid_tails() {
        assert_eq!(sigmoid(f64::INFINITY), 1.0);
        assert_eq!(sigmoid(f64::NEG_INFINITY), 0.0);
        assert!((sigmoid(-40.0) - 4.248354255291589e-18).abs() < 1e-30);
        assert!((log_add_exp(0.0, 0.0) - 2f64.ln()).abs() < 1e-15);
    }
}
