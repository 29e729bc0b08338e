//! Discrete tail probabilities used by the significance tests.
//!
//! Binomial and Poisson masses are accumulated by stable recursive
//! summation (no incomplete-gamma identities) so that integer percentile
//! thresholds stay exact. The Poisson-binomial law is available through
//! iterative convolution and backs the Le Cam bound checks.

use crate::num::Scalar;

/// P(X = k) for X ~ Binomial(n, p).
pub fn binomial_pmf<T: Scalar>(n: u32, p: T, k: u32) -> T {
    if k > n {
        return T::zero();
    }
    let one = T::one();
    if p <= T::zero() {
        return if k == 0 { one } else { T::zero() };
    }
    if p >= one {
        return if k == n { one } else { T::zero() };
    }
    // pmf(k) = prod_{i=1..k} ((n-k+i)/i * p) * q^(n-k), interleaved to keep
    // the running product away from the underflow/overflow edges.
    let q = one - p;
    let mut acc = one;
    let mut q_left = n - k;
    for i in 1..=k {
        acc = acc * p * (T::from_u32(n - k + i).unwrap() / T::from_u32(i).unwrap());
        while acc > one && q_left > 0 {
            acc = acc * q;
            q_left -= 1;
        }
    }
    for _ in 0..q_left {
        acc = acc * q;
    }
    acc
}

/// P(X <= k) for X ~ Binomial(n, p), summed upward from zero.
pub fn binomial_cdf<T: Scalar>(n: u32, p: T, k: u32) -> T {
    if k >= n {
        return T::one();
    }
    if p <= T::zero() {
        return T::one();
    }
    if p >= T::one() {
        return T::zero(); // k < n and all mass at n
    }
    let q = T::one() - p;
    let ratio = p / q;
    let mut term = binomial_pmf(n, p, 0);
    let mut acc = term;
    for j in 1..=k {
        term = term * ratio * (T::from_u32(n - j + 1).unwrap() / T::from_u32(j).unwrap());
        acc = acc + term;
    }
    acc.min(T::one())
}

/// P(X >= k) for X ~ Binomial(n, p), summed over the upper tail directly.
pub fn binomial_upper_tail<T: Scalar>(n: u32, p: T, k: u32) -> T {
    if k == 0 {
        return T::one();
    }
    if k > n {
        return T::zero();
    }
    if p <= T::zero() {
        return T::zero(); // k >= 1
    }
    if p >= T::one() {
        return T::one(); // all mass at n >= k
    }
    let q = T::one() - p;
    let ratio = p / q;
    let mut term = binomial_pmf(n, p, k);
    let mut acc = term;
    for j in (k + 1)..=n {
        term = term * ratio * (T::from_u32(n - j + 1).unwrap() / T::from_u32(j).unwrap());
        acc = acc + term;
    }
    acc.min(T::one())
}

/// Smallest integer `m` with `P(X <= m) >= level` for X ~ Binomial(n, p).
///
/// `level` is a probability in (0, 1). This is the percentile convention
/// behind the edge test threshold: a count is significant only if it
/// strictly exceeds the returned value.
pub fn binomial_threshold<T: Scalar>(n: u32, p: T, level: T) -> u32 {
    if p <= T::zero() {
        return 0;
    }
    if p >= T::one() {
        return n;
    }
    let q = T::one() - p;
    let ratio = p / q;
    let mut term = binomial_pmf(n, p, 0);
    let mut acc = term;
    let mut m = 0u32;
    while acc < level && m < n {
        m += 1;
        term = term * ratio * (T::from_u32(n - m + 1).unwrap() / T::from_u32(m).unwrap());
        acc = acc + term;
    }
    m
}

/// P(X = k) for X ~ Poisson(lambda).
pub fn poisson_pmf<T: Scalar>(lambda: T, k: u32) -> T {
    if lambda <= T::zero() {
        return if k == 0 { T::one() } else { T::zero() };
    }
    let mut term = (-lambda).exp();
    for j in 1..=k {
        term = term * lambda / T::from_u32(j).unwrap();
    }
    term
}

/// P(X <= k) for X ~ Poisson(lambda).
pub fn poisson_cdf<T: Scalar>(lambda: T, k: u32) -> T {
    if lambda <= T::zero() {
        return T::one();
    }
    let mut term = (-lambda).exp();
    let mut acc = term;
    for j in 1..=k {
        term = term * lambda / T::from_u32(j).unwrap();
        acc = acc + term;
    }
    acc.min(T::one())
}

/// P(X >= k) for X ~ Poisson(lambda), summed over the upper tail.
pub fn poisson_upper_tail<T: Scalar>(lambda: T, k: u32) -> T {
    if k == 0 {
        return T::one();
    }
    if lambda <= T::zero() {
        return T::zero();
    }
    let mut term = poisson_pmf(lambda, k);
    let mut acc = term;
    let eps = T::from_f64(1e-30).unwrap();
    let mut j = k;
    loop {
        j += 1;
        term = term * lambda / T::from_u32(j).unwrap();
        acc = acc + term;
        // terms decay geometrically once j > lambda; stop when negligible
        if T::from_u32(j).unwrap() > lambda && term < acc * eps {
            break;
        }
    }
    acc.min(T::one())
}

/// Smallest integer `m` with `P(X <= m) >= level` for X ~ Poisson(lambda).
pub fn poisson_threshold<T: Scalar>(lambda: T, level: T) -> u32 {
    if lambda <= T::zero() {
        return 0;
    }
    let mut term = (-lambda).exp();
    let mut acc = term;
    let mut m = 0u32;
    while acc < level {
        m += 1;
        term = term * lambda / T::from_u32(m).unwrap();
        acc = acc + term;
    }
    m
}

/// Exact probability mass of a Poisson-binomial law by iterative convolution.
///
/// Entry `k` of the result is P(sum of independent Bernoulli(p_j) = k).
pub fn poisson_binomial_pmf<T: Scalar>(probs: &[T]) -> Vec<T> {
    let mut pmf = vec![T::one()];
    for &p in probs {
        let q = T::one() - p;
        let mut next = vec![T::zero(); pmf.len() + 1];
        for (k, &mass) in pmf.iter().enumerate() {
            next[k] = next[k] + mass * q;
            next[k + 1] = next[k + 1] + mass * p;
        }
        pmf = next;
    }
    pmf
}

/// Le Cam upper bound on the L1 distance between a Poisson-binomial law with
/// mean `lambda = sum p_j` and the Poisson law with the same mean:
/// `2 (1 - e^{-lambda}) / lambda * sum p_j^2`.
pub fn lecam_bound<T: Scalar>(lambda: T, sum_p_squared: T) -> T {
    if lambda <= T::zero() {
        return T::zero();
    }
    let two = T::from_u32(2).unwrap();
    two * (T::one() - (-lambda).exp()) / lambda * sum_p_squared
}

/// L1 distance between a Poisson-binomial pmf and the Poisson law with the
/// same mean, including the Poisson mass beyond the Poisson-binomial support.
pub fn poisson_binomial_l1_gap<T: Scalar>(probs: &[T]) -> T {
    let lambda = probs.iter().copied().sum();
    let pmf = poisson_binomial_pmf(probs);
    let mut gap = T::zero();
    for (k, &mass) in pmf.iter().enumerate() {
        gap = gap + (mass - poisson_pmf(lambda, k as u32)).abs();
    }
    gap + poisson_upper_tail(lambda, pmf.len() as u32)
}
