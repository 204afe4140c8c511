//! Scalar helpers shared by the samplers and solvers.

/// Logistic function `1 / (1 + e^{-z})`, evaluated without overflow.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` computed as `max(z, 0) + log1p(e^{-|z|})`.
#[inline]
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// `log Σ e^{x_i}`; `-inf` for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// `log((1/n) Σ e^{x_i})`.
pub fn log_mean_exp(xs: &[f64]) -> f64 {
    log_sum_exp(xs) - (xs.len() as f64).ln()
}

/// Binomial coefficient as `u64`; `0` when `k > n`.
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u64 / (i + 1) as u64;
    }
    acc
}

/// Calls `f` on every `l`-subset of `0..k` in lexicographic order.
pub fn for_each_combination(k: usize, l: usize, mut f: impl FnMut(&[usize])) {
    if l > k {
        return;
    }
    let mut idx: Vec<usize> = (0..l).collect();
    loop {
        f(&idx);
        let Some(i) = (0..l).rev().find(|&i| idx[i] < k - l + i) else {
            return;
        };
        idx[i] += 1;
        for j in i + 1..l {
            idx[j] = idx[j - 1] + 1;
        }
    }
}
