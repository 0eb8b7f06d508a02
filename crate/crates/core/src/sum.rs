//! Fixed-order pairwise summation, so reductions do not depend on how the
//! caller happened to chunk its loops.

use num_complex::Complex64;

const BLOCK: usize = 64;

pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn pairwise_sum_c(xs: &[Complex64]) -> Complex64 {
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum_c(&xs[..mid]) + pairwise_sum_c(&xs[mid..])
}

/// Pairwise sum of `f(k)` for `k in range`, without materializing the terms.
pub fn pairwise_map<F: Fn(usize) -> f64 + Copy>(lo: usize, hi: usize, f: F) -> f64 {
    if hi - lo <= BLOCK {
        return (lo..hi).map(f).sum();
    }
    let mid = lo + (hi - lo) / 2;
    pairwise_map(lo, mid, f) + pairwise_map(mid, hi, f)
}

pub fn pairwise_map_c<F: Fn(usize) -> Complex64 + Copy>(lo: usize, hi: usize, f: F) -> Complex64 {
    if hi - lo <= BLOCK {
        return (lo..hi).map(f).sum();
    }
    let mid = lo + (hi - lo) / 2;
    pairwise_map_c(lo, mid, f) + pairwise_map_c(mid, hi, f)
}
