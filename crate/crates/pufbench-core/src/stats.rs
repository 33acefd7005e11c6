//! Small numeric helpers shared across modules.

/// Complementary error function, Numerical-Recipes rational approximation
/// (absolute error < 1.2e-7, ample for noise calibration).
pub fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let ans = t
        * (-z * z - 1.26551223
            + t * (1.00002368
                + t * (0.37409196
                    + t * (0.09678418
                        + t * (-0.18628806
                            + t * (0.27886807
                                + t * (-1.13520398
                                    + t * (1.48851587
                                        + t * (-0.82215223 + t * 0.17087277)))))))))
        .exp();
    if x >= 0.0 {
        ans
    } else {
        2.0 - ans
    }
}

/// P(Z > t) for standard normal Z.
pub fn normal_tail(t: f64) -> f64 {
    0.5 * erfc(t / std::f64::consts::SQRT_2)
}

/// Splits `total` items into fixed-size chunks, maps each chunk in parallel
/// and folds the results in chunk order. Chunk boundaries are independent of
/// the worker count, so any order-sensitive accumulation stays reproducible.
pub fn par_chunked<T, F>(total: usize, chunk: usize, map: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, std::ops::Range<usize>) -> T + Sync,
{
    use rayon::prelude::*;
    let ranges: Vec<(usize, std::ops::Range<usize>)> = (0..total.div_ceil(chunk))
        .map(|i| (i, i * chunk..((i + 1) * chunk).min(total)))
        .collect();
    ranges
        .into_par_iter()
        .map(|(i, r)| map(i, r))
        .collect()
}
