//! Monte Carlo summaries.

use rayon::prelude::*;

use crate::error::Result;
use crate::rng::SeedStream;

/// Runs `f` once per replicate on its own substream, in parallel, returning results
/// in replicate order.
pub fn replicate<T, F>(seed: SeedStream, count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, SeedStream) -> Result<T> + Sync,
{
    (0..count)
        .into_par_iter()
        .map(|r| f(r, seed.substream(r as u64)))
        .collect()
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample mean and its standard error.
pub fn mean_se(x: &[f64]) -> (f64, f64) {
    let m = mean(x);
    let n = x.len() as f64;
    let var = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Sample variance (divisor `n − 1`) and a standard error from the fourth central moment.
pub fn variance_se(x: &[f64]) -> (f64, f64) {
    let m = mean(x);
    let n = x.len() as f64;
    let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    let m4 = x.iter().map(|v| (v - m).powi(4)).sum::<f64>() / n;
    (m2 * n / (n - 1.0), ((m4 - m2 * m2) / n).max(0.0).sqrt())
}

/// Sample covariance and the standard error of the mean centered cross product.
pub fn covariance_se(x: &[f64], y: &[f64]) -> (f64, f64) {
    let (mx, my) = (mean(x), mean(y));
    let products: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).collect();
    let n = x.len() as f64;
    let (c, se) = mean_se(&products);
    (c * n / (n - 1.0), se)
}

pub fn median(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn fraction(flags: impl IntoIterator<Item = bool>) -> f64 {
    let (mut hit, mut total) = (0usize, 0usize);
    for f in flags {
        hit += usize::from(f);
        total += 1;
    }
    hit as f64 / total as f64
}

/// Standardized third moment.
pub fn skewness(x: &[f64]) -> f64 {
    let m = mean(x);
    let n = x.len() as f64;
    let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    let m3 = x.iter().map(|v| (v - m).powi(3)).sum::<f64>() / n;
    m3 / m2.powf(1.5)
}

/// Standardized fourth moment minus 3.
pub fn excess_kurtosis(x: &[f64]) -> f64 {
    let m = mean(x);
    let n = x.len() as f64;
    let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    let m4 = x.iter().map(|v| (v - m).powi(4)).sum::<f64>() / n;
    m4 / (m2 * m2) - 3.0
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}
